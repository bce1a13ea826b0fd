#include "spigan/tape.hpp"

#include <stdexcept>

namespace spigan {

void Tape::backward(const Tensor& loss) {
    if (consumed_) throw std::logic_error("backward called twice on a consumed tape");
    if (loss.size() != 1) {
        throw std::invalid_argument("backward requires a scalar loss, got " + shape_str(loss.shape()));
    }
    if (!on_path_.count(loss.storage())) {
        throw std::invalid_argument("loss tensor is not connected to this tape");
    }
    consumed_ = true;
    loss.storage()->grad.assign(1, 1.0);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        // Nodes whose output never received gradient are not on any path to
        // the loss; skipping them leaves unrelated parameter grads untouched.
        if (it->out->grad.empty()) continue;
        it->backward();
    }
}

} // namespace spigan
