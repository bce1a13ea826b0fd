#pragma once

#include <functional>
#include <unordered_set>
#include <vector>

#include "spigan/tensor.hpp"

namespace spigan {

// Records the forward graph of one optimization phase for reverse-mode
// differentiation. A tape is confined to one thread and is consumed by a
// single backward() call.
//
// Ops ask wants_grad() per input when they record themselves; an op whose
// inputs all decline is not recorded at all, so forwards through frozen
// networks cost no tape memory.
class Tape {
public:
    bool wants_grad(const Tensor& t) const {
        const Tensor::Storage* s = t.storage();
        if (on_path_.count(s)) return true;
        return s->requires_grad && !frozen_.count(s);
    }

    // Registers output as gradient-carrying and queues its backward function.
    // fn must accumulate (+=) into the grads of inputs that wanted gradient.
    void record(const Tensor& output, std::function<void()> fn) {
        on_path_.insert(output.storage());
        nodes_.push_back(Node{output.storage(), std::move(fn)});
    }

    // Excludes a parameter from gradient flow for this tape's lifetime.
    void freeze(const Tensor& t) { frozen_.insert(t.storage()); }

    void backward(const Tensor& loss);

    bool consumed() const { return consumed_; }
    std::size_t node_count() const { return nodes_.size(); }

private:
    struct Node {
        Tensor::Storage* out;
        std::function<void()> backward;
    };

    std::vector<Node> nodes_;
    std::unordered_set<const Tensor::Storage*> on_path_;
    std::unordered_set<const Tensor::Storage*> frozen_;
    bool consumed_ = false;
};

} // namespace spigan
