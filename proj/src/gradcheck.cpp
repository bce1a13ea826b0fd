#include "spigan/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace spigan {

double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f, Tensor x, double eps) {
    if (eps <= 0.0) throw std::invalid_argument("grad_check eps must be positive");

    x.set_requires_grad(true);
    x.zero_grad();
    std::vector<double> analytic;
    {
        Tape tape;
        Tensor loss = f(tape, x);
        if (loss.size() != 1) throw std::invalid_argument("grad_check needs a scalar-valued f");
        tape.backward(loss);
        analytic = x.grad();
    }
    x.drop_grad();
    x.set_requires_grad(false);

    auto eval = [&](const Tensor& point) {
        Tape tape;
        return f(tape, point).item();
    };

    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x.data()[i];
        x.data()[i] = saved + eps;
        const double fp = eval(x);
        x.data()[i] = saved - eps;
        const double fm = eval(x);
        x.data()[i] = saved;
        const double numeric = (fp - fm) / (2.0 * eps);
        const double denom = std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
        worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
    }
    return worst;
}

} // namespace spigan
