#pragma once

#include <functional>

#include "spigan/tape.hpp"
#include "spigan/tensor.hpp"

namespace spigan {

// Compares reverse-mode gradients of a scalar-valued function against central
// finite differences. Returns the max over coordinates of
// |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
// f must be deterministic: it is re-evaluated at perturbed inputs.
double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f, Tensor x, double eps);

} // namespace spigan
