#pragma once

#include <utility>
#include <vector>

#include "spigan/rng.hpp"
#include "spigan/tape.hpp"
#include "spigan/tensor.hpp"

namespace spigan::ops {

enum class RunMode { train, eval };

// Per-channel running statistics owned by a normalization layer.
struct BatchNormState {
    Tensor running_mean; // [C]
    Tensor running_var;  // [C]
};

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.9;

// 2D convolution over [N,Cin,H,W] with kernel [Cout,Cin,kh,kw] and bias
// [Cout]. Output is [N,Cout,H',W'] with H' = (H + 2*padding - kh)/stride + 1.
// Differentiable w.r.t. input, kernel and bias.
Tensor conv2d(Tape* tape, const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, int padding);

// Nearest-neighbor 2x upsample: each pixel becomes a 2x2 block.
Tensor upsample2x(Tape* tape, const Tensor& input);

Tensor relu(Tape* tape, const Tensor& x);
Tensor leaky_relu(Tape* tape, const Tensor& x, double slope);
Tensor tanh_act(Tape* tape, const Tensor& x);
Tensor sigmoid(Tape* tape, const Tensor& x);

// Train mode normalizes by per-channel batch statistics and updates the
// running stats; eval mode normalizes by the running stats. Differentiable
// through the batch statistics.
Tensor batch_norm(Tape* tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, RunMode mode);

// Per-(sample,channel) normalization over H,W; no running statistics.
Tensor instance_norm(Tape* tape, const Tensor& x, const Tensor& gamma, const Tensor& beta);

// Inverted dropout: train mode zeroes elements with probability p and scales
// survivors by 1/(1-p); eval mode and p=0 are exact identities (and consume
// no randomness).
Tensor dropout(Tape* tape, const Tensor& x, double p, Rng& rng, RunMode mode);

// Per-pixel softmax over the channel axis, computed with max subtraction.
Tensor softmax_channels(Tape* tape, const Tensor& logits);

// Elementwise sum of two same-shape tensors.
Tensor add(Tape* tape, const Tensor& a, const Tensor& b);

// Scalar reductions used by the losses.
Tensor sum(Tape* tape, const Tensor& x);
Tensor mean_square_to(Tape* tape, const Tensor& x, double target); // mean((x - target)^2)
Tensor mean_abs_diff(Tape* tape, const Tensor& a, const Tensor& b); // mean(|a - b|)

// Weighted sum of scalar tensors: sum_i w_i * s_i.
Tensor weighted_sum(Tape* tape, const std::vector<std::pair<double, Tensor>>& terms);

// Mean cross-entropy of logits [N,C,H,W] against class indices [N,H,W],
// ignoring pixels labeled 255. Fused log-softmax for stability.
Tensor cross_entropy(Tape* tape, const Tensor& logits, const LabelMap& labels);

// argmax over the channel axis -> [N,H,W] class indices.
LabelMap argmax_channels(const Tensor& logits);

} // namespace spigan::ops
