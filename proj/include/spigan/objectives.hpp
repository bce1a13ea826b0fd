#pragma once

#include "spigan/nets.hpp"
#include "spigan/ops.hpp"
#include "spigan/tape.hpp"
#include "spigan/tensor.hpp"

namespace spigan {

// Weights of the joint objective: adversarial, task, privileged, perceptual.
struct LossWeights {
    double alpha = 1.0;
    double beta = 0.5;
    double gamma = 0.1;
    double delta = 0.33;
};

// Per-step scalar losses as logged to the CSV. Components a phase does not
// compute stay 0.
struct LossReport {
    double gan_d = 0.0;
    double gan_g = 0.0;
    double task = 0.0;
    double privileged = 0.0;
    double perceptual = 0.0;
    double total_generator_side = 0.0;

    bool finite() const;
};

// Least-squares adversarial losses over patch-score grids; expectations are
// batch means. The discriminator drives real scores to 1 and fake to 0; the
// generator drives fake scores to 1 (the non-saturating target-1 form).
Tensor lsgan_discriminator_loss(Tape* tape, const Tensor& d_real, const Tensor& d_fake);
Tensor lsgan_generator_loss(Tape* tape, const Tensor& d_fake);

// Mean cross-entropy over valid (non-255) pixels.
Tensor cross_entropy_seg(Tape* tape, const Tensor& logits, const LabelMap& labels);

// Task loss on the synthetic image and its adapted version, both against the
// synthetic labels. x_f must be G(x_s) on the current tape.
Tensor task_loss(Tape* tape, Segmenter& t_net, const Tensor& x_s, const Tensor& x_f,
                 const LabelMap& y_s, ops::RunMode mode);

// Mean absolute error of predicted inverse depth on both branches, summed.
Tensor privileged_loss(Tape* tape, Segmenter& p_net, const Tensor& x_s, const Tensor& x_f,
                       const Tensor& z_s, ops::RunMode mode);

// Sum over the pyramid's maps of the per-map mean absolute difference.
// Gradients reach the generator only; phi is frozen.
Tensor perceptual_loss(Tape* tape, const FeaturePyramid& phi, const Tensor& x_s, const Tensor& x_f);

// alpha*gan_g + beta*task + gamma*privileged + delta*perceptual. Undefined
// tensors are terms a mode skipped and contribute nothing.
Tensor total_generator_objective(Tape* tape, const LossWeights& w, const Tensor& gan_g,
                                 const Tensor& task, const Tensor& privileged,
                                 const Tensor& perceptual);

} // namespace spigan
