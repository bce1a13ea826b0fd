#include "spigan/objectives.hpp"

#include <cmath>
#include <stdexcept>

namespace spigan {

bool LossReport::finite() const {
    return std::isfinite(gan_d) && std::isfinite(gan_g) && std::isfinite(task) &&
           std::isfinite(privileged) && std::isfinite(perceptual) &&
           std::isfinite(total_generator_side);
}

Tensor lsgan_discriminator_loss(Tape* tape, const Tensor& d_real, const Tensor& d_fake) {
    Tensor real_term = ops::mean_square_to(tape, d_real, 1.0);
    Tensor fake_term = ops::mean_square_to(tape, d_fake, 0.0);
    return ops::weighted_sum(tape, {{1.0, real_term}, {1.0, fake_term}});
}

Tensor lsgan_generator_loss(Tape* tape, const Tensor& d_fake) {
    return ops::mean_square_to(tape, d_fake, 1.0);
}

Tensor cross_entropy_seg(Tape* tape, const Tensor& logits, const LabelMap& labels) {
    return ops::cross_entropy(tape, logits, labels);
}

Tensor task_loss(Tape* tape, Segmenter& t_net, const Tensor& x_s, const Tensor& x_f,
                 const LabelMap& y_s, ops::RunMode mode) {
    Tensor ce_synth = cross_entropy_seg(tape, t_net.forward(tape, x_s, mode), y_s);
    Tensor ce_adapted = cross_entropy_seg(tape, t_net.forward(tape, x_f, mode), y_s);
    return ops::weighted_sum(tape, {{1.0, ce_synth}, {1.0, ce_adapted}});
}

Tensor privileged_loss(Tape* tape, Segmenter& p_net, const Tensor& x_s, const Tensor& x_f,
                       const Tensor& z_s, ops::RunMode mode) {
    Tensor pred_synth = p_net.forward(tape, x_s, mode);
    if (pred_synth.shape() != z_s.shape()) {
        throw std::invalid_argument("privileged_loss: prediction " + shape_str(pred_synth.shape()) +
                                    " does not match inverse depth " + shape_str(z_s.shape()));
    }
    Tensor pred_adapted = p_net.forward(tape, x_f, mode);
    Tensor l1_synth = ops::mean_abs_diff(tape, pred_synth, z_s);
    Tensor l1_adapted = ops::mean_abs_diff(tape, pred_adapted, z_s);
    return ops::weighted_sum(tape, {{1.0, l1_synth}, {1.0, l1_adapted}});
}

Tensor perceptual_loss(Tape* tape, const FeaturePyramid& phi, const Tensor& x_s, const Tensor& x_f) {
    std::vector<Tensor> maps_s = phi.forward(tape, x_s);
    std::vector<Tensor> maps_f = phi.forward(tape, x_f);
    std::vector<std::pair<double, Tensor>> terms;
    terms.reserve(maps_s.size());
    for (std::size_t i = 0; i < maps_s.size(); ++i) {
        terms.emplace_back(1.0, ops::mean_abs_diff(tape, maps_s[i], maps_f[i]));
    }
    return ops::weighted_sum(tape, terms);
}

Tensor total_generator_objective(Tape* tape, const LossWeights& w, const Tensor& gan_g,
                                 const Tensor& task, const Tensor& privileged,
                                 const Tensor& perceptual) {
    std::vector<std::pair<double, Tensor>> terms;
    if (gan_g.defined()) terms.emplace_back(w.alpha, gan_g);
    if (task.defined()) terms.emplace_back(w.beta, task);
    if (privileged.defined()) terms.emplace_back(w.gamma, privileged);
    if (perceptual.defined()) terms.emplace_back(w.delta, perceptual);
    return ops::weighted_sum(tape, terms);
}

} // namespace spigan
