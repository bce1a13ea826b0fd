#include "doctest.h"

#include <cmath>

#include "spigan/gradcheck.hpp"
#include "spigan/nets.hpp"
#include "spigan/objectives.hpp"

using namespace spigan;

namespace {

Tensor constant(Shape shape, double v) { return Tensor(std::move(shape), v); }

Segmenter zeroed_segmenter(int out_channels, double head_bias_class0 = 0.0) {
    Rng rng(7);
    NetworkSpec spec;
    spec.kind = NetKind::segmenter;
    Segmenter s = build_segmenter(spec, rng, out_channels);
    for (const auto& [name, t] : s.params.items()) {
        Tensor mut = t;
        std::fill(mut.data().begin(), mut.data().end(), 0.0);
    }
    if (head_bias_class0 != 0.0) s.params.at("head.b").data()[0] = head_bias_class0;
    return s;
}

} // namespace

TEST_CASE("lsgan discriminator loss closed forms") {
    Tensor perfect_real = constant({1, 1, 2, 2}, 1.0);
    Tensor perfect_fake = constant({1, 1, 2, 2}, 0.0);
    CHECK(lsgan_discriminator_loss(nullptr, perfect_real, perfect_fake).item() == 0.0);

    Tensor half = constant({1, 1, 2, 2}, 0.5);
    CHECK(lsgan_discriminator_loss(nullptr, half, half).item() == doctest::Approx(0.5).epsilon(1e-15));

    Tensor mixed = Tensor::from_data({2}, {1.0, 0.0});
    CHECK(lsgan_discriminator_loss(nullptr, mixed, mixed).item() == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("lsgan generator loss closed forms") {
    CHECK(lsgan_generator_loss(nullptr, constant({3}, 1.0)).item() == 0.0);
    CHECK(lsgan_generator_loss(nullptr, constant({3}, 0.0)).item() == doctest::Approx(1.0).epsilon(1e-15));
    Tensor d = Tensor::from_data({2}, {0.5, 1.5});
    CHECK(lsgan_generator_loss(nullptr, d).item() == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("lsgan losses are minimized at the right constants") {
    // 1-D scan over constant scores.
    double best_d = 1e9, best_d_arg = -1;
    double best_g = 1e9, best_g_arg = -1;
    for (double s = -0.5; s <= 1.55; s += 0.01) {
        Tensor real = constant({4}, s);
        Tensor fake = constant({4}, 1.0 - s);
        const double ld = lsgan_discriminator_loss(nullptr, real, fake).item();
        if (ld < best_d) {
            best_d = ld;
            best_d_arg = s;
        }
        const double lg = lsgan_generator_loss(nullptr, constant({4}, s)).item();
        if (lg < best_g) {
            best_g = lg;
            best_g_arg = s;
        }
    }
    CHECK(best_d_arg == doctest::Approx(1.0).epsilon(0.02));
    CHECK(best_g_arg == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("lsgan pointwise optimum is p_r/(p_r+p_f)") {
    const double p_r = 0.7, p_f = 0.3;
    auto f = [&](double s) { return p_r * (s - 1.0) * (s - 1.0) + p_f * s * s; };
    double lo = -1.0, hi = 2.0;
    for (int i = 0; i < 200; ++i) { // ternary search on a convex objective
        const double m1 = lo + (hi - lo) / 3.0, m2 = hi - (hi - lo) / 3.0;
        if (f(m1) < f(m2)) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    const double argmin = 0.5 * (lo + hi);
    CHECK(std::abs(argmin - p_r / (p_r + p_f)) < 1e-6);
}

TEST_CASE("cross entropy closed forms") {
    Tensor uniform = Tensor::from_data({1, 2, 1, 1}, {0.4, 0.4});
    LabelMap y({1, 1, 1});
    y.v = {1};
    CHECK(std::abs(cross_entropy_seg(nullptr, uniform, y).item() - std::log(2.0)) < 1e-9);

    // Two pixels, C=2, logits (2,0) and (0,2) with labels 0 and 1.
    Tensor logits = Tensor::from_data({1, 2, 1, 2}, {2.0, 0.0, 0.0, 2.0});
    LabelMap y2({1, 1, 2});
    y2.v = {0, 1};
    const double expect = -std::log(std::exp(2.0) / (std::exp(2.0) + 1.0));
    CHECK(cross_entropy_seg(nullptr, logits, y2).item() == doctest::Approx(expect).epsilon(1e-12));
    CHECK(cross_entropy_seg(nullptr, logits, y2).item() == doctest::Approx(0.126928).epsilon(1e-5));
}

TEST_CASE("task loss doubles under an identity generator and is additive") {
    Rng rng(11);
    NetworkSpec spec;
    spec.kind = NetKind::segmenter;
    Segmenter t_net = build_segmenter(spec, rng, 5);

    Rng data(12);
    Tensor x_s({2, 3, 8, 8});
    for (auto& v : x_s.data()) v = data.uniform(-1.0, 1.0);
    LabelMap y({2, 8, 8});
    for (auto& v : y.v) v = static_cast<std::int32_t>(data.integer(5));

    // Identity generator stub: x_f == x_s.
    Tensor total = task_loss(nullptr, t_net, x_s, x_s, y, ops::RunMode::eval);
    Tensor single = cross_entropy_seg(nullptr, t_net.forward(nullptr, x_s, ops::RunMode::eval), y);
    CHECK(total.item() == doctest::Approx(2.0 * single.item()).epsilon(1e-15));

    // Additivity against independently computed branches.
    Tensor x_f = x_s.clone();
    for (auto& v : x_f.data()) v = std::tanh(v + 0.1);
    Tensor joint = task_loss(nullptr, t_net, x_s, x_f, y, ops::RunMode::eval);
    Tensor b1 = cross_entropy_seg(nullptr, t_net.forward(nullptr, x_s, ops::RunMode::eval), y);
    Tensor b2 = cross_entropy_seg(nullptr, t_net.forward(nullptr, x_f, ops::RunMode::eval), y);
    CHECK(joint.item() == b1.item() + b2.item());
}

TEST_CASE("task loss vanishes for a saturated correct predictor") {
    Segmenter oracle = zeroed_segmenter(5, 50.0); // constant logits favoring class 0
    Tensor x({1, 3, 8, 8}, 0.25);
    LabelMap y({1, 8, 8}, 0);
    Tensor loss = task_loss(nullptr, oracle, x, x, y, ops::RunMode::eval);
    CHECK(loss.item() < 1e-20);
}

TEST_CASE("privileged loss closed forms and shape guard") {
    // Zeroed P with head bias 0.3 predicts sigmoid(0.3) everywhere.
    Segmenter p_net = zeroed_segmenter(1, 0.3);
    const double pred = 1.0 / (1.0 + std::exp(-0.3));
    Tensor x({1, 3, 8, 8}, 0.1);

    Tensor z_match({1, 1, 8, 8}, pred);
    CHECK(privileged_loss(nullptr, p_net, x, x, z_match, ops::RunMode::eval).item() ==
          doctest::Approx(0.0).epsilon(1e-15));

    Tensor z_off({1, 1, 8, 8}, pred - 0.1);
    CHECK(privileged_loss(nullptr, p_net, x, x, z_off, ops::RunMode::eval).item() ==
          doctest::Approx(0.2).epsilon(1e-12));

    Tensor z_bad({1, 1, 4, 8}, 0.5);
    CHECK_THROWS_AS(privileged_loss(nullptr, p_net, x, x, z_bad, ops::RunMode::eval),
                    std::invalid_argument);

    // Two-pixel hand case of the underlying l1 term.
    Tensor p2 = Tensor::from_data({2}, {0.0, 1.0});
    Tensor z2 = Tensor::from_data({2}, {1.0, 1.0});
    CHECK(ops::mean_abs_diff(nullptr, p2, z2).item() == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("perceptual loss zero, symmetry, and raw-term linearity") {
    FeaturePyramid phi = feature_extractor_phi();
    Rng data(21);
    Tensor x({1, 3, 16, 16});
    for (auto& v : x.data()) v = data.uniform(-1.0, 1.0);

    CHECK(perceptual_loss(nullptr, phi, x, x).item() == 0.0);

    Tensor y = x.clone();
    for (auto& v : y.data()) v = std::tanh(v * 1.3 + 0.05);
    CHECK(perceptual_loss(nullptr, phi, x, y).item() ==
          doctest::Approx(perceptual_loss(nullptr, phi, y, x).item()).epsilon(1e-15));
    CHECK(perceptual_loss(nullptr, phi, x, y).item() > 0.0);

    // The raw-input term is exactly linear in the difference.
    Tensor d({1, 3, 16, 16}, 0.01);
    Tensor x1 = x.clone(), x2 = x.clone();
    for (std::size_t i = 0; i < x.size(); ++i) {
        x1.data()[i] += d.data()[i];
        x2.data()[i] += 2.0 * d.data()[i];
    }
    const double t1 = ops::mean_abs_diff(nullptr, x, x1).item();
    const double t2 = ops::mean_abs_diff(nullptr, x, x2).item();
    CHECK(t2 == doctest::Approx(2.0 * t1).epsilon(1e-12));
}

TEST_CASE("total generator objective arithmetic") {
    LossWeights w;
    Tensor one = Tensor::scalar(1.0);
    Tensor total = total_generator_objective(nullptr, w, one, one, one, one);
    CHECK(total.item() == doctest::Approx(1.93).epsilon(1e-15));

    LossWeights zero{0.0, 0.0, 0.0, 0.0};
    CHECK(total_generator_objective(nullptr, zero, one, one, one, one).item() == 0.0);

    // Doubling one component raises the total by weight * value.
    Tensor two = Tensor::scalar(2.0);
    Tensor bumped = total_generator_objective(nullptr, w, one, two, one, one);
    CHECK(bumped.item() - total.item() == doctest::Approx(w.beta).epsilon(1e-12));

    // Skipped terms contribute nothing.
    Tensor partial = total_generator_objective(nullptr, w, one, one, Tensor(), Tensor());
    CHECK(partial.item() == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("loss gradients pass the finite-difference oracle") {
    Rng rng(31);
    Tensor scores({2, 1, 3, 3});
    for (auto& v : scores.data()) v = rng.uniform(-1.0, 1.0);

    auto f_d = [&](Tape& t, const Tensor& s) {
        return lsgan_discriminator_loss(&t, s, scores);
    };
    CHECK(grad_check(f_d, scores.clone(), 1e-4) < 1e-5);

    auto f_g = [](Tape& t, const Tensor& s) { return lsgan_generator_loss(&t, s); };
    CHECK(grad_check(f_g, scores.clone(), 1e-4) < 1e-5);

    // Perceptual gradient w.r.t. the adapted image, through the frozen pyramid.
    FeaturePyramid phi = feature_extractor_phi();
    Tensor x_s({1, 3, 8, 8});
    for (auto& v : x_s.data()) v = rng.uniform(-1.0, 1.0);
    Tensor x_f = x_s.clone();
    for (auto& v : x_f.data()) v += rng.uniform(0.05, 0.3); // keep |a-b| off the l1 kink
    auto f_p = [&](Tape& t, const Tensor& xf) { return perceptual_loss(&t, phi, x_s, xf); };
    CHECK(grad_check(f_p, x_f.clone(), 1e-4) < 1e-4);
}

TEST_CASE("loss report finiteness flag") {
    LossReport r;
    CHECK(r.finite());
    r.task = std::nan("");
    CHECK(!r.finite());
}
