#include "doctest.h"

#include <cmath>
#include <cstring>
#include <sstream>

#include "spigan/gradcheck.hpp"
#include "spigan/ops.hpp"
#include "spigan/rng.hpp"
#include "spigan/tape.hpp"
#include "spigan/tensor.hpp"

using namespace spigan;

namespace {

// Uniform in [-1,1], pushed away from the activation kinks so central
// differences stay on one side.
Tensor random_tensor(Rng& rng, Shape shape, double kink_gap = 1e-2) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) {
        do {
            v = rng.uniform(-1.0, 1.0);
        } while (std::abs(v) <= kink_gap);
    }
    return t;
}

ops::BatchNormState fresh_bn_state(std::size_t c) {
    ops::BatchNormState s;
    s.running_mean = Tensor({c}, 0.0);
    s.running_var = Tensor({c}, 1.0);
    return s;
}

// A target far outside the activation range with per-coordinate random signs:
// |out - target| stays off the l1 kink and downstream gradients stay mixed,
// which keeps the relative-error comparison well conditioned.
Tensor far_target(Rng& rng, const Shape& shape, double magnitude) {
    Tensor t(shape);
    for (auto& v : t.data()) v = rng.bernoulli(0.5) ? magnitude : -magnitude;
    return t;
}

} // namespace

TEST_CASE("conv2d identity and sum kernels") {
    Tensor x = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
    Tensor k1 = Tensor::from_data({1, 1, 1, 1}, {1});
    Tensor b = Tensor::from_data({1}, {0});
    Tensor y = ops::conv2d(nullptr, x, k1, b, 1, 0);
    CHECK(y.shape() == Shape{1, 1, 2, 2});
    CHECK(y.data() == std::vector<double>{1, 2, 3, 4});

    Tensor k2 = Tensor::from_data({1, 1, 2, 2}, {1, 1, 1, 1});
    Tensor y2 = ops::conv2d(nullptr, x, k2, b, 1, 0);
    CHECK(y2.shape() == Shape{1, 1, 1, 1});
    CHECK(y2.item() == 10.0);
}

TEST_CASE("conv2d output geometry and channel mismatch") {
    Rng rng(1);
    Tensor x = random_tensor(rng, {2, 3, 8, 10});
    Tensor k = random_tensor(rng, {4, 3, 3, 3});
    Tensor b(Shape{4}, 0.0);
    Tensor y = ops::conv2d(nullptr, x, k, b, 2, 1);
    CHECK(y.shape() == Shape{2, 4, 4, 5});

    Tensor bad_k = random_tensor(rng, {4, 2, 3, 3});
    CHECK_THROWS_AS(ops::conv2d(nullptr, x, bad_k, b, 1, 1), std::invalid_argument);
}

TEST_CASE("conv2d is exactly homogeneous under power-of-two scaling") {
    Rng rng(7);
    Tensor x = random_tensor(rng, {1, 2, 5, 5});
    Tensor k = random_tensor(rng, {3, 2, 3, 3});
    Tensor b(Shape{3}, 0.0);
    Tensor y = ops::conv2d(nullptr, x, k, b, 1, 1);
    Tensor x2 = x.clone();
    for (auto& v : x2.data()) v *= 2.0;
    Tensor y2 = ops::conv2d(nullptr, x2, k, b, 1, 1);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y2.data()[i] == 2.0 * y.data()[i]);
}

TEST_CASE("conv2d gradients match central differences") {
    Rng rng(42);
    Tensor x0 = random_tensor(rng, {1, 2, 6, 6});
    Tensor k0 = random_tensor(rng, {3, 2, 3, 3});
    Tensor b0 = random_tensor(rng, {3});

    auto wrt_input = [&](Tape& t, const Tensor& x) { return ops::sum(&t, ops::conv2d(&t, x, k0, b0, 1, 1)); };
    CHECK(grad_check(wrt_input, x0.clone(), 1e-4) < 1e-5);

    auto wrt_kernel = [&](Tape& t, const Tensor& k) { return ops::sum(&t, ops::conv2d(&t, x0, k, b0, 1, 1)); };
    CHECK(grad_check(wrt_kernel, k0.clone(), 1e-4) < 1e-5);

    auto wrt_bias = [&](Tape& t, const Tensor& b) { return ops::sum(&t, ops::conv2d(&t, x0, k0, b, 2, 1)); };
    CHECK(grad_check(wrt_bias, b0.clone(), 1e-4) < 1e-5);

    // Weighted output so off-diagonal gradient structure is exercised too.
    Tensor w = random_tensor(rng, {1, 3, 6, 6});
    auto weighted = [&](Tape& t, const Tensor& x) {
        Tensor y = ops::conv2d(&t, x, k0, b0, 1, 1);
        Tensor prod = ops::mean_abs_diff(&t, y, w);
        return prod;
    };
    CHECK(grad_check(weighted, x0.clone(), 1e-4) < 1e-5);
}

TEST_CASE("upsample2x replicates and sums gradients") {
    Tensor x1 = Tensor::from_data({1, 1, 1, 1}, {5});
    Tensor y1 = ops::upsample2x(nullptr, x1);
    CHECK(y1.shape() == Shape{1, 1, 2, 2});
    for (double v : y1.data()) CHECK(v == 5.0);

    Tensor x2 = Tensor::from_data({1, 1, 2, 1}, {1, 2});
    Tensor y2 = ops::upsample2x(nullptr, x2);
    CHECK(y2.shape() == Shape{1, 1, 4, 2});
    CHECK(y2.data() == std::vector<double>{1, 1, 1, 1, 2, 2, 2, 2});

    Tensor x3 = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
    x3.set_requires_grad(true);
    x3.zero_grad();
    Tape tape;
    Tensor y3 = ops::upsample2x(&tape, x3);
    Tensor loss = ops::sum(&tape, y3);
    tape.backward(loss);
    for (double g : x3.grad()) CHECK(g == 4.0);
}

TEST_CASE("activation values and kink conventions") {
    Tensor x = Tensor::from_data({4}, {-1.0, -3.0, 3.0, 0.0});
    Tensor ly = ops::leaky_relu(nullptr, x, 0.2);
    CHECK(ly.data()[0] == doctest::Approx(-0.2));
    Tensor ry = ops::relu(nullptr, x);
    CHECK(ry.data()[1] == 0.0);
    CHECK(ry.data()[2] == 3.0);

    // tanh'(0) = 1
    Tensor z = Tensor::from_data({1}, {0.0});
    z.set_requires_grad(true);
    z.zero_grad();
    Tape tape;
    Tensor loss = ops::sum(&tape, ops::tanh_act(&tape, z));
    tape.backward(loss);
    CHECK(z.grad()[0] == doctest::Approx(1.0));
}

TEST_CASE("activation gradients match central differences") {
    Rng rng(3);
    Tensor x = random_tensor(rng, {2, 3, 4, 4});
    auto lr = [](Tape& t, const Tensor& v) { return ops::sum(&t, ops::leaky_relu(&t, v, 0.2)); };
    auto rl = [](Tape& t, const Tensor& v) { return ops::sum(&t, ops::relu(&t, v)); };
    auto th = [](Tape& t, const Tensor& v) { return ops::mean_square_to(&t, ops::tanh_act(&t, v), 0.3); };
    auto sg = [](Tape& t, const Tensor& v) { return ops::mean_square_to(&t, ops::sigmoid(&t, v), 0.3); };
    CHECK(grad_check(lr, x.clone(), 1e-4) < 1e-5);
    CHECK(grad_check(rl, x.clone(), 1e-4) < 1e-5);
    CHECK(grad_check(th, x.clone(), 1e-4) < 1e-5);
    CHECK(grad_check(sg, x.clone(), 1e-4) < 1e-5);
}

TEST_CASE("batch_norm normalizes per channel") {
    Tensor x = Tensor::from_data({2, 1, 1, 1}, {-1.0, 1.0});
    Tensor gamma = Tensor::from_data({1}, {1.0});
    Tensor beta = Tensor::from_data({1}, {0.0});
    auto state = fresh_bn_state(1);
    Tensor y = ops::batch_norm(nullptr, x, gamma, beta, state, ops::RunMode::train);
    const double expect = 1.0 / std::sqrt(1.0 + 1e-5);
    CHECK(y.data()[0] == doctest::Approx(-expect).epsilon(1e-12));
    CHECK(y.data()[1] == doctest::Approx(expect).epsilon(1e-12));

    Tensor gamma0 = Tensor::from_data({1}, {0.0});
    Tensor beta7 = Tensor::from_data({1}, {7.0});
    auto state2 = fresh_bn_state(1);
    Tensor y2 = ops::batch_norm(nullptr, x, gamma0, beta7, state2, ops::RunMode::train);
    for (double v : y2.data()) CHECK(v == 7.0);
}

TEST_CASE("batch_norm rejects a single element per channel in train mode") {
    Tensor x = Tensor::from_data({1, 2, 1, 1}, {1.0, 2.0});
    Tensor gamma(Shape{2}, 1.0), beta(Shape{2}, 0.0);
    auto state = fresh_bn_state(2);
    CHECK_THROWS_AS(ops::batch_norm(nullptr, x, gamma, beta, state, ops::RunMode::train),
                    std::invalid_argument);
}

TEST_CASE("batch_norm gradients match central differences") {
    Rng rng(11);
    Tensor x0 = random_tensor(rng, {3, 2, 4, 4});
    Tensor gamma0 = random_tensor(rng, {2});
    Tensor beta0 = random_tensor(rng, {2});
    Tensor target = far_target(rng, {3, 2, 4, 4}, 5.0);

    auto wrt_x = [&](Tape& t, const Tensor& x) {
        auto state = fresh_bn_state(2);
        Tensor y = ops::batch_norm(&t, x, gamma0, beta0, state, ops::RunMode::train);
        return ops::mean_abs_diff(&t, y, target);
    };
    CHECK(grad_check(wrt_x, x0.clone(), 1e-4) < 1e-5);

    auto wrt_gamma = [&](Tape& t, const Tensor& g) {
        auto state = fresh_bn_state(2);
        Tensor y = ops::batch_norm(&t, x0, g, beta0, state, ops::RunMode::train);
        return ops::mean_abs_diff(&t, y, target);
    };
    CHECK(grad_check(wrt_gamma, gamma0.clone(), 1e-4) < 1e-5);

    auto wrt_beta = [&](Tape& t, const Tensor& b) {
        auto state = fresh_bn_state(2);
        Tensor y = ops::batch_norm(&t, x0, gamma0, b, state, ops::RunMode::train);
        return ops::mean_abs_diff(&t, y, target);
    };
    CHECK(grad_check(wrt_beta, beta0.clone(), 1e-4) < 1e-5);

    // Eval mode normalizes by running stats.
    auto wrt_x_eval = [&](Tape& t, const Tensor& x) {
        auto state = fresh_bn_state(2);
        state.running_mean.data() = {0.1, -0.2};
        state.running_var.data() = {0.9, 1.3};
        Tensor y = ops::batch_norm(&t, x, gamma0, beta0, state, ops::RunMode::eval);
        return ops::mean_abs_diff(&t, y, target);
    };
    CHECK(grad_check(wrt_x_eval, x0.clone(), 1e-4) < 1e-5);
}

TEST_CASE("instance_norm gradient check") {
    Rng rng(13);
    Tensor x0 = random_tensor(rng, {2, 2, 3, 3});
    Tensor gamma0 = random_tensor(rng, {2});
    Tensor beta0 = random_tensor(rng, {2});
    Tensor target = far_target(rng, {2, 2, 3, 3}, 5.0);
    auto wrt_x = [&](Tape& t, const Tensor& x) {
        Tensor y = ops::instance_norm(&t, x, gamma0, beta0);
        return ops::mean_abs_diff(&t, y, target);
    };
    CHECK(grad_check(wrt_x, x0.clone(), 1e-4) < 1e-5);
}

TEST_CASE("dropout identities and scaling") {
    Rng rng(5);
    Tensor x = random_tensor(rng, {10});

    Rng r1(1);
    Tensor y0 = ops::dropout(nullptr, x, 0.0, r1, ops::RunMode::train);
    CHECK(y0.data() == x.data());

    Tensor ye = ops::dropout(nullptr, x, 0.5, r1, ops::RunMode::eval);
    CHECK(ye.data() == x.data());

    CHECK_THROWS_AS(ops::dropout(nullptr, x, 1.0, r1, ops::RunMode::train), std::invalid_argument);

    // Inverted scaling keeps the mean: 1e5 ones at p=0.5.
    Tensor ones(Shape{100000}, 1.0);
    Rng r2(99);
    Tensor yd = ops::dropout(nullptr, ones, 0.5, r2, ops::RunMode::train);
    double mean = 0.0;
    for (double v : yd.data()) mean += v;
    mean /= static_cast<double>(yd.size());
    CHECK(mean > 0.98);
    CHECK(mean < 1.02);
}

TEST_CASE("dropout gradient with a fixed mask") {
    Rng rng(17);
    Tensor x0 = random_tensor(rng, {50});
    auto f = [](Tape& t, const Tensor& x) {
        Rng mask_rng(1234); // same mask on every evaluation
        Tensor y = ops::dropout(&t, x, 0.3, mask_rng, ops::RunMode::train);
        return ops::mean_square_to(&t, y, 0.1);
    };
    CHECK(grad_check(f, x0.clone(), 1e-4) < 1e-5);
}

TEST_CASE("softmax_channels is stable and normalized") {
    Tensor two = Tensor::from_data({1, 2, 1, 1}, {0.7, 0.7});
    Tensor p = ops::softmax_channels(nullptr, two);
    CHECK(p.data()[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(p.data()[1] == doctest::Approx(0.5).epsilon(1e-12));

    Tensor big = Tensor::from_data({1, 2, 1, 1}, {1000.0, 0.0});
    Tensor pb = ops::softmax_channels(nullptr, big);
    CHECK(pb.all_finite());
    CHECK(pb.data()[0] == doctest::Approx(1.0));
    CHECK(pb.data()[1] == doctest::Approx(0.0));

    Rng rng(21);
    Tensor x = random_tensor(rng, {2, 5, 3, 4});
    Tensor px = ops::softmax_channels(nullptr, x);
    const std::size_t hw = 12;
    for (std::size_t n = 0; n < 2; ++n) {
        for (std::size_t j = 0; j < hw; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < 5; ++c) {
                const double v = px.data()[n * 5 * hw + c * hw + j];
                CHECK(v >= 0.0);
                s += v;
            }
            CHECK(std::abs(s - 1.0) < 1e-9);
        }
    }
}

TEST_CASE("softmax_channels gradient check") {
    Rng rng(23);
    Tensor x0 = random_tensor(rng, {1, 4, 2, 3});
    // Alternate the target sign across channels: every pixel then has mixed
    // signs downstream of the softmax, so no coordinate's gradient collapses
    // to exactly zero through the simplex projection.
    Tensor target({1, 4, 2, 3});
    for (std::size_t c = 0; c < 4; ++c) {
        for (std::size_t j = 0; j < 6; ++j) target.data()[c * 6 + j] = (c % 2 == 0) ? 2.0 : -2.0;
    }
    auto f = [&](Tape& t, const Tensor& x) {
        Tensor p = ops::softmax_channels(&t, x);
        return ops::mean_abs_diff(&t, p, target);
    };
    CHECK(grad_check(f, x0.clone(), 1e-4) < 1e-5);
}

TEST_CASE("backward fills expected gradients") {
    Tensor x = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    x.set_requires_grad(true);
    x.zero_grad();
    {
        Tape tape;
        Tensor loss = ops::sum(&tape, x);
        tape.backward(loss);
        for (double g : x.grad()) CHECK(g == 1.0);
    }

    Tensor q = Tensor::from_data({2}, {1, 2});
    q.set_requires_grad(true);
    q.zero_grad();
    {
        // sum of squares via n * mean((x-0)^2)
        Tape tape;
        Tensor ms = ops::mean_square_to(&tape, q, 0.0);
        Tensor loss = ops::weighted_sum(&tape, {{2.0, ms}});
        tape.backward(loss);
        CHECK(q.grad()[0] == doctest::Approx(2.0));
        CHECK(q.grad()[1] == doctest::Approx(4.0));
    }
}

TEST_CASE("backward twice on a consumed tape fails") {
    Tensor x = Tensor::from_data({2}, {1, 2});
    x.set_requires_grad(true);
    x.zero_grad();
    Tape tape;
    Tensor loss = ops::sum(&tape, x);
    tape.backward(loss);
    CHECK_THROWS_AS(tape.backward(loss), std::logic_error);
}

TEST_CASE("parameters off the loss path keep exactly zero gradients") {
    Tensor x = Tensor::from_data({3}, {1, 2, 3});
    Tensor unused = Tensor::from_data({2}, {5, 6});
    x.set_requires_grad(true);
    unused.set_requires_grad(true);
    x.zero_grad();
    unused.zero_grad();
    Tape tape;
    Tensor y = ops::relu(&tape, x);
    Tensor dead = ops::relu(&tape, unused); // recorded but disconnected from loss
    Tensor loss = ops::sum(&tape, y);
    tape.backward(loss);
    for (double g : unused.grad()) CHECK(g == 0.0);
    CHECK(dead.defined());
}

TEST_CASE("loss disconnected from tape is rejected") {
    Tensor x = Tensor::from_data({2}, {1, 2});
    x.set_requires_grad(true);
    Tape tape;
    Tensor off_tape = Tensor::scalar(3.0);
    CHECK_THROWS_AS(tape.backward(off_tape), std::invalid_argument);
}

TEST_CASE("frozen parameters receive no gradient but pass it through") {
    Tensor x = Tensor::from_data({1, 1, 2, 2}, {0.5, -0.3, 0.2, 0.8});
    Tensor k = Tensor::from_data({1, 1, 1, 1}, {2.0});
    Tensor b = Tensor::from_data({1}, {0.0});
    x.set_requires_grad(true);
    k.set_requires_grad(true);
    b.set_requires_grad(true);
    x.zero_grad();
    k.zero_grad();
    b.zero_grad();
    Tape tape;
    tape.freeze(k);
    tape.freeze(b);
    Tensor loss = ops::sum(&tape, ops::conv2d(&tape, x, k, b, 1, 0));
    tape.backward(loss);
    for (double g : x.grad()) CHECK(g == 2.0); // gradient flowed through the frozen conv
    for (double g : k.grad()) CHECK(g == 0.0);
    for (double g : b.grad()) CHECK(g == 0.0);
}

TEST_CASE("composite chain gradient check") {
    Rng rng(31);
    Tensor x0 = random_tensor(rng, {2, 2, 4, 4});
    Tensor k0 = random_tensor(rng, {3, 2, 3, 3});
    Tensor b0 = random_tensor(rng, {3});
    Tensor gamma0 = random_tensor(rng, {3});
    Tensor beta0 = random_tensor(rng, {3});

    Tensor target = far_target(rng, {2, 3, 4, 4}, 5.0);
    Tensor target_up = far_target(rng, {2, 3, 8, 8}, 5.0);

    auto chain = [&](Tape& t, const Tensor& x) {
        Tensor y = ops::conv2d(&t, x, k0, b0, 1, 1);
        auto state = fresh_bn_state(3);
        y = ops::batch_norm(&t, y, gamma0, beta0, state, ops::RunMode::train);
        y = ops::leaky_relu(&t, y, 0.2);
        return ops::mean_abs_diff(&t, y, target);
    };
    CHECK(grad_check(chain, x0.clone(), 1e-4) < 1e-5);

    auto chain_k = [&](Tape& t, const Tensor& k) {
        Tensor y = ops::conv2d(&t, x0, k, b0, 1, 1);
        auto state = fresh_bn_state(3);
        y = ops::batch_norm(&t, y, gamma0, beta0, state, ops::RunMode::train);
        y = ops::leaky_relu(&t, y, 0.2);
        y = ops::upsample2x(&t, y);
        return ops::mean_abs_diff(&t, y, target_up);
    };
    CHECK(grad_check(chain_k, k0.clone(), 1e-4) < 1e-5);
}

TEST_CASE("grad_check reference behaviors") {
    Rng rng(37);
    Tensor x = random_tensor(rng, {8});
    auto f_sum = [](Tape& t, const Tensor& v) { return ops::sum(&t, v); };
    CHECK(grad_check(f_sum, x.clone(), 1e-4) < 1e-10);

    auto f_sq = [](Tape& t, const Tensor& v) {
        Tensor ms = ops::mean_square_to(&t, v, 0.0);
        return ops::weighted_sum(&t, {{static_cast<double>(v.size()), ms}});
    };
    CHECK(grad_check(f_sq, x.clone(), 1e-4) < 1e-7);
}

TEST_CASE("cross_entropy basics") {
    // One pixel, two equal logits -> ln 2.
    Tensor logits = Tensor::from_data({1, 2, 1, 1}, {0.3, 0.3});
    LabelMap y({1, 1, 1});
    y.v = {0};
    Tensor loss = ops::cross_entropy(nullptr, logits, y);
    CHECK(std::abs(loss.item() - std::log(2.0)) < 1e-9);

    // Saturated correct class.
    Tensor sat = Tensor::from_data({1, 2, 1, 1}, {50.0, 0.0});
    Tensor sat_loss = ops::cross_entropy(nullptr, sat, y);
    CHECK(sat_loss.item() < 1e-20);

    // All pixels ignored is an error.
    LabelMap ignored({1, 1, 1});
    ignored.v = {kIgnoreLabel};
    CHECK_THROWS_AS(ops::cross_entropy(nullptr, logits, ignored), std::invalid_argument);

    // Out-of-range label.
    LabelMap bad({1, 1, 1});
    bad.v = {2};
    CHECK_THROWS_AS(ops::cross_entropy(nullptr, logits, bad), std::invalid_argument);
}

TEST_CASE("cross_entropy ignores 255 pixels exactly") {
    Rng rng(41);
    Tensor logits = random_tensor(rng, {1, 3, 2, 4});
    LabelMap full({1, 2, 4});
    for (std::size_t i = 0; i < full.v.size(); ++i) full.v[i] = static_cast<std::int32_t>(i % 3);

    // Same pixels with half of them masked out in a larger map.
    Tensor wide(Shape{1, 3, 2, 8}, 0.0);
    LabelMap wide_labels({1, 2, 8}, kIgnoreLabel);
    for (std::size_t r = 0; r < 2; ++r) {
        for (std::size_t c = 0; c < 4; ++c) {
            for (std::size_t ch = 0; ch < 3; ++ch) {
                wide.data()[ch * 16 + r * 8 + c] = logits.data()[ch * 8 + r * 4 + c];
            }
            wide_labels.v[r * 8 + c] = full.v[r * 4 + c];
        }
    }
    Tensor a = ops::cross_entropy(nullptr, logits, full);
    Tensor b = ops::cross_entropy(nullptr, wide, wide_labels);
    CHECK(a.item() == b.item());
}

TEST_CASE("cross_entropy gradient check") {
    Rng rng(43);
    Tensor logits = random_tensor(rng, {2, 4, 3, 3});
    LabelMap y({2, 3, 3});
    for (std::size_t i = 0; i < y.v.size(); ++i) {
        const auto draw = static_cast<std::int32_t>(rng.integer(5));
        y.v[i] = draw == 4 ? kIgnoreLabel : draw; // mix in some ignored pixels
    }
    auto f = [&](Tape& t, const Tensor& l) { return ops::cross_entropy(&t, l, y); };
    CHECK(grad_check(f, logits.clone(), 1e-4) < 1e-5);
}

TEST_CASE("scalar op gradient checks") {
    Rng rng(47);
    Tensor a0 = random_tensor(rng, {12});
    Tensor b0 = random_tensor(rng, {12});
    auto f_msq = [](Tape& t, const Tensor& v) { return ops::mean_square_to(&t, v, 0.4); };
    CHECK(grad_check(f_msq, a0.clone(), 1e-4) < 1e-5);

    auto f_abs = [&](Tape& t, const Tensor& v) { return ops::mean_abs_diff(&t, v, b0); };
    CHECK(grad_check(f_abs, a0.clone(), 1e-4) < 1e-5);

    auto f_add = [&](Tape& t, const Tensor& v) {
        Tensor s = ops::add(&t, v, b0);
        return ops::mean_square_to(&t, s, 0.0);
    };
    CHECK(grad_check(f_add, a0.clone(), 1e-4) < 1e-5);
}

TEST_CASE("tensor serialization round-trips bit-exactly") {
    Rng rng(53);
    Tensor t = random_tensor(rng, {2, 3, 4});
    t.data()[0] = -0.0;
    t.data()[1] = 1e-300;
    std::stringstream ss;
    save_tensor(t, ss);
    Tensor back = load_tensor(ss);
    CHECK(back.shape() == t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) {
        CHECK(std::memcmp(&back.data()[i], &t.data()[i], 8) == 0);
    }
}
