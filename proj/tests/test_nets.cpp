#include "doctest.h"

#include <cmath>
#include <cstring>
#include <set>

#include "spigan/nets.hpp"
#include "spigan/objectives.hpp"

using namespace spigan;

namespace {

Tensor random_image(Rng& rng, std::size_t n, std::size_t h, std::size_t w) {
    Tensor t({n, 3, h, w});
    for (auto& v : t.data()) v = rng.uniform(-1.0, 1.0);
    return t;
}

void zero_params(ParamSet& ps) {
    for (const auto& [name, t] : ps.items()) {
        Tensor mut = t;
        std::fill(mut.data().begin(), mut.data().end(), 0.0);
    }
}

NetworkSpec gen_spec() {
    NetworkSpec s;
    s.kind = NetKind::generator;
    return s;
}

NetworkSpec disc_spec() {
    NetworkSpec s;
    s.kind = NetKind::discriminator;
    return s;
}

NetworkSpec seg_spec() {
    NetworkSpec s;
    s.kind = NetKind::segmenter;
    return s;
}

} // namespace

TEST_CASE("generator preserves shape and stays inside (-1,1)") {
    Rng init(1);
    Generator g = build_generator(gen_spec(), init);
    Rng data(2);
    Tensor x = random_image(data, 1, 32, 64);
    Rng drop(3);
    Tensor y = g.forward(nullptr, x, ops::RunMode::train, &drop);
    CHECK(y.shape() == x.shape());
    for (double v : y.data()) {
        CHECK(v > -1.0);
        CHECK(v < 1.0);
    }
}

TEST_CASE("generator with zeroed parameters emits exact zeros") {
    Rng init(1);
    Generator g = build_generator(gen_spec(), init);
    zero_params(g.params);
    Rng data(2);
    Tensor x = random_image(data, 2, 8, 8);
    Tensor y = g.forward(nullptr, x, ops::RunMode::eval, nullptr);
    for (double v : y.data()) CHECK(v == 0.0);
}

TEST_CASE("generator rejects spatial dims not divisible by 4") {
    Rng init(1);
    Generator g = build_generator(gen_spec(), init);
    Tensor x({1, 3, 30, 64}, 0.0);
    CHECK_THROWS_AS(g.forward(nullptr, x, ops::RunMode::eval, nullptr), std::invalid_argument);
}

TEST_CASE("gaussian init std lands near 0.02") {
    Rng init(7);
    Generator g = build_generator(gen_spec(), init);
    const Tensor& w = g.params.at("res1.conv1.w");
    REQUIRE(w.size() >= 10000);
    double mean = 0.0;
    for (double v : w.data()) mean += v;
    mean /= static_cast<double>(w.size());
    double var = 0.0;
    for (double v : w.data()) var += (v - mean) * (v - mean);
    const double stddev = std::sqrt(var / static_cast<double>(w.size()));
    CHECK(stddev > 0.018);
    CHECK(stddev < 0.022);
}

TEST_CASE("builders are bit-deterministic in spec and seed") {
    Rng a(123), b(123);
    Generator g1 = build_generator(gen_spec(), a);
    Generator g2 = build_generator(gen_spec(), b);
    for (const auto& [name, t] : g1.params.items()) {
        const Tensor& u = g2.params.at(name);
        REQUIRE(u.size() == t.size());
        CHECK(std::memcmp(u.data().data(), t.data().data(), 8 * t.size()) == 0);
    }
}

TEST_CASE("the four parameter sets are disjoint") {
    Rng r(5);
    Generator g = build_generator(gen_spec(), r);
    Discriminator d = build_discriminator(disc_spec(), r);
    Segmenter t_net = build_segmenter(seg_spec(), r, 5);
    Segmenter p_net = build_segmenter(seg_spec(), r, 1);
    CHECK(g.params.disjoint_with(d.params));
    CHECK(g.params.disjoint_with(t_net.params));
    CHECK(g.params.disjoint_with(p_net.params));
    CHECK(d.params.disjoint_with(t_net.params));
    CHECK(d.params.disjoint_with(p_net.params));
    CHECK(t_net.params.disjoint_with(p_net.params));
}

TEST_CASE("discriminator output grid is three halvings") {
    Rng init(9);
    Discriminator d = build_discriminator(disc_spec(), init);
    Rng data(10);
    Tensor x = random_image(data, 1, 32, 64);
    Tensor s = d.forward(nullptr, x, ops::RunMode::train);
    CHECK(s.shape() == Shape{1, 1, 4, 8});

    zero_params(d.params);
    Tensor s0 = d.forward(nullptr, x, ops::RunMode::eval);
    for (double v : s0.data()) CHECK(v == 0.0);
}

TEST_CASE("discriminator rejects inputs that collapse below 1x1") {
    Rng init(9);
    Discriminator d = build_discriminator(disc_spec(), init);
    Tensor tiny({1, 3, 4, 4}, 0.1);
    CHECK_THROWS_AS(d.forward(nullptr, tiny, ops::RunMode::eval), std::invalid_argument);
}

TEST_CASE("discriminator patch scores are local to their receptive field") {
    Rng init(21);
    Discriminator d = build_discriminator(disc_spec(), init);
    Rng data(22);
    Tensor x = random_image(data, 1, 32, 64);
    Tensor base = d.forward(nullptr, x, ops::RunMode::eval);

    // Receptive-field geometry composed from the published layer shapes:
    // three k4/s2/p1 stages plus the k3/s1/p1 head.
    std::size_t rf = 1, stride = 1, pad = 0;
    auto compose = [&](std::size_t k, std::size_t s, std::size_t p) {
        rf = rf + (k - 1) * stride;
        pad = pad + p * stride;
        stride = stride * s;
    };
    compose(4, 2, 1);
    compose(4, 2, 1);
    compose(4, 2, 1);
    compose(3, 1, 1);

    const std::size_t hr = 17, wc = 33; // perturbed pixel
    Tensor xp = x.clone();
    for (std::size_t c = 0; c < 3; ++c) xp.data()[(c * 32 + hr) * 64 + wc] += 0.5;
    Tensor bumped = d.forward(nullptr, xp, ops::RunMode::eval);

    const std::size_t oh = base.dim(2), ow = base.dim(3);
    for (std::size_t i = 0; i < oh; ++i) {
        for (std::size_t j = 0; j < ow; ++j) {
            const long r0 = static_cast<long>(i * stride) - static_cast<long>(pad);
            const long c0 = static_cast<long>(j * stride) - static_cast<long>(pad);
            const bool covers = r0 <= static_cast<long>(hr) &&
                                static_cast<long>(hr) < r0 + static_cast<long>(rf) &&
                                c0 <= static_cast<long>(wc) &&
                                static_cast<long>(wc) < c0 + static_cast<long>(rf);
            const double delta = std::abs(bumped.data()[i * ow + j] - base.data()[i * ow + j]);
            if (!covers) CHECK(delta == 0.0);
        }
    }
    // and the perturbation was visible somewhere
    bool any = false;
    for (std::size_t k = 0; k < base.size(); ++k) any |= bumped.data()[k] != base.data()[k];
    CHECK(any);
}

TEST_CASE("freshly initialized discriminator scores hover near zero") {
    Rng init(31);
    Discriminator d = build_discriminator(disc_spec(), init);
    Rng data(32);
    double acc = 0.0;
    std::size_t count = 0;
    for (int b = 0; b < 125; ++b) { // 1000 samples in batches of 8
        Tensor x = random_image(data, 8, 32, 64);
        Tensor s = d.forward(nullptr, x, ops::RunMode::train);
        for (double v : s.data()) acc += v;
        count += s.size();
    }
    const double mean = acc / static_cast<double>(count);
    CHECK(std::abs(mean) < 0.2);
}

TEST_CASE("segmenter logits shape and sigmoid head range") {
    Rng init(41);
    Segmenter t_net = build_segmenter(seg_spec(), init, 5);
    Rng data(42);
    Tensor x = random_image(data, 1, 32, 64);
    Tensor logits = t_net.forward(nullptr, x, ops::RunMode::train);
    CHECK(logits.shape() == Shape{1, 5, 32, 64});

    Segmenter p_net = build_segmenter(seg_spec(), init, 1);
    Tensor depth = p_net.forward(nullptr, x, ops::RunMode::train);
    CHECK(depth.shape() == Shape{1, 1, 32, 64});
    for (double v : depth.data()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }

    Tensor odd({1, 3, 30, 62}, 0.0);
    CHECK_THROWS_AS(t_net.forward(nullptr, odd, ops::RunMode::eval), std::invalid_argument);
}

TEST_CASE("segmenter skip connections are wired") {
    Rng init(51);
    Segmenter a = build_segmenter(seg_spec(), init, 5);
    Rng init2(51);
    Segmenter b = build_segmenter(seg_spec(), init2, 5);
    {
        Tensor w1 = b.params.at("skip1.w");
        std::fill(w1.data().begin(), w1.data().end(), 0.0);
        Tensor w0 = b.params.at("skip0.w");
        std::fill(w0.data().begin(), w0.data().end(), 0.0);
    }
    Rng data(52);
    Tensor x = random_image(data, 1, 16, 16);
    Tensor ya = a.forward(nullptr, x, ops::RunMode::eval);
    Tensor yb = b.forward(nullptr, x, ops::RunMode::eval);
    bool differs = false;
    for (std::size_t i = 0; i < ya.size(); ++i) differs |= ya.data()[i] != yb.data()[i];
    CHECK(differs);
}

TEST_CASE("feature pyramid is frozen and deterministic") {
    FeaturePyramid phi1 = feature_extractor_phi();
    FeaturePyramid phi2 = feature_extractor_phi();
    for (const auto& [name, t] : phi1.params.items()) {
        const Tensor& u = phi2.params.at(name);
        CHECK(std::memcmp(u.data().data(), t.data().data(), 8 * t.size()) == 0);
        CHECK(!t.requires_grad());
    }

    Rng data(61);
    Tensor x = random_image(data, 1, 32, 64);
    auto maps1 = phi1.forward(nullptr, x);
    auto maps2 = phi2.forward(nullptr, x);
    REQUIRE(maps1.size() == 4);
    CHECK(maps1[0].shape() == Shape{1, 3, 32, 64});
    CHECK(maps1[1].shape() == Shape{1, 8, 16, 32});
    CHECK(maps1[2].shape() == Shape{1, 16, 8, 16});
    CHECK(maps1[3].shape() == Shape{1, 32, 4, 8});
    for (std::size_t m = 0; m < maps1.size(); ++m) {
        CHECK(std::memcmp(maps1[m].data().data(), maps2[m].data().data(), 8 * maps1[m].size()) == 0);
    }
}

TEST_CASE("gradients reach the pyramid input but never its weights") {
    FeaturePyramid phi = feature_extractor_phi();
    Rng data(71);
    Tensor x = random_image(data, 1, 8, 8);
    x.set_requires_grad(true);
    x.zero_grad();
    Tape tape;
    auto maps = phi.forward(&tape, x);
    Tensor loss = ops::sum(&tape, maps.back());
    tape.backward(loss);
    bool nonzero = false;
    for (double g : x.grad()) nonzero |= g != 0.0;
    CHECK(nonzero);
    for (const auto& [name, t] : phi.params.items()) CHECK(!t.has_grad());
}

TEST_CASE("generator train forward consumes the dropout stream deterministically") {
    Rng init(81);
    Generator g1 = build_generator(gen_spec(), init);
    Rng init2(81);
    Generator g2 = build_generator(gen_spec(), init2);
    Rng data(82);
    Tensor x = random_image(data, 2, 16, 16);
    Rng d1(99), d2(99);
    Tensor y1 = g1.forward(nullptr, x, ops::RunMode::train, &d1);
    Tensor y2 = g2.forward(nullptr, x, ops::RunMode::train, &d2);
    CHECK(std::memcmp(y1.data().data(), y2.data().data(), 8 * y1.size()) == 0);
}
