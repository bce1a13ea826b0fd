#include "spigan/nets.hpp"

#include <stdexcept>

namespace spigan {

void NetworkSpec::validate() const {
    if (base_channels < 1) throw std::invalid_argument("base_channels must be >= 1");
    if (n_resblocks < 0) throw std::invalid_argument("n_resblocks must be >= 0");
    if (kind == NetKind::discriminator && n_layers < 1)
        throw std::invalid_argument("discriminator needs n_layers >= 1");
    if (kind == NetKind::segmenter && n_classes < 2)
        throw std::invalid_argument("segmenter needs n_classes >= 2");
}

void ParamSet::add(const std::string& name, Tensor t) {
    if (!t.defined()) throw std::invalid_argument("undefined tensor for parameter " + name);
    if (params_.count(name)) throw std::invalid_argument("duplicate parameter name " + name);
    t.set_requires_grad(true);
    params_.emplace(name, std::move(t));
}

Tensor& ParamSet::at(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("no parameter named " + name);
    return it->second;
}

const Tensor& ParamSet::at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::out_of_range("no parameter named " + name);
    return it->second;
}

std::size_t ParamSet::numel() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.size();
    return n;
}

void ParamSet::zero_grad() {
    for (auto& [name, t] : params_) t.zero_grad();
}

void ParamSet::set_requires_grad_all(bool b) {
    for (auto& [name, t] : params_) t.set_requires_grad(b);
}

bool ParamSet::disjoint_with(const ParamSet& other) const {
    for (const auto& [na, ta] : params_) {
        for (const auto& [nb, tb] : other.params_) {
            if (ta.same_storage(tb)) return false;
        }
    }
    return true;
}

void freeze_params(Tape& tape, const ParamSet& params) {
    for (const auto& [name, t] : params.items()) tape.freeze(t);
}

namespace layers {

Tensor Norm::apply(Tape* tape, const Tensor& x, ops::RunMode mode) {
    switch (kind) {
    case NormKind::batch:
        return ops::batch_norm(tape, x, gamma, beta, state, mode);
    case NormKind::instance:
        return ops::instance_norm(tape, x, gamma, beta);
    case NormKind::none:
        return x;
    }
    throw std::logic_error("unreachable norm kind");
}

} // namespace layers

namespace {

Tensor gaussian_kernel(Rng& rng, std::size_t c_out, std::size_t c_in, std::size_t kh,
                       std::size_t kw) {
    Tensor t({c_out, c_in, kh, kw});
    for (auto& v : t.data()) v = rng.normal(0.0, kInitStd);
    return t;
}

layers::Conv make_conv(ParamSet& ps, const std::string& name, Rng& rng, std::size_t c_out,
                       std::size_t c_in, std::size_t k, int stride, int pad) {
    layers::Conv conv;
    conv.w = gaussian_kernel(rng, c_out, c_in, k, k);
    conv.b = Tensor({c_out}, 0.0);
    conv.stride = stride;
    conv.pad = pad;
    ps.add(name + ".w", conv.w);
    ps.add(name + ".b", conv.b);
    return conv;
}

layers::Norm make_norm(ParamSet& ps, std::map<std::string, Tensor>& buffers,
                       const std::string& name, NormKind kind, std::size_t c) {
    layers::Norm norm;
    norm.kind = kind;
    if (kind == NormKind::none) return norm;
    norm.gamma = Tensor({c}, 1.0);
    norm.beta = Tensor({c}, 0.0);
    ps.add(name + ".gamma", norm.gamma);
    ps.add(name + ".beta", norm.beta);
    if (kind == NormKind::batch) {
        norm.state.running_mean = Tensor({c}, 0.0);
        norm.state.running_var = Tensor({c}, 1.0);
        buffers.emplace(name + ".running_mean", norm.state.running_mean);
        buffers.emplace(name + ".running_var", norm.state.running_var);
    }
    return norm;
}

void require_div4(const Tensor& x, const char* who) {
    if (x.rank() != 4 || x.dim(2) % 4 != 0 || x.dim(3) % 4 != 0) {
        throw std::invalid_argument(std::string(who) + " needs [N,C,H,W] input with H,W divisible by 4, got " +
                                    shape_str(x.shape()));
    }
}

} // namespace

Generator build_generator(const NetworkSpec& spec, Rng& rng) {
    spec.validate();
    Generator g;
    g.spec = spec;
    const std::size_t b = static_cast<std::size_t>(spec.base_channels);

    g.stem = make_conv(g.params, "stem", rng, b, 3, 7, 1, 3);
    g.stem_norm = make_norm(g.params, g.buffers, "stem.norm", spec.norm, b);
    std::size_t ch = b;
    for (int i = 0; i < 2; ++i) {
        g.down.push_back(make_conv(g.params, "down" + std::to_string(i + 1), rng, ch * 2, ch, 3, 2, 1));
        g.down_norm.push_back(
            make_norm(g.params, g.buffers, "down" + std::to_string(i + 1) + ".norm", spec.norm, ch * 2));
        ch *= 2;
    }
    for (int i = 0; i < spec.n_resblocks; ++i) {
        const std::string base = "res" + std::to_string(i + 1);
        Generator::ResBlock block;
        block.conv1 = make_conv(g.params, base + ".conv1", rng, ch, ch, 3, 1, 1);
        block.norm1 = make_norm(g.params, g.buffers, base + ".norm1", spec.norm, ch);
        block.conv2 = make_conv(g.params, base + ".conv2", rng, ch, ch, 3, 1, 1);
        block.norm2 = make_norm(g.params, g.buffers, base + ".norm2", spec.norm, ch);
        g.res.push_back(std::move(block));
    }
    for (int i = 0; i < 2; ++i) {
        g.up.push_back(make_conv(g.params, "up" + std::to_string(i + 1), rng, ch / 2, ch, 3, 1, 1));
        g.up_norm.push_back(
            make_norm(g.params, g.buffers, "up" + std::to_string(i + 1) + ".norm", spec.norm, ch / 2));
        ch /= 2;
    }
    g.head = make_conv(g.params, "head", rng, 3, ch, 7, 1, 3);
    return g;
}

Tensor Generator::forward(Tape* tape, const Tensor& x, ops::RunMode mode, Rng* dropout_rng) {
    require_div4(x, "generator");
    if (mode == ops::RunMode::train && dropout_rng == nullptr && !res.empty()) {
        throw std::invalid_argument("generator train-mode forward needs a dropout rng");
    }
    Tensor h = ops::relu(tape, stem_norm.apply(tape, stem.apply(tape, x), mode));
    for (std::size_t i = 0; i < down.size(); ++i) {
        h = ops::relu(tape, down_norm[i].apply(tape, down[i].apply(tape, h), mode));
    }
    for (auto& block : res) {
        Tensor r = ops::relu(tape, block.norm1.apply(tape, block.conv1.apply(tape, h), mode));
        if (mode == ops::RunMode::train) {
            r = ops::dropout(tape, r, kGeneratorDropout, *dropout_rng, mode);
        }
        r = block.norm2.apply(tape, block.conv2.apply(tape, r), mode);
        h = ops::add(tape, h, r);
    }
    for (std::size_t i = 0; i < up.size(); ++i) {
        h = ops::upsample2x(tape, h);
        h = ops::relu(tape, up_norm[i].apply(tape, up[i].apply(tape, h), mode));
    }
    return ops::tanh_act(tape, head.apply(tape, h));
}

Discriminator build_discriminator(const NetworkSpec& spec, Rng& rng) {
    spec.validate();
    Discriminator d;
    d.spec = spec;
    std::size_t in_ch = 3;
    std::size_t ch = static_cast<std::size_t>(spec.base_channels);
    for (int i = 0; i < spec.n_layers; ++i) {
        d.stages.push_back(make_conv(d.params, "stage" + std::to_string(i + 1), rng, ch, in_ch, 4, 2, 1));
        d.stage_norm.push_back(
            make_norm(d.params, d.buffers, "stage" + std::to_string(i + 1) + ".norm", spec.norm, ch));
        in_ch = ch;
        ch *= 2;
    }
    d.head = make_conv(d.params, "head", rng, 1, in_ch, 3, 1, 1);
    return d;
}

Tensor Discriminator::forward(Tape* tape, const Tensor& x, ops::RunMode mode) {
    if (x.rank() != 4) throw std::invalid_argument("discriminator needs [N,C,H,W] input");
    std::size_t h = x.dim(2), w = x.dim(3);
    for (std::size_t i = 0; i < stages.size(); ++i) {
        if (h < 2 || w < 2) {
            throw std::invalid_argument("discriminator input " + shape_str(x.shape()) +
                                        " collapses below 1x1 at stage " + std::to_string(i + 1));
        }
        h = (h + 2 - 4) / 2 + 1;
        w = (w + 2 - 4) / 2 + 1;
    }
    Tensor out = x;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        out = stages[i].apply(tape, out);
        out = stage_norm[i].apply(tape, out, mode);
        out = ops::leaky_relu(tape, out, kLeakySlope);
    }
    return head.apply(tape, out);
}

Segmenter build_segmenter(const NetworkSpec& spec, Rng& rng, int out_channels) {
    spec.validate();
    if (out_channels < 1) throw std::invalid_argument("segmenter out_channels must be >= 1");
    Segmenter s;
    s.spec = spec;
    s.out_channels = out_channels;
    s.sigmoid_head = (out_channels == 1); // the PI head predicts inverse depth in [0,1]
    const std::size_t b = static_cast<std::size_t>(spec.base_channels);

    s.stem = make_conv(s.params, "stem", rng, b, 3, 3, 1, 1);
    s.stem_norm = make_norm(s.params, s.buffers, "stem.norm", spec.norm, b);
    s.enc1 = make_conv(s.params, "enc1", rng, 2 * b, b, 3, 2, 1);
    s.enc1_norm = make_norm(s.params, s.buffers, "enc1.norm", spec.norm, 2 * b);
    s.enc2 = make_conv(s.params, "enc2", rng, 4 * b, 2 * b, 3, 2, 1);
    s.enc2_norm = make_norm(s.params, s.buffers, "enc2.norm", spec.norm, 4 * b);
    s.mid = make_conv(s.params, "mid", rng, 4 * b, 4 * b, 3, 1, 1);
    s.mid_norm = make_norm(s.params, s.buffers, "mid.norm", spec.norm, 4 * b);
    s.dec1 = make_conv(s.params, "dec1", rng, 2 * b, 4 * b, 3, 1, 1);
    s.dec1_norm = make_norm(s.params, s.buffers, "dec1.norm", spec.norm, 2 * b);
    s.skip1 = make_conv(s.params, "skip1", rng, 2 * b, 2 * b, 1, 1, 0);
    s.dec2 = make_conv(s.params, "dec2", rng, b, 2 * b, 3, 1, 1);
    s.dec2_norm = make_norm(s.params, s.buffers, "dec2.norm", spec.norm, b);
    s.skip0 = make_conv(s.params, "skip0", rng, b, b, 1, 1, 0);
    s.head = make_conv(s.params, "head", rng, static_cast<std::size_t>(out_channels), b, 3, 1, 1);
    return s;
}

Tensor Segmenter::forward(Tape* tape, const Tensor& x, ops::RunMode mode) {
    require_div4(x, "segmenter");
    Tensor s0 = ops::relu(tape, stem_norm.apply(tape, stem.apply(tape, x), mode));
    Tensor s1 = ops::relu(tape, enc1_norm.apply(tape, enc1.apply(tape, s0), mode));
    Tensor h = ops::relu(tape, enc2_norm.apply(tape, enc2.apply(tape, s1), mode));
    h = ops::relu(tape, mid_norm.apply(tape, mid.apply(tape, h), mode));

    h = ops::upsample2x(tape, h);
    h = dec1_norm.apply(tape, dec1.apply(tape, h), mode);
    h = ops::relu(tape, ops::add(tape, h, skip1.apply(tape, s1)));

    h = ops::upsample2x(tape, h);
    h = dec2_norm.apply(tape, dec2.apply(tape, h), mode);
    h = ops::relu(tape, ops::add(tape, h, skip0.apply(tape, s0)));

    Tensor logits = head.apply(tape, h);
    return sigmoid_head ? ops::sigmoid(tape, logits) : logits;
}

FeaturePyramid feature_extractor_phi() {
    Rng rng(kPhiSeed);
    FeaturePyramid phi;
    std::size_t in_ch = 3;
    std::size_t ch = 8;
    for (int i = 0; i < 3; ++i) {
        phi.stages.push_back(
            make_conv(phi.params, "stage" + std::to_string(i + 1), rng, ch, in_ch, 3, 2, 1));
        in_ch = ch;
        ch *= 2;
    }
    phi.params.set_requires_grad_all(false); // frozen: never receives gradients
    return phi;
}

std::vector<Tensor> FeaturePyramid::forward(Tape* tape, const Tensor& x) const {
    std::vector<Tensor> maps;
    maps.push_back(x);
    Tensor h = x;
    for (const auto& stage : stages) {
        h = ops::leaky_relu(tape, stage.apply(tape, h), kLeakySlope);
        maps.push_back(h);
    }
    return maps;
}

} // namespace spigan
