#include "spigan/ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "gemm.hpp"

namespace spigan::ops {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

void require_image(const Tensor& t, const char* what) {
    require(t.defined() && t.rank() == 4,
            std::string(what) + " must be a rank-4 [N,C,H,W] tensor");
}

// Scatters patches of x (one sample, [C,H,W]) into col [C*kh*kw, Ho*Wo].
void im2col(const double* x, std::size_t c_in, std::size_t h, std::size_t w, std::size_t kh,
            std::size_t kw, int stride, int pad, std::size_t ho, std::size_t wo, double* col) {
    for (std::size_t c = 0; c < c_in; ++c) {
        for (std::size_t ki = 0; ki < kh; ++ki) {
            for (std::size_t kj = 0; kj < kw; ++kj) {
                double* row = col + ((c * kh + ki) * kw + kj) * (ho * wo);
                for (std::size_t oh = 0; oh < ho; ++oh) {
                    const long ih = static_cast<long>(oh) * stride - pad + static_cast<long>(ki);
                    if (ih < 0 || ih >= static_cast<long>(h)) {
                        std::fill(row + oh * wo, row + (oh + 1) * wo, 0.0);
                        continue;
                    }
                    const double* src = x + (c * h + ih) * w;
                    for (std::size_t ow = 0; ow < wo; ++ow) {
                        const long iw = static_cast<long>(ow) * stride - pad + static_cast<long>(kj);
                        row[oh * wo + ow] = (iw < 0 || iw >= static_cast<long>(w)) ? 0.0 : src[iw];
                    }
                }
            }
        }
    }
}

// Accumulates col-layout gradients back onto the input image.
void col2im_add(const double* col, std::size_t c_in, std::size_t h, std::size_t w, std::size_t kh,
                std::size_t kw, int stride, int pad, std::size_t ho, std::size_t wo, double* dx) {
    for (std::size_t c = 0; c < c_in; ++c) {
        for (std::size_t ki = 0; ki < kh; ++ki) {
            for (std::size_t kj = 0; kj < kw; ++kj) {
                const double* row = col + ((c * kh + ki) * kw + kj) * (ho * wo);
                for (std::size_t oh = 0; oh < ho; ++oh) {
                    const long ih = static_cast<long>(oh) * stride - pad + static_cast<long>(ki);
                    if (ih < 0 || ih >= static_cast<long>(h)) continue;
                    double* dst = dx + (c * h + ih) * w;
                    for (std::size_t ow = 0; ow < wo; ++ow) {
                        const long iw = static_cast<long>(ow) * stride - pad + static_cast<long>(kj);
                        if (iw < 0 || iw >= static_cast<long>(w)) continue;
                        dst[iw] += row[oh * wo + ow];
                    }
                }
            }
        }
    }
}

} // namespace

Tensor conv2d(Tape* tape, const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int stride, int padding) {
    require_image(input, "conv2d input");
    require(kernel.defined() && kernel.rank() == 4, "conv2d kernel must be rank-4 [Cout,Cin,kh,kw]");
    require(bias.defined() && bias.rank() == 1, "conv2d bias must be rank-1 [Cout]");
    require(stride >= 1, "conv2d stride must be >= 1");
    require(padding >= 0, "conv2d padding must be >= 0");

    const std::size_t n = input.dim(0), c_in = input.dim(1), h = input.dim(2), w = input.dim(3);
    const std::size_t c_out = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
    require(kernel.dim(1) == c_in,
            "conv2d channel mismatch: input " + shape_str(input.shape()) + " vs kernel " +
                shape_str(kernel.shape()));
    require(bias.dim(0) == c_out, "conv2d bias length must equal Cout");
    require(kh <= h + 2 * static_cast<std::size_t>(padding) &&
                kw <= w + 2 * static_cast<std::size_t>(padding),
            "conv2d kernel larger than padded input");

    const std::size_t ho = (h + 2 * padding - kh) / stride + 1;
    const std::size_t wo = (w + 2 * padding - kw) / stride + 1;
    require(ho >= 1 && wo >= 1, "conv2d output collapsed below 1x1");

    const std::size_t k_dim = c_in * kh * kw;
    const std::size_t out_hw = ho * wo;

    Tensor out({n, c_out, ho, wo});
    {
        std::vector<double> col(k_dim * out_hw);
        for (std::size_t i = 0; i < n; ++i) {
            im2col(input.data().data() + i * c_in * h * w, c_in, h, w, kh, kw, stride, padding,
                   ho, wo, col.data());
            detail::dgemm(false, false, c_out, out_hw, k_dim, 1.0, kernel.data().data(), k_dim,
                          col.data(), out_hw, 0.0, out.data().data() + i * c_out * out_hw, out_hw);
        }
        double* o = out.data().data();
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t co = 0; co < c_out; ++co) {
                const double b = bias.data()[co];
                double* p = o + (i * c_out + co) * out_hw;
                for (std::size_t j = 0; j < out_hw; ++j) p[j] += b;
            }
        }
    }

    if (!tape) return out;
    const bool need_in = tape->wants_grad(input);
    const bool need_k = tape->wants_grad(kernel);
    const bool need_b = tape->wants_grad(bias);
    if (!need_in && !need_k && !need_b) return out;

    Tensor in_t = input, ker_t = kernel, bias_t = bias;
    tape->record(out, [=]() mutable {
        const std::vector<double>& dout = out.grad();
        std::vector<double> col(k_dim * out_hw);
        std::vector<double> dcol(need_in ? k_dim * out_hw : 0);
        for (std::size_t i = 0; i < n; ++i) {
            const double* dout_i = dout.data() + i * c_out * out_hw;
            if (need_k) {
                im2col(in_t.data().data() + i * c_in * h * w, c_in, h, w, kh, kw, stride,
                       padding, ho, wo, col.data());
                detail::dgemm(false, true, c_out, k_dim, out_hw, 1.0, dout_i, out_hw, col.data(),
                              out_hw, 1.0, ker_t.grad().data(), k_dim);
            }
            if (need_in) {
                detail::dgemm(true, false, k_dim, out_hw, c_out, 1.0, ker_t.data().data(), k_dim,
                              dout_i, out_hw, 0.0, dcol.data(), out_hw);
                col2im_add(dcol.data(), c_in, h, w, kh, kw, stride, padding, ho, wo,
                           in_t.grad().data() + i * c_in * h * w);
            }
        }
        if (need_b) {
            std::vector<double>& db = bias_t.grad();
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t co = 0; co < c_out; ++co) {
                    const double* p = dout.data() + (i * c_out + co) * out_hw;
                    double acc = 0.0;
                    for (std::size_t j = 0; j < out_hw; ++j) acc += p[j];
                    db[co] += acc;
                }
            }
        }
    });
    return out;
}

Tensor upsample2x(Tape* tape, const Tensor& input) {
    require_image(input, "upsample2x input");
    const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    Tensor out({n, c, 2 * h, 2 * w});
    const double* x = input.data().data();
    double* y = out.data().data();
    for (std::size_t nc = 0; nc < n * c; ++nc) {
        const double* xp = x + nc * h * w;
        double* yp = y + nc * 4 * h * w;
        for (std::size_t i = 0; i < h; ++i) {
            for (std::size_t j = 0; j < w; ++j) {
                const double v = xp[i * w + j];
                double* row0 = yp + (2 * i) * 2 * w + 2 * j;
                double* row1 = row0 + 2 * w;
                row0[0] = row0[1] = row1[0] = row1[1] = v;
            }
        }
    }
    if (!tape || !tape->wants_grad(input)) return out;
    Tensor in_t = input;
    tape->record(out, [=]() mutable {
        const std::vector<double>& dy = out.grad();
        std::vector<double>& dx = in_t.grad();
        for (std::size_t nc = 0; nc < n * c; ++nc) {
            const double* dyp = dy.data() + nc * 4 * h * w;
            double* dxp = dx.data() + nc * h * w;
            for (std::size_t i = 0; i < h; ++i) {
                for (std::size_t j = 0; j < w; ++j) {
                    const double* row0 = dyp + (2 * i) * 2 * w + 2 * j;
                    const double* row1 = row0 + 2 * w;
                    dxp[i * w + j] += row0[0] + row0[1] + row1[0] + row1[1];
                }
            }
        }
    });
    return out;
}

namespace {

// Shared shell for the elementwise activations: fwd(x) -> y,
// dloc(x, y) -> local derivative.
template <class Fwd, class Dloc>
Tensor pointwise(Tape* tape, const Tensor& x, Fwd fwd, Dloc dloc) {
    Tensor out(x.shape());
    const std::size_t sz = x.size();
    for (std::size_t i = 0; i < sz; ++i) out.data()[i] = fwd(x.data()[i]);
    if (!tape || !tape->wants_grad(x)) return out;
    Tensor x_t = x;
    tape->record(out, [=]() mutable {
        const std::vector<double>& dy = out.grad();
        std::vector<double>& dx = x_t.grad();
        for (std::size_t i = 0; i < sz; ++i) dx[i] += dy[i] * dloc(x_t.data()[i], out.data()[i]);
    });
    return out;
}

} // namespace

Tensor relu(Tape* tape, const Tensor& x) {
    return pointwise(
        tape, x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(Tape* tape, const Tensor& x, double slope) {
    return pointwise(
        tape, x, [slope](double v) { return v > 0.0 ? v : slope * v; },
        [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Tensor tanh_act(Tape* tape, const Tensor& x) {
    return pointwise(
        tape, x, [](double v) { return std::tanh(v); },
        [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(Tape* tape, const Tensor& x) {
    return pointwise(
        tape, x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
        [](double, double y) { return y * (1.0 - y); });
}

namespace {

// Normalization core shared by batch and instance norm. Each group is a set
// of equally sized contiguous spans of x; all spans in a group are normalized
// by the group's mean and variance.
struct NormGroups {
    std::size_t span_len;
    // group -> list of span start offsets
    std::vector<std::vector<std::size_t>> groups;
};

Tensor norm_forward_train(Tape* tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                          const NormGroups& ng, std::vector<double>* out_mean,
                          std::vector<double>* out_invstd,
                          const std::vector<std::size_t>& group_channel) {
    const std::size_t n_groups = ng.groups.size();
    std::vector<double> mean(n_groups), invstd(n_groups);
    Tensor out(x.shape());
    const double* xd = x.data().data();
    double* yd = out.data().data();
    for (std::size_t g = 0; g < n_groups; ++g) {
        const std::size_t m = ng.span_len * ng.groups[g].size();
        double acc = 0.0;
        for (std::size_t s : ng.groups[g]) {
            for (std::size_t i = 0; i < ng.span_len; ++i) acc += xd[s + i];
        }
        const double mu = acc / static_cast<double>(m);
        double vacc = 0.0;
        for (std::size_t s : ng.groups[g]) {
            for (std::size_t i = 0; i < ng.span_len; ++i) {
                const double d = xd[s + i] - mu;
                vacc += d * d;
            }
        }
        const double var = vacc / static_cast<double>(m);
        const double is = 1.0 / std::sqrt(var + kBatchNormEps);
        mean[g] = mu;
        invstd[g] = is;
        const double gam = gamma.data()[group_channel[g]];
        const double bet = beta.data()[group_channel[g]];
        for (std::size_t s : ng.groups[g]) {
            for (std::size_t i = 0; i < ng.span_len; ++i) {
                yd[s + i] = gam * (xd[s + i] - mu) * is + bet;
            }
        }
    }
    if (out_mean) *out_mean = mean;
    if (out_invstd) *out_invstd = invstd;

    if (!tape) return out;
    const bool need_x = tape->wants_grad(x);
    const bool need_g = tape->wants_grad(gamma);
    const bool need_b = tape->wants_grad(beta);
    if (!need_x && !need_g && !need_b) return out;

    Tensor x_t = x, gamma_t = gamma, beta_t = beta;
    tape->record(out, [=]() mutable {
        const std::vector<double>& dy = out.grad();
        const double* xd2 = x_t.data().data();
        for (std::size_t g = 0; g < ng.groups.size(); ++g) {
            const double mu = mean[g];
            const double is = invstd[g];
            const std::size_t c = group_channel[g];
            const double gam = gamma_t.data()[c];
            const double m = static_cast<double>(ng.span_len * ng.groups[g].size());
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (std::size_t s : ng.groups[g]) {
                for (std::size_t i = 0; i < ng.span_len; ++i) {
                    const double xh = (xd2[s + i] - mu) * is;
                    sum_dy += dy[s + i];
                    sum_dy_xhat += dy[s + i] * xh;
                }
            }
            if (need_g) gamma_t.grad()[c] += sum_dy_xhat;
            if (need_b) beta_t.grad()[c] += sum_dy;
            if (need_x) {
                std::vector<double>& dx = x_t.grad();
                const double k = gam * is / m;
                for (std::size_t s : ng.groups[g]) {
                    for (std::size_t i = 0; i < ng.span_len; ++i) {
                        const double xh = (xd2[s + i] - mu) * is;
                        dx[s + i] += k * (m * dy[s + i] - sum_dy - xh * sum_dy_xhat);
                    }
                }
            }
        }
    });
    return out;
}

} // namespace

Tensor batch_norm(Tape* tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, RunMode mode) {
    require_image(x, "batch_norm input");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    require(gamma.defined() && gamma.size() == c && beta.defined() && beta.size() == c,
            "batch_norm gamma/beta must have one entry per channel");
    require(state.running_mean.defined() && state.running_mean.size() == c &&
                state.running_var.defined() && state.running_var.size() == c,
            "batch_norm running stats must have one entry per channel");

    const std::size_t hw = h * w;
    if (mode == RunMode::train) {
        const std::size_t m = n * hw;
        require(m >= 2, "batch_norm train mode needs at least 2 elements per channel, got " +
                            std::to_string(m));
        NormGroups ng;
        ng.span_len = hw;
        ng.groups.resize(c);
        std::vector<std::size_t> group_channel(c);
        for (std::size_t ci = 0; ci < c; ++ci) {
            group_channel[ci] = ci;
            ng.groups[ci].reserve(n);
            for (std::size_t i = 0; i < n; ++i) ng.groups[ci].push_back((i * c + ci) * hw);
        }
        std::vector<double> mean, invstd;
        Tensor out = norm_forward_train(tape, x, gamma, beta, ng, &mean, &invstd, group_channel);
        // Unbiased variance feeds the running estimate, as is conventional.
        const double md = static_cast<double>(m);
        for (std::size_t ci = 0; ci < c; ++ci) {
            const double var = 1.0 / (invstd[ci] * invstd[ci]) - kBatchNormEps;
            const double var_u = var * md / (md - 1.0);
            state.running_mean.data()[ci] =
                kBatchNormMomentum * state.running_mean.data()[ci] + (1.0 - kBatchNormMomentum) * mean[ci];
            state.running_var.data()[ci] =
                kBatchNormMomentum * state.running_var.data()[ci] + (1.0 - kBatchNormMomentum) * var_u;
        }
        return out;
    }

    // Eval: normalize by running statistics; these are constants for autodiff.
    Tensor out(x.shape());
    const double* xd = x.data().data();
    double* yd = out.data().data();
    std::vector<double> invstd(c);
    for (std::size_t ci = 0; ci < c; ++ci) {
        invstd[ci] = 1.0 / std::sqrt(state.running_var.data()[ci] + kBatchNormEps);
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t ci = 0; ci < c; ++ci) {
            const double mu = state.running_mean.data()[ci];
            const double is = invstd[ci];
            const double gam = gamma.data()[ci], bet = beta.data()[ci];
            const double* xp = xd + (i * c + ci) * hw;
            double* yp = yd + (i * c + ci) * hw;
            for (std::size_t j = 0; j < hw; ++j) yp[j] = gam * (xp[j] - mu) * is + bet;
        }
    }
    if (!tape) return out;
    const bool need_x = tape->wants_grad(x);
    const bool need_g = tape->wants_grad(gamma);
    const bool need_b = tape->wants_grad(beta);
    if (!need_x && !need_g && !need_b) return out;
    Tensor rm = state.running_mean, rv = state.running_var;
    Tensor x_t = x, gamma_t = gamma, beta_t = beta;
    tape->record(out, [=]() mutable {
        const std::vector<double>& dy = out.grad();
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t ci = 0; ci < c; ++ci) {
                const double is = 1.0 / std::sqrt(rv.data()[ci] + kBatchNormEps);
                const double mu = rm.data()[ci];
                const std::size_t base = (i * c + ci) * hw;
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (std::size_t j = 0; j < hw; ++j) {
                    sum_dy += dy[base + j];
                    sum_dy_xhat += dy[base + j] * (x_t.data()[base + j] - mu) * is;
                }
                if (need_g) gamma_t.grad()[ci] += sum_dy_xhat;
                if (need_b) beta_t.grad()[ci] += sum_dy;
                if (need_x) {
                    const double k = gamma_t.data()[ci] * is;
                    for (std::size_t j = 0; j < hw; ++j) x_t.grad()[base + j] += k * dy[base + j];
                }
            }
        }
    });
    return out;
}

Tensor instance_norm(Tape* tape, const Tensor& x, const Tensor& gamma, const Tensor& beta) {
    require_image(x, "instance_norm input");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    require(gamma.defined() && gamma.size() == c && beta.defined() && beta.size() == c,
            "instance_norm gamma/beta must have one entry per channel");
    require(h * w >= 2, "instance_norm needs at least 2 spatial elements");
    NormGroups ng;
    ng.span_len = h * w;
    ng.groups.resize(n * c);
    std::vector<std::size_t> group_channel(n * c);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t ci = 0; ci < c; ++ci) {
            ng.groups[i * c + ci] = {(i * c + ci) * h * w};
            group_channel[i * c + ci] = ci;
        }
    }
    return norm_forward_train(tape, x, gamma, beta, ng, nullptr, nullptr, group_channel);
}

Tensor dropout(Tape* tape, const Tensor& x, double p, Rng& rng, RunMode mode) {
    require(p >= 0.0 && p < 1.0, "dropout probability must be in [0,1), got " + std::to_string(p));
    if (mode == RunMode::eval || p == 0.0) return x;

    const std::size_t sz = x.size();
    const double scale = 1.0 / (1.0 - p);
    auto mask = std::make_shared<std::vector<unsigned char>>(sz);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < sz; ++i) {
        const bool keep = rng.uniform() >= p;
        (*mask)[i] = keep;
        out.data()[i] = keep ? x.data()[i] * scale : 0.0;
    }
    if (!tape || !tape->wants_grad(x)) return out;
    Tensor x_t = x;
    tape->record(out, [=]() mutable {
        const std::vector<double>& dy = out.grad();
        std::vector<double>& dx = x_t.grad();
        for (std::size_t i = 0; i < sz; ++i) {
            if ((*mask)[i]) dx[i] += dy[i] * scale;
        }
    });
    return out;
}

Tensor softmax_channels(Tape* tape, const Tensor& logits) {
    require_image(logits, "softmax_channels input");
    const std::size_t n = logits.dim(0), c = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
    Tensor out(logits.shape());
    const double* xd = logits.data().data();
    double* yd = out.data().data();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < hw; ++j) {
            const std::size_t base = i * c * hw + j;
            double mx = xd[base];
            for (std::size_t ci = 1; ci < c; ++ci) mx = std::max(mx, xd[base + ci * hw]);
            double denom = 0.0;
            for (std::size_t ci = 0; ci < c; ++ci) {
                const double e = std::exp(xd[base + ci * hw] - mx);
                yd[base + ci * hw] = e;
                denom += e;
            }
            for (std::size_t ci = 0; ci < c; ++ci) yd[base + ci * hw] /= denom;
        }
    }
    if (!tape || !tape->wants_grad(logits)) return out;
    Tensor logits_t = logits;
    tape->record(out, [=]() mutable {
        const std::vector<double>& dy = out.grad();
        std::vector<double>& dx = logits_t.grad();
        const double* y = out.data().data();
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < hw; ++j) {
                const std::size_t base = i * c * hw + j;
                double dot = 0.0;
                for (std::size_t ci = 0; ci < c; ++ci) dot += dy[base + ci * hw] * y[base + ci * hw];
                for (std::size_t ci = 0; ci < c; ++ci) {
                    dx[base + ci * hw] += y[base + ci * hw] * (dy[base + ci * hw] - dot);
                }
            }
        }
    });
    return out;
}

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
    require(a.defined() && b.defined() && a.shape() == b.shape(),
            "add requires equal shapes, got " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    Tensor out(a.shape());
    const std::size_t sz = a.size();
    for (std::size_t i = 0; i < sz; ++i) out.data()[i] = a.data()[i] + b.data()[i];
    if (!tape) return out;
    const bool need_a = tape->wants_grad(a);
    const bool need_b = tape->wants_grad(b);
    if (!need_a && !need_b) return out;
    Tensor a_t = a, b_t = b;
    tape->record(out, [=]() mutable {
        const std::vector<double>& dy = out.grad();
        if (need_a) {
            std::vector<double>& da = a_t.grad();
            for (std::size_t i = 0; i < sz; ++i) da[i] += dy[i];
        }
        if (need_b) {
            std::vector<double>& db = b_t.grad();
            for (std::size_t i = 0; i < sz; ++i) db[i] += dy[i];
        }
    });
    return out;
}

Tensor sum(Tape* tape, const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data()) acc += v;
    Tensor out = Tensor::scalar(acc);
    if (!tape || !tape->wants_grad(x)) return out;
    Tensor x_t = x;
    tape->record(out, [=]() mutable {
        const double g = out.grad()[0];
        std::vector<double>& dx = x_t.grad();
        for (std::size_t i = 0; i < x_t.size(); ++i) dx[i] += g;
    });
    return out;
}

Tensor mean_square_to(Tape* tape, const Tensor& x, double target) {
    const std::size_t sz = x.size();
    double acc = 0.0;
    for (double v : x.data()) {
        const double d = v - target;
        acc += d * d;
    }
    Tensor out = Tensor::scalar(acc / static_cast<double>(sz));
    if (!tape || !tape->wants_grad(x)) return out;
    Tensor x_t = x;
    tape->record(out, [=]() mutable {
        const double g = out.grad()[0] * 2.0 / static_cast<double>(sz);
        std::vector<double>& dx = x_t.grad();
        for (std::size_t i = 0; i < sz; ++i) dx[i] += g * (x_t.data()[i] - target);
    });
    return out;
}

Tensor mean_abs_diff(Tape* tape, const Tensor& a, const Tensor& b) {
    require(a.defined() && b.defined() && a.shape() == b.shape(),
            "mean_abs_diff requires equal shapes, got " + shape_str(a.shape()) + " vs " +
                shape_str(b.shape()));
    const std::size_t sz = a.size();
    double acc = 0.0;
    for (std::size_t i = 0; i < sz; ++i) acc += std::abs(a.data()[i] - b.data()[i]);
    Tensor out = Tensor::scalar(acc / static_cast<double>(sz));
    if (!tape) return out;
    const bool need_a = tape->wants_grad(a);
    const bool need_b = tape->wants_grad(b);
    if (!need_a && !need_b) return out;
    Tensor a_t = a, b_t = b;
    tape->record(out, [=]() mutable {
        const double g = out.grad()[0] / static_cast<double>(sz);
        for (std::size_t i = 0; i < sz; ++i) {
            const double d = a_t.data()[i] - b_t.data()[i];
            const double s = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0); // subgradient 0 at the kink
            if (need_a) a_t.grad()[i] += g * s;
            if (need_b) b_t.grad()[i] -= g * s;
        }
    });
    return out;
}

Tensor weighted_sum(Tape* tape, const std::vector<std::pair<double, Tensor>>& terms) {
    double acc = 0.0;
    for (const auto& [w, t] : terms) {
        require(t.defined() && t.size() == 1, "weighted_sum terms must be scalars");
        acc += w * t.item();
    }
    Tensor out = Tensor::scalar(acc);
    if (!tape) return out;
    std::vector<std::pair<double, Tensor>> needed;
    for (const auto& term : terms) {
        if (tape->wants_grad(term.second)) needed.push_back(term);
    }
    if (needed.empty()) return out;
    tape->record(out, [=]() mutable {
        const double g = out.grad()[0];
        for (auto& [w, t] : needed) t.grad()[0] += w * g;
    });
    return out;
}

Tensor cross_entropy(Tape* tape, const Tensor& logits, const LabelMap& labels) {
    require_image(logits, "cross_entropy logits");
    const std::size_t n = logits.dim(0), c = logits.dim(1), hw = logits.dim(2) * logits.dim(3);
    require(labels.shape == Shape{n, logits.dim(2), logits.dim(3)},
            "cross_entropy labels must be [N,H,W] matching logits, got " + shape_str(labels.shape));

    const double* xd = logits.data().data();
    double acc = 0.0;
    std::size_t valid = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < hw; ++j) {
            const std::int32_t y = labels.v[i * hw + j];
            if (y == kIgnoreLabel) continue;
            require(y >= 0 && y < static_cast<std::int32_t>(c),
                    "cross_entropy label " + std::to_string(y) + " out of range for C=" +
                        std::to_string(c));
            const std::size_t base = i * c * hw + j;
            double mx = xd[base];
            for (std::size_t ci = 1; ci < c; ++ci) mx = std::max(mx, xd[base + ci * hw]);
            double denom = 0.0;
            for (std::size_t ci = 0; ci < c; ++ci) denom += std::exp(xd[base + ci * hw] - mx);
            acc += mx + std::log(denom) - xd[base + static_cast<std::size_t>(y) * hw];
            ++valid;
        }
    }
    if (valid == 0) throw std::invalid_argument("cross_entropy: every pixel is ignored");
    Tensor out = Tensor::scalar(acc / static_cast<double>(valid));
    if (!tape || !tape->wants_grad(logits)) return out;
    const std::size_t n_valid = valid;
    Tensor logits_t = logits;
    tape->record(out, [=]() mutable {
        const double g = out.grad()[0] / static_cast<double>(n_valid);
        const double* x = logits_t.data().data();
        std::vector<double>& dx = logits_t.grad();
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < hw; ++j) {
                const std::int32_t y = labels.v[i * hw + j];
                if (y == kIgnoreLabel) continue;
                const std::size_t base = i * c * hw + j;
                double mx = x[base];
                for (std::size_t ci = 1; ci < c; ++ci) mx = std::max(mx, x[base + ci * hw]);
                double denom = 0.0;
                for (std::size_t ci = 0; ci < c; ++ci) denom += std::exp(x[base + ci * hw] - mx);
                for (std::size_t ci = 0; ci < c; ++ci) {
                    const double p = std::exp(x[base + ci * hw] - mx) / denom;
                    const double ind = (static_cast<std::int32_t>(ci) == y) ? 1.0 : 0.0;
                    dx[base + ci * hw] += g * (p - ind);
                }
            }
        }
    });
    return out;
}

LabelMap argmax_channels(const Tensor& logits) {
    require_image(logits, "argmax_channels input");
    const std::size_t n = logits.dim(0), c = logits.dim(1), h = logits.dim(2), w = logits.dim(3);
    LabelMap out({n, h, w});
    const double* xd = logits.data().data();
    const std::size_t hw = h * w;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < hw; ++j) {
            const std::size_t base = i * c * hw + j;
            std::size_t best = 0;
            double bv = xd[base];
            for (std::size_t ci = 1; ci < c; ++ci) {
                if (xd[base + ci * hw] > bv) {
                    bv = xd[base + ci * hw];
                    best = ci;
                }
            }
            out.v[i * hw + j] = static_cast<std::int32_t>(best);
        }
    }
    return out;
}

} // namespace spigan::ops
