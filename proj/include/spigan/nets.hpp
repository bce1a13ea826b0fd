#pragma once

#include <map>
#include <string>
#include <vector>

#include "spigan/ops.hpp"
#include "spigan/rng.hpp"
#include "spigan/tape.hpp"
#include "spigan/tensor.hpp"

namespace spigan {

inline constexpr double kLeakySlope = 0.2;
inline constexpr double kInitStd = 0.02;
inline constexpr double kGeneratorDropout = 0.5;
// Dedicated seed for the frozen perceptual feature pyramid.
inline constexpr std::uint64_t kPhiSeed = 0x9e3779b97f4a7c15ULL;

enum class NetKind { generator, discriminator, segmenter };
enum class NormKind { batch, instance, none };

struct NetworkSpec {
    NetKind kind = NetKind::generator;
    int base_channels = 16;
    int n_resblocks = 2; // generator
    int n_layers = 3;    // discriminator
    int n_classes = 5;   // segmenter
    NormKind norm = NormKind::batch;

    void validate() const;
};

// Named, ordered collection of trainable tensors. The four networks own four
// disjoint ParamSets.
class ParamSet {
public:
    void add(const std::string& name, Tensor t);
    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool contains(const std::string& name) const { return params_.count(name) != 0; }
    const std::map<std::string, Tensor>& items() const { return params_; }
    std::size_t count() const { return params_.size(); }
    std::size_t numel() const;
    void zero_grad();
    void set_requires_grad_all(bool b);
    bool disjoint_with(const ParamSet& other) const;

private:
    std::map<std::string, Tensor> params_;
};

void freeze_params(Tape& tape, const ParamSet& params);

namespace layers {

struct Conv {
    Tensor w, b;
    int stride = 1, pad = 1;
    Tensor apply(Tape* tape, const Tensor& x) const { return ops::conv2d(tape, x, w, b, stride, pad); }
};

struct Norm {
    NormKind kind = NormKind::batch;
    Tensor gamma, beta;
    ops::BatchNormState state;
    Tensor apply(Tape* tape, const Tensor& x, ops::RunMode mode);
};

} // namespace layers

struct Generator {
    NetworkSpec spec;
    ParamSet params;
    std::map<std::string, Tensor> buffers; // norm running stats

    layers::Conv stem;
    layers::Norm stem_norm;
    std::vector<layers::Conv> down;
    std::vector<layers::Norm> down_norm;
    struct ResBlock {
        layers::Conv conv1, conv2;
        layers::Norm norm1, norm2;
    };
    std::vector<ResBlock> res;
    std::vector<layers::Conv> up;
    std::vector<layers::Norm> up_norm;
    layers::Conv head;

    // Output matches the input shape, elementwise in (-1, 1). dropout_rng is
    // consumed only in train mode.
    Tensor forward(Tape* tape, const Tensor& x, ops::RunMode mode, Rng* dropout_rng);
};

struct Discriminator {
    NetworkSpec spec;
    ParamSet params;
    std::map<std::string, Tensor> buffers;

    std::vector<layers::Conv> stages;
    std::vector<layers::Norm> stage_norm;
    layers::Conv head;

    // Grid of per-patch scores [N,1,h,w]; no output nonlinearity.
    Tensor forward(Tape* tape, const Tensor& x, ops::RunMode mode);
};

struct Segmenter {
    NetworkSpec spec;
    ParamSet params;
    std::map<std::string, Tensor> buffers;
    int out_channels = 5;
    bool sigmoid_head = false;

    layers::Conv stem, enc1, enc2, mid;
    layers::Norm stem_norm, enc1_norm, enc2_norm, mid_norm;
    layers::Conv dec1, dec2, skip1, skip0, head;
    layers::Norm dec1_norm, dec2_norm;

    Tensor forward(Tape* tape, const Tensor& x, ops::RunMode mode);
};

// Frozen random conv pyramid standing in for pretrained perceptual features.
struct FeaturePyramid {
    ParamSet params; // requires_grad is false on every tensor
    std::vector<layers::Conv> stages;

    // Returns {x, act1, act2, act3}, spatial sizes H, H/2, H/4, H/8.
    std::vector<Tensor> forward(Tape* tape, const Tensor& x) const;
};

Generator build_generator(const NetworkSpec& spec, Rng& rng);
Discriminator build_discriminator(const NetworkSpec& spec, Rng& rng);
Segmenter build_segmenter(const NetworkSpec& spec, Rng& rng, int out_channels);
FeaturePyramid feature_extractor_phi();

} // namespace spigan
