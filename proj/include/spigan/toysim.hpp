#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spigan/rng.hpp"
#include "spigan/tensor.hpp"

namespace spigan {

enum class Domain { source, target };

inline constexpr int kSky = 0;
inline constexpr int kRoad = 1;
inline constexpr int kBuilding = 2;
inline constexpr int kVegetation = 3;
inline constexpr int kVehicle = 4;
inline const std::vector<std::string> kClassNames = {"sky", "road", "building", "vegetation",
                                                     "vehicle"};

// Appearance-only divergence between source and target; geometry, labels and
// depth are untouched by these.
struct AppearanceShift {
    double palette_rot = 0.0;   // hue rotation around the gray axis, radians
    double gamma = 1.0;         // tone curve exponent
    double texture_noise = 0.0; // extra per-pixel value-noise amplitude
    double sensor_noise = 0.0;  // additive gaussian noise std
};

struct DomainConfig {
    int n_classes = 5;
    int height = 32;
    int width = 64;
    Domain domain = Domain::source;
    AppearanceShift shift; // identity for the source domain
    std::uint64_t seed = 0;

    static AppearanceShift mild_shift();
    static AppearanceShift severe_shift();
    void validate() const;
};

// One scene: image in [-1,1], labels and inverse depth where the domain
// provides them. Inverse depth is 1/(1 + d/d_scale); sky maps to 0.
struct Sample {
    Tensor image;                    // [3,H,W]
    std::optional<LabelMap> label;   // [H,W]
    std::optional<Tensor> inv_depth; // [1,H,W] in [0,1]
    Domain domain = Domain::source;
    bool label_eval_only = false;
    std::uint64_t scene_id = 0;
};

struct Dataset {
    DomainConfig cfg;
    bool labels_eval_only = false;
    std::vector<Sample> samples;

    std::size_t size() const { return samples.size(); }
};

// Pure function of (cfg, scene_id): bit-identical on every call.
Sample render_scene(const DomainConfig& cfg, std::uint64_t scene_id);

std::uint64_t scene_id_for(std::uint64_t dataset_seed, std::uint64_t index);

// n scenes from per-index seeded streams. Target datasets either withhold
// labels entirely (training) or mark them eval-only.
Dataset make_dataset(const DomainConfig& cfg, int n, std::uint64_t seed,
                     bool labels_eval_only = false);

Sample flip_horizontal(const Sample& s);

// Random horizontal flip (p=0.5) then a uniformly placed crop of fixed size,
// applied jointly to image, label and inverse depth.
Sample augment(const Sample& s, Rng& rng, int crop_h, int crop_w);

} // namespace spigan
