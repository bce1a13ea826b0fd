#include "spigan/toysim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace spigan {

AppearanceShift DomainConfig::mild_shift() {
    AppearanceShift s;
    s.palette_rot = 0.5;
    s.gamma = 1.15;
    s.texture_noise = 0.03;
    s.sensor_noise = 0.012;
    return s;
}

AppearanceShift DomainConfig::severe_shift() {
    AppearanceShift s;
    s.palette_rot = 1.9;
    s.gamma = 1.6;
    s.texture_noise = 0.10;
    s.sensor_noise = 0.035;
    return s;
}

void DomainConfig::validate() const {
    if (n_classes != 5) throw std::invalid_argument("the toy world renders exactly 5 classes");
    if (height < 16 || width < 16 || height % 4 != 0 || width % 4 != 0) {
        throw std::invalid_argument("scene dims must be >= 16 and divisible by 4");
    }
}

std::uint64_t scene_id_for(std::uint64_t dataset_seed, std::uint64_t index) {
    // Seeds live in the high half so neighboring dataset seeds can never
    // share a scene id.
    return (dataset_seed << 32) | (index & 0xffffffffULL);
}

namespace {

struct Rgb {
    double r, g, b;
};

Rgb operator+(Rgb a, double v) { return {a.r + v, a.g + v, a.b + v}; }

Rgb lerp(Rgb a, Rgb b, double t) {
    return {a.r + (b.r - a.r) * t, a.g + (b.g - a.g) * t, a.b + (b.b - a.b) * t};
}

// Deterministic per-pixel noise independent of evaluation order.
double hash_noise(std::uint64_t scene_id, std::uint64_t layer, int x, int y) {
    std::uint64_t h = splitmix64(scene_id ^ (layer * 0x9e3779b97f4a7c15ULL));
    h = splitmix64(h ^ (static_cast<std::uint64_t>(static_cast<std::uint32_t>(x)) << 32) ^
                   static_cast<std::uint32_t>(y));
    return static_cast<double>(h >> 11) * 0x1.0p-53 * 2.0 - 1.0; // [-1,1)
}

double hash_gauss(std::uint64_t scene_id, std::uint64_t layer, int x, int y) {
    const double u1 = 1.0 - (hash_noise(scene_id, layer, x, y) * 0.5 + 0.5);
    const double u2 = hash_noise(scene_id, layer + 101, x, y) * 0.5 + 0.5;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

// Rotation of rgb space around the gray axis (1,1,1)/sqrt(3).
struct PaletteRot {
    double m[3][3];
    explicit PaletteRot(double theta) {
        const double a = 1.0 / std::sqrt(3.0);
        const double c = std::cos(theta), s = std::sin(theta);
        const double axis[3] = {a, a, a};
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                const double outer = axis[i] * axis[j];
                m[i][j] = outer * (1.0 - c) + (i == j ? c : 0.0);
            }
        }
        m[0][1] += -axis[2] * s;
        m[0][2] += axis[1] * s;
        m[1][0] += axis[2] * s;
        m[1][2] += -axis[0] * s;
        m[2][0] += -axis[1] * s;
        m[2][1] += axis[0] * s;
    }
    Rgb apply(Rgb v) const {
        return {m[0][0] * v.r + m[0][1] * v.g + m[0][2] * v.b,
                m[1][0] * v.r + m[1][1] * v.g + m[1][2] * v.b,
                m[2][0] * v.r + m[2][1] * v.g + m[2][2] * v.b};
    }
};

struct Box {
    int cls;
    double dist;      // scalar scene distance; also sets inverse depth
    int r0, r1;       // inclusive row span
    int c0, c1;       // inclusive col span
    int color_idx;    // vehicle/building palette entry
    int origin_r, origin_c; // texture anchor
};

const Rgb kVehiclePalette[6] = {{0.72, 0.10, 0.10}, {0.12, 0.22, 0.62}, {0.85, 0.85, 0.85},
                                {0.75, 0.65, 0.12}, {0.16, 0.16, 0.20}, {0.10, 0.50, 0.30}};
const Rgb kBuildingPalette[4] = {{0.55, 0.32, 0.26}, {0.52, 0.52, 0.55}, {0.66, 0.58, 0.42},
                                 {0.42, 0.46, 0.52}};

} // namespace

Sample render_scene(const DomainConfig& cfg, std::uint64_t scene_id) {
    cfg.validate();
    const int h = cfg.height, w = cfg.width;

    // Geometry and appearance use separate streams so appearance presets can
    // never perturb labels or depth.
    Rng geo(splitmix64(scene_id ^ derive_seed(cfg.seed, "geometry")));
    Rng app(splitmix64(scene_id ^ derive_seed(cfg.seed, "appearance")));

    const int horizon = static_cast<int>(geo.uniform(0.33 * h, 0.45 * h));
    const int vx = static_cast<int>(geo.uniform(0.35 * w, 0.65 * w));
    const double road_halfwidth = geo.uniform(0.28 * w, 0.42 * w);
    const double span = static_cast<double>(h - 1 - horizon); // ground rows below the horizon
    const double d_scale = std::sqrt(span);

    auto ground_dist = [&](int r) { return span / static_cast<double>(r - horizon); };
    auto inv_depth_of = [&](double d) { return 1.0 / (1.0 + d / d_scale); };
    auto row_for_dist = [&](double d) {
        return horizon + static_cast<int>(std::lround(span / d));
    };

    std::vector<Box> boxes;

    const int n_buildings = 1 + static_cast<int>(geo.integer(4));
    for (int i = 0; i < n_buildings; ++i) {
        const bool left = geo.bernoulli(0.5);
        const double dist = geo.uniform(2.0, 0.75 * span);
        const double width_frac = geo.uniform(0.14, 0.38);
        const double height_k = geo.uniform(1.0, 2.2);
        const int color_idx = static_cast<int>(geo.integer(4));
        Box b;
        b.cls = kBuilding;
        b.dist = dist;
        b.r1 = std::min(h - 1, row_for_dist(dist));
        b.r0 = std::max(0, b.r1 - static_cast<int>(std::lround(height_k * span / dist)) -
                               static_cast<int>(0.25 * h));
        const int bw = std::max(3, static_cast<int>(std::lround(width_frac * w)));
        b.c0 = left ? 0 : w - bw;
        b.c1 = left ? bw - 1 : w - 1;
        b.color_idx = color_idx;
        b.origin_r = b.r0;
        b.origin_c = b.c0;
        boxes.push_back(b);
    }

    const int n_trees = static_cast<int>(geo.integer(3));
    for (int i = 0; i < n_trees; ++i) {
        const bool left = geo.bernoulli(0.5);
        const double dist = geo.uniform(1.8, 0.8 * span);
        const double size = geo.uniform(0.8, 1.6);
        Box t;
        t.cls = kVegetation;
        t.dist = dist;
        t.r1 = std::min(h - 1, row_for_dist(dist));
        const int th = std::max(2, static_cast<int>(std::lround(size * span / dist)));
        const int tw = std::max(2, static_cast<int>(std::lround(0.6 * size * span / dist)));
        t.r0 = std::max(0, t.r1 - th);
        const double row_halfwidth = road_halfwidth * (t.r1 - horizon) / span;
        const int margin = 1 + static_cast<int>(geo.uniform(0.0, 0.15 * w));
        const int cc = left ? vx - static_cast<int>(row_halfwidth) - margin
                            : vx + static_cast<int>(row_halfwidth) + margin;
        t.c0 = std::max(0, cc - tw / 2);
        t.c1 = std::min(w - 1, cc + tw / 2);
        t.color_idx = 0;
        t.origin_r = t.r0;
        t.origin_c = t.c0;
        if (t.c1 >= t.c0) boxes.push_back(t);
    }

    const int n_vehicles = static_cast<int>(geo.integer(4));
    for (int i = 0; i < n_vehicles; ++i) {
        const double dist = geo.uniform(1.3, 0.7 * span);
        const double lateral = geo.uniform(-0.6, 0.6);
        const int color_idx = static_cast<int>(geo.integer(6));
        const double s = span / dist; // apparent scale
        Box v;
        v.cls = kVehicle;
        v.dist = dist;
        v.r1 = std::min(h - 1, row_for_dist(dist));
        const int vh = std::max(2, static_cast<int>(std::lround(0.8 * s)));
        const int vw = std::max(3, static_cast<int>(std::lround(1.6 * s)));
        const double row_halfwidth = road_halfwidth * (v.r1 - horizon) / span;
        const int cc = vx + static_cast<int>(std::lround(lateral * std::max(0.0, row_halfwidth - 1.0)));
        v.r0 = std::max(0, v.r1 - vh);
        v.c0 = std::max(0, cc - vw / 2);
        v.c1 = std::min(w - 1, cc + vw / 2);
        v.color_idx = color_idx;
        v.origin_r = v.r0;
        v.origin_c = v.c0;
        if (v.c1 >= v.c0) boxes.push_back(v);
    }

    // Painter's order: far to near, so nearer objects occlude.
    std::stable_sort(boxes.begin(), boxes.end(),
                     [](const Box& a, const Box& b) { return a.dist > b.dist; });

    LabelMap label({static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
    Tensor depth({1, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
    std::vector<int> color_slot(static_cast<std::size_t>(h) * w, -1); // palette pick per pixel
    std::vector<int> org_r(static_cast<std::size_t>(h) * w, 0), org_c(static_cast<std::size_t>(h) * w, 0);

    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * w + c;
            if (r <= horizon) {
                label.v[i] = kSky;
                depth.data()[i] = 0.0;
                continue;
            }
            const double row_halfwidth = road_halfwidth * (r - horizon) / span;
            const bool on_road = std::abs(c - vx) <= row_halfwidth;
            label.v[i] = on_road ? kRoad : kVegetation;
            depth.data()[i] = inv_depth_of(ground_dist(r));
        }
    }
    for (const Box& b : boxes) {
        const double inv = inv_depth_of(b.dist);
        for (int r = std::max(0, b.r0); r <= std::min(h - 1, b.r1); ++r) {
            for (int c = std::max(0, b.c0); c <= std::min(w - 1, b.c1); ++c) {
                const std::size_t i = static_cast<std::size_t>(r) * w + c;
                label.v[i] = b.cls;
                depth.data()[i] = inv;
                color_slot[i] = b.color_idx;
                org_r[i] = b.origin_r;
                org_c[i] = b.origin_c;
            }
        }
    }

    // Appearance. Per-object draws came from the geometry-independent app
    // stream indirectly via color_idx; everything per-pixel is hash noise.
    const std::uint64_t noise_key = splitmix64(scene_id ^ derive_seed(cfg.seed, "pixel-noise"));
    const double sky_warmth = app.uniform(-0.05, 0.05);
    const double road_tint = app.uniform(-0.04, 0.04);
    const double grass_tone = app.uniform(-0.08, 0.08);

    const bool shifted = cfg.domain == Domain::target;
    const PaletteRot rot(shifted ? cfg.shift.palette_rot : 0.0);

    Tensor image({3, static_cast<std::size_t>(h), static_cast<std::size_t>(w)});
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * w + c;
            const int cls = label.v[i];
            Rgb v{0, 0, 0};
            double tex = 0.0;
            switch (cls) {
            case kSky: {
                const double t = static_cast<double>(r) / std::max(1, horizon);
                v = lerp({0.50 + sky_warmth, 0.72, 0.95}, {0.84, 0.90 + sky_warmth, 0.97}, t);
                tex = 0.015;
                break;
            }
            case kRoad: {
                v = {0.34 + road_tint, 0.34 + road_tint, 0.36 + road_tint};
                // dashed center line, an appearance detail only
                if (std::abs(c - vx) <= 0 && ((r - horizon) % 4) < 2) v = {0.80, 0.78, 0.70};
                tex = 0.05;
                break;
            }
            case kBuilding: {
                v = kBuildingPalette[color_slot[i] < 0 ? 0 : color_slot[i]];
                const int lr = r - org_r[i], lc = c - org_c[i];
                if (lr % 5 >= 2 && lr % 5 <= 3 && lc % 4 >= 1 && lc % 4 <= 2) {
                    v = {v.r * 0.45, v.g * 0.45, v.b * 0.50}; // window cells
                }
                tex = 0.04;
                break;
            }
            case kVegetation: {
                const bool is_tree = color_slot[i] >= 0;
                v = is_tree ? Rgb{0.14, 0.38, 0.14} : Rgb{0.24 + grass_tone * 0.3, 0.52 + grass_tone, 0.20};
                tex = 0.09;
                break;
            }
            case kVehicle: {
                v = kVehiclePalette[color_slot[i] < 0 ? 0 : color_slot[i]];
                const int lr = r - org_r[i];
                if (lr <= 1) v = {v.r * 0.4, v.g * 0.4, v.b * 0.45}; // roof/window band
                tex = 0.03;
                break;
            }
            default:
                break;
            }
            v = v + tex * hash_noise(noise_key, static_cast<std::uint64_t>(cls), c, r);

            if (shifted) {
                v = rot.apply(v);
                v.r = std::pow(std::clamp(v.r, 0.0, 1.0), cfg.shift.gamma);
                v.g = std::pow(std::clamp(v.g, 0.0, 1.0), cfg.shift.gamma);
                v.b = std::pow(std::clamp(v.b, 0.0, 1.0), cfg.shift.gamma);
                const double grain = cfg.shift.texture_noise * hash_noise(noise_key, 40, c, r);
                v = v + grain;
                v.r += cfg.shift.sensor_noise * hash_gauss(noise_key, 50, c, r);
                v.g += cfg.shift.sensor_noise * hash_gauss(noise_key, 60, c, r);
                v.b += cfg.shift.sensor_noise * hash_gauss(noise_key, 70, c, r);
            }

            const std::size_t hw = static_cast<std::size_t>(h) * w;
            image.data()[0 * hw + i] = 2.0 * std::clamp(v.r, 0.0, 1.0) - 1.0;
            image.data()[1 * hw + i] = 2.0 * std::clamp(v.g, 0.0, 1.0) - 1.0;
            image.data()[2 * hw + i] = 2.0 * std::clamp(v.b, 0.0, 1.0) - 1.0;
        }
    }

    Sample s;
    s.image = image;
    s.domain = cfg.domain;
    s.scene_id = scene_id;
    s.label = label;
    if (cfg.domain == Domain::source) s.inv_depth = depth;
    return s;
}

Dataset make_dataset(const DomainConfig& cfg, int n, std::uint64_t seed, bool labels_eval_only) {
    if (n < 1) throw std::invalid_argument("make_dataset needs n >= 1");
    cfg.validate();
    Dataset ds;
    ds.cfg = cfg;
    ds.cfg.seed = seed;
    ds.labels_eval_only = labels_eval_only;
    ds.samples.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        DomainConfig per = ds.cfg;
        Sample s = render_scene(per, scene_id_for(seed, static_cast<std::uint64_t>(i)));
        if (cfg.domain == Domain::target) {
            s.label_eval_only = labels_eval_only;
            if (!labels_eval_only) s.label.reset(); // training targets are unlabeled
        }
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

namespace {

template <class T>
void flip_rows(std::vector<T>& v, std::size_t channels, std::size_t h, std::size_t w) {
    for (std::size_t ch = 0; ch < channels; ++ch) {
        for (std::size_t r = 0; r < h; ++r) {
            T* row = v.data() + (ch * h + r) * w;
            std::reverse(row, row + w);
        }
    }
}

} // namespace

Sample flip_horizontal(const Sample& s) {
    Sample out = s;
    out.image = s.image.clone();
    flip_rows(out.image.data(), 3, s.image.dim(1), s.image.dim(2));
    if (s.label) {
        LabelMap lm = *s.label;
        flip_rows(lm.v, 1, lm.shape[0], lm.shape[1]);
        out.label = std::move(lm);
    }
    if (s.inv_depth) {
        Tensor d = s.inv_depth->clone();
        flip_rows(d.data(), 1, d.dim(1), d.dim(2));
        out.inv_depth = std::move(d);
    }
    return out;
}

Sample augment(const Sample& s, Rng& rng, int crop_h, int crop_w) {
    const int h = static_cast<int>(s.image.dim(1));
    const int w = static_cast<int>(s.image.dim(2));
    if (crop_h > h || crop_w > w || crop_h < 4 || crop_w < 4 || crop_h % 4 != 0 || crop_w % 4 != 0) {
        throw std::invalid_argument("augment crop must fit the image and be divisible by 4");
    }
    Sample flipped = rng.bernoulli(0.5) ? flip_horizontal(s) : s;
    const int oy = static_cast<int>(rng.integer(static_cast<std::uint64_t>(h - crop_h + 1)));
    const int ox = static_cast<int>(rng.integer(static_cast<std::uint64_t>(w - crop_w + 1)));

    Sample out = flipped;
    Tensor img({3, static_cast<std::size_t>(crop_h), static_cast<std::size_t>(crop_w)});
    for (int ch = 0; ch < 3; ++ch) {
        for (int r = 0; r < crop_h; ++r) {
            const double* src = flipped.image.data().data() +
                                (static_cast<std::size_t>(ch) * h + oy + r) * w + ox;
            double* dst = img.data().data() + (static_cast<std::size_t>(ch) * crop_h + r) * crop_w;
            std::copy(src, src + crop_w, dst);
        }
    }
    out.image = img;
    if (flipped.label) {
        LabelMap lm({static_cast<std::size_t>(crop_h), static_cast<std::size_t>(crop_w)});
        for (int r = 0; r < crop_h; ++r) {
            const std::int32_t* src = flipped.label->v.data() + (oy + r) * w + ox;
            std::copy(src, src + crop_w, lm.v.data() + static_cast<std::size_t>(r) * crop_w);
        }
        out.label = std::move(lm);
    }
    if (flipped.inv_depth) {
        Tensor d({1, static_cast<std::size_t>(crop_h), static_cast<std::size_t>(crop_w)});
        for (int r = 0; r < crop_h; ++r) {
            const double* src = flipped.inv_depth->data().data() + (oy + r) * w + ox;
            std::copy(src, src + crop_w, d.data().data() + static_cast<std::size_t>(r) * crop_w);
        }
        out.inv_depth = std::move(d);
    }
    return out;
}

} // namespace spigan
