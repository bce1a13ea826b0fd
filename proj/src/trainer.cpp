#include "spigan/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "json.hpp"

#include "spigan/artifacts.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace spigan {

std::string to_string(TrainMode mode) {
    switch (mode) {
    case TrainMode::spigan: return "spigan";
    case TrainMode::no_pi: return "no_pi";
    case TrainMode::base: return "base";
    case TrainMode::source_only: return "source_only";
    }
    throw std::logic_error("unreachable mode");
}

TrainMode train_mode_from_string(const std::string& s) {
    if (s == "spigan") return TrainMode::spigan;
    if (s == "no_pi") return TrainMode::no_pi;
    if (s == "base") return TrainMode::base;
    if (s == "source_only") return TrainMode::source_only;
    throw ConfigError("unknown mode '" + s + "' (expected spigan|no_pi|base|source_only)");
}

TrainConfig TrainConfig::paper_preset() {
    TrainConfig cfg;
    cfg.batch_size = 32;
    cfg.epochs_flat = 100;
    cfg.epochs_decay = 100;
    return cfg;
}

void TrainConfig::normalize_and_validate() {
    if (mode == TrainMode::no_pi) weights.gamma = 0.0;
    if (mode == TrainMode::base) {
        weights.gamma = 0.0;
        weights.delta = 0.0;
    }
    if (weights.alpha < 0 || weights.beta < 0 || weights.gamma < 0 || weights.delta < 0) {
        throw ConfigError("loss weights must be nonnegative");
    }
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (lr0 <= 0) throw ConfigError("lr0 must be positive");
    if (epochs_flat < 0 || epochs_decay < 1) {
        throw ConfigError("epochs_flat must be >= 0 and epochs_decay >= 1");
    }
    if (gen_steps_per_cycle < 1) throw ConfigError("gen_steps_per_cycle must be >= 1");
    if (early_stop.window < 1) throw ConfigError("early_stop.window must be >= 1");
    if (early_stop.margin < 0) throw ConfigError("early_stop.margin must be >= 0");
    if (crop_h % 4 != 0 || crop_w % 4 != 0 || crop_h < 4 || crop_w < 4) {
        throw ConfigError("crop dims must be positive and divisible by 4");
    }
    if (checkpoint_every < 1) throw ConfigError("checkpoint_every must be >= 1");
}

std::string train_config_to_json(const TrainConfig& cfg) {
    json j;
    j["mode"] = to_string(cfg.mode);
    j["weights"] = {{"alpha", cfg.weights.alpha},
                    {"beta", cfg.weights.beta},
                    {"gamma", cfg.weights.gamma},
                    {"delta", cfg.weights.delta}};
    j["batch_size"] = cfg.batch_size;
    j["lr0"] = cfg.lr0;
    j["adam_beta1"] = cfg.adam_beta1;
    j["adam_beta2"] = cfg.adam_beta2;
    j["adam_eps"] = cfg.adam_eps;
    j["epochs_flat"] = cfg.epochs_flat;
    j["epochs_decay"] = cfg.epochs_decay;
    j["gen_steps_per_cycle"] = cfg.gen_steps_per_cycle;
    j["early_stop"] = {{"window", cfg.early_stop.window},
                       {"margin", cfg.early_stop.margin},
                       {"enabled", cfg.early_stop.enabled}};
    j["augment"] = cfg.augment;
    j["crop_h"] = cfg.crop_h;
    j["crop_w"] = cfg.crop_w;
    j["base_channels"] = cfg.base_channels;
    j["n_resblocks"] = cfg.n_resblocks;
    j["d_layers"] = cfg.d_layers;
    j["checkpoint_every"] = cfg.checkpoint_every;
    j["gan_generator_form"] =
        cfg.gan_generator_form == GanGeneratorForm::target_one ? "target_one" : "negated_minimax";
    j["seed"] = cfg.seed;
    return j.dump(2) + "\n";
}

TrainConfig train_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    TrainConfig cfg;
    if (j.contains("preset")) {
        const auto p = j.at("preset").get<std::string>();
        if (p == "paper") {
            cfg = TrainConfig::paper_preset();
        } else if (p != "desk") {
            throw ConfigError("unknown preset '" + p + "' (expected desk|paper)");
        }
    }
    try {
        if (j.contains("mode")) cfg.mode = train_mode_from_string(j.at("mode").get<std::string>());
        if (j.contains("weights")) {
            const auto& w = j.at("weights");
            if (w.contains("alpha")) cfg.weights.alpha = w.at("alpha").get<double>();
            if (w.contains("beta")) cfg.weights.beta = w.at("beta").get<double>();
            if (w.contains("gamma")) cfg.weights.gamma = w.at("gamma").get<double>();
            if (w.contains("delta")) cfg.weights.delta = w.at("delta").get<double>();
        }
        if (j.contains("batch_size")) cfg.batch_size = j.at("batch_size").get<int>();
        if (j.contains("lr0")) cfg.lr0 = j.at("lr0").get<double>();
        if (j.contains("adam_beta1")) cfg.adam_beta1 = j.at("adam_beta1").get<double>();
        if (j.contains("adam_beta2")) cfg.adam_beta2 = j.at("adam_beta2").get<double>();
        if (j.contains("adam_eps")) cfg.adam_eps = j.at("adam_eps").get<double>();
        if (j.contains("epochs_flat")) cfg.epochs_flat = j.at("epochs_flat").get<int>();
        if (j.contains("epochs_decay")) cfg.epochs_decay = j.at("epochs_decay").get<int>();
        if (j.contains("gen_steps_per_cycle")) {
            cfg.gen_steps_per_cycle = j.at("gen_steps_per_cycle").get<int>();
        }
        if (j.contains("early_stop")) {
            const auto& e = j.at("early_stop");
            if (e.contains("window")) cfg.early_stop.window = e.at("window").get<int>();
            if (e.contains("margin")) cfg.early_stop.margin = e.at("margin").get<double>();
            if (e.contains("enabled")) cfg.early_stop.enabled = e.at("enabled").get<bool>();
        }
        if (j.contains("augment")) cfg.augment = j.at("augment").get<bool>();
        if (j.contains("crop_h")) cfg.crop_h = j.at("crop_h").get<int>();
        if (j.contains("crop_w")) cfg.crop_w = j.at("crop_w").get<int>();
        if (j.contains("base_channels")) cfg.base_channels = j.at("base_channels").get<int>();
        if (j.contains("n_resblocks")) cfg.n_resblocks = j.at("n_resblocks").get<int>();
        if (j.contains("d_layers")) cfg.d_layers = j.at("d_layers").get<int>();
        if (j.contains("checkpoint_every")) cfg.checkpoint_every = j.at("checkpoint_every").get<int>();
        if (j.contains("gan_generator_form")) {
            const auto f = j.at("gan_generator_form").get<std::string>();
            if (f == "target_one") {
                cfg.gan_generator_form = GanGeneratorForm::target_one;
            } else if (f == "negated_minimax") {
                cfg.gan_generator_form = GanGeneratorForm::negated_minimax;
            } else {
                throw ConfigError("unknown gan_generator_form '" + f + "'");
            }
        }
        if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config field: ") + e.what());
    }
    cfg.normalize_and_validate();
    return cfg;
}

double lr_schedule(int epoch, const TrainConfig& cfg) {
    if (epoch < 0 || epoch >= cfg.epochs_flat + cfg.epochs_decay) {
        throw std::invalid_argument("epoch " + std::to_string(epoch) + " outside the schedule");
    }
    if (epoch < cfg.epochs_flat) return cfg.lr0;
    return cfg.lr0 * (1.0 - static_cast<double>(epoch - cfg.epochs_flat) /
                                static_cast<double>(cfg.epochs_decay));
}

void adam_step(ParamSet& params, AdamState& state, double lr, double beta1, double beta2,
               double eps) {
    ++state.t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (const auto& [name, t_const] : params.items()) {
        Tensor t = t_const;
        if (!t.has_grad()) {
            throw std::logic_error("adam_step: parameter " + name + " has no gradient");
        }
        auto& m = state.m[name];
        auto& v = state.v[name];
        if (m.empty()) m.assign(t.size(), 0.0);
        if (v.empty()) v.assign(t.size(), 0.0);
        const std::vector<double>& g = t.grad();
        std::vector<double>& x = t.data();
        for (std::size_t i = 0; i < x.size(); ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            x[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
        t.drop_grad();
    }
}

std::optional<int> early_stop_check(const std::vector<double>& loss_d_per_epoch,
                                    const std::vector<double>& loss_g_per_epoch, int window,
                                    double margin) {
    if (loss_d_per_epoch.size() != loss_g_per_epoch.size()) {
        throw std::invalid_argument("early_stop_check: histories are not aligned");
    }
    const int n = static_cast<int>(loss_d_per_epoch.size());
    if (window < 1) throw std::invalid_argument("early_stop_check: window must be >= 1");
    for (int e = window - 1; e < n; ++e) {
        bool dominates = true;
        double d_min = loss_d_per_epoch[e - window + 1], d_max = d_min;
        double g_min = loss_g_per_epoch[e - window + 1], g_max = g_min;
        for (int i = e - window + 1; i <= e; ++i) {
            const double d = loss_d_per_epoch[i], g = loss_g_per_epoch[i];
            if (!(d < g - margin)) dominates = false;
            d_min = std::min(d_min, d);
            d_max = std::max(d_max, d);
            g_min = std::min(g_min, g);
            g_max = std::max(g_max, g);
        }
        const bool converged = (d_max - d_min < margin / 10.0) && (g_max - g_min < margin / 10.0);
        if (dominates || converged) return e;
    }
    return std::nullopt;
}

Batch assemble_batch(const Dataset& ds, const std::vector<std::size_t>& indices, bool augmented,
                     Rng& rng, int crop_h, int crop_w) {
    if (indices.empty()) throw std::invalid_argument("assemble_batch: empty index list");
    std::vector<Sample> picked;
    picked.reserve(indices.size());
    for (std::size_t idx : indices) {
        const Sample& s = ds.samples.at(idx);
        picked.push_back(augmented ? augment(s, rng, crop_h, crop_w) : s);
    }
    const std::size_t n = picked.size();
    const std::size_t h = picked[0].image.dim(1), w = picked[0].image.dim(2);
    bool with_labels = true, with_depth = true;
    for (const Sample& s : picked) {
        with_labels &= s.label.has_value();
        with_depth &= s.inv_depth.has_value();
    }

    Batch batch;
    batch.indices = indices;
    batch.images = Tensor({n, 3, h, w});
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(picked[i].image.data().begin(), picked[i].image.data().end(),
                  batch.images.data().begin() + static_cast<std::ptrdiff_t>(i * 3 * h * w));
    }
    if (with_labels) {
        LabelMap labels({n, h, w});
        for (std::size_t i = 0; i < n; ++i) {
            std::copy(picked[i].label->v.begin(), picked[i].label->v.end(),
                      labels.v.begin() + static_cast<std::ptrdiff_t>(i * h * w));
        }
        batch.labels = std::move(labels);
    }
    if (with_depth) {
        Tensor depth({n, 1, h, w});
        for (std::size_t i = 0; i < n; ++i) {
            std::copy(picked[i].inv_depth->data().begin(), picked[i].inv_depth->data().end(),
                      depth.data().begin() + static_cast<std::ptrdiff_t>(i * h * w));
        }
        batch.inv_depth = std::move(depth);
    }
    return batch;
}

TrainState init_train_state(const TrainConfig& cfg, int n_classes) {
    TrainState st;
    st.cfg = cfg;
    st.n_classes = n_classes;
    st.data_rng = Rng(derive_seed(cfg.seed, "data"));
    st.dropout_rng = Rng(derive_seed(cfg.seed, "dropout"));

    NetworkSpec seg_spec;
    seg_spec.kind = NetKind::segmenter;
    seg_spec.base_channels = cfg.base_channels;
    seg_spec.n_classes = n_classes;

    {
        Rng r(derive_seed(cfg.seed, "init/task"));
        st.task_net = build_segmenter(seg_spec, r, n_classes);
    }
    if (cfg.mode != TrainMode::source_only) {
        NetworkSpec g_spec;
        g_spec.kind = NetKind::generator;
        g_spec.base_channels = cfg.base_channels;
        g_spec.n_resblocks = cfg.n_resblocks;
        NetworkSpec d_spec;
        d_spec.kind = NetKind::discriminator;
        d_spec.base_channels = cfg.base_channels;
        d_spec.n_layers = cfg.d_layers;
        {
            Rng r(derive_seed(cfg.seed, "init/generator"));
            st.gen = build_generator(g_spec, r);
        }
        {
            Rng r(derive_seed(cfg.seed, "init/discriminator"));
            st.disc = build_discriminator(d_spec, r);
        }
        {
            Rng r(derive_seed(cfg.seed, "init/privileged"));
            st.pi_net = build_segmenter(seg_spec, r, 1);
        }
        st.phi = feature_extractor_phi();
    }
    return st;
}

LossReport train_step_generator_side(TrainState& state, const Batch& batch_s, const Batch& batch_r,
                                     double lr) {
    const TrainConfig& cfg = state.cfg;
    const LossWeights& w = cfg.weights;
    LossReport rep;
    Tape tape;

    if (!batch_s.labels) throw std::invalid_argument("generator-side step needs labeled source");

    if (cfg.mode == TrainMode::source_only) {
        Tensor logits = state.task_net->forward(&tape, batch_s.images, ops::RunMode::train);
        Tensor task = cross_entropy_seg(&tape, logits, *batch_s.labels);
        rep.task = task.item();
        rep.total_generator_side = rep.task;
        tape.backward(task);
        adam_step(state.task_net->params, state.adam_t, lr, cfg.adam_beta1, cfg.adam_beta2,
                  cfg.adam_eps);
        return rep;
    }

    (void)batch_r; // unpaired: the generator side never reads real images
    freeze_params(tape, state.disc->params);

    Tensor x_f = state.gen->forward(&tape, batch_s.images, ops::RunMode::train, &state.dropout_rng);

    Tensor gan_g, task, privileged, perceptual;
    if (w.alpha > 0) {
        Tensor d_fake = state.disc->forward(&tape, x_f, ops::RunMode::train);
        if (cfg.gan_generator_form == GanGeneratorForm::target_one) {
            gan_g = lsgan_generator_loss(&tape, d_fake);
        } else {
            // Literal minimax form: the generator climbs the discriminator's
            // fake-side objective instead of chasing the target-1 score.
            Tensor fake_term = ops::mean_square_to(&tape, d_fake, 0.0);
            gan_g = ops::weighted_sum(&tape, {{-1.0, fake_term}});
        }
        rep.gan_g = gan_g.item();
    }
    if (w.beta > 0) {
        task = task_loss(&tape, *state.task_net, batch_s.images, x_f, *batch_s.labels,
                         ops::RunMode::train);
        rep.task = task.item();
    }
    if (w.gamma > 0) {
        if (!batch_s.inv_depth) throw std::invalid_argument("privileged loss needs inverse depth");
        privileged = privileged_loss(&tape, *state.pi_net, batch_s.images, x_f, *batch_s.inv_depth,
                                     ops::RunMode::train);
        rep.privileged = privileged.item();
    }
    if (w.delta > 0) {
        perceptual = perceptual_loss(&tape, *state.phi, batch_s.images, x_f);
        rep.perceptual = perceptual.item();
    }

    Tensor total = total_generator_objective(&tape, w, gan_g, task, privileged, perceptual);
    rep.total_generator_side = total.item();
    tape.backward(total);

    adam_step(state.gen->params, state.adam_g, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    if (w.beta > 0) {
        adam_step(state.task_net->params, state.adam_t, lr, cfg.adam_beta1, cfg.adam_beta2,
                  cfg.adam_eps);
    }
    if (w.gamma > 0) {
        adam_step(state.pi_net->params, state.adam_p, lr, cfg.adam_beta1, cfg.adam_beta2,
                  cfg.adam_eps);
    }
    return rep;
}

LossReport train_step_discriminator(TrainState& state, const Batch& batch_s, const Batch& batch_r,
                                    double lr) {
    const TrainConfig& cfg = state.cfg;
    LossReport rep;
    Tape tape;

    freeze_params(tape, state.gen->params);
    Tensor x_f = state.gen->forward(&tape, batch_s.images, ops::RunMode::train, &state.dropout_rng);
    Tensor d_fake = state.disc->forward(&tape, x_f, ops::RunMode::train);
    Tensor d_real = state.disc->forward(&tape, batch_r.images, ops::RunMode::train);
    Tensor gan_d = lsgan_discriminator_loss(&tape, d_real, d_fake);
    rep.gan_d = gan_d.item();
    tape.backward(gan_d);
    adam_step(state.disc->params, state.adam_d, lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
    return rep;
}

namespace {

void add_set(std::map<std::string, Tensor>& out, const std::string& prefix, const ParamSet& params,
             const std::map<std::string, Tensor>& buffers) {
    for (const auto& [name, t] : params.items()) out.emplace(prefix + "/" + name, t);
    for (const auto& [name, t] : buffers) out.emplace(prefix + "/" + name, t);
}

} // namespace

std::map<std::string, Tensor> collect_named_tensors(const TrainState& state) {
    std::map<std::string, Tensor> out;
    add_set(out, "T", state.task_net->params, state.task_net->buffers);
    if (state.gen) add_set(out, "G", state.gen->params, state.gen->buffers);
    if (state.disc) add_set(out, "D", state.disc->params, state.disc->buffers);
    if (state.pi_net) add_set(out, "P", state.pi_net->params, state.pi_net->buffers);
    return out;
}

namespace {

void restore_set(ParamSet& params, std::map<std::string, Tensor>& buffers,
                 const std::string& prefix, const std::map<std::string, Tensor>& tensors) {
    for (const auto& [name, stored] : tensors) {
        if (name.rfind(prefix + "/", 0) != 0) continue;
        const std::string local = name.substr(prefix.size() + 1);
        Tensor dst;
        if (params.contains(local)) {
            dst = params.at(local);
        } else {
            auto it = buffers.find(local);
            if (it == buffers.end()) {
                throw std::runtime_error("checkpoint tensor " + name + " has no home");
            }
            dst = it->second;
        }
        if (dst.shape() != stored.shape()) {
            throw std::runtime_error("checkpoint tensor " + name + " shape mismatch: " +
                                     shape_str(stored.shape()) + " vs " + shape_str(dst.shape()));
        }
        dst.data() = stored.data();
    }
}

} // namespace

void restore_named_tensors(TrainState& state, const std::map<std::string, Tensor>& tensors) {
    restore_set(state.task_net->params, state.task_net->buffers, "T", tensors);
    if (state.gen) restore_set(state.gen->params, state.gen->buffers, "G", tensors);
    if (state.disc) restore_set(state.disc->params, state.disc->buffers, "D", tensors);
    if (state.pi_net) restore_set(state.pi_net->params, state.pi_net->buffers, "P", tensors);
}

std::string checkpoint_manifest_json(const TrainState& state) {
    json j;
    j["format"] = "spigan-checkpoint-v1";
    j["mode"] = to_string(state.cfg.mode);
    j["seed"] = state.cfg.seed;
    j["n_classes"] = state.n_classes;
    j["epoch"] = state.epoch;
    j["step"] = state.step;
    j["arch"] = {{"base_channels", state.cfg.base_channels},
                 {"n_resblocks", state.cfg.n_resblocks},
                 {"d_layers", state.cfg.d_layers}};
    json tensors = json::object();
    for (const auto& [name, t] : collect_named_tensors(state)) {
        tensors[name] = t.shape();
    }
    j["tensors"] = tensors;
    return j.dump(2) + "\n";
}

TrainState state_from_checkpoint_manifest(const std::string& manifest_json) {
    json j;
    try {
        j = json::parse(manifest_json);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("bad checkpoint manifest: ") + e.what());
    }
    TrainConfig cfg;
    cfg.mode = train_mode_from_string(j.at("mode").get<std::string>());
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.base_channels = j.at("arch").at("base_channels").get<int>();
    cfg.n_resblocks = j.at("arch").at("n_resblocks").get<int>();
    cfg.d_layers = j.at("arch").at("d_layers").get<int>();
    cfg.normalize_and_validate();
    TrainState st = init_train_state(cfg, j.at("n_classes").get<int>());
    st.epoch = j.at("epoch").get<int>();
    st.step = j.at("step").get<std::int64_t>();
    return st;
}

namespace {

constexpr const char* kCsvColumns[9] = {"step", "epoch",      "gan_d",      "gan_g", "task",
                                        "privileged", "perceptual", "total", "lr"};

std::string rng_to_string(const Rng& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

Rng rng_from_string(const std::string& s) {
    Rng r(0);
    std::istringstream is(s);
    is >> r;
    if (!is) throw std::runtime_error("corrupt rng state in snapshot");
    return r;
}

json adam_to_json(const AdamState& a) { return json{{"t", a.t}}; }

void adam_moments_to_tensors(const std::string& prefix, const AdamState& a,
                             std::map<std::string, Tensor>& out) {
    for (const auto& [name, m] : a.m) out.emplace(prefix + "/m/" + name, Tensor::from_data({m.size()}, m));
    for (const auto& [name, v] : a.v) out.emplace(prefix + "/v/" + name, Tensor::from_data({v.size()}, v));
}

void adam_moments_from_tensors(const std::string& prefix, AdamState& a,
                               const std::map<std::string, Tensor>& tensors) {
    for (const auto& [name, t] : tensors) {
        if (name.rfind(prefix + "/m/", 0) == 0) {
            a.m[name.substr(prefix.size() + 3)] = t.data();
        } else if (name.rfind(prefix + "/v/", 0) == 0) {
            a.v[name.substr(prefix.size() + 3)] = t.data();
        }
    }
}

void save_state_snapshot(const TrainState& state, const std::string& out_dir,
                         std::uintmax_t csv_bytes) {
    std::map<std::string, Tensor> tensors = collect_named_tensors(state);
    adam_moments_to_tensors("adam/G", state.adam_g, tensors);
    adam_moments_to_tensors("adam/D", state.adam_d, tensors);
    adam_moments_to_tensors("adam/T", state.adam_t, tensors);
    adam_moments_to_tensors("adam/P", state.adam_p, tensors);

    json meta;
    meta["format"] = "spigan-train-state-v1";
    meta["config"] = json::parse(train_config_to_json(state.cfg));
    meta["n_classes"] = state.n_classes;
    meta["epoch"] = state.epoch;
    meta["step"] = state.step;
    meta["cycle_pos"] = state.cycle_pos;
    meta["data_rng"] = rng_to_string(state.data_rng);
    meta["dropout_rng"] = rng_to_string(state.dropout_rng);
    meta["epoch_loss_d"] = state.epoch_loss_d;
    meta["epoch_loss_g"] = state.epoch_loss_g;
    meta["adam"] = {{"G", adam_to_json(state.adam_g)},
                    {"D", adam_to_json(state.adam_d)},
                    {"T", adam_to_json(state.adam_t)},
                    {"P", adam_to_json(state.adam_p)}};
    meta["csv_bytes"] = csv_bytes;
    save_checkpoint(out_dir + "/train_state.bin", tensors, meta.dump(2) + "\n");
}

TrainState load_state_snapshot(const std::string& out_dir, std::uintmax_t* csv_bytes) {
    const std::string path = out_dir + "/train_state.bin";
    const json meta = json::parse(load_checkpoint_manifest(path));
    TrainConfig cfg = train_config_from_json(meta.at("config").dump());
    TrainState st = init_train_state(cfg, meta.at("n_classes").get<int>());
    const auto tensors = load_checkpoint(path);
    restore_named_tensors(st, tensors);
    adam_moments_from_tensors("adam/G", st.adam_g, tensors);
    adam_moments_from_tensors("adam/D", st.adam_d, tensors);
    adam_moments_from_tensors("adam/T", st.adam_t, tensors);
    adam_moments_from_tensors("adam/P", st.adam_p, tensors);
    st.adam_g.t = meta.at("adam").at("G").at("t").get<std::int64_t>();
    st.adam_d.t = meta.at("adam").at("D").at("t").get<std::int64_t>();
    st.adam_t.t = meta.at("adam").at("T").at("t").get<std::int64_t>();
    st.adam_p.t = meta.at("adam").at("P").at("t").get<std::int64_t>();
    st.epoch = meta.at("epoch").get<int>();
    st.step = meta.at("step").get<std::int64_t>();
    st.cycle_pos = meta.at("cycle_pos").get<int>();
    st.data_rng = rng_from_string(meta.at("data_rng").get<std::string>());
    st.dropout_rng = rng_from_string(meta.at("dropout_rng").get<std::string>());
    st.epoch_loss_d = meta.at("epoch_loss_d").get<std::vector<double>>();
    st.epoch_loss_g = meta.at("epoch_loss_g").get<std::vector<double>>();
    if (csv_bytes) *csv_bytes = meta.at("csv_bytes").get<std::uintmax_t>();
    return st;
}

void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        const std::size_t j = rng.integer(i);
        std::swap(idx[i - 1], idx[j]);
    }
}

void validate_datasets(const TrainConfig& cfg, const Dataset& source, const Dataset* target) {
    if (source.cfg.domain != Domain::source) throw ConfigError("source dataset is not source-domain");
    if (source.samples.empty()) throw ConfigError("source dataset is empty");
    if (static_cast<int>(source.samples.size()) < cfg.batch_size) {
        throw ConfigError("source dataset smaller than one batch");
    }
    for (const Sample& s : source.samples) {
        if (!s.label || !s.inv_depth) throw ConfigError("source samples must carry labels and depth");
    }
    const std::size_t h = source.samples[0].image.dim(1), w = source.samples[0].image.dim(2);
    if (static_cast<int>(h) < cfg.crop_h || static_cast<int>(w) < cfg.crop_w) {
        throw ConfigError("crop size exceeds image size");
    }
    if (cfg.mode != TrainMode::source_only) {
        if (!target) throw ConfigError("adversarial modes need a target dataset");
        if (static_cast<int>(target->samples.size()) < cfg.batch_size) {
            throw ConfigError("target dataset smaller than one batch");
        }
        for (const Sample& s : target->samples) {
            if (s.image.dim(1) != h || s.image.dim(2) != w) {
                throw ConfigError("target image dims do not match source dims");
            }
        }
    }
}

} // namespace

TrainResult train(const TrainConfig& cfg_in, const Dataset& source, const Dataset* target,
                  const std::string& out_dir, bool resume) {
    TrainConfig cfg = cfg_in;
    cfg.normalize_and_validate();
    validate_datasets(cfg, source, target);
    fs::create_directories(out_dir);
    fs::create_directories(out_dir + "/checkpoints");

    const std::string csv_path = out_dir + "/losses.csv";
    TrainState state;
    std::uintmax_t csv_resume_bytes = 0;
    if (resume && fs::exists(out_dir + "/train_state.bin")) {
        state = load_state_snapshot(out_dir, &csv_resume_bytes);
        if (!fs::exists(csv_path) || fs::file_size(csv_path) < csv_resume_bytes) {
            throw ConflictError("cannot resume: loss CSV shorter than the snapshot expects");
        }
        fs::resize_file(csv_path, csv_resume_bytes);
    } else {
        state = init_train_state(cfg, source.cfg.n_classes);
        CsvLogger fresh(csv_path, std::vector<std::string>(std::begin(kCsvColumns), std::end(kCsvColumns)));
        fresh.flush();
    }

    const int total_epochs = cfg.epochs_flat + cfg.epochs_decay;
    const std::size_t n_batches = source.samples.size() / static_cast<std::size_t>(cfg.batch_size);
    const bool gan_mode = cfg.mode != TrainMode::source_only;

    std::vector<std::size_t> src_idx(source.samples.size());
    std::vector<std::size_t> tgt_idx(target ? target->samples.size() : 0);
    for (std::size_t i = 0; i < src_idx.size(); ++i) src_idx[i] = i;
    for (std::size_t i = 0; i < tgt_idx.size(); ++i) tgt_idx[i] = i;

    TrainResult result;
    result.csv_path = csv_path;
    std::optional<int> stop_epoch;
    json early_stop_info = {{"fired", false}};

    while (state.epoch < total_epochs) {
        const int epoch = state.epoch;
        const double lr = lr_schedule(epoch, cfg);
        shuffle_indices(src_idx, state.data_rng);
        std::size_t tgt_pos = 0;
        if (gan_mode) {
            shuffle_indices(tgt_idx, state.data_rng);
        }
        auto next_target = [&]() {
            if (tgt_pos + cfg.batch_size > tgt_idx.size()) {
                shuffle_indices(tgt_idx, state.data_rng);
                tgt_pos = 0;
            }
            std::vector<std::size_t> slice(tgt_idx.begin() + static_cast<std::ptrdiff_t>(tgt_pos),
                                           tgt_idx.begin() +
                                               static_cast<std::ptrdiff_t>(tgt_pos + cfg.batch_size));
            tgt_pos += static_cast<std::size_t>(cfg.batch_size);
            return slice;
        };

        std::string csv_buffer;
        double sum_d = 0.0, sum_g = 0.0;
        std::size_t count_d = 0, count_g = 0;

        for (std::size_t b = 0; b < n_batches; ++b) {
            std::vector<std::size_t> s_slice(
                src_idx.begin() + static_cast<std::ptrdiff_t>(b * cfg.batch_size),
                src_idx.begin() + static_cast<std::ptrdiff_t>((b + 1) * cfg.batch_size));
            Batch batch_s = assemble_batch(source, s_slice, cfg.augment, state.data_rng, cfg.crop_h,
                                           cfg.crop_w);
            Batch batch_r;
            if (gan_mode) {
                batch_r = assemble_batch(*target, next_target(), cfg.augment, state.data_rng,
                                         cfg.crop_h, cfg.crop_w);
            }

            const bool disc_phase = gan_mode && state.cycle_pos == cfg.gen_steps_per_cycle;
            LossReport rep = disc_phase ? train_step_discriminator(state, batch_s, batch_r, lr)
                                        : train_step_generator_side(state, batch_s, batch_r, lr);
            if (gan_mode) state.cycle_pos = (state.cycle_pos + 1) % (cfg.gen_steps_per_cycle + 1);

            if (!rep.finite()) {
                throw NumericError("non-finite loss at step " + std::to_string(state.step), state.step,
                                   epoch, batch_s.indices, batch_r.indices);
            }
            if (disc_phase) {
                sum_d += rep.gan_d;
                ++count_d;
            } else if (gan_mode) {
                sum_g += rep.gan_g;
                ++count_g;
            }

            csv_buffer += format_double(static_cast<double>(state.step)) + "," +
                          format_double(static_cast<double>(epoch)) + "," + format_double(rep.gan_d) +
                          "," + format_double(rep.gan_g) + "," + format_double(rep.task) + "," +
                          format_double(rep.privileged) + "," + format_double(rep.perceptual) + "," +
                          format_double(rep.total_generator_side) + "," + format_double(lr) + "\n";
            ++state.step;
        }
        {
            std::ofstream os(csv_path, std::ios::binary | std::ios::app);
            os << csv_buffer;
        }

        if (gan_mode) {
            state.epoch_loss_d.push_back(count_d ? sum_d / static_cast<double>(count_d)
                                                 : std::numeric_limits<double>::quiet_NaN());
            state.epoch_loss_g.push_back(count_g ? sum_g / static_cast<double>(count_g)
                                                 : std::numeric_limits<double>::quiet_NaN());
        }

        state.epoch = epoch + 1;

        if ((epoch + 1) % cfg.checkpoint_every == 0 || state.epoch == total_epochs) {
            char name[64];
            std::snprintf(name, sizeof(name), "/checkpoints/epoch_%04d.ckpt", epoch);
            save_checkpoint(out_dir + name, collect_named_tensors(state),
                            checkpoint_manifest_json(state));
        }
        save_state_snapshot(state, out_dir, fs::file_size(csv_path));

        if (gan_mode && cfg.early_stop.enabled) {
            const auto fired = early_stop_check(state.epoch_loss_d, state.epoch_loss_g,
                                                cfg.early_stop.window, cfg.early_stop.margin);
            if (fired) {
                stop_epoch = fired;
                double wd = 0, wg = 0;
                for (int i = *fired - cfg.early_stop.window + 1; i <= *fired; ++i) {
                    wd += state.epoch_loss_d[static_cast<std::size_t>(i)];
                    wg += state.epoch_loss_g[static_cast<std::size_t>(i)];
                }
                early_stop_info = {{"fired", true},
                                   {"epoch", *fired},
                                   {"window_mean_loss_d", wd / cfg.early_stop.window},
                                   {"window_mean_loss_g", wg / cfg.early_stop.window}};
                break;
            }
        }
    }

    result.epochs_run = state.epoch;
    result.stop_epoch = stop_epoch;
    result.final_checkpoint = out_dir + "/final.ckpt";
    save_checkpoint(result.final_checkpoint, collect_named_tensors(state),
                    checkpoint_manifest_json(state));

    json manifest;
    manifest["format"] = "spigan-run-v1";
    manifest["mode"] = to_string(cfg.mode);
    manifest["seed"] = cfg.seed;
    manifest["config"] = json::parse(train_config_to_json(cfg));
    manifest["epochs_run"] = result.epochs_run;
    manifest["early_stop"] = early_stop_info;
    manifest["n_classes"] = state.n_classes;
    result.manifest_path = out_dir + "/run_manifest.json";
    write_text_file(result.manifest_path, manifest.dump(2) + "\n");
    return result;
}

} // namespace spigan
