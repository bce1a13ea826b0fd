#pragma once

#include <optional>
#include <string>
#include <vector>

#include "spigan/nets.hpp"
#include "spigan/objectives.hpp"
#include "spigan/toysim.hpp"

namespace spigan {

// Config errors exit the CLI with code 2, numeric failures with 3, artifact
// conflicts with 4.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct ConflictError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
    NumericError(const std::string& msg, std::int64_t step, int epoch,
                 std::vector<std::size_t> source_indices, std::vector<std::size_t> target_indices)
        : std::runtime_error(msg), step(step), epoch(epoch),
          source_indices(std::move(source_indices)), target_indices(std::move(target_indices)) {}
    std::int64_t step;
    int epoch;
    std::vector<std::size_t> source_indices, target_indices;
};

enum class TrainMode { spigan, no_pi, base, source_only };
std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& s);

enum class GanGeneratorForm { target_one, negated_minimax };

struct EarlyStopConfig {
    int window = 5;
    double margin = 0.1;
    bool enabled = true;
};

struct TrainConfig {
    TrainMode mode = TrainMode::spigan;
    LossWeights weights;

    int batch_size = 8;
    double lr0 = 2e-4;
    double adam_beta1 = 0.5;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    int epochs_flat = 20;
    int epochs_decay = 20;
    int gen_steps_per_cycle = 5;
    EarlyStopConfig early_stop;

    bool augment = true;
    int crop_h = 28;
    int crop_w = 56;

    int base_channels = 16;
    int n_resblocks = 2;
    int d_layers = 3;

    int checkpoint_every = 1;
    GanGeneratorForm gan_generator_form = GanGeneratorForm::target_one;
    std::uint64_t seed = 0;

    // The paper-scale preset: batch 32, lr flat for 100 epochs then a
    // 100-epoch linear decay.
    static TrainConfig paper_preset();

    // Applies the mode's forced weights (no_pi: gamma=0; base: gamma=delta=0)
    // and checks ranges.
    void normalize_and_validate();
};

std::string train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const std::string& text);

// Flat lr0, then a linear decay that hits zero one quantum past the last
// epoch; lr(epochs_flat + epochs_decay/2) is exactly lr0/2.
double lr_schedule(int epoch, const TrainConfig& cfg);

struct AdamState {
    std::int64_t t = 0;
    std::map<std::string, std::vector<double>> m, v;
};

// Bias-corrected Adam over every parameter in the set; a parameter without a
// gradient is an error. Gradients are released afterward.
void adam_step(ParamSet& params, AdamState& state, double lr, double beta1, double beta2,
               double eps);

// Fires at the first epoch whose trailing window satisfies either rule:
// dominance (mean loss_D < mean loss_G - margin throughout) or convergence
// (both curves vary less than margin/10 across the window).
std::optional<int> early_stop_check(const std::vector<double>& loss_d_per_epoch,
                                    const std::vector<double>& loss_g_per_epoch, int window,
                                    double margin);

struct Batch {
    Tensor images;                   // [N,3,h,w]
    std::optional<LabelMap> labels;  // [N,h,w]
    std::optional<Tensor> inv_depth; // [N,1,h,w]
    std::vector<std::size_t> indices;
};

Batch assemble_batch(const Dataset& ds, const std::vector<std::size_t>& indices, bool augmented,
                     Rng& rng, int crop_h, int crop_w);

struct TrainState {
    TrainConfig cfg;
    int n_classes = 5;

    std::optional<Generator> gen;
    std::optional<Discriminator> disc;
    std::optional<Segmenter> task_net;
    std::optional<Segmenter> pi_net;
    std::optional<FeaturePyramid> phi;

    AdamState adam_g, adam_d, adam_t, adam_p;
    Rng data_rng{0}, dropout_rng{0};

    std::int64_t step = 0;
    int epoch = 0;
    int cycle_pos = 0; // position inside the gen/gen/gen/gen/gen/disc cycle
    std::vector<double> epoch_loss_d, epoch_loss_g;
};

TrainState init_train_state(const TrainConfig& cfg, int n_classes);

LossReport train_step_generator_side(TrainState& state, const Batch& batch_s, const Batch& batch_r,
                                     double lr);
LossReport train_step_discriminator(TrainState& state, const Batch& batch_s, const Batch& batch_r,
                                    double lr);

struct TrainResult {
    int epochs_run = 0;
    std::optional<int> stop_epoch;
    std::string csv_path;
    std::string final_checkpoint;
    std::string manifest_path;
};

// Full optimization loop: shuffled batches, 5:1 generator/discriminator
// cycle, per-epoch checkpoints, early stopping, CSV logging. Deterministic in
// (cfg, datasets). resume continues bit-exactly from the state snapshot in
// out_dir.
TrainResult train(const TrainConfig& cfg, const Dataset& source, const Dataset* target,
                  const std::string& out_dir, bool resume = false);

// Checkpoint helpers shared by train, eval and the CLI.
std::map<std::string, Tensor> collect_named_tensors(const TrainState& state);
void restore_named_tensors(TrainState& state, const std::map<std::string, Tensor>& tensors);
std::string checkpoint_manifest_json(const TrainState& state);
TrainState state_from_checkpoint_manifest(const std::string& manifest_json);

} // namespace spigan
