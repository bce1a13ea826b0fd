#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace spigan::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitNumericFailure = 3;
inline constexpr int kExitArtifactConflict = 4;

struct GenDataArgs {
    std::string config_path;
    std::string out_dir;
    bool force = false;
    int threads = 1;
    std::optional<std::uint64_t> seed;
};

struct TrainArgs {
    std::string config_path;
    std::string data_dir; // expects <dir>/source and (for adversarial modes) <dir>/target
    std::string out_dir;
    bool force = false;
    bool resume = false;
    std::optional<std::uint64_t> seed;
};

struct EvalArgs {
    std::string checkpoint;
    std::string data_dir; // one split directory, labels required
    std::string out_dir;
    std::optional<std::string> baseline_report;
    bool force = false;
};

struct AblateArgs {
    std::string plan_path;
    std::string out_dir;
    int jobs = 0; // 0 = min(4, hardware)
    bool force = false;
    std::string self_exe; // binary to spawn for member training runs
};

int cmd_gen_data(const GenDataArgs& args);
int cmd_train(const TrainArgs& args);
int cmd_eval(const EvalArgs& args);
int cmd_ablate(const AblateArgs& args);

} // namespace spigan::cli
