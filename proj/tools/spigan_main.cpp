#include <unistd.h>

#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "spigan/cli.hpp"

namespace {

std::string self_exe_path(const char* argv0) {
    char buf[4096];
    const ssize_t n = readlink("/proc/self/exe", buf, sizeof(buf) - 1);
    if (n > 0) {
        buf[n] = '\0';
        return buf;
    }
    return argv0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Adversarial sim-to-real adaptation lab on procedural street scenes"};
    app.require_subcommand(1);

    spigan::cli::GenDataArgs gen_args;
    spigan::cli::TrainArgs train_args;
    spigan::cli::EvalArgs eval_args;
    spigan::cli::AblateArgs ablate_args;
    std::uint64_t seed_value = 0;

    auto* gen = app.add_subcommand("gen-data", "Render source/target/eval dataset splits");
    gen->add_option("--config", gen_args.config_path, "Domain config JSON")->required();
    gen->add_option("--out", gen_args.out_dir, "Output directory")->required();
    gen->add_flag("--force", gen_args.force, "Replace a non-empty output directory");
    gen->add_option("--threads", gen_args.threads, "Render threads (data generation only)");
    auto* gen_seed = gen->add_option("--seed", seed_value, "Override the config seed");

    auto* train = app.add_subcommand("train", "Run one training configuration");
    train->add_option("--config", train_args.config_path, "Train config JSON")->required();
    train->add_option("--data", train_args.data_dir, "Dataset tree (source/, target/)")->required();
    train->add_option("--out", train_args.out_dir, "Run directory")->required();
    train->add_flag("--force", train_args.force, "Replace a non-empty run directory");
    train->add_flag("--resume", train_args.resume, "Continue from the run's state snapshot");
    auto* train_seed = train->add_option("--seed", seed_value, "Override the config seed");

    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a labeled split");
    eval->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint archive")->required();
    eval->add_option("--data", eval_args.data_dir, "Labeled split directory")->required();
    eval->add_option("--out", eval_args.out_dir, "Report directory")->required();
    eval->add_option("--baseline", eval_args.baseline_report,
                     "Baseline report JSON for the negative-transfer rate");
    eval->add_flag("--force", eval_args.force, "Replace a non-empty report directory");

    auto* ablate = app.add_subcommand("ablate", "Train and evaluate the four-mode ablation");
    ablate->add_option("--plan", ablate_args.plan_path, "Ablation plan JSON")->required();
    ablate->add_option("--out", ablate_args.out_dir, "Ablation output directory")->required();
    ablate->add_option("--jobs", ablate_args.jobs, "Concurrent member runs");
    ablate->add_flag("--force", ablate_args.force, "Replace a non-empty output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : spigan::cli::kExitConfigError;
    }

    if (gen->parsed()) {
        if (gen_seed->count()) gen_args.seed = seed_value;
        return spigan::cli::cmd_gen_data(gen_args);
    }
    if (train->parsed()) {
        if (train_seed->count()) train_args.seed = seed_value;
        return spigan::cli::cmd_train(train_args);
    }
    if (eval->parsed()) return spigan::cli::cmd_eval(eval_args);
    if (ablate->parsed()) {
        ablate_args.self_exe = self_exe_path(argv[0]);
        return spigan::cli::cmd_ablate(ablate_args);
    }
    std::cerr << "no subcommand\n";
    return spigan::cli::kExitConfigError;
}
