#include "spigan/cli.hpp"

#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <iostream>
#include <thread>

#include "json.hpp"

#include "spigan/artifacts.hpp"
#include "spigan/datasetio.hpp"
#include "spigan/evaluate.hpp"
#include "spigan/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

extern char** environ;

namespace spigan::cli {

namespace {

bool dir_nonempty(const std::string& dir) {
    return fs::exists(dir) && fs::is_directory(dir) && !fs::is_empty(dir);
}

// Shared --force semantics: a non-empty output directory is a conflict
// unless the caller asked to replace it.
void claim_out_dir(const std::string& dir, bool force) {
    if (dir_nonempty(dir)) {
        if (!force) {
            throw ConflictError("output directory " + dir +
                                " is not empty (pass --force to replace it)");
        }
        fs::remove_all(dir);
    }
    fs::create_directories(dir);
}

int map_exception(const char* cmd) {
    try {
        throw;
    } catch (const ConflictError& e) {
        std::cerr << cmd << ": " << e.what() << "\n";
        return kExitArtifactConflict;
    } catch (const NumericError& e) {
        std::cerr << cmd << ": " << e.what() << "\n";
        return kExitNumericFailure;
    } catch (const ConfigError& e) {
        std::cerr << cmd << ": " << e.what() << "\n";
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << cmd << ": " << e.what() << "\n";
        return kExitConfigError;
    }
}

struct DataGenConfig {
    DomainConfig base;
    int n_source = 400, n_target = 400, n_eval = 100;
    AppearanceShift target_shift = DomainConfig::severe_shift();
};

DataGenConfig data_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("data config is not valid JSON: ") + e.what());
    }
    DataGenConfig cfg;
    try {
        if (j.contains("height")) cfg.base.height = j.at("height").get<int>();
        if (j.contains("width")) cfg.base.width = j.at("width").get<int>();
        if (j.contains("n_classes")) cfg.base.n_classes = j.at("n_classes").get<int>();
        if (j.contains("seed")) cfg.base.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("n_source")) cfg.n_source = j.at("n_source").get<int>();
        if (j.contains("n_target")) cfg.n_target = j.at("n_target").get<int>();
        if (j.contains("n_eval")) cfg.n_eval = j.at("n_eval").get<int>();
        if (j.contains("target_shift")) {
            const auto& s = j.at("target_shift");
            if (s.is_string()) {
                const auto name = s.get<std::string>();
                if (name == "mild") {
                    cfg.target_shift = DomainConfig::mild_shift();
                } else if (name == "severe") {
                    cfg.target_shift = DomainConfig::severe_shift();
                } else {
                    throw ConfigError("unknown target_shift preset '" + name + "'");
                }
            } else {
                cfg.target_shift.palette_rot = s.at("palette_rot").get<double>();
                cfg.target_shift.gamma = s.at("gamma").get<double>();
                cfg.target_shift.texture_noise = s.at("texture_noise").get<double>();
                cfg.target_shift.sensor_noise = s.at("sensor_noise").get<double>();
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad data config field: ") + e.what());
    }
    try {
        cfg.base.validate();
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    if (cfg.n_source < 1 || cfg.n_target < 1 || cfg.n_eval < 1) {
        throw ConfigError("split sizes must be >= 1");
    }
    return cfg;
}

} // namespace

int cmd_gen_data(const GenDataArgs& args) {
    try {
        DataGenConfig cfg = data_config_from_json(read_text_file(args.config_path));
        if (args.seed) cfg.base.seed = *args.seed;
        claim_out_dir(args.out_dir, args.force);

        const int threads = std::max(1, args.threads);
        DomainConfig source_cfg = cfg.base;
        source_cfg.domain = Domain::source;
        DomainConfig target_cfg = cfg.base;
        target_cfg.domain = Domain::target;
        target_cfg.shift = cfg.target_shift;

        struct Split {
            const char* name;
            DomainConfig cfg;
            int n;
            std::uint64_t seed;
            bool eval_only;
        };
        const Split splits[3] = {
            {"source", source_cfg, cfg.n_source, 3 * cfg.base.seed + 0, false},
            {"target", target_cfg, cfg.n_target, 3 * cfg.base.seed + 1, false},
            {"eval", target_cfg, cfg.n_eval, 3 * cfg.base.seed + 2, true},
        };
        for (const Split& s : splits) {
            Dataset ds = render_dataset(s.cfg, s.n, s.seed, s.eval_only, threads);
            const std::string dir = args.out_dir + "/" + s.name;
            write_dataset(ds, dir);
            std::cout << s.name << " " << dataset_content_hash(dir) << "\n";
        }
        return kExitOk;
    } catch (...) {
        return map_exception("gen-data");
    }
}

int cmd_train(const TrainArgs& args) {
    try {
        TrainConfig cfg = train_config_from_json(read_text_file(args.config_path));
        if (args.seed) cfg.seed = *args.seed;
        cfg.normalize_and_validate();

        if (!args.resume) {
            claim_out_dir(args.out_dir, args.force);
        } else if (!fs::exists(args.out_dir + "/train_state.bin")) {
            throw ConflictError("--resume given but " + args.out_dir + " has no train state");
        }

        const std::string source_dir = args.data_dir + "/source";
        const std::string target_dir = args.data_dir + "/target";
        if (!fs::exists(source_dir + "/manifest.json")) {
            throw ConfigError("no source dataset under " + args.data_dir);
        }
        Dataset source = load_dataset(source_dir);
        std::optional<Dataset> target;
        if (cfg.mode != TrainMode::source_only) {
            if (!fs::exists(target_dir + "/manifest.json")) {
                throw ConfigError("adversarial modes need a target dataset under " + args.data_dir);
            }
            target = load_dataset(target_dir);
        }

        TrainResult result;
        try {
            result = train(cfg, source, target ? &*target : nullptr, args.out_dir, args.resume);
        } catch (const NumericError& e) {
            json dump;
            dump["step"] = e.step;
            dump["epoch"] = e.epoch;
            dump["source_batch_indices"] = e.source_indices;
            dump["target_batch_indices"] = e.target_indices;
            dump["what"] = e.what();
            write_text_file(args.out_dir + "/nan_dump.json", dump.dump(2) + "\n");
            throw;
        }

        // Stamp the dataset provenance into the run manifest.
        json manifest = json::parse(read_text_file(result.manifest_path));
        manifest["data_dir"] = args.data_dir;
        json hashes;
        hashes["source"] = dataset_content_hash(source_dir);
        if (target) hashes["target"] = dataset_content_hash(target_dir);
        manifest["dataset_hashes"] = hashes;
        write_text_file(result.manifest_path, manifest.dump(2) + "\n");

        std::cout << "epochs_run " << result.epochs_run << "\n";
        if (result.stop_epoch) std::cout << "early_stop_epoch " << *result.stop_epoch << "\n";
        std::cout << "final_checkpoint " << result.final_checkpoint << "\n";
        return kExitOk;
    } catch (...) {
        return map_exception("train");
    }
}

int cmd_eval(const EvalArgs& args) {
    try {
        claim_out_dir(args.out_dir, args.force);
        Dataset eval_ds = load_dataset(args.data_dir);
        EvalOptions opts;
        opts.baseline_report_path = args.baseline_report;
        evaluate_checkpoint(args.checkpoint, eval_ds, args.out_dir, opts);
        std::cout << "report " << args.out_dir << "/report.json\n";
        return kExitOk;
    } catch (...) {
        return map_exception("eval");
    }
}

namespace {

struct MemberRun {
    std::string mode;
    std::uint64_t seed;
    std::string run_dir;
    std::string config_path;
    int exit_code = -1;
};

int spawn_and_wait_pool(const std::string& exe, const std::string& data_dir,
                        std::vector<MemberRun>& members, int jobs) {
    std::vector<pid_t> running_pid;
    std::vector<std::size_t> running_member;
    std::size_t next = 0;
    int worst = 0;

    auto launch = [&](std::size_t idx) {
        MemberRun& m = members[idx];
        const std::string log_path = m.run_dir + "_log.txt";
        posix_spawn_file_actions_t actions;
        posix_spawn_file_actions_init(&actions);
        posix_spawn_file_actions_addopen(&actions, 1, log_path.c_str(),
                                         O_WRONLY | O_CREAT | O_TRUNC, 0644);
        posix_spawn_file_actions_adddup2(&actions, 1, 2);
        std::vector<std::string> argv_s = {exe,          "train",  "--config", m.config_path,
                                           "--data",     data_dir, "--out",    m.run_dir,
                                           "--force"};
        std::vector<char*> argv;
        for (auto& s : argv_s) argv.push_back(s.data());
        argv.push_back(nullptr);
        pid_t pid = 0;
        const int rc = posix_spawn(&pid, exe.c_str(), &actions, nullptr, argv.data(), environ);
        posix_spawn_file_actions_destroy(&actions);
        if (rc != 0) {
            throw std::runtime_error("posix_spawn failed for " + m.run_dir + ": " +
                                     std::strerror(rc));
        }
        running_pid.push_back(pid);
        running_member.push_back(idx);
    };

    while (next < members.size() || !running_pid.empty()) {
        while (next < members.size() && static_cast<int>(running_pid.size()) < jobs) {
            launch(next++);
        }
        int status = 0;
        const pid_t done = waitpid(-1, &status, 0);
        if (done < 0) throw std::runtime_error("waitpid failed");
        for (std::size_t i = 0; i < running_pid.size(); ++i) {
            if (running_pid[i] == done) {
                const int code = WIFEXITED(status) ? WEXITSTATUS(status) : 128;
                members[running_member[i]].exit_code = code;
                worst = std::max(worst, code);
                running_pid.erase(running_pid.begin() + static_cast<std::ptrdiff_t>(i));
                running_member.erase(running_member.begin() + static_cast<std::ptrdiff_t>(i));
                break;
            }
        }
    }
    return worst;
}

} // namespace

int cmd_ablate(const AblateArgs& args) {
    try {
        const auto t_start = std::chrono::steady_clock::now();
        json plan;
        try {
            plan = json::parse(read_text_file(args.plan_path));
        } catch (const json::parse_error& e) {
            throw ConfigError(std::string("plan is not valid JSON: ") + e.what());
        }
        const std::string data_dir = plan.at("data").get<std::string>();
        if (!fs::exists(data_dir + "/source/manifest.json") ||
            !fs::exists(data_dir + "/target/manifest.json") ||
            !fs::exists(data_dir + "/eval/manifest.json")) {
            throw ConfigError("plan data directory " + data_dir +
                              " must contain source/, target/ and eval/ splits");
        }
        std::vector<std::uint64_t> seeds = {0, 1, 2};
        if (plan.contains("seeds")) seeds = plan.at("seeds").get<std::vector<std::uint64_t>>();
        std::vector<std::string> modes = {"source_only", "base", "no_pi", "spigan"};
        if (plan.contains("modes")) modes = plan.at("modes").get<std::vector<std::string>>();
        int jobs = args.jobs;
        if (plan.contains("jobs") && jobs <= 0) jobs = plan.at("jobs").get<int>();
        if (jobs <= 0) {
            jobs = static_cast<int>(std::min(4u, std::max(1u, std::thread::hardware_concurrency())));
        }
        const std::string base_config =
            plan.contains("train") ? plan.at("train").dump() : std::string("{}");

        claim_out_dir(args.out_dir, args.force);
        fs::create_directories(args.out_dir + "/configs");
        fs::create_directories(args.out_dir + "/runs");
        fs::create_directories(args.out_dir + "/eval");

        // Shared seeds across modes: differences are attributable to the loss
        // terms, not sampling noise.
        std::vector<MemberRun> members;
        for (const auto& mode : modes) {
            for (std::uint64_t seed : seeds) {
                TrainConfig cfg = train_config_from_json(base_config);
                cfg.mode = train_mode_from_string(mode);
                cfg.seed = seed;
                cfg.normalize_and_validate();
                MemberRun m;
                m.mode = mode;
                m.seed = seed;
                m.run_dir = args.out_dir + "/runs/" + mode + "_seed" + std::to_string(seed);
                m.config_path = args.out_dir + "/configs/" + mode + "_seed" + std::to_string(seed) +
                                ".json";
                write_text_file(m.config_path, train_config_to_json(cfg));
                members.push_back(std::move(m));
            }
        }

        const int worst_train = spawn_and_wait_pool(args.self_exe, data_dir, members, jobs);

        // Evaluations: source_only first (it is everyone's baseline).
        Dataset eval_ds = load_dataset(data_dir + "/eval");
        std::map<std::uint64_t, std::string> baseline_reports;
        json member_rows = json::array();
        std::vector<std::string> table_lines;
        std::string header = "mode,seed";
        for (const auto& name : kClassNames) header += ",iou_" + name;
        header += ",miou,neg_rate";
        table_lines.push_back(header);

        auto eval_member = [&](MemberRun& m) -> std::optional<json> {
            if (m.exit_code != 0) return std::nullopt;
            EvalOptions opts;
            if (m.mode != "source_only") {
                auto it = baseline_reports.find(m.seed);
                if (it != baseline_reports.end()) opts.baseline_report_path = it->second;
            } else {
                opts.baseline_report_path.reset();
            }
            const std::string eval_dir = args.out_dir + "/eval/" + m.mode + "_seed" +
                                         std::to_string(m.seed);
            const std::string text = evaluate_checkpoint(m.run_dir + "/final.ckpt", eval_ds,
                                                         eval_dir, opts);
            return json::parse(text);
        };

        std::map<std::pair<std::string, std::uint64_t>, json> reports;
        for (MemberRun& m : members) {
            if (m.mode != "source_only") continue;
            if (auto r = eval_member(m)) {
                reports[{m.mode, m.seed}] = *r;
                baseline_reports[m.seed] = args.out_dir + "/eval/source_only_seed" +
                                           std::to_string(m.seed) + "/report.json";
            }
        }
        for (MemberRun& m : members) {
            if (m.mode == "source_only") continue;
            if (auto r = eval_member(m)) reports[{m.mode, m.seed}] = *r;
        }

        // Member rows, then mean and std per mode.
        std::map<std::string, std::vector<double>> mode_miou, mode_negrate;
        for (const MemberRun& m : members) {
            std::string line = m.mode + "," + std::to_string(m.seed);
            auto it = reports.find({m.mode, m.seed});
            if (it == reports.end()) {
                line += ",FAILED";
                table_lines.push_back(line);
                continue;
            }
            const json& r = it->second;
            for (const auto& v : r.at("per_class_iou")) {
                line += "," + (v.is_null() ? std::string("nan") : format_double(v.get<double>()));
            }
            const double miou = r.at("miou_pooled").get<double>();
            double neg = 0.0;
            if (r.contains("negative_transfer")) {
                neg = r.at("negative_transfer").at("rate").get<double>();
            }
            line += "," + format_double(miou) + "," + format_double(neg);
            table_lines.push_back(line);
            mode_miou[m.mode].push_back(miou);
            mode_negrate[m.mode].push_back(neg);
            json row;
            row["mode"] = m.mode;
            row["seed"] = m.seed;
            row["miou"] = miou;
            row["neg_rate"] = neg;
            member_rows.push_back(row);
        }
        auto mean_std = [](const std::vector<double>& v) {
            double mean = 0.0;
            for (double x : v) mean += x;
            mean /= static_cast<double>(v.size());
            double var = 0.0;
            for (double x : v) var += (x - mean) * (x - mean);
            return std::pair<double, double>(mean, v.size() > 1 ? std::sqrt(var / (v.size() - 1.0))
                                                                : 0.0);
        };
        for (const auto& mode : modes) {
            if (!mode_miou.count(mode) || mode_miou[mode].empty()) continue;
            const auto [mm, ms] = mean_std(mode_miou[mode]);
            const auto [nm, ns] = mean_std(mode_negrate[mode]);
            std::string blanks;
            for (std::size_t i = 0; i < kClassNames.size(); ++i) blanks += ",";
            table_lines.push_back(mode + ",mean" + blanks + format_double(mm) + "," +
                                  format_double(nm));
            table_lines.push_back(mode + ",std" + blanks + format_double(ms) + "," +
                                  format_double(ns));
        }
        std::string table;
        for (const auto& l : table_lines) table += l + "\n";
        write_text_file(args.out_dir + "/ablation_table.csv", table);

        const double wall_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        json manifest;
        manifest["format"] = "spigan-ablation-v1";
        manifest["plan"] = plan;
        manifest["jobs"] = jobs;
        manifest["wall_clock_seconds"] = wall_s;
        json exits = json::array();
        for (const MemberRun& m : members) {
            exits.push_back({{"mode", m.mode}, {"seed", m.seed}, {"exit_code", m.exit_code}});
        }
        manifest["members"] = exits;
        manifest["rows"] = member_rows;
        write_text_file(args.out_dir + "/ablation_manifest.json", manifest.dump(2) + "\n");

        std::cout << "table " << args.out_dir << "/ablation_table.csv\n";
        std::cout << "wall_clock_seconds " << wall_s << "\n";
        return worst_train == 0 ? kExitOk : worst_train;
    } catch (...) {
        return map_exception("ablate");
    }
}

} // namespace spigan::cli
