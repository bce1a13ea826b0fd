#include "spigan/datasetio.hpp"

#include <filesystem>
#include <future>
#include <stdexcept>

#include "json.hpp"

#include "spigan/artifacts.hpp"
#include "spigan/image_io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace spigan {

namespace {

std::string index_name(const char* prefix, std::size_t i, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%s_%05zu.%s", prefix, i, ext);
    return buf;
}

json shift_to_json(const AppearanceShift& s) {
    return json{{"palette_rot", s.palette_rot},
                {"gamma", s.gamma},
                {"texture_noise", s.texture_noise},
                {"sensor_noise", s.sensor_noise}};
}

AppearanceShift shift_from_json(const json& j) {
    AppearanceShift s;
    s.palette_rot = j.at("palette_rot").get<double>();
    s.gamma = j.at("gamma").get<double>();
    s.texture_noise = j.at("texture_noise").get<double>();
    s.sensor_noise = j.at("sensor_noise").get<double>();
    return s;
}

} // namespace

void write_dataset(const Dataset& ds, const std::string& dir) {
    fs::create_directories(dir);
    std::vector<std::pair<std::string, std::string>> files;
    json scene_ids = json::array();
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
        const Sample& s = ds.samples[i];
        const std::string img = index_name("img", i, "ppm");
        write_ppm(dir + "/" + img, s.image);
        files.emplace_back(img, dir + "/" + img);
        if (s.label) {
            const std::string lab = index_name("lab", i, "pgm");
            write_pgm8(dir + "/" + lab, *s.label);
            files.emplace_back(lab, dir + "/" + lab);
        }
        if (s.inv_depth) {
            const std::string dep = index_name("dep", i, "pgm");
            write_pgm16(dir + "/" + dep, *s.inv_depth);
            files.emplace_back(dep, dir + "/" + dep);
        }
        scene_ids.push_back(std::to_string(s.scene_id));
    }

    json manifest;
    manifest["format"] = "spigan-dataset-v1";
    manifest["domain"] = ds.cfg.domain == Domain::source ? "source" : "target";
    manifest["n_classes"] = ds.cfg.n_classes;
    manifest["height"] = ds.cfg.height;
    manifest["width"] = ds.cfg.width;
    manifest["seed"] = ds.cfg.seed;
    manifest["shift"] = shift_to_json(ds.cfg.shift);
    manifest["labels_eval_only"] = ds.labels_eval_only;
    manifest["count"] = ds.samples.size();
    manifest["class_names"] = kClassNames;
    manifest["scene_ids"] = scene_ids;
    manifest["content_hash"] = sha256_files(files);
    write_text_file(dir + "/manifest.json", manifest.dump(2) + "\n");
}

Dataset load_dataset(const std::string& dir) {
    const json manifest = json::parse(read_text_file(dir + "/manifest.json"));
    Dataset ds;
    ds.cfg.n_classes = manifest.at("n_classes").get<int>();
    ds.cfg.height = manifest.at("height").get<int>();
    ds.cfg.width = manifest.at("width").get<int>();
    ds.cfg.seed = manifest.at("seed").get<std::uint64_t>();
    ds.cfg.domain = manifest.at("domain").get<std::string>() == "source" ? Domain::source
                                                                         : Domain::target;
    ds.cfg.shift = shift_from_json(manifest.at("shift"));
    ds.labels_eval_only = manifest.at("labels_eval_only").get<bool>();
    const auto count = manifest.at("count").get<std::size_t>();
    const auto& scene_ids = manifest.at("scene_ids");

    ds.samples.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        Sample s;
        s.domain = ds.cfg.domain;
        s.scene_id = std::stoull(scene_ids.at(i).get<std::string>());
        s.image = read_ppm(dir + "/" + index_name("img", i, "ppm"));
        const std::string lab = dir + "/" + index_name("lab", i, "pgm");
        if (fs::exists(lab)) {
            s.label = read_pgm8(lab);
            s.label_eval_only = ds.labels_eval_only;
        }
        const std::string dep = dir + "/" + index_name("dep", i, "pgm");
        if (fs::exists(dep)) s.inv_depth = read_pgm16(dep);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

std::string dataset_content_hash(const std::string& dir) {
    std::vector<std::pair<std::string, std::string>> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        if (name == "manifest.json") continue;
        files.emplace_back(name, entry.path().string());
    }
    return sha256_files(files);
}

Dataset render_dataset(const DomainConfig& cfg, int n, std::uint64_t seed, bool labels_eval_only,
                       int threads) {
    if (threads <= 1) return make_dataset(cfg, n, seed, labels_eval_only);
    if (n < 1) throw std::invalid_argument("render_dataset needs n >= 1");
    cfg.validate();

    Dataset ds;
    ds.cfg = cfg;
    ds.cfg.seed = seed;
    ds.labels_eval_only = labels_eval_only;
    ds.samples.resize(static_cast<std::size_t>(n));

    DomainConfig per = ds.cfg;
    const bool strip_labels = cfg.domain == Domain::target && !labels_eval_only;
    auto worker = [&](int begin, int end) {
        for (int i = begin; i < end; ++i) {
            Sample s = render_scene(per, scene_id_for(seed, static_cast<std::uint64_t>(i)));
            if (cfg.domain == Domain::target) {
                s.label_eval_only = labels_eval_only;
                if (strip_labels) s.label.reset();
            }
            ds.samples[static_cast<std::size_t>(i)] = std::move(s);
        }
    };
    const int chunk = (n + threads - 1) / threads;
    std::vector<std::future<void>> futs;
    for (int t = 0; t < threads; ++t) {
        const int begin = t * chunk;
        const int end = std::min(n, begin + chunk);
        if (begin >= end) break;
        futs.push_back(std::async(std::launch::async, worker, begin, end));
    }
    for (auto& f : futs) f.get();
    return ds;
}

} // namespace spigan
