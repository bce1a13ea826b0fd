#include "spigan/evaluate.hpp"

#include <cmath>
#include <filesystem>

#include "json.hpp"

#include "spigan/artifacts.hpp"
#include "spigan/evalmetrics.hpp"
#include "spigan/image_io.hpp"
#include "spigan/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace spigan {

namespace {

// One distinct color per class, chosen to survive 8-bit quantization.
const double kPalette[5][3] = {{0.31, 0.63, 0.94},  // sky
                               {0.42, 0.42, 0.42},  // road
                               {0.75, 0.29, 0.22},  // building
                               {0.18, 0.65, 0.25},  // vegetation
                               {0.93, 0.83, 0.16}}; // vehicle

} // namespace

Tensor colorize_labels(const LabelMap& labels) {
    if (labels.shape.size() != 2) throw std::invalid_argument("colorize_labels needs an [H,W] map");
    const std::size_t h = labels.shape[0], w = labels.shape[1], hw = h * w;
    Tensor img({3, h, w});
    for (std::size_t i = 0; i < hw; ++i) {
        const std::int32_t c = labels.v[i];
        if (c == kIgnoreLabel) {
            for (std::size_t ch = 0; ch < 3; ++ch) img.data()[ch * hw + i] = -1.0;
            continue;
        }
        if (c < 0 || c >= 5) throw std::invalid_argument("colorize_labels: class out of palette");
        for (std::size_t ch = 0; ch < 3; ++ch) {
            img.data()[ch * hw + i] = 2.0 * kPalette[c][ch] - 1.0;
        }
    }
    return img;
}

LabelMap decolorize_labels(const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3) {
        throw std::invalid_argument("decolorize_labels needs a [3,H,W] image");
    }
    const std::size_t h = image.dim(1), w = image.dim(2), hw = h * w;
    LabelMap out({h, w});
    for (std::size_t i = 0; i < hw; ++i) {
        double best = 1e9;
        int best_c = kIgnoreLabel;
        for (int c = 0; c < 5; ++c) {
            double d = 0.0;
            for (std::size_t ch = 0; ch < 3; ++ch) {
                const double diff = image.data()[ch * hw + i] - (2.0 * kPalette[c][ch] - 1.0);
                d += diff * diff;
            }
            if (d < best) {
                best = d;
                best_c = c;
            }
        }
        // Pure black encodes "ignored".
        double black = 0.0;
        for (std::size_t ch = 0; ch < 3; ++ch) {
            black += (image.data()[ch * hw + i] + 1.0) * (image.data()[ch * hw + i] + 1.0);
        }
        out.v[i] = black < best ? kIgnoreLabel : best_c;
    }
    return out;
}

namespace {

Tensor hstack(const std::vector<Tensor>& images) {
    const std::size_t h = images.at(0).dim(1);
    std::size_t total_w = 0;
    for (const Tensor& t : images) total_w += t.dim(2) + 1;
    total_w -= 1;
    Tensor out({3, h, total_w}, -1.0);
    std::size_t x0 = 0;
    for (const Tensor& t : images) {
        const std::size_t w = t.dim(2), hw_src = h * w;
        for (std::size_t ch = 0; ch < 3; ++ch) {
            for (std::size_t r = 0; r < h; ++r) {
                std::copy(t.data().begin() + static_cast<std::ptrdiff_t>(ch * hw_src + r * w),
                          t.data().begin() + static_cast<std::ptrdiff_t>(ch * hw_src + (r + 1) * w),
                          out.data().begin() +
                              static_cast<std::ptrdiff_t>((ch * h + r) * total_w + x0));
            }
        }
        x0 += w + 1;
    }
    return out;
}

Tensor single_image_batch(const Tensor& image) {
    Tensor b({1, image.dim(0), image.dim(1), image.dim(2)});
    b.data() = image.data();
    return b;
}

Tensor squeeze_batch(const Tensor& batch) {
    Tensor t({batch.dim(1), batch.dim(2), batch.dim(3)});
    t.data() = batch.data();
    return t;
}

} // namespace

std::string evaluate_checkpoint(const std::string& checkpoint_path, const Dataset& eval_ds,
                                const std::string& out_dir, const EvalOptions& opts) {
    TrainState state = state_from_checkpoint_manifest(load_checkpoint_manifest(checkpoint_path));
    restore_named_tensors(state, load_checkpoint(checkpoint_path));

    if (state.n_classes != eval_ds.cfg.n_classes) {
        throw ConfigError("checkpoint has " + std::to_string(state.n_classes) +
                          " classes but the dataset has " + std::to_string(eval_ds.cfg.n_classes));
    }
    if (eval_ds.samples.empty()) throw ConfigError("evaluation dataset is empty");
    for (const Sample& s : eval_ds.samples) {
        if (!s.label) throw ConfigError("evaluation samples need labels");
    }

    fs::create_directories(out_dir);
    fs::create_directories(out_dir + "/strips");

    ConfusionMatrix pooled(state.n_classes);
    std::vector<double> per_image_miou;
    per_image_miou.reserve(eval_ds.samples.size());

    for (std::size_t i = 0; i < eval_ds.samples.size(); ++i) {
        const Sample& s = eval_ds.samples[i];
        Tensor logits = state.task_net->forward(nullptr, single_image_batch(s.image),
                                                ops::RunMode::eval);
        LabelMap pred3 = ops::argmax_channels(logits);
        LabelMap pred({s.image.dim(1), s.image.dim(2)});
        pred.v = pred3.v;

        ConfusionMatrix cm(state.n_classes);
        cm.accumulate(pred, *s.label);
        pooled += cm;
        per_image_miou.push_back(mean_iou(cm));

        if (static_cast<int>(i) < opts.dump_strips) {
            std::vector<Tensor> panels;
            panels.push_back(s.image);
            if (s.domain == Domain::source && state.gen) {
                Tensor adapted = state.gen->forward(nullptr, single_image_batch(s.image),
                                                    ops::RunMode::eval, nullptr);
                panels.push_back(squeeze_batch(adapted));
            }
            panels.push_back(colorize_labels(pred));
            panels.push_back(colorize_labels(*s.label));
            char name[48];
            std::snprintf(name, sizeof(name), "/strips/sample_%04zu.ppm", i);
            write_ppm(out_dir + name, hstack(panels));
        }
    }

    const std::vector<double> per_class = iou(pooled);
    json report;
    report["format"] = "spigan-eval-v1";
    report["checkpoint"] = checkpoint_path;
    report["mode"] = to_string(state.cfg.mode);
    report["n_images"] = eval_ds.samples.size();
    report["class_names"] = kClassNames;
    json per_class_json = json::array();
    for (double v : per_class) {
        if (std::isnan(v)) {
            per_class_json.push_back(nullptr);
        } else {
            per_class_json.push_back(v);
        }
    }
    report["per_class_iou"] = per_class_json;
    report["miou_pooled"] = mean_iou(pooled);
    report["per_image_miou"] = per_image_miou;
    double mean_per_image = 0.0;
    for (double v : per_image_miou) mean_per_image += v;
    report["miou_per_image_mean"] = mean_per_image / static_cast<double>(per_image_miou.size());

    if (opts.baseline_report_path) {
        const json baseline = json::parse(read_text_file(*opts.baseline_report_path));
        const auto baseline_miou = baseline.at("per_image_miou").get<std::vector<double>>();
        report["negative_transfer"] = {
            {"baseline", *opts.baseline_report_path},
            {"rate", negative_transfer_rate(per_image_miou, baseline_miou)}};
    }

    const std::string text = report.dump(2) + "\n";
    write_text_file(out_dir + "/report.json", text);
    return text;
}

} // namespace spigan
