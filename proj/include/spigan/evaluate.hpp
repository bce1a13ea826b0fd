#pragma once

#include <optional>
#include <string>

#include "spigan/toysim.hpp"

namespace spigan {

// Fixed 5-class palette for label dumps; colorize and decolorize are exact
// inverses on palette entries.
Tensor colorize_labels(const LabelMap& labels);   // [H,W] -> [3,H,W] in [-1,1]
LabelMap decolorize_labels(const Tensor& image);

struct EvalOptions {
    std::optional<std::string> baseline_report_path; // enables the negative-transfer column
    int dump_strips = 8;                             // per-sample ppm strips to write
};

// Runs the task network of a checkpoint over a labeled dataset, writes
// report.json (per-class IoU, pooled mIoU, per-image mIoU, optional negative
// transfer) plus per-sample image strips, and returns the report text.
std::string evaluate_checkpoint(const std::string& checkpoint_path, const Dataset& eval_ds,
                                const std::string& out_dir, const EvalOptions& opts = {});

} // namespace spigan
