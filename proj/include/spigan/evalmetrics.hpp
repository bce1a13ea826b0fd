#pragma once

#include <cstdint>
#include <vector>

#include "spigan/tensor.hpp"

namespace spigan {

// C x C pixel-count matrix; rows are ground truth, columns are predictions.
// Accumulation is associative and commutative, so shards can be merged.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(int n_classes);

    // Counts valid pixels; gt pixels labeled 255 are skipped. Predictions
    // must be in [0, C) -- a 255 or out-of-range prediction is an error.
    void accumulate(const LabelMap& pred, const LabelMap& gt);

    ConfusionMatrix& operator+=(const ConfusionMatrix& other);

    std::int64_t at(int gt, int pred) const;
    std::int64_t total() const;
    int n_classes() const { return n_classes_; }

private:
    int n_classes_;
    std::vector<std::int64_t> counts_;
};

// Per-class IoU = TP / (TP + FP + FN). Classes absent from both gt and pred
// get NaN and are excluded from the mean.
std::vector<double> iou(const ConfusionMatrix& cm);
double mean_iou(const ConfusionMatrix& cm);

// Fraction of images whose adapted mIoU is strictly lower than the
// source-only mIoU. Ties do not count as negative transfer.
double negative_transfer_rate(const std::vector<double>& per_image_miou_adapted,
                              const std::vector<double>& per_image_miou_source_only);

} // namespace spigan
