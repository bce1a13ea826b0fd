#include "spigan/evalmetrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace spigan {

ConfusionMatrix::ConfusionMatrix(int n_classes) : n_classes_(n_classes) {
    if (n_classes < 1) throw std::invalid_argument("confusion matrix needs at least one class");
    counts_.assign(static_cast<std::size_t>(n_classes) * n_classes, 0);
}

void ConfusionMatrix::accumulate(const LabelMap& pred, const LabelMap& gt) {
    if (pred.shape != gt.shape) {
        throw std::invalid_argument("accumulate: prediction shape " + shape_str(pred.shape) +
                                    " does not match ground truth " + shape_str(gt.shape));
    }
    for (std::size_t i = 0; i < gt.v.size(); ++i) {
        const std::int32_t g = gt.v[i];
        if (g == kIgnoreLabel) continue;
        const std::int32_t p = pred.v[i];
        if (g < 0 || g >= n_classes_) {
            throw std::invalid_argument("accumulate: ground-truth class " + std::to_string(g) +
                                        " out of range");
        }
        if (p < 0 || p >= n_classes_) {
            throw std::invalid_argument("accumulate: predicted class " + std::to_string(p) +
                                        " out of range (255 is not a valid prediction)");
        }
        ++counts_[static_cast<std::size_t>(g) * n_classes_ + p];
    }
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
    if (other.n_classes_ != n_classes_) {
        throw std::invalid_argument("cannot merge confusion matrices with different class counts");
    }
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    return *this;
}

std::int64_t ConfusionMatrix::at(int gt, int pred) const {
    if (gt < 0 || gt >= n_classes_ || pred < 0 || pred >= n_classes_) {
        throw std::out_of_range("confusion matrix index out of range");
    }
    return counts_[static_cast<std::size_t>(gt) * n_classes_ + pred];
}

std::int64_t ConfusionMatrix::total() const {
    std::int64_t t = 0;
    for (auto c : counts_) t += c;
    return t;
}

std::vector<double> iou(const ConfusionMatrix& cm) {
    const int c = cm.n_classes();
    std::vector<double> out(static_cast<std::size_t>(c));
    for (int k = 0; k < c; ++k) {
        std::int64_t tp = cm.at(k, k);
        std::int64_t fp = 0, fn = 0;
        for (int j = 0; j < c; ++j) {
            if (j != k) {
                fp += cm.at(j, k);
                fn += cm.at(k, j);
            }
        }
        const std::int64_t denom = tp + fp + fn;
        out[static_cast<std::size_t>(k)] =
            denom == 0 ? std::numeric_limits<double>::quiet_NaN()
                       : static_cast<double>(tp) / static_cast<double>(denom);
    }
    return out;
}

double mean_iou(const ConfusionMatrix& cm) {
    const std::vector<double> per_class = iou(cm);
    double acc = 0.0;
    int included = 0;
    for (double v : per_class) {
        if (!std::isnan(v)) {
            acc += v;
            ++included;
        }
    }
    return included == 0 ? std::numeric_limits<double>::quiet_NaN() : acc / included;
}

double negative_transfer_rate(const std::vector<double>& per_image_miou_adapted,
                              const std::vector<double>& per_image_miou_source_only) {
    if (per_image_miou_adapted.size() != per_image_miou_source_only.size()) {
        throw std::invalid_argument("negative_transfer_rate: per-image lists differ in length");
    }
    if (per_image_miou_adapted.empty()) {
        throw std::invalid_argument("negative_transfer_rate: empty per-image lists");
    }
    std::size_t worse = 0;
    for (std::size_t i = 0; i < per_image_miou_adapted.size(); ++i) {
        if (per_image_miou_adapted[i] < per_image_miou_source_only[i]) ++worse;
    }
    return static_cast<double>(worse) / static_cast<double>(per_image_miou_adapted.size());
}

} // namespace spigan
