#ifndef SPAE_METRICS_HPP
#define SPAE_METRICS_HPP

#include <vector>

#include "spae/coord.hpp"

namespace spae {

/// 100 * #mismatches / #samples.
double classification_error(const std::vector<int>& preds, const std::vector<int>& labels);

/// Per-class intersection-over-union pooled over all sites, averaged over
/// the classes present in either predictions or labels (absent classes are
/// excluded rather than counted as 0/0).
double mean_iou(const std::vector<int>& preds, const std::vector<int>& labels, int classes);

// Active-site confusion between a predicted and a true pattern.
struct PatternConfusion {
    int64_t tp = 0;
    int64_t fp = 0;
    int64_t fn = 0;

    double iou() const {
        const int64_t denom = tp + fp + fn;
        return denom == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(denom);
    }
    PatternConfusion& operator+=(const PatternConfusion& o) {
        tp += o.tp;
        fp += o.fp;
        fn += o.fn;
        return *this;
    }
};

PatternConfusion pattern_confusion(const std::vector<Coord>& pred_pattern,
                                   const std::vector<Coord>& truth_pattern);

} // namespace spae

#endif
