#include "spae/metrics.hpp"

#include <algorithm>

#include "spae/common.hpp"

namespace spae {

double classification_error(const std::vector<int>& preds, const std::vector<int>& labels) {
    check(!preds.empty(), ErrorCode::EmptyInput, "no predictions to score");
    check(preds.size() == labels.size(), ErrorCode::ShapeMismatch,
          "prediction/label count mismatch");
    int64_t wrong = 0;
    for (size_t i = 0; i < preds.size(); ++i) wrong += preds[i] != labels[i];
    return 100.0 * static_cast<double>(wrong) / static_cast<double>(preds.size());
}

double mean_iou(const std::vector<int>& preds, const std::vector<int>& labels, int classes) {
    check(!preds.empty(), ErrorCode::EmptyInput, "no sites to score");
    check(preds.size() == labels.size(), ErrorCode::ShapeMismatch,
          "prediction/label count mismatch");
    std::vector<int64_t> inter(classes, 0), pred_count(classes, 0), truth_count(classes, 0);
    for (size_t i = 0; i < preds.size(); ++i) {
        const int p = preds[i], t = labels[i];
        check(p >= 0 && p < classes && t >= 0 && t < classes, ErrorCode::OutOfRange,
              "class id outside [0, classes)");
        pred_count[p]++;
        truth_count[t]++;
        if (p == t) inter[p]++;
    }
    double total = 0;
    int present = 0;
    for (int c = 0; c < classes; ++c) {
        const int64_t uni = pred_count[c] + truth_count[c] - inter[c];
        if (uni == 0) continue; // absent from both prediction and truth
        total += static_cast<double>(inter[c]) / static_cast<double>(uni);
        ++present;
    }
    check(present > 0, ErrorCode::EmptyInput, "no class present in the evaluation set");
    return total / present;
}

PatternConfusion pattern_confusion(const std::vector<Coord>& pred_pattern,
                                   const std::vector<Coord>& truth_pattern) {
    std::vector<Coord> pred = pred_pattern, truth = truth_pattern;
    std::sort(pred.begin(), pred.end());
    std::sort(truth.begin(), truth.end());
    PatternConfusion pc;
    size_t i = 0, j = 0;
    while (i < pred.size() && j < truth.size()) {
        if (pred[i] == truth[j]) {
            ++pc.tp;
            ++i;
            ++j;
        } else if (pred[i] < truth[j]) {
            ++pc.fp;
            ++i;
        } else {
            ++pc.fn;
            ++j;
        }
    }
    pc.fp += static_cast<int64_t>(pred.size() - i);
    pc.fn += static_cast<int64_t>(truth.size() - j);
    return pc;
}

} // namespace spae
