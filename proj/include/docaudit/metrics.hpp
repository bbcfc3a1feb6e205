#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "docaudit/common.hpp"

namespace docaudit {

struct RocPoint {
    double fpr = 0.0;
    double tpr = 0.0;
};

namespace detail {
inline void check_two_classes(std::span<const int> labels) {
    bool pos = false, neg = false;
    for (int l : labels) {
        if (l != 0 && l != 1) throw Error("labels must be 0 or 1");
        (l == 1 ? pos : neg) = true;
    }
    if (!pos || !neg) throw Error("both classes must be present");
}
}  // namespace detail

// Mann-Whitney AUC with ties counted as one half. The rank-sum numerator is
// an exact half-integer, so this matches the O(n^2) pairwise count exactly.
inline double auc(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw Error("auc: scores/labels size mismatch");
    detail::check_two_classes(labels);
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double rank_sum_pos = 0.0;
    std::size_t n_pos = 0, n_neg = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] == 1) {
                rank_sum_pos += avg_rank;
                ++n_pos;
            } else {
                ++n_neg;
            }
        }
        i = j;
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) *
                                        (static_cast<double>(n_pos) + 1.0);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// ROC polyline from a descending threshold sweep (predict positive when
// score >= threshold). Tied scores move as one group, which makes the
// trapezoidal area equal the Mann-Whitney AUC. Starts at (0,0), ends at (1,1).
inline std::vector<RocPoint> roc_points(std::span<const double> scores,
                                        std::span<const int> labels) {
    if (scores.size() != labels.size()) throw Error("roc: scores/labels size mismatch");
    detail::check_two_classes(labels);
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double n_pos = 0.0, n_neg = 0.0;
    for (int l : labels) (l == 1 ? n_pos : n_neg) += 1.0;

    std::vector<RocPoint> points;
    points.push_back(RocPoint{0.0, 0.0});
    double tp = 0.0, fp = 0.0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        for (std::size_t k = i; k < j; ++k) {
            if (labels[order[k]] == 1) tp += 1.0;
            else fp += 1.0;
        }
        points.push_back(RocPoint{fp / n_neg, tp / n_pos});
        i = j;
    }
    return points;
}

inline double trapezoid_area(std::span<const RocPoint> points) {
    double area = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i) {
        area += 0.5 * (points[i].fpr - points[i - 1].fpr) * (points[i].tpr + points[i - 1].tpr);
    }
    return area;
}

// TPR at the largest threshold whose FPR stays at or below the target
// (conservative step interpolation, no crediting of partial thresholds).
inline double tpr_at_fpr(std::span<const double> scores, std::span<const int> labels,
                         double fpr_target) {
    if (!(fpr_target > 0.0) || !(fpr_target < 1.0))
        throw Error("tpr_at_fpr: target must be in (0,1)");
    const std::vector<RocPoint> points = roc_points(scores, labels);
    double best = 0.0;
    for (const RocPoint& p : points) {
        if (p.fpr <= fpr_target) best = std::max(best, p.tpr);
    }
    return best;
}

struct EvalReport {
    double auc = 0.0;
    std::vector<RocPoint> roc;
    std::map<double, double> tpr_at_fpr;  // target FPR -> TPR
    int fold_id = -1;
    std::string manifest_ref;
};

inline EvalReport evaluate_scores(std::span<const double> scores, std::span<const int> labels,
                                  int fold_id, const std::string& manifest_ref = "",
                                  std::span<const double> fpr_targets = std::span<const double>{}) {
    static constexpr std::array<double, 2> kDefaultTargets = {0.10, 0.01};
    EvalReport report;
    report.auc = auc(scores, labels);
    report.roc = roc_points(scores, labels);
    report.fold_id = fold_id;
    report.manifest_ref = manifest_ref;
    const std::span<const double> targets =
        fpr_targets.empty() ? std::span<const double>{kDefaultTargets} : fpr_targets;
    for (double t : targets) report.tpr_at_fpr[t] = tpr_at_fpr(scores, labels, t);
    return report;
}

inline double mean(std::span<const double> values) {
    if (values.empty()) throw Error("mean of empty data");
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
}

// Population standard deviation over the fold values.
inline double population_std(std::span<const double> values) {
    const double m = mean(values);
    double sq = 0.0;
    for (double v : values) sq += (v - m) * (v - m);
    return std::sqrt(sq / static_cast<double>(values.size()));
}

}  // namespace docaudit
