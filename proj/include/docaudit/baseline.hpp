#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "docaudit/common.hpp"
#include "docaudit/scoring.hpp"

namespace docaudit {

// Threshold rule over per-sequence cross-entropy. The classic rule predicts
// member when CE >= T, but memorized documents have lower loss, so the
// inequality direction is selected on the training data and reported.
struct BaselineModel {
    double threshold = 0.0;
    bool member_if_below = true;
    std::size_t context_length = 0;

    bool predicts_member(double ce) const {
        return member_if_below ? ce < threshold : ce >= threshold;
    }
};

// Mean token cross-entropy per consecutive window, using the same windows
// as the chunked scoring walk at this score's context length.
inline std::vector<double> sequence_cross_entropies(const DocumentScore& score) {
    if (score.records.empty()) throw Error("sequence_cross_entropies: empty score");
    const std::size_t n_tokens = score.records.size() + 1;
    std::vector<double> out;
    for (const ChunkWindow& w : plan_chunks(n_tokens, score.context_length)) {
        double sum = 0.0;
        std::size_t count = 0;
        // Window [begin, end] scores positions begin+1..end; record index of
        // position p is p-2.
        for (std::size_t pos = w.begin + 1; pos <= w.end; ++pos) {
            sum += -std::log(std::max(score.records[pos - 2].p_true, kProbFloor));
            ++count;
        }
        out.push_back(sum / static_cast<double>(count));
    }
    return out;
}

// Threshold (and direction) maximizing TPR + TNR over the training
// sequences; sequences inherit their document's label. Candidate thresholds
// are the observed CE values; ties prefer the smaller threshold.
inline BaselineModel fit_baseline(std::span<const DocumentScore> train_scores,
                                  std::span<const int> train_labels) {
    if (train_scores.size() != train_labels.size())
        throw Error("fit_baseline: scores/labels size mismatch");
    if (train_scores.empty()) throw Error("fit_baseline: no training documents");

    std::vector<std::pair<double, int>> sequences;  // (ce, label)
    for (std::size_t i = 0; i < train_scores.size(); ++i) {
        for (double ce : sequence_cross_entropies(train_scores[i])) {
            sequences.emplace_back(ce, train_labels[i]);
        }
    }
    if (sequences.empty()) throw Error("fit_baseline: no sequences");

    double n_pos = 0.0, n_neg = 0.0;
    for (const auto& [ce, label] : sequences) (label == 1 ? n_pos : n_neg) += 1.0;
    if (n_pos == 0.0 || n_neg == 0.0) throw Error("fit_baseline: both classes must be present");

    std::sort(sequences.begin(), sequences.end());

    // For each candidate threshold t (an observed CE value), count positives
    // and negatives strictly below t with one sweep; both directions follow.
    BaselineModel best;
    best.context_length = train_scores.front().context_length;
    double best_sum = -1.0;
    std::size_t i = 0;
    double pos_below = 0.0, neg_below = 0.0;
    while (i < sequences.size()) {
        const double t = sequences[i].first;
        // member if ce < t
        const double sum_below = pos_below / n_pos + (n_neg - neg_below) / n_neg;
        // member if ce >= t
        const double sum_above = (n_pos - pos_below) / n_pos + neg_below / n_neg;
        if (sum_below > best_sum) {
            best_sum = sum_below;
            best.threshold = t;
            best.member_if_below = true;
        }
        if (sum_above > best_sum) {
            best_sum = sum_above;
            best.threshold = t;
            best.member_if_below = false;
        }
        while (i < sequences.size() && sequences[i].first == t) {
            (sequences[i].second == 1 ? pos_below : neg_below) += 1.0;
            ++i;
        }
    }
    return best;
}

// Fraction of the document's sequences predicted member: the document-level
// membership probability of the sequence baseline.
inline double baseline_doc_score(const BaselineModel& model, const DocumentScore& score) {
    const std::vector<double> ces = sequence_cross_entropies(score);
    double members = 0.0;
    for (double ce : ces) {
        if (model.predicts_member(ce)) members += 1.0;
    }
    return members / static_cast<double>(ces.size());
}

}  // namespace docaudit
