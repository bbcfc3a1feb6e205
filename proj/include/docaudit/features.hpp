#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "docaudit/common.hpp"
#include "docaudit/corpus.hpp"
#include "docaudit/normalization.hpp"
#include "docaudit/scoring.hpp"

namespace docaudit {

enum class Extractor { AggFE, HistFE };

inline std::string extractor_name(Extractor e) {
    return e == Extractor::AggFE ? "agg" : "hist";
}

inline Extractor parse_extractor(std::string_view s) {
    if (s == "agg") return Extractor::AggFE;
    if (s == "hist") return Extractor::HistFE;
    throw Error("unknown extractor: " + std::string(s));
}

inline constexpr std::array<double, 9> kDefaultPercentiles = {1, 5, 10, 25, 50, 75, 90, 95, 99};

// Linear interpolation between order statistics; q in [0, 1].
inline double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) throw Error("quantile of empty data");
    if (q <= 0.0) return sorted.front();
    if (q >= 1.0) return sorted.back();
    const double h = q * static_cast<double>(sorted.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(h);
    if (lo + 1 >= sorted.size()) return sorted.back();
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

// [min, max, mean, population std, values at the given percentiles].
inline std::vector<double> agg_features(std::span<const double> values,
                                        std::span<const double> percentiles = kDefaultPercentiles) {
    if (values.empty()) throw Error("agg_features: empty input");
    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    double sum = 0.0;
    for (double v : sorted) sum += v;
    const double mean = sum / n;
    double sq = 0.0;
    for (double v : sorted) sq += (v - mean) * (v - mean);
    const double stddev = std::sqrt(sq / n);

    std::vector<double> out;
    out.reserve(4 + percentiles.size());
    out.push_back(sorted.front());
    out.push_back(sorted.back());
    out.push_back(mean);
    out.push_back(stddev);
    for (double p : percentiles) out.push_back(quantile_sorted(sorted, p / 100.0));
    return out;
}

enum class BinMode { Quantile, Width };

inline std::string bin_mode_name(BinMode m) {
    return m == BinMode::Quantile ? "quantile" : "width";
}

inline BinMode parse_bin_mode(std::string_view s) {
    if (s == "quantile") return BinMode::Quantile;
    if (s == "width") return BinMode::Width;
    throw Error("unknown bin mode: " + std::string(s));
}

// Histogram bin boundaries fit on pooled training values. edges has
// n_bins+1 entries with ±inf sentinels, so evaluation values outside the
// training range still land in the first or last bin. Interior edges may
// repeat when the training distribution is heavily tied; the resulting
// zero-width bins never receive mass.
struct BinEdges {
    std::vector<double> edges;
    int fold_id = -1;
    std::string fingerprint;

    std::size_t n_bins() const { return edges.size() - 1; }

    // Half-open bins [e_i, e_{i+1}) with the last bin closed; a value equal
    // to a repeated interior edge lands in the first non-empty bin after it.
    std::size_t bin_index(double v) const {
        const auto first = edges.begin() + 1;
        const auto last = edges.end() - 1;
        return static_cast<std::size_t>(std::upper_bound(first, last, v) - first);
    }

    void save(const std::filesystem::path& path) const {
        nlohmann::json j;
        j["fold_id"] = fold_id;
        j["fingerprint"] = fingerprint;
        nlohmann::json arr = nlohmann::json::array();
        // Sentinels are stored as strings because JSON has no infinity.
        for (double e : edges) {
            if (std::isinf(e)) {
                arr.push_back(e < 0 ? "-inf" : "+inf");
            } else {
                arr.push_back(e);
            }
        }
        j["edges"] = arr;
        const std::filesystem::path tmp = path.string() + ".tmp";
        {
            std::ofstream out(tmp, std::ios::trunc);
            out << j.dump(2) << '\n';
        }
        std::filesystem::rename(tmp, path);
    }

    static BinEdges load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw StoreError("cannot read bin edges " + path.string());
        nlohmann::json j;
        in >> j;
        BinEdges b;
        b.fold_id = j.at("fold_id").get<int>();
        b.fingerprint = j.at("fingerprint").get<std::string>();
        for (const auto& e : j.at("edges")) {
            if (e.is_string()) {
                const std::string s = e.get<std::string>();
                b.edges.push_back(s == "-inf" ? -std::numeric_limits<double>::infinity()
                                              : std::numeric_limits<double>::infinity());
            } else {
                b.edges.push_back(e.get<double>());
            }
        }
        return b;
    }
};

inline BinEdges fit_bins(std::span<const double> training_values, std::size_t n_bins,
                         BinMode mode = BinMode::Quantile, int fold_id = -1) {
    if (n_bins == 0) throw Error("fit_bins: need at least one bin");
    if (training_values.size() < 2) throw Error("fit_bins: need at least 2 training values");
    std::vector<double> sorted(training_values.begin(), training_values.end());
    std::sort(sorted.begin(), sorted.end());
    if (sorted.front() == sorted.back())
        throw Error("fit_bins: all training values are identical; distribution is degenerate");

    BinEdges bins;
    bins.fold_id = fold_id;
    bins.edges.reserve(n_bins + 1);
    bins.edges.push_back(-std::numeric_limits<double>::infinity());
    for (std::size_t i = 1; i < n_bins; ++i) {
        const double q = static_cast<double>(i) / static_cast<double>(n_bins);
        if (mode == BinMode::Quantile) {
            bins.edges.push_back(quantile_sorted(sorted, q));
        } else {
            bins.edges.push_back(sorted.front() + q * (sorted.back() - sorted.front()));
        }
    }
    bins.edges.push_back(std::numeric_limits<double>::infinity());

    Fingerprint fp;
    fp.add("bins").add(static_cast<std::uint64_t>(n_bins)).add(bin_mode_name(mode));
    for (double e : bins.edges) fp.add(e);
    bins.fingerprint = fp.hex();
    return bins;
}

// Fraction of values per bin; sums to 1.
inline std::vector<double> hist_features(std::span<const double> values, const BinEdges& bins) {
    if (values.empty()) throw Error("hist_features: empty input");
    std::vector<double> out(bins.n_bins(), 0.0);
    for (double v : values) out[bins.bin_index(v)] += 1.0;
    const double n = static_cast<double>(values.size());
    for (double& x : out) x /= n;
    return out;
}

struct FeatureVector {
    std::string doc_id;
    Extractor extractor = Extractor::AggFE;
    std::vector<double> values;
    MembershipLabel label = MembershipLabel::member;
    int fold_id = -1;
    std::string manifest_ref;
};

struct FeatureParams {
    std::size_t n_bins = 1000;
    BinMode bin_mode = BinMode::Quantile;
    std::vector<double> percentiles{kDefaultPercentiles.begin(), kDefaultPercentiles.end()};
};

struct FoldFeatures {
    std::vector<FeatureVector> train;
    std::vector<FeatureVector> eval;
    BinEdges edges;  // empty for AggFE
};

// Turns scored documents into fixed-length fold features. Histogram edges
// are fit on pooled training token values only; evaluation documents are
// histogrammed against those edges.
inline FoldFeatures featurize_fold(const Corpus& corpus, std::span<const std::string> train_ids,
                                   std::span<const std::string> eval_ids, Strategy strategy,
                                   Extractor extractor, const ScoreStore& scores,
                                   const NormDictionary* dict, const FeatureParams& params,
                                   int fold_id, const std::string& manifest_ref = "") {
    std::vector<std::string> missing;
    for (std::span<const std::string> ids : {train_ids, eval_ids}) {
        for (const std::string& id : ids) {
            if (!scores.has(id)) missing.push_back(id);
        }
    }
    if (!missing.empty()) {
        std::string msg = "featurize_fold: missing scores for:";
        for (const std::string& id : missing) msg += " " + id;
        throw StoreError(msg);
    }

    auto doc_values = [&](const std::string& id) {
        const DocumentScore score = scores.get(id);
        const std::vector<NormalizedTokenValue> normed = normalize_document(score, strategy, dict);
        std::vector<double> vals;
        vals.reserve(normed.size());
        for (const NormalizedTokenValue& nv : normed) vals.push_back(nv.f_value);
        return vals;
    };

    FoldFeatures out;
    if (extractor == Extractor::HistFE) {
        std::vector<double> pooled;
        for (const std::string& id : train_ids) {
            const std::vector<double> vals = doc_values(id);
            pooled.insert(pooled.end(), vals.begin(), vals.end());
        }
        out.edges = fit_bins(pooled, params.n_bins, params.bin_mode, fold_id);
    }

    auto emit = [&](std::span<const std::string> ids, std::vector<FeatureVector>& dst) {
        for (const std::string& id : ids) {
            const std::vector<double> vals = doc_values(id);
            FeatureVector fv;
            fv.doc_id = id;
            fv.extractor = extractor;
            fv.label = corpus.get(id).label;
            fv.fold_id = fold_id;
            fv.manifest_ref = manifest_ref;
            if (extractor == Extractor::HistFE) {
                fv.values = hist_features(vals, out.edges);
            } else {
                fv.values = agg_features(vals, params.percentiles);
            }
            dst.push_back(std::move(fv));
        }
    };
    emit(train_ids, out.train);
    emit(eval_ids, out.eval);
    return out;
}

// Documented columnar format: header row naming each feature column, one
// row per document.
inline void save_features_csv(const std::filesystem::path& path,
                              std::span<const FeatureVector> features,
                              std::span<const double> percentiles) {
    if (features.empty()) throw Error("save_features_csv: nothing to save");
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw StoreError("cannot write " + tmp.string());
        out << "doc_id,label,fold_id";
        if (features.front().extractor == Extractor::AggFE) {
            out << ",min,max,mean,std";
            for (double p : percentiles) out << ",p" << format_double(p);
        } else {
            for (std::size_t i = 0; i < features.front().values.size(); ++i) out << ",bin" << i;
        }
        out << '\n';
        for (const FeatureVector& fv : features) {
            if (fv.doc_id.find_first_of(",\n") != std::string::npos)
                throw StoreError("doc_id not representable in CSV: " + fv.doc_id);
            out << fv.doc_id << ',' << label_name(fv.label) << ',' << fv.fold_id;
            for (double v : fv.values) out << ',' << format_double(v);
            out << '\n';
        }
    }
    std::filesystem::rename(tmp, path);
}

inline std::vector<FeatureVector> load_features_csv(const std::filesystem::path& path,
                                                    Extractor extractor) {
    std::ifstream in(path);
    if (!in) throw StoreError("cannot read features " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw StoreError("empty feature file " + path.string());
    std::vector<FeatureVector> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        FeatureVector fv;
        fv.extractor = extractor;
        std::size_t start = 0;
        std::size_t field = 0;
        while (start <= line.size()) {
            std::size_t comma = line.find(',', start);
            if (comma == std::string::npos) comma = line.size();
            const std::string cell = line.substr(start, comma - start);
            if (field == 0) {
                fv.doc_id = cell;
            } else if (field == 1) {
                fv.label = parse_label(cell);
            } else if (field == 2) {
                fv.fold_id = std::stoi(cell);
            } else {
                fv.values.push_back(std::stod(cell));
            }
            ++field;
            start = comma + 1;
            if (comma == line.size()) break;
        }
        out.push_back(std::move(fv));
    }
    return out;
}

}  // namespace docaudit
