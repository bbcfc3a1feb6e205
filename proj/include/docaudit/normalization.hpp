#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "docaudit/common.hpp"
#include "docaudit/corpus.hpp"
#include "docaudit/provider.hpp"
#include "docaudit/scoring.hpp"

namespace docaudit {

enum class NormKind { TF, GP };

enum class Strategy { NoNorm, RatioNormTF, RatioNormGP, MaxNormTF, MaxNormGP };

inline std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::NoNorm: return "nonorm";
        case Strategy::RatioNormTF: return "rationorm-tf";
        case Strategy::RatioNormGP: return "rationorm-gp";
        case Strategy::MaxNormTF: return "maxnorm-tf";
        case Strategy::MaxNormGP: return "maxnorm-gp";
    }
    throw Error("unknown strategy");
}

inline Strategy parse_strategy(std::string_view s) {
    if (s == "nonorm") return Strategy::NoNorm;
    if (s == "rationorm-tf") return Strategy::RatioNormTF;
    if (s == "rationorm-gp") return Strategy::RatioNormGP;
    if (s == "maxnorm-tf") return Strategy::MaxNormTF;
    if (s == "maxnorm-gp") return Strategy::MaxNormGP;
    throw Error("unknown strategy: " + std::string(s));
}

// Dictionary kind a strategy needs, if any.
inline bool strategy_needs_dict(Strategy s) { return s != Strategy::NoNorm; }

inline NormKind strategy_dict_kind(Strategy s) {
    switch (s) {
        case Strategy::RatioNormTF:
        case Strategy::MaxNormTF: return NormKind::TF;
        case Strategy::RatioNormGP:
        case Strategy::MaxNormGP: return NormKind::GP;
        default: throw Error("strategy has no dictionary");
    }
}

inline std::string kind_name(NormKind k) { return k == NormKind::TF ? "tf" : "gp"; }

inline NormKind parse_kind(std::string_view s) {
    if (s == "tf") return NormKind::TF;
    if (s == "gp") return NormKind::GP;
    throw Error("unknown dictionary kind: " + std::string(s));
}

// Token-rarity reference values. TF holds observed frequencies plus a
// fallback for unseen ids; GP covers the whole vocabulary, so a missing id
// there is an internal error, not a fallback case.
struct NormDictionary {
    NormKind kind = NormKind::TF;
    std::unordered_map<std::int32_t, double> values;
    double fallback = 0.0;
    std::string source_fingerprint;    // ref doc ids + provider + params
    std::string provider_fingerprint;  // guards against cross-model mixing
    std::size_t context_length = 0;    // GP only; 0 means not applicable
    int fold_id = -1;

    double lookup(std::int32_t token_id) const {
        const auto it = values.find(token_id);
        if (it != values.end()) return it->second;
        if (kind == NormKind::GP)
            throw ContractError("GP dictionary is missing token id " +
                                std::to_string(token_id) + "; it must cover the vocabulary");
        return fallback;
    }

    void save(const std::filesystem::path& path) const {
        nlohmann::json vals = nlohmann::json::object();
        for (const auto& [id, v] : values) vals[std::to_string(id)] = v;
        nlohmann::json j;
        j["kind"] = kind_name(kind);
        j["fallback"] = fallback;
        j["fingerprint"] = source_fingerprint;
        j["provider_fingerprint"] = provider_fingerprint;
        j["context_length"] = context_length;
        j["fold_id"] = fold_id;
        j["values"] = vals;
        const std::filesystem::path tmp = path.string() + ".tmp";
        {
            std::ofstream out(tmp, std::ios::trunc);
            if (!out) throw StoreError("cannot write " + tmp.string());
            out << j.dump(2) << '\n';
        }
        std::filesystem::rename(tmp, path);
    }

    static NormDictionary load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw StoreError("cannot read dictionary " + path.string());
        nlohmann::json j;
        in >> j;
        NormDictionary d;
        d.kind = parse_kind(j.at("kind").get<std::string>());
        d.fallback = j.at("fallback").get<double>();
        d.source_fingerprint = j.at("fingerprint").get<std::string>();
        d.provider_fingerprint = j.at("provider_fingerprint").get<std::string>();
        d.context_length = j.at("context_length").get<std::size_t>();
        d.fold_id = j.at("fold_id").get<int>();
        for (const auto& [id, v] : j.at("values").items()) {
            d.values[static_cast<std::int32_t>(std::stol(id))] = v.get<double>();
        }
        return d;
    }
};

namespace detail {
inline std::string dictionary_fingerprint(NormKind kind, std::span<const std::string> ref_ids,
                                          const std::string& provider_fp,
                                          std::size_t context_length, int fold_id) {
    std::vector<std::string> sorted(ref_ids.begin(), ref_ids.end());
    std::sort(sorted.begin(), sorted.end());
    Fingerprint fp;
    fp.add("normdict").add(kind_name(kind)).add(provider_fp);
    fp.add(static_cast<std::uint64_t>(context_length));
    fp.add(static_cast<std::int64_t>(fold_id));
    for (const std::string& id : sorted) fp.add(id);
    return fp.hex();
}
}  // namespace detail

// Empirical token frequency over the reference documents. Unseen ids fall
// back to half the smallest observed frequency.
inline NormDictionary build_tf_dictionary(const Corpus& corpus,
                                          std::span<const std::string> ref_ids,
                                          const Provider& provider, int fold_id = -1) {
    if (ref_ids.empty()) throw Error("build_tf_dictionary: reference corpus is empty");
    std::unordered_map<std::int32_t, std::uint64_t> counts;
    std::uint64_t total = 0;
    for (const std::string& id : ref_ids) {
        for (std::int32_t tok : provider.tokenize(corpus.get(id).text)) {
            ++counts[tok];
            ++total;
        }
    }
    if (total == 0) throw Error("build_tf_dictionary: reference corpus tokenized to nothing");
    NormDictionary dict;
    dict.kind = NormKind::TF;
    dict.fold_id = fold_id;
    dict.provider_fingerprint = provider.fingerprint();
    dict.source_fingerprint = detail::dictionary_fingerprint(NormKind::TF, ref_ids,
                                                             dict.provider_fingerprint, 0, fold_id);
    double smallest = 1.0;
    for (const auto& [tok, count] : counts) {
        const double freq = static_cast<double>(count) / static_cast<double>(total);
        dict.values[tok] = freq;
        smallest = std::min(smallest, freq);
    }
    dict.fallback = smallest / 2.0;
    return dict;
}

// Mean predicted probability of each vocabulary token across every scored
// position of the reference documents, querying with the same chunked walk
// as the main scoring run. Requires full distributions.
inline NormDictionary build_gp_dictionary(const Corpus& corpus,
                                          std::span<const std::string> ref_ids,
                                          const Provider& provider, std::size_t context_length,
                                          int fold_id = -1) {
    if (ref_ids.empty()) throw Error("build_gp_dictionary: reference corpus is empty");
    const ProviderCapabilities caps = provider.capabilities();
    if (!caps.supports_full_distribution)
        throw CapabilityError(
            "provider does not expose full distributions; build a TF dictionary instead");
    std::vector<std::string> sorted(ref_ids.begin(), ref_ids.end());
    std::sort(sorted.begin(), sorted.end());

    std::vector<double> sums(static_cast<std::size_t>(caps.vocab_size), 0.0);
    std::uint64_t positions = 0;
    for (const std::string& id : sorted) {
        const std::vector<std::int32_t> tokens = provider.tokenize(corpus.get(id).text);
        if (tokens.size() < 2) continue;
        for (const ChunkWindow& w : plan_chunks(tokens.size(), context_length)) {
            const std::span<const std::int32_t> window{tokens.data() + (w.begin - 1),
                                                       w.end - w.begin + 1};
            const ScoredSequenceResponse resp = provider.score_sequence(window, true);
            if (resp.full.size() != window.size() - 1)
                throw ContractError("provider returned wrong distribution count for window");
            for (const auto& dist : resp.full) {
                if (dist.size() != sums.size())
                    throw ContractError("distribution length does not match vocab size");
                for (std::size_t v = 0; v < dist.size(); ++v) sums[v] += dist[v];
                ++positions;
            }
        }
    }
    if (positions == 0) throw Error("build_gp_dictionary: no scoreable positions in reference");
    NormDictionary dict;
    dict.kind = NormKind::GP;
    dict.fold_id = fold_id;
    dict.context_length = context_length;
    dict.provider_fingerprint = provider.fingerprint();
    dict.source_fingerprint = detail::dictionary_fingerprint(
        NormKind::GP, ref_ids, dict.provider_fingerprint, context_length, fold_id);
    double smallest = 1.0;
    for (std::size_t v = 0; v < sums.size(); ++v) {
        const double mean = sums[v] / static_cast<double>(positions);
        dict.values[static_cast<std::int32_t>(v)] = mean;
        smallest = std::min(smallest, mean);
    }
    dict.fallback = smallest / 2.0;  // unused: GP covers the vocabulary
    return dict;
}

struct NormalizedTokenValue {
    std::size_t position = 0;
    double f_value = 0.0;  // negative log of the normalized probability
};

// Applies one strategy to one record. All ratios are computed in the log
// domain; the numerator is floored at kProbFloor so f_value stays finite.
inline NormalizedTokenValue normalize(const TokenRecord& record, Strategy strategy,
                                      const NormDictionary* dict = nullptr) {
    double numerator = 0.0;
    switch (strategy) {
        case Strategy::NoNorm:
        case Strategy::RatioNormTF:
        case Strategy::RatioNormGP:
            numerator = record.p_true;
            break;
        case Strategy::MaxNormTF:
        case Strategy::MaxNormGP:
            numerator = 1.0 - (record.p_max - record.p_true);
            break;
    }
    numerator = std::max(numerator, kProbFloor);
    double f = -std::log(numerator);
    if (strategy_needs_dict(strategy)) {
        if (dict == nullptr)
            throw ContractError("strategy " + strategy_name(strategy) + " needs a dictionary");
        if (dict->kind != strategy_dict_kind(strategy))
            throw ContractError("dictionary kind does not match strategy " +
                                strategy_name(strategy));
        f += std::log(dict->lookup(record.token_id));
    }
    return NormalizedTokenValue{record.position, f};
}

inline std::vector<NormalizedTokenValue> normalize_document(const DocumentScore& score,
                                                            Strategy strategy,
                                                            const NormDictionary* dict = nullptr) {
    if (strategy_needs_dict(strategy)) {
        if (dict == nullptr)
            throw ContractError("strategy " + strategy_name(strategy) + " needs a dictionary");
        if (dict->provider_fingerprint != score.provider_fingerprint)
            throw ContractError("dictionary and score come from different providers");
        if (dict->kind == NormKind::GP && dict->context_length != score.context_length)
            throw ContractError("GP dictionary was built at a different context length");
    }
    std::vector<NormalizedTokenValue> out;
    out.reserve(score.records.size());
    for (const TokenRecord& r : score.records) out.push_back(normalize(r, strategy, dict));
    return out;
}

}  // namespace docaudit
