#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "docaudit/common.hpp"
#include "docaudit/provider.hpp"

namespace docaudit {

// Memorizing n-gram language model used as a deterministic reference
// provider. Tokenizes on whitespace; id 0 is reserved for unknown words, so
// V = distinct training words + 1.
//
// Conditional probability of v after context c:
//     p(v | c) = (count(c, v) + alpha) / (count(c) + alpha * V)
// evaluated at the longest suffix of c that was seen during training (the
// empty context counts as seen). Unseen contexts back off one token at a
// time; the conventional stupid-backoff damping factor (0.4) would cancel
// under the renormalization the provider contract requires (full
// distributions sum to 1), so probabilities are reported at the first seen
// suffix directly.
class NgramLm : public Provider {
public:
    NgramLm(std::span<const std::string> texts, int order, double alpha,
            std::size_t max_context = 4096)
        : order_(order), alpha_(alpha), max_context_(max_context) {
        if (order < 1) throw Error("ngram_train: order must be >= 1");
        if (!(alpha > 0.0)) throw Error("ngram_train: smoothing alpha must be positive");
        id_to_word_.push_back("<unk>");
        levels_.resize(static_cast<std::size_t>(order));
        Fingerprint fp;
        fp.add("ngram").add(static_cast<std::int64_t>(order)).add(alpha);
        std::uint64_t total_tokens = 0;
        for (const std::string& text : texts) {
            const std::vector<std::int32_t> ids = intern(text);
            total_tokens += ids.size();
            for (std::int32_t id : ids) fp.add(static_cast<std::int64_t>(id));
            // Counts per context length 0..order-1; contexts never cross
            // document boundaries.
            for (std::size_t i = 0; i < ids.size(); ++i) {
                const std::size_t max_len = std::min<std::size_t>(i, levels_.size() - 1);
                for (std::size_t len = 0; len <= max_len; ++len) {
                    ContextCounts& cc = levels_[len][pack(&ids[i - len], len)];
                    cc.total += 1;
                    cc.next[ids[i]] += 1;
                }
            }
        }
        if (total_tokens == 0) throw Error("ngram_train: training corpus is empty");
        fp.add(static_cast<std::uint64_t>(vocab_size()));
        fingerprint_ = fp.hex();
    }

    std::int32_t vocab_size() const { return static_cast<std::int32_t>(id_to_word_.size()); }

    ProviderCapabilities capabilities() const override {
        return ProviderCapabilities{vocab_size(), max_context_, true, false};
    }

    std::vector<std::int32_t> tokenize(std::string_view text) const override {
        std::vector<std::int32_t> ids;
        for_each_word(text, [&](std::string_view w) {
            auto it = word_to_id_.find(std::string(w));
            ids.push_back(it == word_to_id_.end() ? 0 : it->second);
        });
        return ids;
    }

    ScoredSequenceResponse score_sequence(std::span<const std::int32_t> tokens,
                                          bool want_full) const override {
        if (tokens.size() < 2) throw ContractError("sequence must have at least 2 tokens");
        if (tokens.size() > max_context_) throw ContractError("sequence exceeds max context");
        const std::int32_t v_count = vocab_size();
        for (std::int32_t t : tokens) {
            if (t < 0 || t >= v_count) throw ContractError("token id outside vocabulary");
        }
        ScoredSequenceResponse resp;
        resp.records.reserve(tokens.size() - 1);
        for (std::size_t i = 1; i < tokens.size(); ++i) {
            const ContextCounts& cc = seen_context(tokens.first(i));
            const double denom = static_cast<double>(cc.total) + alpha_ * v_count;
            std::uint64_t c_true = 0;
            std::uint64_t c_max = 0;
            for (const auto& [tok, cnt] : cc.next) {
                if (tok == tokens[i]) c_true = cnt;
                if (cnt > c_max) c_max = cnt;
            }
            const double p_true = (static_cast<double>(c_true) + alpha_) / denom;
            const double p_max = (static_cast<double>(c_max) + alpha_) / denom;
            resp.records.push_back(TokenRecord{i + 1, tokens[i], p_true, p_max});
            if (want_full) {
                std::vector<double> dist(static_cast<std::size_t>(v_count), alpha_ / denom);
                for (const auto& [tok, cnt] : cc.next) {
                    dist[static_cast<std::size_t>(tok)] =
                        (static_cast<double>(cnt) + alpha_) / denom;
                }
                resp.full.push_back(std::move(dist));
            }
        }
        return resp;
    }

    std::string fingerprint() const override { return fingerprint_; }

private:
    struct ContextCounts {
        std::uint64_t total = 0;
        std::unordered_map<std::int32_t, std::uint64_t> next;
    };

    template <typename Fn>
    static void for_each_word(std::string_view text, Fn&& fn) {
        std::size_t i = 0;
        while (i < text.size()) {
            while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
            std::size_t j = i;
            while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
            if (j > i) fn(text.substr(i, j - i));
            i = j;
        }
    }

    std::vector<std::int32_t> intern(std::string_view text) {
        std::vector<std::int32_t> ids;
        for_each_word(text, [&](std::string_view w) {
            auto [it, inserted] =
                word_to_id_.emplace(std::string(w), static_cast<std::int32_t>(id_to_word_.size()));
            if (inserted) id_to_word_.emplace_back(w);
            ids.push_back(it->second);
        });
        return ids;
    }

    static std::string pack(const std::int32_t* ids, std::size_t len) {
        std::string key(len * sizeof(std::int32_t), '\0');
        if (len > 0) std::memcpy(key.data(), ids, len * sizeof(std::int32_t));
        return key;
    }

    // Longest seen suffix of the preceding tokens, capped at order-1; the
    // empty context (unigram counts) always exists.
    const ContextCounts& seen_context(std::span<const std::int32_t> preceding) const {
        std::size_t len = std::min<std::size_t>(preceding.size(),
                                                static_cast<std::size_t>(order_) - 1);
        for (; len > 0; --len) {
            const auto it = levels_[len].find(pack(preceding.data() + preceding.size() - len, len));
            if (it != levels_[len].end() && it->second.total > 0) return it->second;
        }
        return levels_[0].at(std::string());
    }

    int order_;
    double alpha_;
    std::size_t max_context_;
    std::unordered_map<std::string, std::int32_t> word_to_id_;
    std::vector<std::string> id_to_word_;
    std::vector<std::unordered_map<std::string, ContextCounts>> levels_;
    std::string fingerprint_;
};

inline std::unique_ptr<NgramLm> ngram_train(std::span<const std::string> texts, int order,
                                            double alpha, std::size_t max_context = 4096) {
    return std::make_unique<NgramLm>(texts, order, alpha, max_context);
}

}  // namespace docaudit
