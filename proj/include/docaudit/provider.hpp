#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "docaudit/common.hpp"

namespace docaudit {

struct ProviderCapabilities {
    std::int32_t vocab_size = 0;
    std::size_t max_context = 0;
    bool supports_full_distribution = false;
    bool prepends_bos = false;
};

// One scored position. `position` is 1-based within the scored container;
// position 1 never appears because the first token has no prediction.
struct TokenRecord {
    std::size_t position = 0;
    std::int32_t token_id = 0;
    double p_true = 0.0;
    double p_max = 0.0;
};

struct ScoredSequenceResponse {
    std::vector<TokenRecord> records;  // positions 2..len(sequence)
    // Per-position distribution over the vocabulary, parallel to `records`.
    // Empty unless requested and supported.
    std::vector<std::vector<double>> full;
};

// Query-only access to a language model: tokenization plus per-position
// probability scoring. Implementations must be safe for concurrent
// score_sequence calls or say so in their docs.
class Provider {
public:
    virtual ~Provider() = default;

    virtual ProviderCapabilities capabilities() const = 0;

    // Deterministic; every id in [0, vocab_size).
    virtual std::vector<std::int32_t> tokenize(std::string_view text) const = 0;

    // One TokenRecord per position 2..len(tokens). p_true is the model's
    // probability of the actual next token given all preceding tokens in the
    // sequence; p_max is the vocabulary maximum at that position.
    virtual ScoredSequenceResponse score_sequence(std::span<const std::int32_t> tokens,
                                                  bool want_full) const = 0;

    virtual std::string fingerprint() const = 0;
};

// Contract checks shared by the wire client and the test suites.
inline void validate_scored_response(std::span<const std::int32_t> tokens,
                                     const ScoredSequenceResponse& resp,
                                     const ProviderCapabilities& caps, bool want_full) {
    if (tokens.size() < 2) throw ContractError("scored sequence must have at least 2 tokens");
    if (resp.records.size() != tokens.size() - 1)
        throw ContractError("record count must equal sequence length minus one");
    for (std::size_t i = 0; i < resp.records.size(); ++i) {
        const TokenRecord& r = resp.records[i];
        if (r.position != i + 2) throw ContractError("record positions must be 2..len, in order");
        if (r.token_id != tokens[i + 1]) throw ContractError("record token id mismatch");
        if (!(r.p_true > 0.0) || r.p_true > 1.0) throw ContractError("p_true out of (0,1]");
        if (r.p_max < r.p_true || r.p_max > 1.0) throw ContractError("p_max out of [p_true,1]");
    }
    if (want_full) {
        if (resp.full.size() != resp.records.size())
            throw ContractError("full distribution count must match record count");
        for (std::size_t i = 0; i < resp.full.size(); ++i) {
            const auto& dist = resp.full[i];
            if (dist.size() != static_cast<std::size_t>(caps.vocab_size))
                throw ContractError("full distribution length must equal vocab size");
            double sum = 0.0;
            double maxv = 0.0;
            for (double p : dist) {
                if (p < 0.0) throw ContractError("negative probability in full distribution");
                sum += p;
                if (p > maxv) maxv = p;
            }
            if (std::abs(sum - 1.0) > 1e-4) throw ContractError("full distribution must sum to 1");
            const TokenRecord& r = resp.records[i];
            if (std::abs(dist[static_cast<std::size_t>(r.token_id)] - r.p_true) > 1e-9)
                throw ContractError("p_true must equal the distribution entry at the true token");
            if (std::abs(maxv - r.p_max) > 1e-9)
                throw ContractError("p_max must equal the distribution maximum");
        }
    }
}

// Fits nothing: every token gets probability 1/V. Useful as a degenerate
// oracle (GP sanity checks, null pipelines). Tokenizes on whitespace and
// hashes words into the fixed vocabulary.
class UniformProvider : public Provider {
public:
    explicit UniformProvider(std::int32_t vocab_size, std::size_t max_context = 4096)
        : vocab_size_(vocab_size), max_context_(max_context) {
        if (vocab_size_ < 2) throw Error("UniformProvider: vocab_size must be >= 2");
    }

    ProviderCapabilities capabilities() const override {
        return ProviderCapabilities{vocab_size_, max_context_, true, false};
    }

    std::vector<std::int32_t> tokenize(std::string_view text) const override {
        std::vector<std::int32_t> ids;
        std::size_t i = 0;
        while (i < text.size()) {
            while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
            std::size_t j = i;
            while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
            if (j > i) {
                const std::uint64_t h = fnv1a64(text.substr(i, j - i));
                ids.push_back(static_cast<std::int32_t>(h % static_cast<std::uint64_t>(vocab_size_)));
            }
            i = j;
        }
        return ids;
    }

    ScoredSequenceResponse score_sequence(std::span<const std::int32_t> tokens,
                                          bool want_full) const override {
        if (tokens.size() < 2) throw ContractError("sequence must have at least 2 tokens");
        if (tokens.size() > max_context_) throw ContractError("sequence exceeds max context");
        const double p = 1.0 / static_cast<double>(vocab_size_);
        ScoredSequenceResponse resp;
        resp.records.reserve(tokens.size() - 1);
        for (std::size_t i = 1; i < tokens.size(); ++i) {
            resp.records.push_back(TokenRecord{i + 1, tokens[i], p, p});
        }
        if (want_full) {
            resp.full.assign(resp.records.size(),
                             std::vector<double>(static_cast<std::size_t>(vocab_size_), p));
        }
        return resp;
    }

    std::string fingerprint() const override {
        return Fingerprint{}.add("uniform").add(static_cast<std::uint64_t>(vocab_size_)).hex();
    }

private:
    std::int32_t vocab_size_;
    std::size_t max_context_;
};

}  // namespace docaudit
