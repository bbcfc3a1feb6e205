#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "docaudit/common.hpp"
#include "docaudit/corpus.hpp"

namespace docaudit::synth {

// Synthetic document generator for self-tests and demos. Documents are
// built from word phrases: some drawn from a pool shared by every document,
// some private to the document, with the phrase list repeated in shuffled
// order. Private phrases give a memorizing model doc-specific n-grams to
// latch onto; shared phrases and the common Zipf-weighted vocabulary keep
// members and non-members distributionally alike.
struct SyntheticParams {
    std::size_t vocab_size = 300;
    std::size_t shared_pool = 40;      // phrases shared across all documents
    std::size_t phrases_per_doc = 12;  // phrases per document
    double shared_fraction = 0.5;      // fraction of per-doc phrases from the pool
    std::size_t phrase_len = 8;        // words per phrase
    std::size_t repeats = 4;           // times the phrase list repeats per document
    std::uint64_t seed = 0;
};

class SyntheticSource {
public:
    const SyntheticParams& params() const { return params_; }

    explicit SyntheticSource(const SyntheticParams& params) : params_(params) {
        if (params_.vocab_size < 2) throw Error("synthetic: vocab_size must be >= 2");
        words_.reserve(params_.vocab_size);
        cumulative_.reserve(params_.vocab_size);
        double total = 0.0;
        for (std::size_t i = 0; i < params_.vocab_size; ++i) {
            words_.push_back("w" + std::to_string(i));
            total += 1.0 / static_cast<double>(i + 2);  // Zipf-like weights
            cumulative_.push_back(total);
        }
        for (double& c : cumulative_) c /= total;
        std::mt19937_64 pool_rng(derive_seed(params_.seed, 0xfeed));
        pool_.reserve(params_.shared_pool);
        for (std::size_t i = 0; i < params_.shared_pool; ++i) {
            pool_.push_back(make_phrase(pool_rng));
        }
    }

    // Deterministic in (params, stream, index).
    std::string make_document_text(std::uint64_t stream, std::uint64_t index) const {
        std::mt19937_64 rng(derive_seed(params_.seed, splitmix64(stream) ^ index));
        const std::size_t n_shared = static_cast<std::size_t>(
            static_cast<double>(params_.phrases_per_doc) * params_.shared_fraction);
        std::vector<std::string> phrases;
        phrases.reserve(params_.phrases_per_doc);
        for (std::size_t i = 0; i < n_shared && !pool_.empty(); ++i) {
            phrases.push_back(pool_[bounded_u64(rng, pool_.size())]);
        }
        while (phrases.size() < params_.phrases_per_doc) {
            phrases.push_back(make_phrase(rng));
        }
        std::string text;
        for (std::size_t r = 0; r < params_.repeats; ++r) {
            deterministic_shuffle(phrases, rng);
            for (const std::string& p : phrases) {
                if (!text.empty()) text.push_back(' ');
                text += p;
            }
        }
        return text;
    }

    std::vector<RawDocument> make_documents(const std::string& id_prefix, std::uint64_t stream,
                                            std::size_t count) const {
        std::vector<RawDocument> docs;
        docs.reserve(count);
        for (std::size_t i = 0; i < count; ++i) {
            RawDocument doc;
            doc.doc_id = id_prefix + std::to_string(i);
            doc.text = make_document_text(stream, i);
            docs.push_back(std::move(doc));
        }
        return docs;
    }

    std::vector<std::string> make_texts(std::uint64_t stream, std::size_t count) const {
        std::vector<std::string> texts;
        texts.reserve(count);
        for (std::size_t i = 0; i < count; ++i) texts.push_back(make_document_text(stream, i));
        return texts;
    }

private:
    std::string make_phrase(std::mt19937_64& rng) const {
        std::string phrase;
        for (std::size_t i = 0; i < params_.phrase_len; ++i) {
            if (!phrase.empty()) phrase.push_back(' ');
            phrase += words_[draw_word(rng)];
        }
        return phrase;
    }

    // Inverse-CDF draw over the Zipf weights; avoids std::discrete_distribution
    // so results do not depend on the standard library implementation.
    std::size_t draw_word(std::mt19937_64& rng) const {
        const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        std::size_t lo = 0, hi = cumulative_.size() - 1;
        while (lo < hi) {
            const std::size_t mid = (lo + hi) / 2;
            if (cumulative_[mid] < u) lo = mid + 1;
            else hi = mid;
        }
        return lo;
    }

    SyntheticParams params_;
    std::vector<std::string> words_;
    std::vector<double> cumulative_;
    std::vector<std::string> pool_;
};

// Fills a corpus store with `n_members` + `n_nonmembers` same-distribution
// documents.
inline void populate_corpus(Corpus& corpus, const SyntheticSource& source, std::size_t n_members,
                            std::size_t n_nonmembers) {
    VectorSource members(source.make_documents("member-", 1, n_members));
    VectorSource nonmembers(source.make_documents("nonmember-", 2, n_nonmembers));
    corpus.ingest(members, MembershipLabel::member, {});
    corpus.ingest(nonmembers, MembershipLabel::nonmember, {});
}

}  // namespace docaudit::synth
