#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "docaudit/common.hpp"
#include "docaudit/corpus.hpp"
#include "docaudit/provider.hpp"

namespace docaudit {

// 1-based inclusive token window.
struct ChunkWindow {
    std::size_t begin = 0;
    std::size_t end = 0;
};

// Overlapping query windows: length at most C, consecutive windows share
// exactly one token (stride C-1), so the scored positions — each window
// minus its first token — tile {2..N} exactly. The final window keeps its
// natural shorter length.
inline std::vector<ChunkWindow> plan_chunks(std::size_t n_tokens, std::size_t context_length) {
    if (n_tokens < 2) throw Error("plan_chunks: nothing to score, need at least 2 tokens");
    if (context_length < 2) throw Error("plan_chunks: context length must be at least 2");
    std::vector<ChunkWindow> windows;
    std::size_t start = 1;
    while (true) {
        const std::size_t end = std::min(start + context_length - 1, n_tokens);
        windows.push_back(ChunkWindow{start, end});
        if (end == n_tokens) break;
        start = end;
    }
    return windows;
}

struct DocumentScore {
    std::string doc_id;
    std::size_t context_length = 0;
    std::vector<TokenRecord> records;  // document positions 2..N, in order
    std::string provider_fingerprint;
};

inline DocumentScore score_tokens(const std::string& doc_id,
                                  std::span<const std::int32_t> tokens,
                                  const Provider& provider, std::size_t context_length) {
    const ProviderCapabilities caps = provider.capabilities();
    if (context_length > caps.max_context)
        throw ContractError("context length exceeds provider max_context");
    DocumentScore score;
    score.doc_id = doc_id;
    score.context_length = context_length;
    score.provider_fingerprint = provider.fingerprint();
    if (tokens.size() < 2)
        throw Error("score_tokens: document '" + doc_id + "' has fewer than 2 tokens");
    score.records.reserve(tokens.size() - 1);
    for (const ChunkWindow& w : plan_chunks(tokens.size(), context_length)) {
        const auto window = tokens.subspan(w.begin - 1, w.end - w.begin + 1);
        ScoredSequenceResponse resp = provider.score_sequence(window, false);
        if (resp.records.size() != window.size() - 1)
            throw ContractError("provider returned wrong record count for window");
        for (TokenRecord& r : resp.records) {
            r.position = w.begin + r.position - 1;  // window position -> document position
            score.records.push_back(r);
        }
    }
    return score;
}

inline DocumentScore score_document(const Document& doc, const Provider& provider,
                                    std::size_t context_length) {
    const std::vector<std::int32_t> tokens = provider.tokenize(doc.text);
    return score_tokens(doc.doc_id, tokens, provider, context_length);
}

// One store holds scores for a single (provider, context length) pair.
// Layout: index.json plus one binary record file per document, written to a
// temp name and renamed, so an interrupted run never leaves a partial
// document behind.
//
// Record file byte layout (little-endian):
//   magic "DASC" | u32 version | u32 id_len | id bytes | u64 context_length
//   | u32 fp_len | fp bytes | u64 n_records
//   | n_records x { u64 position | i32 token_id | f64 logp_true | f64 logp_max }
class ScoreStore {
public:
    ScoreStore(const std::filesystem::path& dir, std::size_t context_length,
               const std::string& provider_fingerprint)
        : dir_(dir), context_length_(context_length), provider_fingerprint_(provider_fingerprint) {
        namespace fs = std::filesystem;
        fs::create_directories(dir_);
        // Orphan temp files are debris from an interrupted run.
        for (const auto& entry : fs::directory_iterator(dir_)) {
            if (entry.path().extension() == ".tmp") fs::remove(entry.path());
        }
        const fs::path index = dir_ / "index.json";
        if (fs::exists(index)) {
            std::ifstream in(index);
            nlohmann::json j;
            in >> j;
            if (j.at("context_length").get<std::size_t>() != context_length_ ||
                j.at("provider_fingerprint").get<std::string>() != provider_fingerprint_) {
                throw StoreError("score store at " + dir_.string() +
                                 " was built for a different provider or context length");
            }
            for (const auto& [doc_id, entry] : j.at("docs").items()) {
                Entry e;
                e.file = entry.at("file").get<std::string>();
                e.n_records = entry.at("n_records").get<std::uint64_t>();
                docs_[doc_id] = e;
            }
        } else {
            write_index();
        }
    }

    std::size_t context_length() const { return context_length_; }
    const std::string& provider_fingerprint() const { return provider_fingerprint_; }

    bool has(const std::string& doc_id) const {
        std::lock_guard<std::mutex> lock(mutex_);
        return docs_.count(doc_id) > 0;
    }

    std::vector<std::string> doc_ids() const {
        std::lock_guard<std::mutex> lock(mutex_);
        std::vector<std::string> ids;
        ids.reserve(docs_.size());
        for (const auto& [id, e] : docs_) ids.push_back(id);
        std::sort(ids.begin(), ids.end());
        return ids;
    }

    void put(const DocumentScore& score) {
        if (score.context_length != context_length_)
            throw StoreError("score context length does not match store");
        if (score.provider_fingerprint != provider_fingerprint_)
            throw StoreError("score provider fingerprint does not match store");
        const std::string file = file_name(score.doc_id);
        {
            std::lock_guard<std::mutex> lock(mutex_);
            for (const auto& [other_id, e] : docs_) {
                if (e.file == file && other_id != score.doc_id)
                    throw StoreError("score file name collision between '" + other_id +
                                     "' and '" + score.doc_id + "'");
            }
        }
        write_records(dir_ / file, score);
        std::lock_guard<std::mutex> lock(mutex_);
        docs_[score.doc_id] = Entry{file, score.records.size()};
        write_index();
    }

    DocumentScore get(const std::string& doc_id) const {
        Entry entry;
        {
            std::lock_guard<std::mutex> lock(mutex_);
            const auto it = docs_.find(doc_id);
            if (it == docs_.end()) throw StoreError("no score for document: " + doc_id);
            entry = it->second;
        }
        return read_records(dir_ / entry.file, doc_id);
    }

private:
    struct Entry {
        std::string file;
        std::uint64_t n_records = 0;
    };

    static std::string file_name(const std::string& doc_id) {
        std::string safe;
        for (char c : doc_id) {
            const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '.' ||
                              c == '_' || c == '-';
            safe.push_back(keep ? c : '_');
            if (safe.size() >= 40) break;
        }
        return safe + "-" + to_hex(fnv1a64(doc_id)) + ".dasc";
    }

    template <typename T>
    static void write_raw(std::ofstream& out, const T& v) {
        out.write(reinterpret_cast<const char*>(&v), sizeof(T));
    }

    template <typename T>
    static void read_raw(std::ifstream& in, T& v) {
        in.read(reinterpret_cast<char*>(&v), sizeof(T));
    }

    void write_records(const std::filesystem::path& path, const DocumentScore& score) const {
        const std::filesystem::path tmp = path.string() + ".tmp";
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) throw StoreError("cannot write " + tmp.string());
            out.write("DASC", 4);
            write_raw(out, std::uint32_t{1});
            write_raw(out, static_cast<std::uint32_t>(score.doc_id.size()));
            out.write(score.doc_id.data(), static_cast<std::streamsize>(score.doc_id.size()));
            write_raw(out, static_cast<std::uint64_t>(score.context_length));
            write_raw(out, static_cast<std::uint32_t>(score.provider_fingerprint.size()));
            out.write(score.provider_fingerprint.data(),
                      static_cast<std::streamsize>(score.provider_fingerprint.size()));
            write_raw(out, static_cast<std::uint64_t>(score.records.size()));
            for (const TokenRecord& r : score.records) {
                write_raw(out, static_cast<std::uint64_t>(r.position));
                write_raw(out, r.token_id);
                write_raw(out, std::log(std::max(r.p_true, kProbFloor)));
                write_raw(out, std::log(std::max(r.p_max, kProbFloor)));
            }
            if (!out) throw StoreError("short write to " + tmp.string());
        }
        std::filesystem::rename(tmp, path);
    }

    DocumentScore read_records(const std::filesystem::path& path, const std::string& doc_id) const {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw StoreError("cannot read " + path.string());
        char magic[4];
        in.read(magic, 4);
        if (std::memcmp(magic, "DASC", 4) != 0)
            throw StoreError("bad magic in " + path.string());
        std::uint32_t version = 0;
        read_raw(in, version);
        if (version != 1) throw StoreError("unsupported score file version");
        std::uint32_t id_len = 0;
        read_raw(in, id_len);
        std::string stored_id(id_len, '\0');
        in.read(stored_id.data(), id_len);
        if (stored_id != doc_id) throw StoreError("score file holds a different document");
        DocumentScore score;
        score.doc_id = stored_id;
        std::uint64_t ctx = 0;
        read_raw(in, ctx);
        score.context_length = ctx;
        std::uint32_t fp_len = 0;
        read_raw(in, fp_len);
        score.provider_fingerprint.resize(fp_len);
        in.read(score.provider_fingerprint.data(), fp_len);
        std::uint64_t n = 0;
        read_raw(in, n);
        score.records.resize(n);
        for (std::uint64_t i = 0; i < n; ++i) {
            std::uint64_t pos = 0;
            read_raw(in, pos);
            score.records[i].position = pos;
            read_raw(in, score.records[i].token_id);
            double logp_true = 0.0, logp_max = 0.0;
            read_raw(in, logp_true);
            read_raw(in, logp_max);
            score.records[i].p_true = std::exp(logp_true);
            score.records[i].p_max = std::exp(logp_max);
        }
        if (!in) throw StoreError("truncated score file " + path.string());
        return score;
    }

    void write_index() {
        nlohmann::json docs = nlohmann::json::object();
        for (const auto& [id, e] : docs_) {
            docs[id] = {{"file", e.file}, {"n_records", e.n_records}};
        }
        nlohmann::json j;
        j["context_length"] = context_length_;
        j["provider_fingerprint"] = provider_fingerprint_;
        j["docs"] = docs;
        const std::filesystem::path tmp = dir_ / "index.json.tmp";
        {
            std::ofstream out(tmp, std::ios::trunc);
            out << j.dump(2) << '\n';
        }
        std::filesystem::rename(tmp, dir_ / "index.json");
    }

    std::filesystem::path dir_;
    std::size_t context_length_;
    std::string provider_fingerprint_;
    std::map<std::string, Entry> docs_;
    mutable std::mutex mutex_;
};

struct ScoreCorpusReport {
    std::size_t scored = 0;
    std::size_t skipped = 0;  // already present, no provider calls
    std::vector<std::pair<std::string, std::string>> failures;  // doc_id -> reason
    bool ok() const { return failures.empty(); }
};

// Scores every listed document and persists the result. Already-scored
// documents are skipped, so an interrupted run can simply be re-run.
// Document-level parallelism; store writes are serialized internally.
inline ScoreCorpusReport score_corpus(const Corpus& corpus,
                                      std::span<const std::string> doc_ids,
                                      const Provider& provider, std::size_t context_length,
                                      ScoreStore& store, std::size_t parallelism = 1) {
    if (doc_ids.empty()) throw Error("score_corpus: no documents to score");
    std::vector<std::string> ids(doc_ids.begin(), doc_ids.end());
    std::sort(ids.begin(), ids.end());

    ScoreCorpusReport report;
    std::mutex report_mutex;
    std::atomic<std::size_t> cursor{0};

    auto worker = [&]() {
        while (true) {
            const std::size_t i = cursor.fetch_add(1);
            if (i >= ids.size()) return;
            const std::string& id = ids[i];
            try {
                if (store.has(id)) {
                    std::lock_guard<std::mutex> lock(report_mutex);
                    ++report.skipped;
                    continue;
                }
                const DocumentScore score = score_document(corpus.get(id), provider, context_length);
                store.put(score);
                std::lock_guard<std::mutex> lock(report_mutex);
                ++report.scored;
            } catch (const std::exception& e) {
                std::lock_guard<std::mutex> lock(report_mutex);
                report.failures.emplace_back(id, e.what());
            }
        }
    };

    const std::size_t n_workers = std::max<std::size_t>(1, std::min(parallelism, ids.size()));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(n_workers);
        for (std::size_t i = 0; i < n_workers; ++i) threads.emplace_back(worker);
        for (std::thread& t : threads) t.join();
    }
    std::sort(report.failures.begin(), report.failures.end());
    return report;
}

}  // namespace docaudit
