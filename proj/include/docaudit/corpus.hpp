#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "docaudit/common.hpp"
#include "docaudit/provider.hpp"

namespace docaudit {

enum class MembershipLabel { member, nonmember };

inline std::string label_name(MembershipLabel l) {
    return l == MembershipLabel::member ? "member" : "nonmember";
}

inline MembershipLabel parse_label(std::string_view s) {
    if (s == "member") return MembershipLabel::member;
    if (s == "nonmember") return MembershipLabel::nonmember;
    throw Error("unknown membership label: " + std::string(s));
}

struct Document {
    std::string doc_id;
    std::string text;
    MembershipLabel label = MembershipLabel::member;
    std::map<std::string, std::string> metadata;
    std::size_t token_count = 0;  // filled by filter_by_length
};

// Numeric range predicate over one metadata key. A document passes when the
// key exists, parses as a number and lies in [min_value, max_value].
struct MetadataFilter {
    std::string key;
    double min_value = 0.0;
    double max_value = 0.0;

    bool accepts(const Document& doc) const {
        const auto it = doc.metadata.find(key);
        if (it == doc.metadata.end()) return false;
        try {
            std::size_t pos = 0;
            const double v = std::stod(it->second, &pos);
            while (pos < it->second.size() &&
                   std::isspace(static_cast<unsigned char>(it->second[pos])))
                ++pos;
            if (pos != it->second.size()) return false;
            return v >= min_value && v <= max_value;
        } catch (const std::exception&) {
            return false;
        }
    }

    // Parses the CLI form "key:min:max".
    static MetadataFilter parse(std::string_view spec) {
        const std::size_t a = spec.find(':');
        const std::size_t b = a == std::string_view::npos ? a : spec.find(':', a + 1);
        if (a == std::string_view::npos || b == std::string_view::npos)
            throw Error("filter spec must be key:min:max, got: " + std::string(spec));
        MetadataFilter f;
        f.key = std::string(spec.substr(0, a));
        try {
            f.min_value = std::stod(std::string(spec.substr(a + 1, b - a - 1)));
            f.max_value = std::stod(std::string(spec.substr(b + 1)));
        } catch (const std::exception&) {
            throw Error("filter bounds must be numeric, got: " + std::string(spec));
        }
        return f;
    }
};

struct RawDocument {
    std::string doc_id;
    std::string text;
    std::map<std::string, std::string> metadata;
};

struct SourceItem {
    bool ok = false;
    RawDocument doc;
    std::string error;
};

// Pull-based stream of raw documents; unreadable items surface as error
// items so ingestion can skip and report them.
class DocumentSource {
public:
    virtual ~DocumentSource() = default;
    virtual std::optional<SourceItem> next() = 0;
};

class VectorSource : public DocumentSource {
public:
    explicit VectorSource(std::vector<RawDocument> docs) : docs_(std::move(docs)) {}
    std::optional<SourceItem> next() override {
        if (idx_ >= docs_.size()) return std::nullopt;
        SourceItem item;
        item.ok = true;
        item.doc = docs_[idx_++];
        return item;
    }

private:
    std::vector<RawDocument> docs_;
    std::size_t idx_ = 0;
};

// Newline-delimited JSON records: {"doc_id": str, "text": str, "metadata": {str: str}}.
class JsonlSource : public DocumentSource {
public:
    explicit JsonlSource(const std::filesystem::path& path) : in_(path) {
        if (!in_) throw StoreError("cannot open input file: " + path.string());
    }

    std::optional<SourceItem> next() override {
        std::string line;
        while (std::getline(in_, line)) {
            ++line_no_;
            if (line.empty()) continue;
            SourceItem item;
            try {
                const nlohmann::json j = nlohmann::json::parse(line);
                item.doc.doc_id = j.at("doc_id").get<std::string>();
                item.doc.text = j.at("text").get<std::string>();
                if (j.contains("metadata")) {
                    for (const auto& [k, v] : j.at("metadata").items()) {
                        item.doc.metadata[k] =
                            v.is_string() ? v.get<std::string>() : v.dump();
                    }
                }
                item.ok = true;
            } catch (const std::exception& e) {
                item.ok = false;
                item.error = "line " + std::to_string(line_no_) + ": " + e.what();
            }
            return item;
        }
        return std::nullopt;
    }

private:
    std::ifstream in_;
    std::size_t line_no_ = 0;
};

// Directory tree: every regular file is one document, doc_id = relative
// path. Optional sidecar metadata.json at the root maps doc_id to a
// key/value object and is not itself ingested.
class DirectorySource : public DocumentSource {
public:
    explicit DirectorySource(const std::filesystem::path& root) {
        namespace fs = std::filesystem;
        if (!fs::is_directory(root)) throw StoreError("not a directory: " + root.string());
        const fs::path sidecar = root / "metadata.json";
        if (fs::exists(sidecar)) {
            std::ifstream in(sidecar);
            nlohmann::json j;
            in >> j;
            for (const auto& [doc_id, meta] : j.items()) {
                for (const auto& [k, v] : meta.items()) {
                    metadata_[doc_id][k] = v.is_string() ? v.get<std::string>() : v.dump();
                }
            }
        }
        for (const auto& entry : fs::recursive_directory_iterator(root)) {
            if (!entry.is_regular_file()) continue;
            if (entry.path() == sidecar) continue;
            files_.push_back(entry.path());
        }
        std::sort(files_.begin(), files_.end());
        root_ = root;
    }

    std::optional<SourceItem> next() override {
        if (idx_ >= files_.size()) return std::nullopt;
        const std::filesystem::path& p = files_[idx_++];
        SourceItem item;
        item.doc.doc_id = std::filesystem::relative(p, root_).generic_string();
        std::ifstream in(p, std::ios::binary);
        if (!in) {
            item.error = "unreadable file: " + p.string();
            return item;
        }
        std::ostringstream text;
        text << in.rdbuf();
        item.doc.text = std::move(text).str();
        const auto meta = metadata_.find(item.doc.doc_id);
        if (meta != metadata_.end()) item.doc.metadata = meta->second;
        item.ok = true;
        return item;
    }

private:
    std::filesystem::path root_;
    std::vector<std::filesystem::path> files_;
    std::unordered_map<std::string, std::map<std::string, std::string>> metadata_;
    std::size_t idx_ = 0;
};

struct IngestReport {
    std::size_t accepted = 0;
    std::size_t rejected = 0;
    std::vector<std::string> messages;  // one entry per rejected/skipped item
};

struct LengthFilterReport {
    std::size_t kept = 0;
    std::size_t removed = 0;
    std::vector<std::string> messages;
};

// Document store: raw text files plus a JSONL manifest. Text files are
// append-only; the manifest is rewritten atomically when the corpus shrinks.
class Corpus {
public:
    static Corpus create(const std::filesystem::path& dir) {
        namespace fs = std::filesystem;
        fs::create_directories(dir / "docs");
        Corpus c;
        c.dir_ = dir;
        c.write_meta();
        c.rewrite_manifest();
        return c;
    }

    static Corpus open(const std::filesystem::path& dir) {
        namespace fs = std::filesystem;
        if (!fs::exists(dir / "manifest.jsonl"))
            throw StoreError("no corpus at " + dir.string());
        Corpus c;
        c.dir_ = dir;
        {
            std::ifstream meta(dir / "meta.json");
            if (meta) {
                nlohmann::json j;
                meta >> j;
                c.default_split_seed_ = j.value("default_split_seed", std::uint64_t{0});
            }
        }
        std::ifstream in(dir / "manifest.jsonl");
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const nlohmann::json j = nlohmann::json::parse(line);
            Document doc;
            doc.doc_id = j.at("doc_id").get<std::string>();
            doc.label = parse_label(j.at("label").get<std::string>());
            doc.token_count = j.value("token_count", std::size_t{0});
            if (j.contains("metadata")) {
                for (const auto& [k, v] : j.at("metadata").items())
                    doc.metadata[k] = v.get<std::string>();
            }
            const std::string file = j.at("file").get<std::string>();
            std::ifstream text_in(dir / file, std::ios::binary);
            if (!text_in) throw StoreError("missing document file: " + file);
            std::ostringstream text;
            text << text_in.rdbuf();
            doc.text = std::move(text).str();
            c.files_[doc.doc_id] = file;
            c.order_.push_back(doc.doc_id);
            c.docs_.emplace(doc.doc_id, std::move(doc));
        }
        return c;
    }

    const std::filesystem::path& dir() const { return dir_; }

    IngestReport ingest(DocumentSource& source, MembershipLabel label,
                        std::span<const MetadataFilter> filters) {
        IngestReport report;
        while (auto item = source.next()) {
            if (!item->ok) {
                ++report.rejected;
                report.messages.push_back("skipped unreadable item: " + item->error);
                continue;
            }
            RawDocument& raw = item->doc;
            if (docs_.count(raw.doc_id)) {
                ++report.rejected;
                report.messages.push_back("duplicate doc_id rejected: " + raw.doc_id);
                continue;
            }
            Document doc;
            doc.doc_id = raw.doc_id;
            doc.text = std::move(raw.text);
            doc.label = label;
            doc.metadata = std::move(raw.metadata);
            bool pass = true;
            for (const MetadataFilter& f : filters) {
                if (!f.accepts(doc)) {
                    pass = false;
                    ++report.rejected;
                    report.messages.push_back("filtered out (" + f.key + "): " + doc.doc_id);
                    break;
                }
            }
            if (!pass) continue;
            persist(doc);
            ++report.accepted;
        }
        return report;
    }

    // Removes documents with fewer than min_tokens tokens (strict) and
    // records token_count on survivors. Documents the tokenizer rejects are
    // removed and reported.
    LengthFilterReport filter_by_length(std::size_t min_tokens, const Provider& provider) {
        LengthFilterReport report;
        std::vector<std::string> drop;
        for (const std::string& id : order_) {
            Document& doc = docs_.at(id);
            try {
                doc.token_count = provider.tokenize(doc.text).size();
            } catch (const std::exception& e) {
                drop.push_back(id);
                report.messages.push_back("tokenizer failed on " + id + ": " + e.what());
                continue;
            }
            if (doc.token_count < min_tokens) {
                drop.push_back(id);
                report.messages.push_back("too short (" + std::to_string(doc.token_count) +
                                          " tokens): " + id);
            }
        }
        for (const std::string& id : drop) {
            docs_.erase(id);
            files_.erase(id);
            order_.erase(std::find(order_.begin(), order_.end(), id));
        }
        report.removed = drop.size();
        report.kept = docs_.size();
        rewrite_manifest();
        return report;
    }

    bool contains(const std::string& doc_id) const { return docs_.count(doc_id) > 0; }

    const Document& get(const std::string& doc_id) const {
        const auto it = docs_.find(doc_id);
        if (it == docs_.end()) throw StoreError("no such document: " + doc_id);
        return it->second;
    }

    std::size_t size() const { return docs_.size(); }

    // Sorted, so downstream sampling is independent of ingestion order.
    std::vector<std::string> doc_ids() const {
        std::vector<std::string> ids(order_.begin(), order_.end());
        std::sort(ids.begin(), ids.end());
        return ids;
    }

    std::vector<std::string> doc_ids(MembershipLabel label) const {
        std::vector<std::string> ids;
        for (const auto& [id, doc] : docs_) {
            if (doc.label == label) ids.push_back(id);
        }
        std::sort(ids.begin(), ids.end());
        return ids;
    }

    void set_default_split_seed(std::uint64_t seed) {
        default_split_seed_ = seed;
        write_meta();
    }
    std::uint64_t default_split_seed() const { return default_split_seed_; }

private:
    void persist(Document& doc) {
        const std::string file = "docs/" + file_name(doc.doc_id);
        for (const auto& [other_id, other_file] : files_) {
            if (other_file == file)
                throw StoreError("document file name collision between '" + other_id +
                                 "' and '" + doc.doc_id + "'");
        }
        {
            std::ofstream out(dir_ / file, std::ios::binary | std::ios::trunc);
            if (!out) throw StoreError("cannot write " + (dir_ / file).string());
            out << doc.text;
        }
        {
            std::ofstream out(dir_ / "manifest.jsonl", std::ios::app);
            out << manifest_line(doc, file) << '\n';
        }
        files_[doc.doc_id] = file;
        order_.push_back(doc.doc_id);
        docs_.emplace(doc.doc_id, std::move(doc));
    }

    static std::string file_name(const std::string& doc_id) {
        std::string safe;
        for (char c : doc_id) {
            const bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '.' ||
                              c == '_' || c == '-';
            safe.push_back(keep ? c : '_');
            if (safe.size() >= 40) break;
        }
        return safe + "-" + to_hex(fnv1a64(doc_id)) + ".txt";
    }

    static std::string manifest_line(const Document& doc, const std::string& file) {
        nlohmann::json j;
        j["doc_id"] = doc.doc_id;
        j["label"] = label_name(doc.label);
        j["metadata"] = doc.metadata;
        j["token_count"] = doc.token_count;
        j["file"] = file;
        return j.dump();
    }

    void rewrite_manifest() {
        const std::filesystem::path tmp = dir_ / "manifest.jsonl.tmp";
        {
            std::ofstream out(tmp, std::ios::trunc);
            for (const std::string& id : order_) {
                out << manifest_line(docs_.at(id), files_.at(id)) << '\n';
            }
        }
        std::filesystem::rename(tmp, dir_ / "manifest.jsonl");
    }

    void write_meta() {
        nlohmann::json j;
        j["version"] = 1;
        j["default_split_seed"] = default_split_seed_;
        std::ofstream out(dir_ / "meta.json", std::ios::trunc);
        out << j.dump(2) << '\n';
    }

    std::filesystem::path dir_;
    std::unordered_map<std::string, Document> docs_;
    std::unordered_map<std::string, std::string> files_;
    std::vector<std::string> order_;  // ingestion order, for manifest stability
    std::uint64_t default_split_seed_ = 0;
};

struct ChunkDescriptor {
    std::vector<std::string> doc_ids;
    std::size_t members = 0;
    std::size_t nonmembers = 0;
};

struct CorpusSplit {
    std::size_t k = 0;
    std::vector<ChunkDescriptor> chunks;
    std::uint64_t seed = 0;

    std::string fingerprint() const {
        Fingerprint fp;
        fp.add("split").add(static_cast<std::uint64_t>(k)).add(seed);
        for (const ChunkDescriptor& c : chunks) {
            for (const std::string& id : c.doc_ids) fp.add(id);
            fp.add(static_cast<std::uint64_t>(c.doc_ids.size()));
        }
        return fp.hex();
    }
};

// Uniform sample without replacement into k disjoint chunks, each holding
// docs_per_chunk/2 members and docs_per_chunk/2 nonmembers. Deterministic in
// (corpus contents, k, docs_per_chunk, seed); ingestion order is irrelevant
// because eligible ids are sorted before sampling.
inline CorpusSplit make_splits(const Corpus& corpus, std::size_t k, std::size_t docs_per_chunk,
                               std::uint64_t seed) {
    if (k == 0) throw Error("make_splits: k must be positive");
    if (docs_per_chunk == 0 || docs_per_chunk % 2 != 0)
        throw Error("make_splits: docs_per_chunk must be positive and even");
    const std::size_t half = docs_per_chunk / 2;
    const std::size_t need = k * half;
    const std::vector<std::string> members = corpus.doc_ids(MembershipLabel::member);
    const std::vector<std::string> nonmembers = corpus.doc_ids(MembershipLabel::nonmember);
    if (members.size() < need || nonmembers.size() < need) {
        std::ostringstream msg;
        msg << "make_splits: need " << need << " members and " << need << " nonmembers, have "
            << members.size() << " and " << nonmembers.size();
        throw Error(msg.str());
    }
    std::mt19937_64 member_rng(derive_seed(seed, 1));
    std::mt19937_64 nonmember_rng(derive_seed(seed, 2));
    const std::vector<std::size_t> m_idx =
        sample_without_replacement(members.size(), need, member_rng);
    const std::vector<std::size_t> n_idx =
        sample_without_replacement(nonmembers.size(), need, nonmember_rng);

    CorpusSplit split;
    split.k = k;
    split.seed = seed;
    split.chunks.resize(k);
    for (std::size_t c = 0; c < k; ++c) {
        ChunkDescriptor& chunk = split.chunks[c];
        for (std::size_t i = 0; i < half; ++i) {
            chunk.doc_ids.push_back(members[m_idx[c * half + i]]);
            ++chunk.members;
        }
        for (std::size_t i = 0; i < half; ++i) {
            chunk.doc_ids.push_back(nonmembers[n_idx[c * half + i]]);
            ++chunk.nonmembers;
        }
        std::sort(chunk.doc_ids.begin(), chunk.doc_ids.end());
    }
    return split;
}

struct FoldView {
    std::vector<std::string> train_ids;
    std::vector<std::string> eval_ids;
};

inline FoldView fold_views(const CorpusSplit& split, std::size_t holdout_index) {
    if (holdout_index >= split.k)
        throw Error("fold_views: holdout index " + std::to_string(holdout_index) +
                    " out of range for k=" + std::to_string(split.k));
    FoldView view;
    for (std::size_t c = 0; c < split.k; ++c) {
        const auto& ids = split.chunks[c].doc_ids;
        auto& dst = (c == holdout_index) ? view.eval_ids : view.train_ids;
        dst.insert(dst.end(), ids.begin(), ids.end());
    }
    std::sort(view.train_ids.begin(), view.train_ids.end());
    std::sort(view.eval_ids.begin(), view.eval_ids.end());
    return view;
}

}  // namespace docaudit
