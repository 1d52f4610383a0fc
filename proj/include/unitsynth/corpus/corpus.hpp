#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace unitsynth::corpus {

struct SourceDocument {
    std::string doc_id; // sha256 of content
    std::string path;
    std::string content;
    std::string language_tag;
};

SourceDocument make_document(std::string path, std::string content, std::string language_tag = "python");

/// Only line-delimited JSON (`jsonl`) is supported.
inline constexpr std::string_view kFormatJsonl = "jsonl";

struct SkippedRecord {
    size_t line = 0;
    std::string reason;
};

struct IngestResult {
    std::vector<SourceDocument> documents;
    std::vector<SkippedRecord> skipped;
};

/// Reads a corpus file. Throws IoError if the source is unreadable and
/// ConfigError for an unknown format; malformed records are skipped.
IngestResult ingest(const std::filesystem::path& source, std::string_view format = kFormatJsonl);

/// Keeps the first document for each doc_id, preserving order.
std::vector<SourceDocument> dedup_exact(std::vector<SourceDocument> docs);

/// Per-shard dedup (in parallel) followed by a global merge pass; equal to
/// dedup_exact over the concatenation of the shards.
std::vector<SourceDocument> dedup_sharded(std::vector<std::vector<SourceDocument>> shards);

inline constexpr size_t kDefaultShingleLength = 13;

class Blocklist {
public:
    explicit Blocklist(size_t n = kDefaultShingleLength);

    /// Loads every regular file under `dir` (recursively, sorted by path).
    /// The benchmark name is the first path component below `dir` for nested
    /// files, or the file stem for files directly in `dir`.
    static Blocklist from_directory(const std::filesystem::path& dir, size_t n = kDefaultShingleLength);

    void add_item(std::string_view benchmark, std::string_view text);

    size_t shingle_length() const { return n_; }
    size_t size() const { return shingles_.size(); }
    bool empty() const { return shingles_.empty(); }
    const std::vector<std::string>& source_names() const { return names_; }

    /// Benchmark name of the first blocklisted shingle in `text`, or nullptr.
    const std::string* first_match(std::string_view text) const;

private:
    size_t n_;
    std::unordered_map<std::string, size_t> shingles_; // shingle -> index into names_
    std::vector<std::string> names_;
};

/// Whitespace-normalized n-token shingles of `text`, tokens joined by a space.
std::vector<std::string> shingles(std::string_view text, size_t n);

struct DecontaminationResult {
    std::vector<SourceDocument> kept;
    std::map<std::string, size_t> dropped_per_benchmark;
    std::vector<std::string> dropped_doc_ids;

    size_t dropped() const { return dropped_doc_ids.size(); }
};

DecontaminationResult decontaminate(std::vector<SourceDocument> docs, const Blocklist& blocklist);

} // namespace unitsynth::corpus
