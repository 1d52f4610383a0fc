#include "unitsynth/corpus/corpus.hpp"

#include "unitsynth/common/errors.hpp"
#include "unitsynth/common/hash.hpp"
#include "unitsynth/common/json.hpp"
#include "unitsynth/common/text.hpp"

#include <algorithm>
#include <future>
#include <unordered_set>

namespace unitsynth::corpus {

SourceDocument make_document(std::string path, std::string content, std::string language_tag) {
    SourceDocument doc;
    doc.doc_id = sha256_hex(content);
    doc.path = std::move(path);
    doc.content = std::move(content);
    doc.language_tag = std::move(language_tag);
    return doc;
}

IngestResult ingest(const std::filesystem::path& source, std::string_view format) {
    if (format != kFormatJsonl) {
        throw ConfigError("unsupported corpus format: " + std::string(format));
    }
    if (!std::filesystem::is_regular_file(source)) {
        throw IoError("corpus source is not a readable file: " + source.string());
    }
    IngestResult result;
    read_jsonl(
        source,
        [&](size_t line, json&& rec) {
            if (!rec.is_object()) {
                result.skipped.push_back({line, "record is not an object"});
                return;
            }
            const auto path = rec.find("path");
            const auto content = rec.find("content");
            if (path == rec.end() || !path->is_string()) {
                result.skipped.push_back({line, "missing string field 'path'"});
                return;
            }
            if (content == rec.end() || !content->is_string()) {
                result.skipped.push_back({line, "missing string field 'content'"});
                return;
            }
            std::string language = "python";
            if (const auto lang = rec.find("language"); lang != rec.end()) {
                if (!lang->is_string()) {
                    result.skipped.push_back({line, "field 'language' is not a string"});
                    return;
                }
                language = lang->get<std::string>();
            }
            auto text = content->get<std::string>();
            if (!is_valid_utf8(text)) {
                result.skipped.push_back({line, "content is not valid UTF-8"});
                return;
            }
            result.documents.push_back(make_document(path->get<std::string>(), std::move(text), language));
        },
        [&](size_t line, const std::string& message) {
            result.skipped.push_back({line, "malformed JSON: " + message});
        });
    return result;
}

std::vector<SourceDocument> dedup_exact(std::vector<SourceDocument> docs) {
    std::unordered_set<std::string> seen;
    std::vector<SourceDocument> out;
    out.reserve(docs.size());
    for (auto& d : docs) {
        if (seen.insert(d.doc_id).second) {
            out.push_back(std::move(d));
        }
    }
    return out;
}

std::vector<SourceDocument> dedup_sharded(std::vector<std::vector<SourceDocument>> shards) {
    std::vector<std::future<std::vector<SourceDocument>>> pending;
    pending.reserve(shards.size());
    for (auto& shard : shards) {
        pending.push_back(std::async(std::launch::async, [s = std::move(shard)]() mutable {
            return dedup_exact(std::move(s));
        }));
    }
    std::vector<SourceDocument> merged;
    for (auto& f : pending) {
        auto part = f.get();
        std::move(part.begin(), part.end(), std::back_inserter(merged));
    }
    return dedup_exact(std::move(merged));
}

std::vector<std::string> shingles(std::string_view text, size_t n) {
    std::vector<std::string> out;
    const auto tokens = whitespace_tokens(text);
    if (n == 0 || tokens.size() < n) {
        return out;
    }
    out.reserve(tokens.size() - n + 1);
    for (size_t i = 0; i + n <= tokens.size(); ++i) {
        std::string s;
        for (size_t k = 0; k < n; ++k) {
            if (k > 0) {
                s.push_back(' ');
            }
            s.append(tokens[i + k]);
        }
        out.push_back(std::move(s));
    }
    return out;
}

Blocklist::Blocklist(size_t n) : n_(n) {
    if (n_ < 8) {
        throw ConfigError("blocklist shingle length must be at least 8");
    }
}

Blocklist Blocklist::from_directory(const std::filesystem::path& dir, size_t n) {
    if (!std::filesystem::is_directory(dir)) {
        throw IoError("blocklist directory not found: " + dir.string());
    }
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
        if (entry.is_regular_file()) {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    Blocklist bl(n);
    for (const auto& f : files) {
        const auto rel = std::filesystem::relative(f, dir);
        const auto name = std::distance(rel.begin(), rel.end()) > 1 ? rel.begin()->string() : rel.stem().string();
        bl.add_item(name, read_file(f));
    }
    return bl;
}

void Blocklist::add_item(std::string_view benchmark, std::string_view text) {
    auto it = std::find(names_.begin(), names_.end(), benchmark);
    const size_t idx = static_cast<size_t>(it - names_.begin());
    if (it == names_.end()) {
        names_.emplace_back(benchmark);
    }
    for (auto& s : shingles(text, n_)) {
        shingles_.emplace(std::move(s), idx);
    }
}

const std::string* Blocklist::first_match(std::string_view text) const {
    if (shingles_.empty()) {
        return nullptr;
    }
    for (const auto& s : shingles(text, n_)) {
        if (auto it = shingles_.find(s); it != shingles_.end()) {
            return &names_[it->second];
        }
    }
    return nullptr;
}

DecontaminationResult decontaminate(std::vector<SourceDocument> docs, const Blocklist& blocklist) {
    DecontaminationResult result;
    for (auto& d : docs) {
        if (const auto* name = blocklist.first_match(d.content)) {
            ++result.dropped_per_benchmark[*name];
            result.dropped_doc_ids.push_back(d.doc_id);
        } else {
            result.kept.push_back(std::move(d));
        }
    }
    return result;
}

} // namespace unitsynth::corpus
