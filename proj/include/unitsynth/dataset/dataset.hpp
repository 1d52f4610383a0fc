#pragma once

#include "unitsynth/refine/refine.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace unitsynth::dataset {

class BuildError : public Error {
public:
    using Error::Error;
};

struct Provenance {
    std::string candidate_id;
    std::string unit_id;
    std::string doc_id;
    bool refined = true; // false for an unrefined source admitted via include_unrefined

    bool operator==(const Provenance&) const = default;
};

struct TrainingPair {
    std::string pair_id;
    std::string prefix;     // imports + header + docstring, ending at the closing quotes
    std::string completion; // everything after the docstring
    std::set<std::string> packages;
    std::string suite;
    Provenance provenance;

    bool operator==(const TrainingPair&) const = default;
};

json to_json(const TrainingPair& p);
TrainingPair pair_from_json(const json& j);

/// Splits imports + one function right after the function's docstring.
/// Throws BuildError if the source does not parse, has no single function
/// `name`, has no docstring, has statements after the function, or has an
/// import statement after the split point.
std::pair<std::string, std::string> split_at_docstring(std::string_view source, std::string_view name);

/// Pair for an accepted outcome, or for a rejected one when
/// `include_unrefined` is set (its passing source must carry a docstring).
/// Throws BuildError otherwise.
TrainingPair build_pair(const refine::RefineOutcome& outcome, bool include_unrefined = false);

struct BuildResult {
    std::vector<TrainingPair> pairs; // ordered by candidate id
    std::vector<std::pair<std::string, std::string>> errors; // candidate id, diagnostic
    size_t not_admitted = 0; // rejected outcomes left out
};

BuildResult build_pairs(const std::vector<refine::RefineOutcome>& outcomes, bool include_unrefined = false);

inline const std::vector<size_t> kDefaultBucketEdges = {1, 10, 100, 1000, 10000, 100000};

struct Bucket {
    size_t lo = 0;
    std::optional<size_t> hi; // exclusive; none for the last band
    size_t packages = 0;

    bool operator==(const Bucket&) const = default;
};

struct PackageStats {
    std::map<std::string, size_t> per_package_counts;
    size_t unique_package_count = 0;
    std::vector<Bucket> frequency_buckets; // non-empty bands only, ascending

    bool operator==(const PackageStats&) const = default;
};

PackageStats compute_stats(const std::vector<TrainingPair>& pairs,
                           const std::vector<size_t>& bucket_edges = kDefaultBucketEdges);

/// Stats of the union of two disjoint pair sets.
PackageStats merge_stats(const PackageStats& a, const PackageStats& b,
                         const std::vector<size_t>& bucket_edges = kDefaultBucketEdges);

json to_json(const PackageStats& s);

/// Writes the pairs (one JSON object per line) and a manifest with count,
/// content hash, config snapshot and package stats. Both files are written
/// atomically; the dataset is removed if the manifest cannot be written.
json export_dataset(const std::vector<TrainingPair>& pairs, const std::filesystem::path& dataset_path,
                    const std::filesystem::path& manifest_path, const json& config_snapshot,
                    const std::vector<size_t>& bucket_edges = kDefaultBucketEdges);

std::vector<TrainingPair> read_dataset(const std::filesystem::path& path);

} // namespace unitsynth::dataset
