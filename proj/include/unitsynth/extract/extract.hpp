#pragma once

#include "unitsynth/common/json.hpp"
#include "unitsynth/corpus/corpus.hpp"

#include <filesystem>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <vector>

namespace unitsynth::extract {

struct ImportStatement {
    std::string text;
    std::string root_package; // empty for relative imports

    bool operator==(const ImportStatement&) const = default;
};

struct FunctionUnit {
    std::string unit_id;
    std::string doc_id;
    std::vector<ImportStatement> imports;
    std::string name;
    std::string signature;
    std::string body;
    std::optional<std::string> docstring;
    std::set<std::string> packages;
    size_t span_begin = 0; // byte span of the definition in the source document
    size_t span_end = 0;

    bool operator==(const FunctionUnit&) const = default;
};

json to_json(const FunctionUnit& u);
FunctionUnit unit_from_json(const json& j);

/// Imports followed by the function definition, as one module.
std::string module_source(const FunctionUnit& u);

inline constexpr size_t kDefaultMaxSourceChars = 4096;

struct ExtractOptions {
    size_t max_source_chars = kDefaultMaxSourceChars;
};

struct ExtractResult {
    std::vector<FunctionUnit> units;
    std::optional<std::string> parse_error; // set when the document does not parse
    size_t dropped_too_long = 0;
    size_t skipped_classes = 0;
};

/// Top-level functions of one document, each carrying the top-level import
/// statements whose bound names occur as identifiers in the function.
/// Class bodies (and their methods) are skipped.
ExtractResult extract_functions(const corpus::SourceDocument& doc, const ExtractOptions& opts = {});

/// Top-level import statements of already-parsed source, one entry per
/// imported module for `import a, b`.
std::vector<ImportStatement> split_imports(std::string_view source);

/// Subset of `imports` whose bound names appear in `identifiers`.
std::vector<ImportStatement> slice_imports(const std::vector<ImportStatement>& imports,
                                           const std::set<std::string, std::less<>>& identifiers);

struct PackageAllowlist {
    std::set<std::string> packages;

    static PackageAllowlist from_file(const std::filesystem::path& path);
};

std::vector<FunctionUnit> filter_by_packages(const std::vector<FunctionUnit>& units,
                                             const PackageAllowlist& allowlist);

class Denylist {
public:
    Denylist() = default;
    explicit Denylist(std::vector<std::string> patterns);

    static Denylist from_file(const std::filesystem::path& path);

    /// The first pattern matching `source`, if any.
    std::optional<std::string> match(std::string_view source) const;

    const std::vector<std::string>& patterns() const { return patterns_; }

private:
    std::vector<std::string> patterns_;
    std::vector<std::regex> compiled_;
};

struct ScreenResult {
    std::vector<FunctionUnit> safe;
    std::vector<std::pair<std::string, std::string>> dropped; // unit_id, pattern
};

ScreenResult safety_screen(const std::vector<FunctionUnit>& units, const Denylist& denylist);

} // namespace unitsynth::extract
