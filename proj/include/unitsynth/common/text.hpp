#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace unitsynth {

bool is_valid_utf8(std::string_view s);

std::string_view trim(std::string_view s);

/// Maximal runs of non-whitespace (ASCII space, tab, CR, LF, FF, VT).
std::vector<std::string_view> whitespace_tokens(std::string_view s);

/// Removes the longest common leading whitespace from all non-blank lines.
std::string dedent(std::string_view s);

bool starts_with_ident(std::string_view s, std::string_view word);

std::string read_file(const std::filesystem::path& path);

/// Writes to a sibling temp file and renames over `path`; the temp file is
/// removed if anything fails.
void write_file_atomic(const std::filesystem::path& path, std::string_view data);

/// Plain-text list file: one entry per line, `#` starts a comment, blank
/// lines ignored, entries trimmed.
std::vector<std::string> read_list_file(const std::filesystem::path& path);

} // namespace unitsynth
