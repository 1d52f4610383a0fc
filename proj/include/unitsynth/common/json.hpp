#pragma once

#include <json.hpp>

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace unitsynth {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

/// Serializes like Python's `json.dumps` with default arguments: `", "` and
/// `": "` separators, non-ASCII escaped as `\uXXXX`, insertion order kept.
std::string python_dumps(const ordered_json& value);

/// Compact single-line dump with sorted keys; used for every JSONL artifact.
std::string jsonl_line(const json& value);

/// Calls `on_record(line_no, parsed)` for each non-blank line. Malformed lines
/// go to `on_error(line_no, message)`; without a handler they throw InputError.
void read_jsonl(const std::filesystem::path& path,
                const std::function<void(size_t, json&&)>& on_record,
                const std::function<void(size_t, const std::string&)>& on_error = {});

std::vector<json> read_jsonl_all(const std::filesystem::path& path);

void write_jsonl_atomic(const std::filesystem::path& path, const std::vector<json>& records);

json read_json_file(const std::filesystem::path& path);
void write_json_atomic(const std::filesystem::path& path, const json& value);

} // namespace unitsynth
