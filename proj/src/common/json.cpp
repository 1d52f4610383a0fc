#include "unitsynth/common/json.hpp"

#include "unitsynth/common/errors.hpp"
#include "unitsynth/common/text.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace unitsynth {

namespace {

void append_escaped(std::string& out, const std::string& s) {
    out.push_back('"');
    size_t i = 0;
    char buf[16];
    while (i < s.size()) {
        const auto c = static_cast<unsigned char>(s[i]);
        if (c < 0x80) {
            switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            case '\b': out += "\\b"; break;
            case '\f': out += "\\f"; break;
            default:
                if (c < 0x20 || c == 0x7f) {
                    std::snprintf(buf, sizeof(buf), "\\u%04x", c);
                    out += buf;
                } else {
                    out.push_back(static_cast<char>(c));
                }
            }
            ++i;
            continue;
        }
        // decode one UTF-8 sequence; input strings come from nlohmann and are valid
        uint32_t cp = 0;
        size_t len = 1;
        if ((c & 0xe0) == 0xc0) {
            cp = c & 0x1f;
            len = 2;
        } else if ((c & 0xf0) == 0xe0) {
            cp = c & 0x0f;
            len = 3;
        } else {
            cp = c & 0x07;
            len = 4;
        }
        for (size_t k = 1; k < len && i + k < s.size(); ++k) {
            cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3f);
        }
        i += len;
        if (cp >= 0x10000) {
            cp -= 0x10000;
            std::snprintf(buf, sizeof(buf), "\\u%04x\\u%04x", 0xd800 + (cp >> 10), 0xdc00 + (cp & 0x3ff));
        } else {
            std::snprintf(buf, sizeof(buf), "\\u%04x", cp);
        }
        out += buf;
    }
    out.push_back('"');
}

void dump_python(std::string& out, const ordered_json& v) {
    switch (v.type()) {
    case ordered_json::value_t::object: {
        out.push_back('{');
        bool first = true;
        for (auto it = v.begin(); it != v.end(); ++it) {
            if (!first) {
                out += ", ";
            }
            first = false;
            append_escaped(out, it.key());
            out += ": ";
            dump_python(out, it.value());
        }
        out.push_back('}');
        break;
    }
    case ordered_json::value_t::array: {
        out.push_back('[');
        bool first = true;
        for (const auto& e : v) {
            if (!first) {
                out += ", ";
            }
            first = false;
            dump_python(out, e);
        }
        out.push_back(']');
        break;
    }
    case ordered_json::value_t::string:
        append_escaped(out, v.get_ref<const std::string&>());
        break;
    case ordered_json::value_t::null:
        out += "null";
        break;
    case ordered_json::value_t::boolean:
        out += v.get<bool>() ? "true" : "false";
        break;
    default:
        out += v.dump();
    }
}

} // namespace

std::string python_dumps(const ordered_json& value) {
    std::string out;
    dump_python(out, value);
    return out;
}

std::string jsonl_line(const json& value) {
    return value.dump(-1, ' ', false, json::error_handler_t::strict);
}

void read_jsonl(const std::filesystem::path& path,
                const std::function<void(size_t, json&&)>& on_record,
                const std::function<void(size_t, const std::string&)>& on_error) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read " + path.string());
    }
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        json parsed;
        try {
            parsed = json::parse(line);
        } catch (const json::parse_error& e) {
            if (on_error) {
                on_error(line_no, e.what());
                continue;
            }
            throw InputError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        on_record(line_no, std::move(parsed));
    }
    if (in.bad()) {
        throw IoError("read failed: " + path.string());
    }
}

std::vector<json> read_jsonl_all(const std::filesystem::path& path) {
    std::vector<json> out;
    read_jsonl(path, [&](size_t, json&& j) { out.push_back(std::move(j)); });
    return out;
}

void write_jsonl_atomic(const std::filesystem::path& path, const std::vector<json>& records) {
    std::string data;
    for (const auto& r : records) {
        data += jsonl_line(r);
        data.push_back('\n');
    }
    write_file_atomic(path, data);
}

json read_json_file(const std::filesystem::path& path) {
    const auto text = read_file(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

void write_json_atomic(const std::filesystem::path& path, const json& value) {
    write_file_atomic(path, value.dump(2) + "\n");
}

} // namespace unitsynth
