#include "unitsynth/common/text.hpp"

#include "unitsynth/common/errors.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace unitsynth {

namespace {

bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

} // namespace

bool is_valid_utf8(std::string_view s) {
    size_t i = 0;
    const size_t n = s.size();
    while (i < n) {
        const auto c = static_cast<unsigned char>(s[i]);
        if (c < 0x80) {
            ++i;
            continue;
        }
        size_t len = 0;
        uint32_t cp = 0;
        if ((c & 0xe0) == 0xc0) {
            len = 2;
            cp = c & 0x1f;
        } else if ((c & 0xf0) == 0xe0) {
            len = 3;
            cp = c & 0x0f;
        } else if ((c & 0xf8) == 0xf0) {
            len = 4;
            cp = c & 0x07;
        } else {
            return false;
        }
        if (i + len > n) {
            return false;
        }
        for (size_t k = 1; k < len; ++k) {
            const auto cc = static_cast<unsigned char>(s[i + k]);
            if ((cc & 0xc0) != 0x80) {
                return false;
            }
            cp = (cp << 6) | (cc & 0x3f);
        }
        // overlong forms, surrogates, out of range
        if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000) ||
            (cp >= 0xd800 && cp <= 0xdfff) || cp > 0x10ffff) {
            return false;
        }
        i += len;
    }
    return true;
}

std::string_view trim(std::string_view s) {
    size_t b = 0;
    size_t e = s.size();
    while (b < e && is_space(s[b])) {
        ++b;
    }
    while (e > b && is_space(s[e - 1])) {
        --e;
    }
    return s.substr(b, e - b);
}

std::vector<std::string_view> whitespace_tokens(std::string_view s) {
    std::vector<std::string_view> out;
    size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && is_space(s[i])) {
            ++i;
        }
        const size_t start = i;
        while (i < s.size() && !is_space(s[i])) {
            ++i;
        }
        if (i > start) {
            out.push_back(s.substr(start, i - start));
        }
    }
    return out;
}

std::string dedent(std::string_view s) {
    std::vector<std::string_view> lines;
    size_t pos = 0;
    while (pos <= s.size()) {
        const size_t nl = s.find('\n', pos);
        if (nl == std::string_view::npos) {
            lines.push_back(s.substr(pos));
            break;
        }
        lines.push_back(s.substr(pos, nl - pos + 1));
        pos = nl + 1;
        if (pos == s.size()) {
            break;
        }
    }
    std::string_view common;
    bool have_common = false;
    for (auto line : lines) {
        if (trim(line).empty()) {
            continue;
        }
        size_t k = 0;
        while (k < line.size() && (line[k] == ' ' || line[k] == '\t')) {
            ++k;
        }
        const auto indent = line.substr(0, k);
        if (!have_common) {
            common = indent;
            have_common = true;
        } else {
            size_t m = 0;
            while (m < common.size() && m < indent.size() && common[m] == indent[m]) {
                ++m;
            }
            common = common.substr(0, m);
        }
    }
    std::string out;
    out.reserve(s.size());
    for (auto line : lines) {
        if (trim(line).empty()) {
            // keep only the line terminator of blank lines
            if (!line.empty() && line.back() == '\n') {
                out.push_back('\n');
            }
            continue;
        }
        out.append(line.substr(common.size()));
    }
    return out;
}

bool starts_with_ident(std::string_view s, std::string_view word) {
    if (s.substr(0, word.size()) != word) {
        return false;
    }
    if (s.size() == word.size()) {
        return true;
    }
    const char c = s[word.size()];
    return !(std::isalnum(static_cast<unsigned char>(c)) || c == '_');
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot read " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) {
        throw IoError("read failed: " + path.string());
    }
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view data) {
    auto tmp = path;
    tmp += ".tmp";
    try {
        if (path.has_parent_path()) {
            std::filesystem::create_directories(path.parent_path());
        }
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            if (!out) {
                throw IoError("cannot write " + tmp.string());
            }
            out.write(data.data(), static_cast<std::streamsize>(data.size()));
            out.flush();
            if (!out) {
                throw IoError("write failed: " + tmp.string());
            }
        }
        std::filesystem::rename(tmp, path);
    } catch (const std::filesystem::filesystem_error& e) {
        std::error_code ec;
        std::filesystem::remove(tmp, ec);
        throw IoError(e.what());
    } catch (...) {
        std::error_code ec;
        std::filesystem::remove(tmp, ec);
        throw;
    }
}

std::vector<std::string> read_list_file(const std::filesystem::path& path) {
    const auto text = read_file(path);
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        auto entry = trim(std::string_view(line).substr(0, hash));
        if (!entry.empty()) {
            out.emplace_back(entry);
        }
    }
    return out;
}

} // namespace unitsynth
