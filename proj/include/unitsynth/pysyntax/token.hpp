#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace unitsynth::py {

enum class TokenKind { name, number, string, op, newline, indent, dedent, end_marker };

struct Token {
    TokenKind kind = TokenKind::end_marker;
    std::string_view text;
    size_t begin = 0; // byte offsets into the source
    size_t end = 0;
    int line = 1;     // 1-based
    int col = 0;      // 0-based byte column
};

struct SyntaxError {
    std::string message;
    int line = 0;
    int col = 0;

    std::string to_string() const;
};

struct TokenStream {
    std::vector<Token> tokens;
    std::optional<SyntaxError> error;
};

/// Python 3 lexical analysis: logical lines, INDENT/DEDENT, implicit and
/// explicit line joining, all string prefixes and triple quotes. Comments and
/// non-logical newlines are dropped. The returned views point into `source`.
TokenStream tokenize(std::string_view source);

bool is_keyword(std::string_view word);

} // namespace unitsynth::py
