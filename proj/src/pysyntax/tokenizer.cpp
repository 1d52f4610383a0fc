#include "unitsynth/pysyntax/token.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace unitsynth::py {

std::string SyntaxError::to_string() const {
    return "line " + std::to_string(line) + ", col " + std::to_string(col) + ": " + message;
}

bool is_keyword(std::string_view word) {
    static constexpr std::array<std::string_view, 35> kKeywords = {
        "False", "None",   "True",    "and",      "as",       "assert", "async",
        "await", "break",  "class",   "continue", "def",      "del",    "elif",
        "else",  "except", "finally", "for",      "from",     "global", "if",
        "import", "in",    "is",      "lambda",   "nonlocal", "not",    "or",
        "pass",  "raise",  "return",  "try",      "while",    "with",   "yield"};
    return std::find(kKeywords.begin(), kKeywords.end(), word) != kKeywords.end();
}

namespace {

// Longest first within each length class.
constexpr std::array<std::string_view, 5> kOps3 = {"**=", "//=", "...", ">>=", "<<="};
constexpr std::array<std::string_view, 19> kOps2 = {
    "**", "//", "<<", ">>", "<=", ">=", "==", "!=", "->", ":=",
    "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "@="};
constexpr std::string_view kOps1 = "+-*/%@&|^~<>()[]{},:;.=";

bool is_ident_start(unsigned char c) { return std::isalpha(c) || c == '_' || c >= 0x80; }
bool is_ident_char(unsigned char c) { return std::isalnum(c) || c == '_' || c >= 0x80; }

bool is_string_prefix(std::string_view p) {
    if (p.size() > 2) {
        return false;
    }
    std::string lower;
    for (char c : p) {
        lower.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return lower == "r" || lower == "u" || lower == "b" || lower == "f" || lower == "br" ||
           lower == "rb" || lower == "fr" || lower == "rf";
}

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) {}

    TokenStream run() {
        try {
            lex();
        } catch (const SyntaxError& e) {
            out_.error = e;
        }
        return std::move(out_);
    }

private:
    std::string_view src_;
    size_t pos_ = 0;
    int line_ = 1;
    size_t line_start_ = 0;
    TokenStream out_;
    std::vector<int> indents_{0};
    std::vector<int> alt_indents_{0};
    std::vector<char> brackets_;
    std::vector<Token> bracket_tokens_;
    bool line_has_tokens_ = false;

    [[noreturn]] void fail(std::string msg, size_t at) const {
        throw SyntaxError{std::move(msg), line_, static_cast<int>(at - line_start_)};
    }

    char peek(size_t k = 0) const { return pos_ + k < src_.size() ? src_[pos_ + k] : '\0'; }

    void emit(TokenKind kind, size_t begin, size_t end) {
        Token t;
        t.kind = kind;
        t.text = src_.substr(begin, end - begin);
        t.begin = begin;
        t.end = end;
        t.line = line_;
        t.col = static_cast<int>(begin - line_start_);
        out_.tokens.push_back(t);
        if (kind != TokenKind::newline && kind != TokenKind::indent && kind != TokenKind::dedent) {
            line_has_tokens_ = true;
        }
    }

    void newline_at(size_t after) {
        ++line_;
        line_start_ = after;
    }

    // Handles indentation at the start of a physical line that begins a
    // logical line. Returns false if the line is blank or comment-only.
    bool handle_indent() {
        int col = 0;
        int alt = 0;
        size_t p = pos_;
        while (p < src_.size()) {
            const char c = src_[p];
            if (c == ' ') {
                ++col;
                ++alt;
            } else if (c == '\t') {
                col = (col / 8 + 1) * 8;
                ++alt;
            } else if (c == '\f') {
                col = 0;
                alt = 0;
            } else {
                break;
            }
            ++p;
        }
        const char c = p < src_.size() ? src_[p] : '\0';
        if (c == '#' || c == '\n' || c == '\r' || c == '\0') {
            pos_ = p;
            return false;
        }
        if (col > indents_.back()) {
            if (alt <= alt_indents_.back()) {
                fail("inconsistent use of tabs and spaces in indentation", p);
            }
            indents_.push_back(col);
            alt_indents_.push_back(alt);
            emit(TokenKind::indent, pos_, p);
        } else {
            while (col < indents_.back()) {
                indents_.pop_back();
                alt_indents_.pop_back();
                emit(TokenKind::dedent, p, p);
            }
            if (col != indents_.back()) {
                fail("unindent does not match any outer indentation level", p);
            }
            if (alt != alt_indents_.back()) {
                fail("inconsistent use of tabs and spaces in indentation", p);
            }
        }
        pos_ = p;
        return true;
    }

    void lex() {
        bool at_line_start = true;
        while (true) {
            if (at_line_start && !brackets_.empty()) {
                at_line_start = false;
            } else if (at_line_start) {
                at_line_start = false;
                line_has_tokens_ = false;
                if (!handle_indent()) {
                    // blank or comment line: skip to end of line
                    skip_comment();
                    if (pos_ >= src_.size()) {
                        break;
                    }
                    consume_line_end();
                    at_line_start = true;
                    continue;
                }
            }
            if (pos_ >= src_.size()) {
                break;
            }
            const char c = peek();
            if (c == ' ' || c == '\t' || c == '\f') {
                ++pos_;
                continue;
            }
            if (c == '#') {
                skip_comment();
                continue;
            }
            if (c == '\r' || c == '\n') {
                const size_t begin = pos_;
                if (brackets_.empty() && line_has_tokens_) {
                    emit(TokenKind::newline, begin, begin);
                }
                consume_line_end();
                at_line_start = true;
                continue;
            }
            if (c == '\\') {
                const size_t at = pos_;
                ++pos_;
                if (peek() == '\r' && peek(1) == '\n') {
                    pos_ += 2;
                } else if (peek() == '\n' || peek() == '\r') {
                    ++pos_;
                } else if (pos_ >= src_.size()) {
                    fail("unexpected EOF while parsing", at);
                } else {
                    fail("unexpected character after line continuation character", at);
                }
                newline_at(pos_);
                if (pos_ >= src_.size()) {
                    fail("unexpected EOF while parsing", at);
                }
                continue;
            }
            if (is_ident_start(static_cast<unsigned char>(c))) {
                lex_name_or_string();
                continue;
            }
            if (std::isdigit(static_cast<unsigned char>(c)) ||
                (c == '.' && std::isdigit(static_cast<unsigned char>(peek(1))))) {
                lex_number();
                continue;
            }
            if (c == '"' || c == '\'') {
                lex_string(pos_, pos_);
                continue;
            }
            lex_op();
        }
        if (!brackets_.empty()) {
            const auto& open = bracket_tokens_.back();
            throw SyntaxError{"'" + std::string(1, brackets_.back()) + "' was never closed", open.line,
                              open.col};
        }
        if (line_has_tokens_) {
            emit(TokenKind::newline, src_.size(), src_.size());
        }
        while (indents_.size() > 1) {
            indents_.pop_back();
            emit(TokenKind::dedent, src_.size(), src_.size());
        }
        emit(TokenKind::end_marker, src_.size(), src_.size());
    }

    void skip_comment() {
        if (peek() != '#') {
            return;
        }
        while (pos_ < src_.size() && src_[pos_] != '\n' && src_[pos_] != '\r') {
            ++pos_;
        }
    }

    void consume_line_end() {
        if (peek() == '\r' && peek(1) == '\n') {
            pos_ += 2;
        } else {
            ++pos_;
        }
        newline_at(pos_);
    }

    void lex_name_or_string() {
        const size_t begin = pos_;
        while (pos_ < src_.size() && is_ident_char(static_cast<unsigned char>(src_[pos_]))) {
            ++pos_;
        }
        const auto word = src_.substr(begin, pos_ - begin);
        if ((peek() == '"' || peek() == '\'') && is_string_prefix(word)) {
            lex_string(begin, pos_);
            return;
        }
        emit(TokenKind::name, begin, pos_);
    }

    void lex_string(size_t begin, size_t quote_pos) {
        pos_ = quote_pos;
        const char q = src_[pos_];
        const bool triple = peek(1) == q && peek(2) == q;
        const int start_line = line_;
        const size_t start_line_start = line_start_;
        pos_ += triple ? 3 : 1;
        while (true) {
            if (pos_ >= src_.size()) {
                throw SyntaxError{triple ? "unterminated triple-quoted string literal"
                                         : "unterminated string literal",
                                  start_line, static_cast<int>(begin - start_line_start)};
            }
            const char c = src_[pos_];
            if (c == '\\') {
                // in raw strings the backslash is kept but still shields the next char
                if (pos_ + 1 < src_.size()) {
                    const char n = src_[pos_ + 1];
                    pos_ += 2;
                    if (n == '\n') {
                        newline_at(pos_);
                    } else if (n == '\r') {
                        if (peek() == '\n') {
                            ++pos_;
                        }
                        newline_at(pos_);
                    }
                    continue;
                }
                ++pos_;
                continue;
            }
            if (c == '\n' || c == '\r') {
                if (!triple) {
                    throw SyntaxError{"unterminated string literal", start_line,
                                      static_cast<int>(begin - start_line_start)};
                }
                consume_line_end();
                continue;
            }
            if (c == q) {
                if (!triple) {
                    ++pos_;
                    break;
                }
                if (peek(1) == q && peek(2) == q) {
                    pos_ += 3;
                    break;
                }
            }
            ++pos_;
        }
        // tokens spanning lines report their starting position
        Token t;
        t.kind = TokenKind::string;
        t.text = src_.substr(begin, pos_ - begin);
        t.begin = begin;
        t.end = pos_;
        t.line = start_line;
        t.col = static_cast<int>(begin - start_line_start);
        out_.tokens.push_back(t);
        line_has_tokens_ = true;
    }

    bool digits(int (*pred)(int), bool allow_leading_underscore) {
        // digit ( '_'? digit )*
        bool any = false;
        while (pos_ < src_.size()) {
            const char c = src_[pos_];
            if (pred(static_cast<unsigned char>(c))) {
                any = true;
                ++pos_;
            } else if (c == '_' && (any || allow_leading_underscore) && pos_ + 1 < src_.size() &&
                       pred(static_cast<unsigned char>(src_[pos_ + 1]))) {
                pos_ += 2;
                any = true;
            } else {
                break;
            }
        }
        return any;
    }

    static int is_bin(int c) { return c == '0' || c == '1'; }
    static int is_oct(int c) { return c >= '0' && c <= '7'; }
    static int is_dec(int c) { return std::isdigit(c); }
    static int is_hex(int c) { return std::isxdigit(c); }

    void lex_number() {
        const size_t begin = pos_;
        const char c = peek();
        if (c == '0' && (peek(1) == 'x' || peek(1) == 'X' || peek(1) == 'o' || peek(1) == 'O' ||
                         peek(1) == 'b' || peek(1) == 'B')) {
            const char kind = static_cast<char>(std::tolower(static_cast<unsigned char>(peek(1))));
            pos_ += 2;
            const bool ok = kind == 'x'   ? digits(is_hex, true)
                            : kind == 'o' ? digits(is_oct, true)
                                          : digits(is_bin, true);
            if (!ok) {
                fail("invalid number literal", begin);
            }
        } else {
            bool is_float = false;
            if (c != '.') {
                digits(is_dec, false);
            }
            const auto int_part = src_.substr(begin, pos_ - begin);
            if (peek() == '.') {
                is_float = true;
                ++pos_;
                if (std::isdigit(static_cast<unsigned char>(peek()))) {
                    digits(is_dec, false);
                }
            }
            if (peek() == 'e' || peek() == 'E') {
                const size_t save = pos_;
                ++pos_;
                if (peek() == '+' || peek() == '-') {
                    ++pos_;
                }
                if (!std::isdigit(static_cast<unsigned char>(peek()))) {
                    pos_ = save;
                    fail("invalid decimal literal", begin);
                }
                digits(is_dec, false);
                is_float = true;
            }
            if (peek() == 'j' || peek() == 'J') {
                ++pos_;
                is_float = true;
            }
            if (!is_float && int_part.size() > 1 && int_part[0] == '0' &&
                int_part.find_first_not_of("0_") != std::string_view::npos) {
                fail("leading zeros in decimal integer literals are not permitted", begin);
            }
        }
        if (peek() == '_') {
            fail("invalid decimal literal", begin);
        }
        if (is_ident_start(static_cast<unsigned char>(peek()))) {
            // 1if x else y is legal but deprecated; anything else glued to a number is not
            const auto rest = src_.substr(pos_);
            const bool keyword_follows =
                rest.substr(0, 2) == "if" || rest.substr(0, 2) == "or" || rest.substr(0, 3) == "and" ||
                rest.substr(0, 4) == "else" || rest.substr(0, 2) == "in" || rest.substr(0, 2) == "is" ||
                rest.substr(0, 3) == "not" || rest.substr(0, 3) == "for";
            if (!keyword_follows) {
                fail("invalid decimal literal", begin);
            }
        }
        emit(TokenKind::number, begin, pos_);
    }

    void lex_op() {
        const size_t begin = pos_;
        const auto rest = src_.substr(pos_);
        for (auto op : kOps3) {
            if (rest.substr(0, 3) == op) {
                pos_ += 3;
                emit(TokenKind::op, begin, pos_);
                return;
            }
        }
        for (auto op : kOps2) {
            if (rest.substr(0, 2) == op) {
                pos_ += 2;
                emit(TokenKind::op, begin, pos_);
                return;
            }
        }
        const char c = rest[0];
        if (kOps1.find(c) == std::string_view::npos) {
            if (c == '!') {
                fail("invalid syntax", begin);
            }
            fail(std::string("invalid character '") + c + "'", begin);
        }
        ++pos_;
        emit(TokenKind::op, begin, pos_);
        if (c == '(' || c == '[' || c == '{') {
            brackets_.push_back(c);
            bracket_tokens_.push_back(out_.tokens.back());
        } else if (c == ')' || c == ']' || c == '}') {
            const char want = c == ')' ? '(' : c == ']' ? '[' : '{';
            if (brackets_.empty()) {
                fail(std::string("unmatched '") + c + "'", begin);
            }
            if (brackets_.back() != want) {
                fail(std::string("closing parenthesis '") + c + "' does not match opening parenthesis '" +
                         brackets_.back() + "'",
                     begin);
            }
            brackets_.pop_back();
            bracket_tokens_.pop_back();
        }
    }
};

} // namespace

TokenStream tokenize(std::string_view source) { return Lexer(source).run(); }

} // namespace unitsynth::py
