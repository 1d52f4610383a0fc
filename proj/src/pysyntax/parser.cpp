#include "unitsynth/pysyntax/parser.hpp"

#include "unitsynth/common/text.hpp"

#include <algorithm>
#include <array>
#include <cctype>

namespace unitsynth::py {

namespace {

enum class ExprKind {
    name,
    attribute,
    subscript,
    starred,
    tuple,
    list,
    call,
    literal,
    named,
    lambda,
    yield,
    comprehension,
    other,
};

struct ExprInfo {
    ExprKind kind = ExprKind::other;
    bool assignable = false;
    bool parenthesized = false;
    bool deletable = false;
};

const char* describe(ExprKind k) {
    switch (k) {
    case ExprKind::call: return "function call";
    case ExprKind::literal: return "literal";
    case ExprKind::named: return "named expression";
    case ExprKind::lambda: return "lambda";
    case ExprKind::yield: return "yield expression";
    case ExprKind::comprehension: return "comprehension";
    case ExprKind::starred: return "starred";
    default: return "expression";
    }
}

bool string_has_prefix_char(std::string_view tok, char want) {
    for (char c : tok) {
        if (c == '"' || c == '\'') {
            return false;
        }
        if (std::tolower(static_cast<unsigned char>(c)) == want) {
            return true;
        }
    }
    return false;
}


struct LiteralParts {
    std::string_view prefix;
    std::string_view body; // between the quotes
};

LiteralParts split_literal(std::string_view tok) {
    size_t q = 0;
    while (q < tok.size() && tok[q] != '"' && tok[q] != '\'') {
        ++q;
    }
    const auto quotes = tok.substr(q);
    const size_t ql = quotes.size() >= 6 && quotes[1] == quotes[0] && quotes[2] == quotes[0] ? 3 : 1;
    return {tok.substr(0, q), quotes.substr(ql, quotes.size() - 2 * ql)};
}

// Escape sequences that the literal decoder rejects: truncated \x, \u, \U
// and malformed \N{...}.
std::optional<std::string> bad_escape(std::string_view body, bool bytes) {
    for (size_t i = 0; i + 1 < body.size(); ++i) {
        if (body[i] != '\\') {
            continue;
        }
        const char e = body[i + 1];
        size_t need = 0;
        if (e == 'x') {
            need = 2;
        } else if (!bytes && e == 'u') {
            need = 4;
        } else if (!bytes && e == 'U') {
            need = 8;
        } else if (!bytes && e == 'N') {
            if (i + 2 >= body.size() || body[i + 2] != '{' ||
                body.find('}', i + 3) == std::string_view::npos || body.find('}', i + 3) == i + 3) {
                return std::string("malformed \\N character escape");
            }
        }
        for (size_t k = 0; k < need; ++k) {
            if (i + 2 + k >= body.size() || !std::isxdigit(static_cast<unsigned char>(body[i + 2 + k]))) {
                return std::string("truncated \\") + e + " escape";
            }
        }
        ++i; // skip the escaped character
    }
    return std::nullopt;
}

} // namespace

// defined after the parser; validates f-string replacement fields
static std::optional<std::string> check_fstring(std::string_view body);

namespace {

class Parser {
public:
    Parser(std::string_view src, std::vector<Token> tokens) : src_(src), toks_(std::move(tokens)) {}

    Module run() {
        Module m;
        while (!at(TokenKind::end_marker)) {
            if (at(TokenKind::indent)) {
                fail("unexpected indent");
            }
            parse_statement(m.body);
        }
        m.tokens = std::move(toks_);
        return m;
    }

private:
    std::string_view src_;
    std::vector<Token> toks_;
    size_t pos_ = 0;

    // ---------- token helpers ----------
    const Token& cur() const { return toks_[pos_]; }
    const Token& peek(size_t k) const {
        return toks_[std::min(pos_ + k, toks_.size() - 1)];
    }
    bool at(TokenKind k) const { return cur().kind == k; }
    bool at_op(std::string_view op) const { return cur().kind == TokenKind::op && cur().text == op; }
    bool at_kw(std::string_view kw) const { return cur().kind == TokenKind::name && cur().text == kw; }
    bool peek_op(size_t k, std::string_view op) const {
        const auto& t = peek(k);
        return t.kind == TokenKind::op && t.text == op;
    }
    bool peek_kw(size_t k, std::string_view kw) const {
        const auto& t = peek(k);
        return t.kind == TokenKind::name && t.text == kw;
    }

    [[noreturn]] void fail(const std::string& msg) const { fail_at(cur(), msg); }
    [[noreturn]] static void fail_at(const Token& t, const std::string& msg) {
        throw SyntaxError{msg, t.line, t.col};
    }

    const Token& advance() { return toks_[pos_++]; }

    void expect_op(std::string_view op) {
        if (!at_op(op)) {
            fail("expected '" + std::string(op) + "'");
        }
        ++pos_;
    }
    void expect_kw(std::string_view kw) {
        if (!at_kw(kw)) {
            fail("expected '" + std::string(kw) + "'");
        }
        ++pos_;
    }
    std::string expect_name() {
        if (!at(TokenKind::name) || is_keyword(cur().text)) {
            fail("invalid syntax: expected a name");
        }
        return std::string(advance().text);
    }

    bool can_start_expression() const {
        const auto& t = cur();
        switch (t.kind) {
        case TokenKind::name:
            if (!is_keyword(t.text)) {
                return true;
            }
            return t.text == "None" || t.text == "True" || t.text == "False" || t.text == "not" ||
                   t.text == "lambda" || t.text == "await";
        case TokenKind::number:
        case TokenKind::string:
            return true;
        case TokenKind::op:
            return t.text == "(" || t.text == "[" || t.text == "{" || t.text == "-" || t.text == "+" ||
                   t.text == "~" || t.text == "..." || t.text == "*";
        default:
            return false;
        }
    }

    bool at_simple_end() const { return at(TokenKind::newline) || at_op(";"); }

    Stmt begin_stmt(StmtKind kind) const {
        Stmt s;
        s.kind = kind;
        s.first_token = pos_;
        s.span.begin = cur().begin;
        s.line = cur().line;
        return s;
    }
    void finish_stmt(Stmt& s) const {
        // last consumed token that carries text
        size_t last = pos_ == 0 ? 0 : pos_ - 1;
        while (last > s.first_token &&
               (toks_[last].kind == TokenKind::newline || toks_[last].kind == TokenKind::dedent ||
                toks_[last].kind == TokenKind::indent)) {
            --last;
        }
        s.last_token = last;
        s.span.end = toks_[last].end;
        s.end_line = toks_[last].line;
        // multi-line strings end on a later line than they start
        if (toks_[last].kind == TokenKind::string) {
            s.end_line += static_cast<int>(
                std::count(toks_[last].text.begin(), toks_[last].text.end(), '\n'));
        }
    }

    // ---------- statements ----------
    void parse_statement(std::vector<Stmt>& out) {
        if (at_op("@")) {
            parse_decorated(out);
            return;
        }
        if (at(TokenKind::name)) {
            const auto word = cur().text;
            if (word == "def") {
                auto s = begin_stmt(StmtKind::function_def);
                parse_funcdef(s);
                out.push_back(std::move(s));
                return;
            }
            if (word == "class") {
                auto s = begin_stmt(StmtKind::class_def);
                parse_classdef(s);
                out.push_back(std::move(s));
                return;
            }
            if (word == "async") {
                if (peek_kw(1, "def")) {
                    auto s = begin_stmt(StmtKind::function_def);
                    ++pos_;
                    s.is_async = true;
                    parse_funcdef(s);
                    out.push_back(std::move(s));
                    return;
                }
                if (peek_kw(1, "for") || peek_kw(1, "with")) {
                    auto s = begin_stmt(StmtKind::compound);
                    ++pos_;
                    if (at_kw("for")) {
                        parse_for(s);
                    } else {
                        parse_with(s);
                    }
                    finish_stmt(s);
                    out.push_back(std::move(s));
                    return;
                }
                fail("invalid syntax");
            }
            if (word == "if" || word == "while" || word == "for" || word == "try" || word == "with") {
                auto s = begin_stmt(StmtKind::compound);
                if (word == "if") {
                    parse_if(s);
                } else if (word == "while") {
                    parse_while(s);
                } else if (word == "for") {
                    parse_for(s);
                } else if (word == "try") {
                    parse_try(s);
                } else {
                    parse_with(s);
                }
                finish_stmt(s);
                out.push_back(std::move(s));
                return;
            }
            if (word == "match" && try_parse_match(out)) {
                return;
            }
            if (word == "elif" || word == "else" || word == "except" || word == "finally") {
                fail("invalid syntax");
            }
        }
        parse_simple_stmts(out);
    }

    void parse_decorated(std::vector<Stmt>& out) {
        Stmt s = begin_stmt(StmtKind::function_def);
        while (at_op("@")) {
            ++pos_;
            parse_named_expression();
            if (!at(TokenKind::newline)) {
                fail("invalid syntax");
            }
            ++pos_;
        }
        if (at_kw("def")) {
            parse_funcdef(s);
        } else if (at_kw("async") && peek_kw(1, "def")) {
            ++pos_;
            s.is_async = true;
            parse_funcdef(s);
        } else if (at_kw("class")) {
            s.kind = StmtKind::class_def;
            parse_classdef(s);
        } else {
            fail("invalid syntax");
        }
        out.push_back(std::move(s));
    }

    void parse_block(std::vector<Stmt>& body) {
        if (at(TokenKind::newline)) {
            ++pos_;
            if (!at(TokenKind::indent)) {
                fail("expected an indented block");
            }
            ++pos_;
            while (!at(TokenKind::dedent) && !at(TokenKind::end_marker)) {
                if (at(TokenKind::indent)) {
                    fail("unexpected indent");
                }
                parse_statement(body);
            }
            if (at(TokenKind::dedent)) {
                ++pos_;
            }
            return;
        }
        if (at(TokenKind::end_marker) || at(TokenKind::indent) || at(TokenKind::dedent)) {
            fail("expected an indented block");
        }
        parse_simple_stmts(body);
    }

    void parse_type_params() {
        // PEP 695 type parameter list; validated for balance only
        expect_op("[");
        if (at_op("]")) {
            fail("Type parameter list cannot be empty");
        }
        while (!at_op("]")) {
            if (at_op("*") || at_op("**")) {
                ++pos_;
            }
            expect_name();
            if (at_op(":")) {
                ++pos_;
                parse_expression();
            }
            if (at_op("=")) {
                ++pos_;
                parse_expression();
            }
            if (!at_op(",")) {
                break;
            }
            ++pos_;
        }
        expect_op("]");
    }

    void parse_funcdef(Stmt& s) {
        s.header.begin = (s.is_async ? toks_[pos_ - 1] : cur()).begin;
        expect_kw("def");
        s.name = expect_name();
        if (at_op("[")) {
            parse_type_params();
        }
        expect_op("(");
        s.params = parse_params(")", true);
        expect_op(")");
        if (at_op("->")) {
            ++pos_;
            parse_expression();
        }
        if (!at_op(":")) {
            fail("expected ':'");
        }
        s.header.end = cur().end;
        ++pos_;
        parse_block(s.body);
        finish_stmt(s);
        detect_docstring(s);
    }

    void detect_docstring(Stmt& s) {
        if (s.body.empty()) {
            return;
        }
        const auto& first = s.body.front();
        if (first.kind != StmtKind::simple) {
            return;
        }
        for (size_t i = first.first_token; i <= first.last_token; ++i) {
            const auto& t = toks_[i];
            if (t.kind != TokenKind::string || string_has_prefix_char(t.text, 'f') ||
                string_has_prefix_char(t.text, 'b')) {
                return;
            }
        }
        s.docstring = Span{first.span.begin, first.span.end};
    }

    void parse_classdef(Stmt& s) {
        s.header.begin = cur().begin;
        expect_kw("class");
        s.name = expect_name();
        if (at_op("[")) {
            parse_type_params();
        }
        if (at_op("(")) {
            ++pos_;
            parse_call_args(false);
        }
        if (!at_op(":")) {
            fail("expected ':'");
        }
        s.header.end = cur().end;
        ++pos_;
        parse_block(s.body);
        finish_stmt(s);
        detect_docstring(s);
    }

    // Shared by def (annotations allowed) and lambda.
    std::vector<Param> parse_params(std::string_view closer, bool annotations) {
        std::vector<Param> params;
        bool seen_default = false;
        bool seen_star = false;
        bool seen_slash = false;
        bool bare_star_pending = false;
        while (!at_op(closer)) {
            if (at_op("/")) {
                if (seen_slash) {
                    fail("/ may appear only once");
                }
                if (seen_star) {
                    fail("/ must be ahead of *");
                }
                if (params.empty()) {
                    fail("at least one argument must precede /");
                }
                seen_slash = true;
                for (auto& p : params) {
                    p.kind = ParamKind::positional_only;
                }
                ++pos_;
            } else if (at_op("**")) {
                ++pos_;
                Param p{expect_name(), ParamKind::var_keyword, false};
                if (annotations && at_op(":")) {
                    ++pos_;
                    parse_expression();
                }
                if (at_op("=")) {
                    fail("var-keyword argument cannot have default value");
                }
                params.push_back(std::move(p));
                if (at_op(",")) {
                    ++pos_;
                }
                if (!at_op(closer)) {
                    fail("arguments cannot follow var-keyword argument");
                }
                break;
            } else if (at_op("*")) {
                if (seen_star) {
                    fail("* argument may appear only once");
                }
                seen_star = true;
                ++pos_;
                if (at_op(",") || at_op(closer)) {
                    bare_star_pending = true;
                } else {
                    Param p{expect_name(), ParamKind::var_positional, false};
                    if (annotations && at_op(":")) {
                        ++pos_;
                        if (at_op("*")) {
                            ++pos_;
                        }
                        parse_expression();
                    }
                    if (at_op("=")) {
                        fail("var-positional argument cannot have default value");
                    }
                    params.push_back(std::move(p));
                }
            } else {
                Param p{expect_name(), seen_star ? ParamKind::keyword_only : ParamKind::regular, false};
                if (annotations && at_op(":")) {
                    ++pos_;
                    parse_expression();
                }
                if (at_op("=")) {
                    ++pos_;
                    parse_expression();
                    p.has_default = true;
                    if (!seen_star) {
                        seen_default = true;
                    }
                } else if (seen_default && !seen_star) {
                    fail("parameter without a default follows parameter with a default");
                }
                if (seen_star) {
                    bare_star_pending = false;
                }
                params.push_back(std::move(p));
            }
            if (at_op(",")) {
                ++pos_;
                continue;
            }
            if (!at_op(closer)) {
                fail("invalid syntax in parameter list");
            }
        }
        if (bare_star_pending) {
            fail("named arguments must follow bare *");
        }
        return params;
    }

    void parse_if(Stmt& s) {
        expect_kw("if");
        parse_named_expression();
        expect_op(":");
        parse_block(s.body);
        while (at_kw("elif")) {
            ++pos_;
            parse_named_expression();
            expect_op(":");
            parse_block(s.body);
        }
        if (at_kw("else")) {
            ++pos_;
            expect_op(":");
            parse_block(s.body);
        }
    }

    void parse_while(Stmt& s) {
        expect_kw("while");
        parse_named_expression();
        expect_op(":");
        parse_block(s.body);
        if (at_kw("else")) {
            ++pos_;
            expect_op(":");
            parse_block(s.body);
        }
    }

    void parse_for(Stmt& s) {
        expect_kw("for");
        parse_target_list("for");
        expect_kw("in");
        parse_star_expressions();
        expect_op(":");
        parse_block(s.body);
        if (at_kw("else")) {
            ++pos_;
            expect_op(":");
            parse_block(s.body);
        }
    }

    void parse_try(Stmt& s) {
        expect_kw("try");
        expect_op(":");
        parse_block(s.body);
        bool any_except = false;
        bool bare_seen = false;
        std::optional<bool> star_group;
        while (at_kw("except")) {
            const Token& kw = cur();
            ++pos_;
            if (bare_seen) {
                fail_at(kw, "default 'except:' must be last");
            }
            bool star = false;
            if (at_op("*")) {
                star = true;
                ++pos_;
            }
            if (star_group && *star_group != star) {
                fail_at(kw, "cannot have both 'except' and 'except*' on the same 'try'");
            }
            star_group = star;
            if (at_op(":")) {
                if (star) {
                    fail("expected one or more exception types");
                }
                bare_seen = true;
            } else {
                parse_expression();
                if (at_op(",")) {
                    // Python 3.14 unparenthesized tuples are not accepted here
                    fail("multiple exception types must be parenthesized");
                }
                if (at_kw("as")) {
                    ++pos_;
                    expect_name();
                }
            }
            expect_op(":");
            parse_block(s.body);
            any_except = true;
        }
        if (at_kw("else")) {
            if (!any_except) {
                fail("invalid syntax");
            }
            ++pos_;
            expect_op(":");
            parse_block(s.body);
        }
        bool has_finally = false;
        if (at_kw("finally")) {
            ++pos_;
            expect_op(":");
            parse_block(s.body);
            has_finally = true;
        }
        if (!any_except && !has_finally) {
            fail("expected 'except' or 'finally' block");
        }
    }

    void parse_with_item() {
        parse_expression();
        if (at_kw("as")) {
            ++pos_;
            auto info = parse_single_target();
            if (!info.assignable) {
                fail(std::string("cannot assign to ") + describe(info.kind));
            }
        }
    }

    void parse_with(Stmt& s) {
        expect_kw("with");
        bool done = false;
        if (at_op("(")) {
            const size_t save = pos_;
            try {
                ++pos_;
                while (true) {
                    parse_with_item();
                    if (at_op(",")) {
                        ++pos_;
                        if (at_op(")")) {
                            break;
                        }
                        continue;
                    }
                    break;
                }
                expect_op(")");
                if (!at_op(":")) {
                    throw SyntaxError{};
                }
                done = true;
            } catch (const SyntaxError&) {
                pos_ = save;
            }
        }
        if (!done) {
            while (true) {
                parse_with_item();
                if (!at_op(",")) {
                    break;
                }
                ++pos_;
            }
        }
        expect_op(":");
        parse_block(s.body);
    }

    // `match` is a soft keyword: the statement is only a match statement once
    // `match <subject>: NEWLINE INDENT` has been seen.
    bool try_parse_match(std::vector<Stmt>& out) {
        const size_t save = pos_;
        auto s = begin_stmt(StmtKind::compound);
        try {
            ++pos_;
            if (!can_start_expression()) {
                throw SyntaxError{};
            }
            parse_star_named_expressions();
            expect_op(":");
            if (!at(TokenKind::newline) || peek(1).kind != TokenKind::indent) {
                throw SyntaxError{};
            }
            pos_ += 2;
        } catch (const SyntaxError&) {
            pos_ = save;
            return false;
        }
        if (!at_kw("case")) {
            fail("expected 'case'");
        }
        while (at_kw("case")) {
            ++pos_;
            parse_pattern();
            if (at_kw("if")) {
                ++pos_;
                parse_named_expression();
            }
            expect_op(":");
            parse_block(s.body);
        }
        if (!at(TokenKind::dedent)) {
            fail("expected 'case'");
        }
        ++pos_;
        finish_stmt(s);
        out.push_back(std::move(s));
        return true;
    }

    // Patterns are checked for token sanity only: a non-empty token run up to
    // the guard or ':' at bracket depth zero.
    void parse_pattern() {
        int depth = 0;
        size_t count = 0;
        while (true) {
            if (at(TokenKind::newline) || at(TokenKind::end_marker)) {
                fail("expected ':'");
            }
            if (depth == 0 && (at_op(":") || at_kw("if"))) {
                break;
            }
            if (at_op("(") || at_op("[") || at_op("{")) {
                ++depth;
            } else if (at_op(")") || at_op("]") || at_op("}")) {
                --depth;
            } else if (at(TokenKind::name) && is_keyword(cur().text) && cur().text != "None" &&
                       cur().text != "True" && cur().text != "False" && cur().text != "as" &&
                       !(depth > 0 && cur().text == "if")) {
                fail("invalid pattern");
            }
            ++pos_;
            ++count;
        }
        if (count == 0) {
            fail("invalid pattern");
        }
    }

    void parse_simple_stmts(std::vector<Stmt>& out) {
        while (true) {
            auto s = begin_stmt(StmtKind::simple);
            parse_simple_stmt(s);
            finish_stmt(s);
            out.push_back(std::move(s));
            if (at_op(";")) {
                ++pos_;
                if (at(TokenKind::newline)) {
                    break;
                }
                continue;
            }
            break;
        }
        if (!at(TokenKind::newline)) {
            fail("invalid syntax");
        }
        ++pos_;
    }

    void parse_simple_stmt(Stmt& s) {
        if (at(TokenKind::name)) {
            const auto word = cur().text;
            if (word == "pass" || word == "break" || word == "continue") {
                ++pos_;
                return;
            }
            if (word == "return") {
                ++pos_;
                if (!at_simple_end()) {
                    parse_star_expressions();
                }
                return;
            }
            if (word == "raise") {
                ++pos_;
                if (!at_simple_end()) {
                    parse_expression();
                    if (at_kw("from")) {
                        ++pos_;
                        parse_expression();
                    }
                }
                return;
            }
            if (word == "global" || word == "nonlocal") {
                ++pos_;
                expect_name();
                while (at_op(",")) {
                    ++pos_;
                    expect_name();
                }
                return;
            }
            if (word == "del") {
                ++pos_;
                parse_del_targets();
                return;
            }
            if (word == "assert") {
                ++pos_;
                parse_expression();
                if (at_op(",")) {
                    ++pos_;
                    parse_expression();
                }
                return;
            }
            if (word == "import") {
                s.kind = StmtKind::import_stmt;
                s.import = parse_import();
                return;
            }
            if (word == "from") {
                s.kind = StmtKind::from_import;
                s.import = parse_from_import();
                return;
            }
            if (word == "type" && peek(1).kind == TokenKind::name && !is_keyword(peek(1).text) &&
                (peek_op(2, "=") || peek_op(2, "["))) {
                pos_ += 2;
                if (at_op("[")) {
                    parse_type_params();
                }
                expect_op("=");
                parse_expression();
                return;
            }
        }
        parse_expression_statement();
    }

    ImportInfo parse_import() {
        expect_kw("import");
        ImportInfo info;
        while (true) {
            ImportedName n{parse_dotted_name(), std::nullopt};
            if (at_kw("as")) {
                ++pos_;
                n.alias = expect_name();
            }
            info.names.push_back(std::move(n));
            if (!at_op(",")) {
                break;
            }
            ++pos_;
        }
        return info;
    }

    std::string parse_dotted_name() {
        std::string name = expect_name();
        while (at_op(".")) {
            ++pos_;
            name += ".";
            name += expect_name();
        }
        return name;
    }

    ImportInfo parse_from_import() {
        expect_kw("from");
        ImportInfo info;
        while (at_op(".") || at_op("...")) {
            info.level += static_cast<int>(cur().text.size());
            ++pos_;
        }
        if (!at_kw("import")) {
            info.module = parse_dotted_name();
        } else if (info.level == 0) {
            fail("invalid syntax");
        }
        expect_kw("import");
        if (at_op("*")) {
            ++pos_;
            info.star = true;
            return info;
        }
        const bool paren = at_op("(");
        if (paren) {
            ++pos_;
        }
        while (true) {
            ImportedName n{expect_name(), std::nullopt};
            if (at_kw("as")) {
                ++pos_;
                n.alias = expect_name();
            }
            info.names.push_back(std::move(n));
            if (!at_op(",")) {
                break;
            }
            ++pos_;
            if (paren && at_op(")")) {
                break;
            }
            if (!paren && at_simple_end()) {
                fail("trailing comma not allowed without surrounding parentheses");
            }
        }
        if (paren) {
            expect_op(")");
        }
        return info;
    }

    void parse_del_targets() {
        while (true) {
            auto info = parse_expression();
            if (!info.deletable) {
                fail(std::string("cannot delete ") + describe(info.kind));
            }
            if (!at_op(",")) {
                break;
            }
            ++pos_;
            if (at_simple_end()) {
                break;
            }
        }
    }

    static bool is_augassign(const Token& t) {
        static constexpr std::array<std::string_view, 13> kOps = {
            "+=", "-=", "*=", "/=", "//=", "%=", "@=", "&=", "|=", "^=", ">>=", "<<=", "**="};
        return t.kind == TokenKind::op && std::find(kOps.begin(), kOps.end(), t.text) != kOps.end();
    }

    void parse_expression_statement() {
        if (at_kw("yield")) {
            parse_yield_expr();
            if (at_op("=")) {
                fail("assignment to yield expression not possible");
            }
            return;
        }
        const Token& start = cur();
        auto lhs = parse_star_expressions();
        if (at_op(":")) {
            if (lhs.kind == ExprKind::tuple || lhs.kind == ExprKind::list) {
                fail_at(start, "only single target (not tuple) can be annotated");
            }
            if (!(lhs.kind == ExprKind::name || lhs.kind == ExprKind::attribute ||
                  lhs.kind == ExprKind::subscript)) {
                fail_at(start, "illegal target for annotation");
            }
            ++pos_;
            parse_expression();
            if (at_op("=")) {
                ++pos_;
                parse_assignment_rhs();
            }
            return;
        }
        if (is_augassign(cur())) {
            if (!(lhs.kind == ExprKind::name || lhs.kind == ExprKind::attribute ||
                  lhs.kind == ExprKind::subscript)) {
                fail_at(start, std::string("'") + describe(lhs.kind) +
                                   "' is an illegal expression for augmented assignment");
            }
            ++pos_;
            parse_assignment_rhs();
            return;
        }
        while (at_op("=")) {
            if (!lhs.assignable) {
                fail_at(start, std::string("cannot assign to ") + describe(lhs.kind));
            }
            ++pos_;
            lhs = parse_assignment_rhs();
        }
    }

    ExprInfo parse_assignment_rhs() {
        if (at_kw("yield")) {
            return parse_yield_expr();
        }
        return parse_star_expressions();
    }

    // ---------- expressions ----------
    ExprInfo parse_yield_expr() {
        expect_kw("yield");
        if (at_kw("from")) {
            ++pos_;
            parse_expression();
        } else if (can_start_expression()) {
            parse_star_expressions();
        }
        return {ExprKind::yield, false, false, false};
    }

    static ExprInfo make_sequence(ExprKind kind, const std::vector<ExprInfo>& elems) {
        // several starred targets parse; the compiler rejects them later
        ExprInfo info{kind, true, false, true};
        for (const auto& e : elems) {
            info.assignable = info.assignable && e.assignable;
            info.deletable = info.deletable && e.deletable;
        }
        return info;
    }

    ExprInfo parse_star_expressions() {
        auto first = parse_star_expression();
        if (!at_op(",")) {
            return first;
        }
        std::vector<ExprInfo> elems{first};
        while (at_op(",")) {
            ++pos_;
            if (!can_start_expression()) {
                break;
            }
            elems.push_back(parse_star_expression());
        }
        return make_sequence(ExprKind::tuple, elems);
    }

    ExprInfo parse_star_expression() {
        if (at_op("*")) {
            ++pos_;
            auto inner = parse_bitwise_or();
            return {ExprKind::starred, inner.assignable, false, false};
        }
        return parse_expression();
    }

    ExprInfo parse_star_named_expression() {
        if (at_op("*")) {
            ++pos_;
            auto inner = parse_bitwise_or();
            return {ExprKind::starred, inner.assignable, false, false};
        }
        return parse_named_expression();
    }

    ExprInfo parse_star_named_expressions() {
        auto first = parse_star_named_expression();
        if (!at_op(",")) {
            return first;
        }
        std::vector<ExprInfo> elems{first};
        while (at_op(",")) {
            ++pos_;
            if (!can_start_expression()) {
                break;
            }
            elems.push_back(parse_star_named_expression());
        }
        return make_sequence(ExprKind::tuple, elems);
    }

    ExprInfo parse_named_expression() {
        if (at(TokenKind::name) && !is_keyword(cur().text) && peek_op(1, ":=")) {
            pos_ += 2;
            parse_expression();
            return {ExprKind::named, false, false, false};
        }
        const Token& start = cur();
        auto e = parse_expression();
        if (at_op(":=")) {
            fail_at(start, std::string("cannot use assignment expressions with ") + describe(e.kind));
        }
        return e;
    }

    ExprInfo parse_expression() {
        if (at_kw("lambda")) {
            ++pos_;
            parse_params(":", false);
            expect_op(":");
            parse_expression();
            return {ExprKind::lambda, false, false, false};
        }
        auto e = parse_disjunction();
        if (at_kw("if")) {
            ++pos_;
            parse_disjunction();
            if (!at_kw("else")) {
                fail("expected 'else' after 'if' expression");
            }
            ++pos_;
            parse_expression();
            return {ExprKind::other, false, false, false};
        }
        return e;
    }

    ExprInfo parse_disjunction() {
        auto e = parse_conjunction();
        while (at_kw("or")) {
            ++pos_;
            parse_conjunction();
            e = {};
        }
        return e;
    }

    ExprInfo parse_conjunction() {
        auto e = parse_inversion();
        while (at_kw("and")) {
            ++pos_;
            parse_inversion();
            e = {};
        }
        return e;
    }

    ExprInfo parse_inversion() {
        if (at_kw("not")) {
            ++pos_;
            parse_inversion();
            return {};
        }
        return parse_comparison();
    }

    bool at_comparison_op() const {
        if (cur().kind == TokenKind::op) {
            const auto t = cur().text;
            return t == "<" || t == ">" || t == "==" || t == ">=" || t == "<=" || t == "!=";
        }
        return at_kw("in") || at_kw("is") || (at_kw("not") && peek_kw(1, "in"));
    }

    ExprInfo parse_comparison() {
        auto e = parse_bitwise_or();
        while (at_comparison_op()) {
            if (at_kw("not")) {
                pos_ += 2;
            } else if (at_kw("is")) {
                ++pos_;
                if (at_kw("not")) {
                    ++pos_;
                }
            } else {
                ++pos_;
            }
            parse_bitwise_or();
            e = {};
        }
        return e;
    }

    template <typename Next>
    ExprInfo parse_binary(std::initializer_list<std::string_view> ops, Next next) {
        auto e = (this->*next)();
        while (cur().kind == TokenKind::op &&
               std::find(ops.begin(), ops.end(), cur().text) != ops.end()) {
            ++pos_;
            (this->*next)();
            e = {};
        }
        return e;
    }

    ExprInfo parse_bitwise_or() { return parse_binary({"|"}, &Parser::parse_bitwise_xor); }
    ExprInfo parse_bitwise_xor() { return parse_binary({"^"}, &Parser::parse_bitwise_and); }
    ExprInfo parse_bitwise_and() { return parse_binary({"&"}, &Parser::parse_shift); }
    ExprInfo parse_shift() { return parse_binary({"<<", ">>"}, &Parser::parse_sum); }
    ExprInfo parse_sum() { return parse_binary({"+", "-"}, &Parser::parse_term); }
    ExprInfo parse_term() { return parse_binary({"*", "/", "//", "%", "@"}, &Parser::parse_factor); }

    ExprInfo parse_factor() {
        if (at_op("+") || at_op("-") || at_op("~")) {
            ++pos_;
            parse_factor();
            return {};
        }
        return parse_power();
    }

    ExprInfo parse_power() {
        ExprInfo e;
        if (at_kw("await")) {
            ++pos_;
            parse_primary();
            e = {};
        } else {
            e = parse_primary();
        }
        if (at_op("**")) {
            ++pos_;
            parse_factor();
            return {};
        }
        return e;
    }

    ExprInfo parse_primary() {
        auto e = parse_atom();
        while (true) {
            if (at_op(".")) {
                ++pos_;
                expect_name();
                e = {ExprKind::attribute, true, false, true};
            } else if (at_op("(")) {
                ++pos_;
                parse_call_args();
                e = {ExprKind::call, false, false, false};
            } else if (at_op("[")) {
                ++pos_;
                parse_slices();
                expect_op("]");
                e = {ExprKind::subscript, true, false, true};
            } else {
                break;
            }
        }
        return e;
    }

    // after '('; consumes the closing ')'
    void parse_call_args(bool allow_genexp = true) {
        bool seen_keyword = false;
        bool seen_kwargs = false;
        size_t count = 0;
        while (!at_op(")")) {
            const Token& start = cur();
            if (at_op("**")) {
                ++pos_;
                parse_expression();
                seen_kwargs = true;
            } else if (at_op("*")) {
                if (seen_kwargs) {
                    fail("iterable argument unpacking follows keyword argument unpacking");
                }
                ++pos_;
                parse_expression();
            } else if (at(TokenKind::name) && !is_keyword(cur().text) && peek_op(1, "=")) {
                pos_ += 2;
                parse_expression();
                seen_keyword = true;
            } else {
                auto e = parse_named_expression();
                if (at_op("=")) {
                    fail_at(start, "expression cannot contain assignment, perhaps you meant \"==\"?");
                }
                if (at_kw("for") || (at_kw("async") && peek_kw(1, "for"))) {
                    parse_comprehension_clauses();
                    if (!allow_genexp || count > 0 || !at_op(")")) {
                        fail_at(start, "Generator expression must be parenthesized");
                    }
                    break;
                }
                (void)e;
                if (seen_kwargs) {
                    fail_at(start, "positional argument follows keyword argument unpacking");
                }
                if (seen_keyword) {
                    fail_at(start, "positional argument follows keyword argument");
                }
            }
            ++count;
            if (at_op(",")) {
                ++pos_;
                if (at_op(")")) {
                    break;
                }
                continue;
            }
            if (!at_op(")")) {
                fail("invalid syntax. Perhaps you forgot a comma?");
            }
        }
        expect_op(")");
    }

    void parse_slice() {
        if (!at_op(":")) {
            if (at_op("*")) {
                parse_star_named_expression();
                return;
            }
            parse_named_expression();
            if (!at_op(":")) {
                return;
            }
        }
        expect_op(":");
        if (!at_op(":") && !at_op("]") && !at_op(",")) {
            parse_expression();
        }
        if (at_op(":")) {
            ++pos_;
            if (!at_op("]") && !at_op(",")) {
                parse_expression();
            }
        }
    }

    void parse_slices() {
        if (at_op("]")) {
            fail("invalid syntax");
        }
        while (true) {
            parse_slice();
            if (!at_op(",")) {
                break;
            }
            ++pos_;
            if (at_op("]")) {
                break;
            }
        }
    }

    void parse_comprehension_clauses() {
        while (at_kw("for") || (at_kw("async") && peek_kw(1, "for"))) {
            if (at_kw("async")) {
                ++pos_;
            }
            expect_kw("for");
            parse_target_list("comprehension");
            expect_kw("in");
            parse_disjunction();
            while (at_kw("if")) {
                ++pos_;
                parse_disjunction();
            }
        }
    }

    // Targets stop before `in`, so they are parsed at the primary level.
    ExprInfo parse_single_target() {
        if (at_op("*")) {
            ++pos_;
            auto inner = parse_primary();
            return {ExprKind::starred, inner.assignable, false, false};
        }
        return parse_primary();
    }

    void parse_target_list(const char* where) {
        const Token& start = cur();
        std::vector<ExprInfo> elems{parse_single_target()};
        while (at_op(",")) {
            ++pos_;
            if (at_kw("in")) {
                break;
            }
            elems.push_back(parse_single_target());
        }
        const auto info = elems.size() == 1 && elems[0].kind != ExprKind::starred
                              ? elems[0]
                              : make_sequence(ExprKind::tuple, elems);
        if (!info.assignable) {
            fail_at(start, std::string("cannot assign to ") + describe(info.kind) + " in " + where);
        }
    }

    ExprInfo parse_atom() {
        const Token& t = cur();
        switch (t.kind) {
        case TokenKind::name:
            if (is_keyword(t.text)) {
                if (t.text == "None" || t.text == "True" || t.text == "False") {
                    ++pos_;
                    return {ExprKind::literal, false, false, false};
                }
                fail("invalid syntax");
            }
            ++pos_;
            return {ExprKind::name, true, false, true};
        case TokenKind::number:
            ++pos_;
            return {ExprKind::literal, false, false, false};
        case TokenKind::string: {
            bool any_bytes = false;
            bool any_text = false;
            while (at(TokenKind::string)) {
                const bool bytes = string_has_prefix_char(cur().text, 'b');
                if (bytes) {
                    any_bytes = true;
                } else {
                    any_text = true;
                }
                const auto parts = split_literal(cur().text);
                const bool raw = string_has_prefix_char(cur().text, 'r');
                if (bytes && std::any_of(parts.body.begin(), parts.body.end(),
                                         [](char ch) { return static_cast<unsigned char>(ch) >= 0x80; })) {
                    fail("bytes can only contain ASCII literal characters");
                }
                if (!raw) {
                    if (auto err = bad_escape(parts.body, bytes)) {
                        fail("(unicode error) " + *err);
                    }
                }
                if (string_has_prefix_char(cur().text, 'f')) {
                    if (auto err = check_fstring(parts.body)) {
                        fail("f-string: " + *err);
                    }
                }
                ++pos_;
            }
            if (any_bytes && any_text) {
                fail_at(t, "cannot mix bytes and nonbytes literals");
            }
            return {ExprKind::literal, false, false, false};
        }
        case TokenKind::op:
            if (t.text == "...") {
                ++pos_;
                return {ExprKind::literal, false, false, false};
            }
            if (t.text == "(") {
                return parse_paren();
            }
            if (t.text == "[") {
                return parse_list();
            }
            if (t.text == "{") {
                return parse_brace();
            }
            fail("invalid syntax");
        case TokenKind::newline:
            fail("invalid syntax");
        case TokenKind::indent:
            fail("unexpected indent");
        case TokenKind::dedent:
        case TokenKind::end_marker:
            fail("unexpected EOF while parsing");
        }
        fail("invalid syntax");
    }

    ExprInfo parse_paren() {
        expect_op("(");
        if (at_op(")")) {
            ++pos_;
            return {ExprKind::tuple, true, true, true};
        }
        if (at_kw("yield")) {
            parse_yield_expr();
            expect_op(")");
            return {ExprKind::yield, false, true, false};
        }
        const Token& start = cur();
        auto first = parse_star_named_expression();
        if (at_kw("for") || (at_kw("async") && peek_kw(1, "for"))) {
            if (first.kind == ExprKind::starred) {
                fail_at(start, "iterable unpacking cannot be used in comprehension");
            }
            parse_comprehension_clauses();
            expect_op(")");
            return {ExprKind::comprehension, false, true, false};
        }
        if (at_op(",")) {
            std::vector<ExprInfo> elems{first};
            while (at_op(",")) {
                ++pos_;
                if (at_op(")")) {
                    break;
                }
                elems.push_back(parse_star_named_expression());
            }
            expect_op(")");
            auto info = make_sequence(ExprKind::tuple, elems);
            info.parenthesized = true;
            return info;
        }
        expect_op(")");
        if (first.kind == ExprKind::starred) {
            fail_at(start, "cannot use starred expression here");
        }
        first.parenthesized = true;
        return first;
    }

    ExprInfo parse_list() {
        expect_op("[");
        if (at_op("]")) {
            ++pos_;
            return {ExprKind::list, true, false, true};
        }
        const Token& start = cur();
        auto first = parse_star_named_expression();
        if (at_kw("for") || (at_kw("async") && peek_kw(1, "for"))) {
            if (first.kind == ExprKind::starred) {
                fail_at(start, "iterable unpacking cannot be used in comprehension");
            }
            parse_comprehension_clauses();
            expect_op("]");
            return {ExprKind::comprehension, false, false, false};
        }
        std::vector<ExprInfo> elems{first};
        while (at_op(",")) {
            ++pos_;
            if (at_op("]")) {
                break;
            }
            elems.push_back(parse_star_named_expression());
        }
        expect_op("]");
        return make_sequence(ExprKind::list, elems);
    }

    ExprInfo parse_brace() {
        expect_op("{");
        if (at_op("}")) {
            ++pos_;
            return {ExprKind::literal, false, false, false};
        }
        const Token& start = cur();
        bool is_dict = false;
        if (at_op("**")) {
            ++pos_;
            parse_bitwise_or();
            is_dict = true;
        } else {
            auto key = parse_star_named_expression();
            if (at_op(":")) {
                if (key.kind == ExprKind::starred) {
                    fail_at(start, "cannot use a starred expression in a dictionary key");
                }
                ++pos_;
                parse_expression();
                is_dict = true;
            }
            if (at_kw("for") || (at_kw("async") && peek_kw(1, "for"))) {
                if (key.kind == ExprKind::starred) {
                    fail_at(start, "iterable unpacking cannot be used in comprehension");
                }
                parse_comprehension_clauses();
                expect_op("}");
                return {ExprKind::comprehension, false, false, false};
            }
        }
        while (at_op(",")) {
            ++pos_;
            if (at_op("}")) {
                break;
            }
            if (is_dict) {
                if (at_op("**")) {
                    ++pos_;
                    parse_bitwise_or();
                } else {
                    parse_expression();
                    expect_op(":");
                    parse_expression();
                }
            } else {
                parse_star_named_expression();
            }
        }
        expect_op("}");
        return {ExprKind::literal, false, false, false};
    }
};

} // namespace

namespace {

std::optional<std::string> scan_fstring(std::string_view b, size_t& i, int level, bool spec);

// `i` is at the '{' opening a replacement field; leaves `i` past its '}'.
std::optional<std::string> scan_field(std::string_view b, size_t& i, int level) {
    size_t j = i + 1;
    int depth = 0;
    for (; j < b.size(); ++j) {
        const char d = b[j];
        if (d == '\\') {
            return "expression part cannot include a backslash";
        }
        if (d == '\'' || d == '"') {
            const bool triple = j + 2 < b.size() && b[j + 1] == d && b[j + 2] == d;
            const std::string_view close = triple ? b.substr(j, 3) : b.substr(j, 1);
            const auto end = b.find(close, j + close.size());
            if (end == std::string_view::npos) {
                return "unterminated string";
            }
            if (b.substr(j, end - j).find('\\') != std::string_view::npos) {
                return "expression part cannot include a backslash";
            }
            j = end + close.size() - 1;
            continue;
        }
        if (d == '#') {
            return "expression part cannot include '#'";
        }
        if (d == '(' || d == '[' || d == '{') {
            ++depth;
        } else if (d == ')' || d == ']' || (d == '}' && depth > 0)) {
            if (depth == 0) {
                return std::string("unmatched '") + d + "'";
            }
            --depth;
        } else if (depth == 0 && (d == '}' || d == ':' || (d == '!' && (j + 1 >= b.size() || b[j + 1] != '=')))) {
            break;
        }
    }
    if (j >= b.size()) {
        return "expecting '}'";
    }
    auto expr = trim(b.substr(i + 1, j - i - 1));
    // self-documenting `=` suffix
    if (expr.size() >= 2 && expr.back() == '=' &&
        std::string_view("=!<>").find(expr[expr.size() - 2]) == std::string_view::npos) {
        expr = trim(expr.substr(0, expr.size() - 1));
    }
    if (expr.empty()) {
        return "empty expression not allowed";
    }
    std::string probe = "(";
    probe += expr;
    probe += "\n)\n";
    if (!parse_module(probe).ok()) {
        return "invalid syntax";
    }
    if (b[j] == '!') {
        ++j;
        if (j >= b.size() || (b[j] != 's' && b[j] != 'r' && b[j] != 'a')) {
            return "invalid conversion character: expected 's', 'r', or 'a'";
        }
        ++j;
        if (j >= b.size() || (b[j] != ':' && b[j] != '}')) {
            return "expecting '}'";
        }
    }
    if (b[j] == ':') {
        ++j;
        if (auto err = scan_fstring(b, j, level + 1, true)) {
            return err;
        }
    }
    i = j + 1;
    return std::nullopt;
}

// Literal text of an f-string (level 0) or of a format spec (level > 0,
// stopping with `i` at the '}' that closes the field).
std::optional<std::string> scan_fstring(std::string_view b, size_t& i, int level, bool spec) {
    while (i < b.size()) {
        const char c = b[i];
        if (c == '\\' && i + 2 < b.size() && b[i + 1] == 'N' && b[i + 2] == '{') {
            const auto close = b.find('}', i);
            i = close == std::string_view::npos ? b.size() : close + 1;
            continue;
        }
        if (c == '{') {
            if (i + 1 < b.size() && b[i + 1] == '{') {
                i += 2;
                continue;
            }
            if (level >= 2) {
                return "expressions nested too deeply";
            }
            if (auto err = scan_field(b, i, level)) {
                return err;
            }
            continue;
        }
        if (c == '}') {
            if (spec) {
                return std::nullopt;
            }
            if (i + 1 < b.size() && b[i + 1] == '}') {
                i += 2;
                continue;
            }
            return "single '}' is not allowed";
        }
        ++i;
    }
    if (spec) {
        return "expecting '}'";
    }
    return std::nullopt;
}

} // namespace

static std::optional<std::string> check_fstring(std::string_view body) {
    size_t i = 0;
    return scan_fstring(body, i, 0, false);
}

ParseResult parse_module(std::string_view source) {
    ParseResult result;
    if (!is_valid_utf8(source)) {
        result.error = SyntaxError{"source is not valid UTF-8", 1, 0};
        return result;
    }
    auto stream = tokenize(source);
    if (stream.error) {
        result.error = stream.error;
        return result;
    }
    try {
        result.module = Parser(source, std::move(stream.tokens)).run();
    } catch (const SyntaxError& e) {
        result.error = e;
    }
    return result;
}

bool is_valid_python(std::string_view source) { return parse_module(source).ok(); }

std::string root_package(std::string_view dotted) {
    const auto dot = dotted.find('.');
    return std::string(dotted.substr(0, dot));
}

std::vector<std::string> bound_names(const ImportInfo& info) {
    std::vector<std::string> out;
    const bool from = !info.module.empty() || info.level > 0;
    for (const auto& n : info.names) {
        if (n.alias) {
            out.push_back(*n.alias);
        } else if (from) {
            out.push_back(n.name);
        } else {
            out.push_back(root_package(n.name));
        }
    }
    return out;
}

std::vector<std::string_view> identifiers_in(const Module& m, size_t first, size_t last) {
    std::vector<std::string_view> out;
    for (size_t i = first; i <= last && i < m.tokens.size(); ++i) {
        const auto& t = m.tokens[i];
        if (t.kind == TokenKind::name && !is_keyword(t.text)) {
            out.push_back(t.text);
        }
    }
    return out;
}

const Stmt* find_function(const Module& m, std::string_view name) {
    const Stmt* found = nullptr;
    for (const auto& s : m.body) {
        if (s.kind == StmtKind::function_def && s.name == name) {
            if (found != nullptr) {
                return nullptr;
            }
            found = &s;
        }
    }
    return found;
}

std::string docstring_text(std::string_view source, const Span& docstring) {
    auto lit = source.substr(docstring.begin, docstring.end - docstring.begin);
    // strip prefix letters
    size_t q = 0;
    while (q < lit.size() && lit[q] != '"' && lit[q] != '\'') {
        ++q;
    }
    lit = lit.substr(q);
    size_t quote_len = 1;
    if (lit.size() >= 6 && (lit.substr(0, 3) == "\"\"\"" || lit.substr(0, 3) == "'''")) {
        quote_len = 3;
    }
    // only the first literal of an implicit concatenation is unwrapped
    const auto close = lit.find(lit.substr(0, quote_len), quote_len);
    auto body = lit.substr(quote_len, close == std::string_view::npos ? lit.size() - quote_len
                                                                       : close - quote_len);
    // like inspect.cleandoc: the first line does not take part in dedenting
    const auto nl = body.find('\n');
    if (nl == std::string_view::npos) {
        return std::string(trim(body));
    }
    std::string out(trim(body.substr(0, nl)));
    out += "\n";
    out += dedent(body.substr(nl + 1));
    return std::string(trim(out));
}

} // namespace unitsynth::py
