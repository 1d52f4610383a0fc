#pragma once

#include "unitsynth/pysyntax/token.hpp"

#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace unitsynth::py {

enum class StmtKind {
    simple,        // expression, assignment, pass, return, ...
    import_stmt,   // import a.b as c
    from_import,   // from a import b
    function_def,  // def / async def, decorators included in the span
    class_def,
    compound,      // if / for / while / try / with / match
};

struct ImportedName {
    std::string name;                  // dotted module (import) or member (from-import)
    std::optional<std::string> alias;  // `as` target
};

struct ImportInfo {
    int level = 0;      // leading dots of a relative from-import
    std::string module; // from-import source module, without the leading dots
    bool star = false;
    std::vector<ImportedName> names;
};

enum class ParamKind { positional_only, regular, var_positional, keyword_only, var_keyword };

struct Param {
    std::string name;
    ParamKind kind = ParamKind::regular;
    bool has_default = false;
};

struct Span {
    size_t begin = 0;
    size_t end = 0;
};

struct Stmt {
    StmtKind kind = StmtKind::simple;
    Span span;             // first token (decorator included) to last token
    int line = 0;
    int end_line = 0;
    size_t first_token = 0; // index range into Module::tokens, [first, last]
    size_t last_token = 0;

    // def / class
    std::string name;
    bool is_async = false;
    std::vector<Param> params;
    Span header;           // `def` keyword through the header's ':'
    std::optional<Span> docstring; // string literal token(s) opening the body
    std::vector<Stmt> body;

    // imports
    std::optional<ImportInfo> import;
};

struct Module {
    std::vector<Token> tokens;
    std::vector<Stmt> body;
};

struct ParseResult {
    std::optional<Module> module;
    std::optional<SyntaxError> error;

    bool ok() const { return module.has_value(); }
};

/// Parses Python 3 source. Rejects what `ast.parse` rejects at the grammar
/// level (token errors, indentation, malformed statements and expressions,
/// invalid assignment targets, argument ordering); does not run the
/// compiler's symbol-table checks.
ParseResult parse_module(std::string_view source);

bool is_valid_python(std::string_view source);

/// Root package of a dotted module path: "a.b.c" -> "a".
std::string root_package(std::string_view dotted);

/// Names an import statement binds in the importing namespace.
std::vector<std::string> bound_names(const ImportInfo& info);

/// Identifier tokens in the token range [first, last].
std::vector<std::string_view> identifiers_in(const Module& m, size_t first, size_t last);

/// The single top-level function with the given name, or nullptr.
const Stmt* find_function(const Module& m, std::string_view name);

/// Decoded value of a docstring literal (prefix, quotes and common
/// indentation removed; escapes left as written).
std::string docstring_text(std::string_view source, const Span& docstring);

} // namespace unitsynth::py
