#include "unitsynth/extract/extract.hpp"

#include "unitsynth/common/errors.hpp"
#include "unitsynth/common/hash.hpp"
#include "unitsynth/common/text.hpp"
#include "unitsynth/pysyntax/parser.hpp"

namespace unitsynth::extract {

namespace {

std::string import_root(const py::ImportInfo& info, const py::ImportedName& first) {
    const bool from = !info.module.empty() || info.level > 0;
    if (from) {
        return info.level > 0 ? std::string() : py::root_package(info.module);
    }
    return py::root_package(first.name);
}

std::string render_import(const py::ImportedName& n) {
    std::string text = "import " + n.name;
    if (n.alias) {
        text += " as " + *n.alias;
    }
    return text;
}

std::vector<ImportStatement> imports_of(std::string_view source, const py::Module& m) {
    std::vector<ImportStatement> out;
    for (const auto& s : m.body) {
        if (!s.import) {
            continue;
        }
        const auto& info = *s.import;
        const auto text = std::string(source.substr(s.span.begin, s.span.end - s.span.begin));
        if (s.kind == py::StmtKind::import_stmt && info.names.size() > 1) {
            for (const auto& n : info.names) {
                out.push_back({render_import(n), py::root_package(n.name)});
            }
            continue;
        }
        const py::ImportedName none{"", std::nullopt};
        out.push_back({text, import_root(info, info.names.empty() ? none : info.names.front())});
    }
    return out;
}

} // namespace

json to_json(const FunctionUnit& u) {
    json imports = json::array();
    for (const auto& i : u.imports) {
        imports.push_back({{"text", i.text}, {"root_package", i.root_package}});
    }
    return {
        {"unit_id", u.unit_id},
        {"doc_id", u.doc_id},
        {"imports", imports},
        {"name", u.name},
        {"signature", u.signature},
        {"body", u.body},
        {"docstring", u.docstring ? json(*u.docstring) : json(nullptr)},
        {"packages", u.packages},
        {"span", {u.span_begin, u.span_end}},
    };
}

FunctionUnit unit_from_json(const json& j) {
    try {
        FunctionUnit u;
        u.unit_id = j.at("unit_id").get<std::string>();
        u.doc_id = j.at("doc_id").get<std::string>();
        for (const auto& i : j.at("imports")) {
            u.imports.push_back({i.at("text").get<std::string>(), i.at("root_package").get<std::string>()});
        }
        u.name = j.at("name").get<std::string>();
        u.signature = j.at("signature").get<std::string>();
        u.body = j.at("body").get<std::string>();
        if (const auto& d = j.at("docstring"); !d.is_null()) {
            u.docstring = d.get<std::string>();
        }
        u.packages = j.at("packages").get<std::set<std::string>>();
        u.span_begin = j.at("span").at(0).get<size_t>();
        u.span_end = j.at("span").at(1).get<size_t>();
        return u;
    } catch (const json::exception& e) {
        throw InputError(std::string("malformed function unit record: ") + e.what());
    }
}

std::string module_source(const FunctionUnit& u) {
    std::string out;
    for (const auto& i : u.imports) {
        out += i.text;
        out += "\n";
    }
    if (!u.imports.empty()) {
        out += "\n\n";
    }
    out += u.body;
    out += "\n";
    return out;
}

std::vector<ImportStatement> split_imports(std::string_view source) {
    auto parsed = py::parse_module(source);
    if (!parsed.ok()) {
        return {};
    }
    return imports_of(source, *parsed.module);
}

std::vector<ImportStatement> slice_imports(const std::vector<ImportStatement>& imports,
                                           const std::set<std::string, std::less<>>& identifiers) {
    std::vector<ImportStatement> out;
    for (const auto& imp : imports) {
        auto parsed = py::parse_module(imp.text + "\n");
        if (!parsed.ok() || parsed.module->body.empty() || !parsed.module->body.front().import) {
            continue;
        }
        const auto& info = *parsed.module->body.front().import;
        bool used = info.star;
        for (const auto& name : py::bound_names(info)) {
            used = used || identifiers.count(name) > 0;
        }
        if (used) {
            out.push_back(imp);
        }
    }
    return out;
}

ExtractResult extract_functions(const corpus::SourceDocument& doc, const ExtractOptions& opts) {
    ExtractResult result;
    auto parsed = py::parse_module(doc.content);
    if (!parsed.ok()) {
        result.parse_error = parsed.error->to_string();
        return result;
    }
    const auto& module = *parsed.module;
    const std::string_view src = doc.content;
    const auto imports = imports_of(src, module);
    for (const auto& stmt : module.body) {
        if (stmt.kind == py::StmtKind::class_def) {
            ++result.skipped_classes;
            continue;
        }
        if (stmt.kind != py::StmtKind::function_def) {
            continue;
        }
        FunctionUnit u;
        u.doc_id = doc.doc_id;
        u.name = stmt.name;
        u.span_begin = stmt.span.begin;
        u.span_end = stmt.span.end;
        u.body = dedent(src.substr(stmt.span.begin, stmt.span.end - stmt.span.begin));
        u.signature = std::string(src.substr(stmt.header.begin, stmt.header.end - stmt.header.begin));
        if (stmt.docstring) {
            u.docstring = py::docstring_text(src, *stmt.docstring);
        }
        if (u.body.size() > opts.max_source_chars) {
            ++result.dropped_too_long;
            continue;
        }
        std::set<std::string, std::less<>> idents;
        for (auto id : py::identifiers_in(module, stmt.first_token, stmt.last_token)) {
            idents.emplace(id);
        }
        u.imports = slice_imports(imports, idents);
        for (const auto& i : u.imports) {
            if (!i.root_package.empty()) {
                u.packages.insert(i.root_package);
            }
        }
        u.unit_id = sha256_hex(doc.doc_id + "\n" + std::to_string(u.span_begin) + ":" +
                               std::to_string(u.span_end) + "\n" + u.body);
        result.units.push_back(std::move(u));
    }
    return result;
}

PackageAllowlist PackageAllowlist::from_file(const std::filesystem::path& path) {
    PackageAllowlist a;
    for (auto& entry : read_list_file(path)) {
        a.packages.insert(std::move(entry));
    }
    if (a.packages.empty()) {
        throw ConfigError("package allowlist is empty: " + path.string());
    }
    return a;
}

std::vector<FunctionUnit> filter_by_packages(const std::vector<FunctionUnit>& units,
                                             const PackageAllowlist& allowlist) {
    std::vector<FunctionUnit> out;
    for (const auto& u : units) {
        for (const auto& p : u.packages) {
            if (allowlist.packages.count(p) > 0) {
                out.push_back(u);
                break;
            }
        }
    }
    return out;
}

Denylist::Denylist(std::vector<std::string> patterns) : patterns_(std::move(patterns)) {
    compiled_.reserve(patterns_.size());
    for (const auto& p : patterns_) {
        try {
            compiled_.emplace_back(p, std::regex::ECMAScript | std::regex::optimize);
        } catch (const std::regex_error& e) {
            throw ConfigError("invalid denylist pattern '" + p + "': " + e.what());
        }
    }
}

Denylist Denylist::from_file(const std::filesystem::path& path) { return Denylist(read_list_file(path)); }

std::optional<std::string> Denylist::match(std::string_view source) const {
    for (size_t i = 0; i < compiled_.size(); ++i) {
        if (std::regex_search(source.begin(), source.end(), compiled_[i])) {
            return patterns_[i];
        }
    }
    return std::nullopt;
}

ScreenResult safety_screen(const std::vector<FunctionUnit>& units, const Denylist& denylist) {
    ScreenResult r;
    for (const auto& u : units) {
        if (auto hit = denylist.match(module_source(u))) {
            r.dropped.emplace_back(u.unit_id, *hit);
        } else {
            r.safe.push_back(u);
        }
    }
    return r;
}

} // namespace unitsynth::extract
