#include "unitsynth/llm/response.hpp"

#include "unitsynth/common/text.hpp"
#include "unitsynth/pysyntax/parser.hpp"

namespace unitsynth::llm {

CodeBlock extract_code_block(std::string_view text) {
    if (trim(text).empty()) {
        throw ResponseParseError("empty response");
    }
    const auto open = text.find("```");
    if (open == std::string_view::npos) {
        return {std::string(trim(text)), true};
    }
    // the info string (e.g. "python") runs to the end of the fence line
    auto content_begin = text.find('\n', open + 3);
    if (content_begin == std::string_view::npos) {
        return {std::string(trim(text.substr(open + 3))), true};
    }
    ++content_begin;
    auto close = text.find("```", content_begin);
    if (close == std::string_view::npos) {
        // unterminated fence: take the rest
        return {std::string(text.substr(content_begin)), true};
    }
    auto code = text.substr(content_begin, close - content_begin);
    if (!code.empty() && code.back() == '\n') {
        code.remove_suffix(1);
    }
    return {std::string(code), false};
}

std::string_view rejection_name(SuiteRejection r) {
    switch (r) {
    case SuiteRejection::syntax_error: return "syntax_error";
    case SuiteRejection::wrong_class_name: return "wrong_class_name";
    case SuiteRejection::duplicate_class: return "duplicate_class";
    case SuiteRejection::no_test_methods: return "no_test_methods";
    }
    return "unknown";
}

SuiteValidation validate_test_suite(std::string_view source) {
    SuiteValidation v;
    auto parsed = py::parse_module(source);
    if (!parsed.ok()) {
        v.rejection = SuiteRejection::syntax_error;
        v.detail = parsed.error->to_string();
        return v;
    }
    const py::Stmt* test_class = nullptr;
    int count = 0;
    for (const auto& s : parsed.module->body) {
        if (s.kind == py::StmtKind::class_def && s.name == kTestClassName) {
            test_class = &s;
            ++count;
        }
    }
    if (count == 0) {
        v.rejection = SuiteRejection::wrong_class_name;
        v.detail = "no top-level class named TestCases";
        return v;
    }
    if (count > 1) {
        v.rejection = SuiteRejection::duplicate_class;
        v.detail = "TestCases is defined more than once";
        return v;
    }
    std::vector<std::string> tests;
    for (const auto& s : test_class->body) {
        if (s.kind == py::StmtKind::function_def && s.name.rfind("test_", 0) == 0) {
            tests.push_back(s.name);
        }
    }
    if (tests.empty()) {
        v.rejection = SuiteRejection::no_test_methods;
        v.detail = "TestCases has no test_* methods";
        return v;
    }
    UnitTestSuite suite;
    suite.source = std::string(source);
    suite.test_method_names = std::move(tests);
    v.suite = std::move(suite);
    return v;
}

} // namespace unitsynth::llm
