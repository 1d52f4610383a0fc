#pragma once

#include "unitsynth/common/errors.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace unitsynth::llm {

class ResponseParseError : public Error {
public:
    using Error::Error;
};

struct CodeBlock {
    std::string code;
    bool low_confidence = false; // no fenced block; the whole reply was taken
};

/// Contents of the first ``` fenced block. Without a fence the trimmed reply
/// is returned flagged low-confidence. Throws ResponseParseError on an empty
/// reply.
CodeBlock extract_code_block(std::string_view response_text);

struct UnitTestSuite {
    std::string suite_id;
    std::string candidate_id;
    std::string source;
    std::vector<std::string> test_method_names;

    bool operator==(const UnitTestSuite&) const = default;
};

enum class SuiteRejection { syntax_error, wrong_class_name, duplicate_class, no_test_methods };

std::string_view rejection_name(SuiteRejection r);

struct SuiteValidation {
    std::optional<UnitTestSuite> suite;
    std::optional<SuiteRejection> rejection;
    std::string detail;

    bool accepted() const { return suite.has_value(); }
};

inline constexpr std::string_view kTestClassName = "TestCases";

/// Accepts source that parses and defines exactly one top-level class named
/// `TestCases` with at least one `test_*` method.
SuiteValidation validate_test_suite(std::string_view test_source);

} // namespace unitsynth::llm
