#pragma once

#include "unitsynth/common/json.hpp"
#include "unitsynth/common/text.hpp"
#include "unitsynth/corpus/corpus.hpp"
#include "unitsynth/exec/orchestrator.hpp"
#include "unitsynth/extract/extract.hpp"
#include "unitsynth/llm/gateway.hpp"

#include <cstdlib>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>

namespace testsupport {

namespace fs = std::filesystem;
using unitsynth::json;

inline fs::path fixture_path(const std::string& name) { return fs::path(UNITSYNTH_FIXTURE_DIR) / name; }

inline std::string fixture(const std::string& name) { return unitsynth::read_file(fixture_path(name)); }

class TempDir {
public:
    TempDir() {
        std::string tmpl = (fs::temp_directory_path() / "unitsynth-test-XXXXXX").string();
        if (::mkdtemp(tmpl.data()) == nullptr) {
            throw std::runtime_error("mkdtemp failed");
        }
        path_ = tmpl;
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline std::string fenced(const std::string& code) { return "```python\n" + code + "\n```\n"; }

inline json pass_result() { return json::array({"pass", json::object()}); }

inline json fail_result(const std::string& test, const std::string& tb) {
    return json::array({"fail", json{{test, tb}}});
}

inline json error_result(const std::string& kind, const std::string& detail = "") {
    return json::array({"error", json{{"kind", kind}, {"detail", detail}}});
}

/// Builds a mock script: provider replies plus executor verdicts.
class Script {
public:
    Script& reply(const std::string& role, const json& keys, const std::string& text, int status = 200) {
        json e = keys;
        e["role"] = role;
        e["text"] = text;
        e["status"] = status;
        doc_["responses"].push_back(e);
        return *this;
    }
    Script& verdict(const json& keys, const json& result, std::optional<double> coverage = {}) {
        json e = keys;
        e["result"] = result;
        if (coverage) {
            e["coverage"] = *coverage;
        }
        doc_["verdicts"].push_back(e);
        return *this;
    }
    const json& doc() const { return doc_; }
    void write(const fs::path& p) const { unitsynth::write_json_atomic(p, doc_); }

private:
    json doc_ = {{"responses", json::array()}, {"verdicts", json::array()}};
};

inline void no_sleep(std::chrono::milliseconds) {}

inline std::unique_ptr<unitsynth::llm::Gateway> mock_gateway(const json& script,
                                                             unitsynth::llm::GatewayOptions opts = {}) {
    auto provider = std::make_shared<unitsynth::llm::MockProvider>(unitsynth::llm::MockProvider::from_json(script));
    return std::make_unique<unitsynth::llm::Gateway>(provider, opts, no_sleep);
}

inline std::unique_ptr<unitsynth::exec::Orchestrator> stub_orchestrator(const json& script,
                                                                        unitsynth::exec::ExecutionPolicy policy = {}) {
    auto stub = std::make_shared<unitsynth::exec::StubExecutor>(unitsynth::exec::StubExecutor::from_json(script));
    return std::make_unique<unitsynth::exec::Orchestrator>(stub, policy);
}

/// The only function unit of `source`, extracted as the pipeline would.
inline unitsynth::extract::FunctionUnit unit_of(const std::string& source, const std::string& path = "fixture.py") {
    auto r = unitsynth::extract::extract_functions(unitsynth::corpus::make_document(path, source));
    if (r.units.size() != 1) {
        throw std::runtime_error("fixture must define exactly one function");
    }
    return r.units.front();
}

inline std::string test_suite_for(const std::string& fn, int n_tests = 1) {
    std::string s = "import unittest\n\nclass TestCases(unittest.TestCase):\n";
    for (int i = 0; i < n_tests; ++i) {
        s += "    def test_" + fn + "_" + std::to_string(i) + "(self):\n        self.assertIsNotNone(" + fn + ")\n";
    }
    return s;
}

} // namespace testsupport
