#include "support/support.hpp"

#include "unitsynth/llm/gateway.hpp"
#include "unitsynth/llm/response.hpp"
#include "unitsynth/pysyntax/parser.hpp"

#include <doctest.h>

#include <deque>
#include <random>
#include <thread>

using namespace unitsynth;
using namespace unitsynth::llm;
using testsupport::fenced;
using testsupport::Script;
using testsupport::TempDir;

namespace {

class FakeTransport : public HttpTransport {
public:
    explicit FakeTransport(std::deque<int> statuses) : statuses_(std::move(statuses)) {}

    Response post(const std::string& url, const std::map<std::string, std::string>& headers,
                  const std::string& body) override {
        ++calls;
        last_url = url;
        last_headers = headers;
        last_body = body;
        const int status = statuses_.empty() ? 200 : statuses_.front();
        if (!statuses_.empty()) {
            statuses_.pop_front();
        }
        if (status != 200) {
            return {status, "busy", ""};
        }
        return {200, R"({"choices": [{"message": {"content": "hello"}}],
                         "usage": {"prompt_tokens": 7, "completion_tokens": 3}})",
                ""};
    }

    int calls = 0;
    std::string last_url;
    std::map<std::string, std::string> last_headers;
    std::string last_body;

private:
    std::deque<int> statuses_;
};

struct Recorder {
    std::vector<long long> delays;
    Sleeper sleeper() {
        return [this](std::chrono::milliseconds d) { delays.push_back(d.count()); };
    }
};

CompletionRequest request_for(RoleId role, const std::string& cid, const std::string& fn = "f", int round = 0,
                              int attempt = 1) {
    CompletionRequest r;
    r.role = role;
    r.metadata = {cid, fn, round, attempt};
    r.request_id = make_request_id(role, r.metadata);
    r.prompt = {"sys", "user"};
    return r;
}

} // namespace

TEST_SUITE("llm") {

TEST_CASE("compiled default templates equal the shipped prompt files") {
    for (auto role : {RoleId::test_generator, RoleId::bug_fixer, RoleId::refiner}) {
        const auto shipped = load_template(std::filesystem::path(UNITSYNTH_CONFIG_DIR) / "prompts", role);
        const auto builtin = default_template(role);
        CHECK(builtin.system == shipped.system);
        CHECK(builtin.user == shipped.user);
        CHECK_FALSE(builtin.system.empty());
    }
    CHECK(default_template(RoleId::test_generator).slots() == std::vector<std::string>{"function"});
    CHECK(default_template(RoleId::bug_fixer).slots() ==
          std::vector<std::string>{"function", "unit_test", "execution_result"});
    CHECK(default_template(RoleId::refiner).slots() == std::vector<std::string>{"function", "unit_test"});
}

TEST_CASE("role names") {
    CHECK(role_from_name("bug_fixer") == RoleId::bug_fixer);
    CHECK(role_name(RoleId::refiner) == "refiner");
    CHECK_THROWS_AS(role_from_name("critic"), ConfigError);
}

TEST_CASE("render_prompt substitutes every slot") {
    auto gen = AgentRole::with_defaults(RoleId::test_generator);
    auto p = render_prompt(gen, {{"function", "def f(): return 1"}});
    CHECK(p.user.find("def f(): return 1") != std::string::npos);
    CHECK(p.user.find("{function}") == std::string::npos);
    CHECK(p.system == gen.prompt.system);
    CHECK(p.text() == p.system + "\n\n" + p.user);

    auto refiner = AgentRole::with_defaults(RoleId::refiner);
    const auto get_var = testsupport::fixture("get_var.py");
    auto r = render_prompt(refiner, {{"function", get_var}, {"unit_test", "T"}});
    CHECK(r.user.find(get_var) != std::string::npos);

    auto fixer = AgentRole::with_defaults(RoleId::bug_fixer);
    try {
        render_prompt(fixer, {{"function", "x"}, {"unit_test", "y"}});
        FAIL("expected TemplateError");
    } catch (const TemplateError& e) {
        CHECK(e.slot() == "execution_result");
    }
}

TEST_CASE("render_prompt is single pass and leaves non-slot braces alone") {
    AgentRole role;
    role.prompt = {"s", "A {x} B {y} {not a slot} {0} {}"};
    auto p = render_prompt(role, {{"x", "{y}"}, {"y", "Y"}});
    CHECK(p.user == "A {y} B Y {not a slot} {0} {}");
}

TEST_CASE("render_prompt is injective in each slot") {
    auto fixer = AgentRole::with_defaults(RoleId::bug_fixer);
    std::mt19937 rng(3);
    const std::string alphabet = "ab{}\n _x";
    auto random_text = [&] {
        std::string s;
        const size_t n = rng() % 12;
        for (size_t i = 0; i < n; ++i) {
            s += alphabet[rng() % alphabet.size()];
        }
        return s;
    };
    for (int trial = 0; trial < 200; ++trial) {
        Slots base{{"function", random_text()}, {"unit_test", random_text()}, {"execution_result", random_text()}};
        for (const auto* slot : {"function", "unit_test", "execution_result"}) {
            Slots other = base;
            other[slot] = random_text();
            if (other[slot] == base[slot]) {
                continue;
            }
            CHECK(render_prompt(fixer, base).user != render_prompt(fixer, other).user);
        }
    }
}

TEST_CASE("mock provider picks the most specific entry") {
    Script s;
    s.reply("test_generator", json::object(), "generic")
        .reply("test_generator", {{"function", "f"}}, "by-function")
        .reply("test_generator", {{"candidate", "f-1"}, {"round", 0}}, "by-candidate-round")
        .reply("test_generator", {{"candidate", "f-1"}, {"round", 0}}, "shadowed")
        .reply("bug_fixer", {{"candidate", "f-1"}, {"round", 2}, {"attempt", 1}}, "fix");
    auto mock = MockProvider::from_json(s.doc());
    CHECK(mock.call(request_for(RoleId::test_generator, "g-1", "g")).text == "generic");
    CHECK(mock.call(request_for(RoleId::test_generator, "f-2", "f")).text == "by-function");
    CHECK(mock.call(request_for(RoleId::test_generator, "f-1", "f")).text == "by-candidate-round");
    CHECK(mock.call(request_for(RoleId::bug_fixer, "f-1", "f", 2)).text == "fix");
    CHECK_THROWS_AS(mock.call(request_for(RoleId::bug_fixer, "f-1", "f", 1)), MockLookupError);
    CHECK_THROWS_AS(mock.call(request_for(RoleId::refiner, "f-1")), MockLookupError);
    CHECK_THROWS_AS(MockProvider::from_json(json::array()), ConfigError);
    CHECK_THROWS_AS(MockProvider::from_json({{"responses", {{{"role", "oracle"}}}}}), ConfigError);
}

TEST_CASE("gateway returns mock text and records usage") {
    Script s;
    s.reply("test_generator", json::object(), "one two three");
    auto gw = testsupport::mock_gateway(s.doc());
    auto resp = gw->complete(AgentRole::with_defaults(RoleId::test_generator), {{"function", "f"}}, {"c", "f", 0, 1});
    CHECK(resp.text == "one two three");
    CHECK(resp.usage.completion_tokens == 3);
    CHECK(resp.usage.prompt_tokens > 0);
    CHECK(resp.request_id == "test_generator:c:r0:a1");
    CHECK(gw->requests_sent() == 1);
    CHECK(gw->tokens_used() == resp.usage.total());
}

TEST_CASE("transient statuses are retried with exponential backoff") {
    auto transport = std::make_shared<FakeTransport>(std::deque<int>{429, 429, 200});
    auto provider = std::make_shared<ChatCompletionsProvider>(transport, "http://host/v1/", "k");
    Recorder rec;
    Gateway gw(provider, {}, rec.sleeper());
    auto resp = gw.complete(request_for(RoleId::test_generator, "c"));
    CHECK(resp.text == "hello");
    CHECK(resp.attempts == 3);
    CHECK(transport->calls == 3);
    CHECK(rec.delays == std::vector<long long>{500, 1000});
    CHECK(resp.usage.prompt_tokens == 7);
    CHECK(transport->last_url == "http://host/v1/chat/completions");
    CHECK(transport->last_headers.at("Authorization") == "Bearer k");
    const auto body = json::parse(transport->last_body);
    CHECK(body.at("messages").size() == 2);
    CHECK(body.at("temperature") == 0.2);
}

TEST_CASE("exhausted retries raise a provider error with the last status") {
    auto transport = std::make_shared<FakeTransport>(std::deque<int>{500, 500, 500, 500, 500});
    auto provider = std::make_shared<ChatCompletionsProvider>(transport, "http://host", "");
    Recorder rec;
    GatewayOptions opts;
    opts.retry.max_retries = 4;
    Gateway gw(provider, opts, rec.sleeper());
    try {
        gw.complete(request_for(RoleId::bug_fixer, "c"));
        FAIL("expected ProviderError");
    } catch (const ProviderError& e) {
        CHECK(e.last_status() == 500);
    }
    CHECK(transport->calls == 5);
    CHECK(rec.delays == std::vector<long long>{500, 1000, 2000, 4000});
    CHECK(transport->last_headers.count("Authorization") == 0);
}

TEST_CASE("client errors are not retried") {
    auto transport = std::make_shared<FakeTransport>(std::deque<int>{400});
    Gateway gw(std::make_shared<ChatCompletionsProvider>(transport, "http://h", ""), {}, testsupport::no_sleep);
    CHECK_THROWS_AS(gw.complete(request_for(RoleId::refiner, "c")), ProviderError);
    CHECK(transport->calls == 1);
}

TEST_CASE("backoff delay is capped") {
    RetryPolicy p;
    p.base_delay = std::chrono::milliseconds(100);
    p.max_delay = std::chrono::milliseconds(350);
    CHECK(p.delay_for(1).count() == 100);
    CHECK(p.delay_for(2).count() == 200);
    CHECK(p.delay_for(3).count() == 350);
    CHECK(p.delay_for(60).count() == 350);
    CHECK(RetryPolicy::is_transient(0));
    CHECK(RetryPolicy::is_transient(503));
    CHECK_FALSE(RetryPolicy::is_transient(404));
}

TEST_CASE("budgets stop further requests") {
    Script s;
    s.reply("test_generator", json::object(), "a b c d");
    GatewayOptions opts;
    opts.budget.max_requests = 2;
    auto gw = testsupport::mock_gateway(s.doc(), opts);
    gw->complete(request_for(RoleId::test_generator, "c"));
    gw->complete(request_for(RoleId::test_generator, "c"));
    CHECK_THROWS_AS(gw->complete(request_for(RoleId::test_generator, "c")), BudgetExceeded);
    CHECK(gw->requests_sent() == 2);

    GatewayOptions tok;
    tok.budget.max_tokens = 5;
    auto gw2 = testsupport::mock_gateway(s.doc(), tok);
    gw2->complete(request_for(RoleId::test_generator, "c")); // 2 prompt + 4 completion tokens
    CHECK_THROWS_AS(gw2->complete(request_for(RoleId::test_generator, "c")), BudgetExceeded);
}

TEST_CASE("scripted non-200 mock replies go through retry handling") {
    Script s;
    s.reply("test_generator", json::object(), "", 503);
    GatewayOptions opts;
    opts.retry.max_retries = 2;
    auto gw = testsupport::mock_gateway(s.doc(), opts);
    CHECK_THROWS_AS(gw->complete(request_for(RoleId::test_generator, "c")), ProviderError);
    CHECK(gw->requests_sent() == 3);
}

TEST_CASE("token bucket paces requests against the clock") {
    auto now = std::chrono::steady_clock::time_point{};
    long long slept = 0;
    TokenBucket bucket(
        2.0, 1.0, [&] { return now; },
        [&](std::chrono::milliseconds d) {
            slept += d.count();
            now += d;
        });
    for (int i = 0; i < 5; ++i) {
        bucket.acquire();
    }
    // one burst permit, then four more at 2/s: 2 seconds of waiting
    CHECK(slept >= 2000);
    CHECK(slept < 2010);

    long long idle = 0;
    TokenBucket off(0, 1, [&] { return now; }, [&](std::chrono::milliseconds d) { idle += d.count(); });
    for (int i = 0; i < 100; ++i) {
        off.acquire();
    }
    CHECK(idle == 0);
}

TEST_CASE("audit log has one line per request outcome") {
    TempDir dir;
    Script s;
    s.reply("test_generator", {{"candidate", "ok"}}, "fine").reply("test_generator", {{"candidate", "bad"}}, "", 400);
    GatewayOptions opts;
    opts.audit_log = dir / "logs" / "audit.jsonl";
    {
        auto gw = testsupport::mock_gateway(s.doc(), opts);
        gw->complete(request_for(RoleId::test_generator, "ok"));
        CHECK_THROWS(gw->complete(request_for(RoleId::test_generator, "bad")));
    }
    const auto lines = read_jsonl_all(opts.audit_log);
    REQUIRE(lines.size() == 2);
    CHECK(lines[0].at("request_id") == "test_generator:ok:r0:a1");
    CHECK(lines[0].at("text") == "fine");
    CHECK(lines[1].at("request_id") == "test_generator:bad:r0:a1");
    CHECK(lines[1].contains("error"));
}

TEST_CASE("gateway is safe for concurrent callers") {
    Script s;
    s.reply("test_generator", json::object(), "x");
    auto gw = testsupport::mock_gateway(s.doc());
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t) {
        threads.emplace_back([&] {
            for (int i = 0; i < 50; ++i) {
                gw->complete(request_for(RoleId::test_generator, "c"));
            }
        });
    }
    for (auto& t : threads) {
        t.join();
    }
    CHECK(gw->requests_sent() == 200);
}

TEST_CASE("extract_code_block") {
    CHECK(extract_code_block("```python\nX\n```").code == "X");
    CHECK_FALSE(extract_code_block("```python\nX\n```").low_confidence);
    CHECK(extract_code_block("Here you go:\n```python\ndef f():\n    pass\n```\nHope it helps.").code ==
          "def f():\n    pass");
    CHECK(extract_code_block("```\nfirst\n```\ntext\n```python\nsecond\n```").code == "first");
    auto bare = extract_code_block("  def f(): pass \n");
    CHECK(bare.code == "def f(): pass");
    CHECK(bare.low_confidence);
    auto open = extract_code_block("```python\nx = 1\n");
    CHECK(open.code == "x = 1\n");
    CHECK(open.low_confidence);
    CHECK_THROWS_AS(extract_code_block(""), ResponseParseError);
    CHECK_THROWS_AS(extract_code_block(" \n\t"), ResponseParseError);
}

TEST_CASE("validate_test_suite") {
    auto demo = validate_test_suite(testsupport::fixture("draw_weights_test.py"));
    REQUIRE(demo.accepted());
    CHECK(demo.suite->test_method_names.size() == 5);

    auto wrong = validate_test_suite("import unittest\nclass MyTests(unittest.TestCase):\n    def test_a(self): pass\n");
    CHECK(wrong.rejection == SuiteRejection::wrong_class_name);

    auto empty = validate_test_suite("import unittest\nclass TestCases(unittest.TestCase):\n    def helper(self): pass\n");
    CHECK(empty.rejection == SuiteRejection::no_test_methods);

    auto twice = validate_test_suite("class TestCases:\n    def test_a(self): pass\n"
                                     "class TestCases:\n    def test_b(self): pass\n");
    CHECK(twice.rejection == SuiteRejection::duplicate_class);

    auto broken = validate_test_suite("class TestCases(:\n");
    CHECK(broken.rejection == SuiteRejection::syntax_error);
    CHECK(rejection_name(SuiteRejection::no_test_methods) == "no_test_methods");
}

TEST_CASE("validate_test_suite never accepts unparseable source") {
    const std::string good = testsupport::fixture("draw_weights_test.py");
    std::mt19937 rng(5);
    for (int trial = 0; trial < 300; ++trial) {
        std::string s = good;
        const size_t at = rng() % s.size();
        s.erase(at, 1 + rng() % 4);
        if (validate_test_suite(s).accepted()) {
            CHECK(py::is_valid_python(s));
        }
    }
}

}
