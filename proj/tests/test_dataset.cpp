#include "support/support.hpp"

#include "unitsynth/common/hash.hpp"
#include "unitsynth/dataset/dataset.hpp"
#include "unitsynth/pysyntax/parser.hpp"

#include <doctest.h>

#include <random>

using namespace unitsynth;
using namespace unitsynth::dataset;
using refine::RefineOutcome;
using refine::RefinedUnit;
using testsupport::TempDir;

namespace {

/// Offset just past the closing triple quote of the first triple-quoted
/// string; computed textually, without the parser.
size_t docstring_end_oracle(const std::string& src) {
    const auto open = src.find("\"\"\"");
    return src.find("\"\"\"", open + 3) + 3;
}

RefineOutcome accepted(const std::string& cid, const std::string& source, const std::string& name,
                       std::set<std::string> packages) {
    RefineOutcome o;
    o.candidate_id = cid;
    o.unit_id = "u-" + cid;
    o.doc_id = "d-" + cid;
    o.function_name = name;
    o.pre_source = source;
    o.suite_source = testsupport::test_suite_for(name);
    o.refined = RefinedUnit{cid, source, "doc", true, std::move(packages)};
    return o;
}

TrainingPair pair_with(const std::string& id, std::set<std::string> packages) {
    TrainingPair p;
    p.pair_id = id;
    p.prefix = "def f():\n    \"\"\"d\"\"\"";
    p.completion = "\n    return 1\n";
    p.packages = std::move(packages);
    p.provenance = {id, id, id, true};
    return p;
}

std::string refined_get_var() {
    const auto f = testsupport::fixture("get_var_refined.py");
    return "import numpy as np\n\n\n" + f.substr(f.find("def get_var"));
}

} // namespace

TEST_SUITE("dataset") {

TEST_CASE("get_var splits right after its docstring") {
    const auto src = refined_get_var();
    auto [prefix, completion] = split_at_docstring(src, "get_var");
    const auto cut = docstring_end_oracle(src);
    CHECK(prefix == src.substr(0, cut));
    CHECK(completion == src.substr(cut));
    CHECK(prefix.rfind("import numpy as np\n", 0) == 0);
    CHECK(prefix.find("def get_var(data):") != std::string::npos);
    CHECK(prefix.substr(prefix.size() - 3) == "\"\"\"");
    CHECK(completion.find("# Calculate the mean of the data") != std::string::npos);
    CHECK(completion.find("return var") != std::string::npos);
    CHECK(py::is_valid_python(prefix + completion));
}

TEST_CASE("a docstring plus return 0 leaves just the return line") {
    const std::string src = "def zero():\n    '''Always zero.'''\n    return 0\n";
    auto [prefix, completion] = split_at_docstring(src, "zero");
    CHECK(prefix == "def zero():\n    '''Always zero.'''");
    CHECK(completion == "\n    return 0\n");
}

TEST_CASE("split preconditions") {
    CHECK_THROWS_AS(split_at_docstring("def f(:\n", "f"), BuildError);
    CHECK_THROWS_AS(split_at_docstring("def f():\n    return 1\n", "f"), BuildError);
    CHECK_THROWS_AS(split_at_docstring("def g():\n    'd'\n    return 1\n", "f"), BuildError);
    CHECK_THROWS_AS(split_at_docstring("def f():\n    'd'\n    return 1\nx = 1\n", "f"), BuildError);
    CHECK_THROWS_AS(split_at_docstring("X = 1\ndef f():\n    'd'\n    return 1\n", "f"), BuildError);
    CHECK_THROWS_AS(split_at_docstring("def f():\n    'd'\n    import os\n    return os\n", "f"), BuildError);
    CHECK_NOTHROW(split_at_docstring("import os\ndef f():\n    'd'\n    return os.sep\n", "f"));
}

TEST_CASE("the prefix carries exactly the sliced imports") {
    const std::string source = "import os\nimport json\n\n\ndef dump(x):\n    \"\"\"Serialize.\"\"\"\n"
                               "    return json.dumps(x)\n";
    auto norm = refine::normalize_function_source(source, "dump");
    REQUIRE(norm);
    auto p = build_pair(accepted("dump-1", norm->source, "dump", norm->packages));
    CHECK(p.prefix == "import json\n\n\ndef dump(x):\n    \"\"\"Serialize.\"\"\"");
    CHECK(p.completion == "\n    return json.dumps(x)\n");
    CHECK(p.packages == std::set<std::string>{"json"});
}

TEST_CASE("pairs are built from verified units only unless unrefined sources are allowed") {
    const auto src = refined_get_var();
    auto ok = accepted("get_var-1", src, "get_var", {"numpy"});
    auto p = build_pair(ok);
    CHECK(p.pair_id == sha256_hex("get_var-1\n" + src).substr(0, 16));
    CHECK(p.provenance == Provenance{"get_var-1", "u-get_var-1", "d-get_var-1", true});
    CHECK(p.suite == ok.suite_source);

    auto unverified = ok;
    unverified.refined->verified = false;
    CHECK_THROWS_AS(build_pair(unverified), BuildError);

    RefineOutcome rejected = ok;
    rejected.refined.reset();
    rejected.rejection = refine::Rejection::behavior_changed;
    CHECK_THROWS_AS(build_pair(rejected), BuildError);
    auto fallback = build_pair(rejected, true);
    CHECK_FALSE(fallback.provenance.refined);

    rejected.pre_source = testsupport::fixture("get_var.py"); // no docstring to split at
    CHECK_THROWS_AS(build_pair(rejected, true), BuildError);

    auto r = build_pairs({ok, rejected, accepted("a-1", "def a():\n    return 1\n", "a", {})});
    CHECK(r.pairs.size() == 1);
    CHECK(r.not_admitted == 1);
    REQUIRE(r.errors.size() == 1);
    CHECK(r.errors[0].first == "a-1");
}

TEST_CASE("build_pairs orders by candidate id") {
    const std::string z = "def z():\n    'z'\n    return 1\n";
    const std::string a = "def a():\n    'a'\n    return 2\n";
    auto r = build_pairs({accepted("z-1", z, "z", {}), accepted("a-1", a, "a", {})});
    REQUIRE(r.pairs.size() == 2);
    CHECK(r.pairs[0].provenance.candidate_id == "a-1");
    CHECK(r.pairs[1].provenance.candidate_id == "z-1");
}

TEST_CASE("package statistics") {
    auto s = compute_stats({pair_with("1", {"numpy"}), pair_with("2", {"numpy", "os"}), pair_with("3", {"re"})});
    CHECK(s.per_package_counts == std::map<std::string, size_t>{{"numpy", 2}, {"os", 1}, {"re", 1}});
    CHECK(s.unique_package_count == 3);
    CHECK(s.frequency_buckets == std::vector<Bucket>{{1, 10, 3}});

    auto empty = compute_stats({});
    CHECK(empty.unique_package_count == 0);
    CHECK(empty.frequency_buckets.empty());

    std::vector<TrainingPair> same;
    for (int i = 0; i < 12; ++i) {
        same.push_back(pair_with(std::to_string(i), {"numpy"}));
    }
    auto one = compute_stats(same);
    CHECK(one.unique_package_count == 1);
    CHECK(one.frequency_buckets == std::vector<Bucket>{{10, 100, 1}});

    same.push_back(pair_with("x", {"os"}));
    auto custom = compute_stats(same, {1, 5});
    CHECK(custom.frequency_buckets == std::vector<Bucket>{{1, 5, 1}, {5, std::nullopt, 1}});
    CHECK(to_json(custom).at("frequency_buckets").at(1).at("hi").is_null());
}

TEST_CASE("stats merge equals stats of the union") {
    std::mt19937 rng(31);
    const std::vector<std::string> pkgs = {"numpy", "os", "re", "json", "scipy", "pandas"};
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<TrainingPair> all;
        const int n = static_cast<int>(rng() % 40);
        for (int i = 0; i < n; ++i) {
            std::set<std::string> use;
            for (const auto& p : pkgs) {
                if (rng() % 4 == 0) {
                    use.insert(p);
                }
            }
            all.push_back(pair_with(std::to_string(i), use));
        }
        const size_t cut = n == 0 ? 0 : rng() % (n + 1);
        const std::vector<TrainingPair> left(all.begin(), all.begin() + cut), right(all.begin() + cut, all.end());
        const auto whole = compute_stats(all);
        CHECK(merge_stats(compute_stats(left), compute_stats(right)) == whole);
        size_t memberships = 0;
        size_t with_packages = 0;
        for (const auto& [p, c] : whole.per_package_counts) {
            memberships += c;
        }
        for (const auto& p : all) {
            with_packages += p.packages.empty() ? 0 : 1;
        }
        CHECK(memberships >= with_packages);
        CHECK(whole.unique_package_count == whole.per_package_counts.size());
    }
}

TEST_CASE("export round-trips and is deterministic") {
    TempDir dir;
    const std::vector<TrainingPair> pairs = {
        build_pair(accepted("get_var-1", refined_get_var(), "get_var", {"numpy"})),
        build_pair(accepted("zero-1", "def zero():\n    '''Zero.'''\n    return 0\n", "zero", {}))};
    const json snapshot = {{"settings", {{"max_round", 3}}}};
    auto m = export_dataset(pairs, dir / "d.jsonl", dir / "m.json", snapshot);
    CHECK(read_dataset(dir / "d.jsonl") == pairs);
    CHECK(m.at("count") == 2);
    CHECK(m.at("dataset_file") == "d.jsonl");
    CHECK(m.at("hash_algorithm") == "sha256");
    CHECK(m.at("content_hash") == sha256_file_hex((dir / "d.jsonl").string()));
    CHECK(m.at("config") == snapshot);
    CHECK(m.at("stats").at("unique_package_count") == 1);
    CHECK(read_json_file(dir / "m.json") == m);

    size_t lines = 0;
    read_jsonl(dir / "d.jsonl", [&](size_t, json&& j) {
        ++lines;
        std::set<std::string> keys;
        for (auto it = j.begin(); it != j.end(); ++it) {
            keys.insert(it.key());
        }
        CHECK(keys == std::set<std::string>{"pair_id", "prefix", "completion", "packages", "suite", "provenance"});
    });
    CHECK(lines == 2);

    export_dataset(pairs, dir / "d2.jsonl", dir / "m2.json", snapshot);
    CHECK(read_file(dir / "d.jsonl") == read_file(dir / "d2.jsonl"));
}

TEST_CASE("exporting nothing writes an empty file and count 0") {
    TempDir dir;
    auto m = export_dataset({}, dir / "d.jsonl", dir / "m.json", json::object());
    CHECK(m.at("count") == 0);
    CHECK(read_file(dir / "d.jsonl").empty());
    CHECK(m.at("content_hash") == sha256_hex(""));
}

TEST_CASE("a failed manifest write removes the dataset file") {
    TempDir dir;
    write_file_atomic(dir / "blocker", "x");
    CHECK_THROWS(export_dataset({pair_with("1", {"os"})}, dir / "d.jsonl", dir / "blocker" / "m.json", json::object()));
    CHECK_FALSE(std::filesystem::exists(dir / "d.jsonl"));
}

TEST_CASE("malformed dataset lines are input errors") {
    TempDir dir;
    write_file_atomic(dir / "d.jsonl", "{\"pair_id\": 1}\n");
    CHECK_THROWS_AS(read_dataset(dir / "d.jsonl"), InputError);
}

}
