#include "support/support.hpp"

#include "unitsynth/common/errors.hpp"
#include "unitsynth/common/hash.hpp"

#include <doctest.h>

#include <random>

using namespace unitsynth;
using namespace unitsynth::corpus;
using testsupport::TempDir;

namespace {

std::string numbered_tokens(const std::string& stem, int from, int to) {
    std::string out;
    for (int i = from; i < to; ++i) {
        out += (out.empty() ? "" : " ") + stem + std::to_string(i);
    }
    return out;
}

std::vector<std::string> ids(const std::vector<SourceDocument>& docs) {
    std::vector<std::string> out;
    for (const auto& d : docs) {
        out.push_back(d.doc_id);
    }
    return out;
}

} // namespace

TEST_SUITE("corpus") {

TEST_CASE("ingest counts records and skips malformed ones") {
    TempDir dir;
    write_file_atomic(dir / "one.jsonl", R"({"path": "a.py", "content": "x = 1\n"})" "\n");
    auto one = ingest(dir / "one.jsonl");
    REQUIRE(one.documents.size() == 1);
    CHECK(one.documents[0].path == "a.py");
    CHECK(one.documents[0].doc_id == sha256_hex("x = 1\n"));
    CHECK(one.documents[0].language_tag == "python");

    write_file_atomic(dir / "empty.jsonl", "");
    auto empty = ingest(dir / "empty.jsonl");
    CHECK(empty.documents.empty());
    CHECK(empty.skipped.empty());

    write_file_atomic(dir / "three.jsonl",
                      R"({"path": "a.py", "content": "a = 1\n"})" "\n"
                      R"({"path": "b.py"})" "\n"
                      R"({"path": "c.py", "content": "c = 3\n", "language": "python"})" "\n");
    auto three = ingest(dir / "three.jsonl");
    CHECK(three.documents.size() == 2);
    REQUIRE(three.skipped.size() == 1);
    CHECK(three.skipped[0].line == 2);
    CHECK(three.documents[1].path == "c.py");
}

TEST_CASE("ingest errors") {
    TempDir dir;
    CHECK_THROWS_AS(ingest(dir / "absent.jsonl"), IoError);
    write_file_atomic(dir / "x.jsonl", "");
    CHECK_THROWS_AS(ingest(dir / "x.jsonl", "parquet"), ConfigError);

    write_file_atomic(dir / "bad.jsonl", "{\"path\": \"a\", \"content\": \"\xff\xfe\"}\nnot json\n");
    auto r = ingest(dir / "bad.jsonl");
    CHECK(r.documents.empty());
    CHECK(r.skipped.size() == 2);
}

TEST_CASE("dedup_exact keeps first occurrences in order") {
    auto a = make_document("a.py", "A");
    auto b = make_document("b.py", "B");
    auto out = dedup_exact({a, b, a});
    CHECK(ids(out) == std::vector<std::string>{a.doc_id, b.doc_id});

    auto a2 = make_document("elsewhere/a.py", "A");
    CHECK(a2.doc_id == sha256_hex("A"));
    auto same = dedup_exact({a, a2});
    REQUIRE(same.size() == 1);
    CHECK(same[0].path == "a.py");

    std::vector<SourceDocument> distinct;
    for (int i = 0; i < 5; ++i) {
        distinct.push_back(make_document("f.py", std::to_string(i)));
    }
    CHECK(ids(dedup_exact(distinct)) == ids(distinct));
}

TEST_CASE("dedup is idempotent and sharding does not change the result") {
    std::mt19937 rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<SourceDocument> docs;
        const int n = static_cast<int>(rng() % 40);
        for (int i = 0; i < n; ++i) {
            docs.push_back(make_document("p" + std::to_string(i), "c" + std::to_string(rng() % 12)));
        }
        const auto once = dedup_exact(docs);
        CHECK(ids(dedup_exact(once)) == ids(once));

        std::vector<std::vector<SourceDocument>> shards(1 + rng() % 5);
        size_t pos = 0;
        for (size_t s = 0; s < shards.size(); ++s) {
            const size_t take = s + 1 == shards.size() ? docs.size() - pos : rng() % (docs.size() - pos + 1);
            shards[s].assign(docs.begin() + pos, docs.begin() + pos + take);
            pos += take;
        }
        CHECK(ids(dedup_sharded(shards)) == ids(once));
    }
}

TEST_CASE("shingles are whitespace-normalized token windows") {
    CHECK(shingles("a  b\n\tc d", 3) == std::vector<std::string>{"a b c", "b c d"});
    CHECK(shingles("a b", 3).empty());
    CHECK(shingles("A a", 2) == std::vector<std::string>{"A a"});
}

TEST_CASE("decontamination drops a 13-token overlap and keeps a 12-token one") {
    Blocklist bl;
    const std::string item = numbered_tokens("bench", 0, 20);
    bl.add_item("humaneval", item);

    // 13 consecutive item tokens, surrounded by unrelated tokens
    const auto leak = make_document("leak.py", "x = 1\n" + numbered_tokens("bench", 3, 16) + "\ny = 2\n");
    const auto near = make_document("near.py", "x = 1\n" + numbered_tokens("bench", 3, 15) + "\ny = 2\n");
    const auto clean = make_document("clean.py", "def f():\n    return 1\n");

    auto r = decontaminate({leak, near, clean}, bl);
    CHECK(ids(r.kept) == std::vector<std::string>{near.doc_id, clean.doc_id});
    CHECK(r.dropped_doc_ids == std::vector<std::string>{leak.doc_id});
    CHECK(r.dropped_per_benchmark.at("humaneval") == 1);

    // whitespace differences do not hide the leak
    std::string spaced = numbered_tokens("bench", 0, 13);
    for (auto& ch : spaced) {
        if (ch == ' ') {
            ch = '\n';
        }
    }
    CHECK(decontaminate({make_document("s.py", spaced)}, bl).kept.empty());

    auto none = decontaminate({leak, near}, Blocklist());
    CHECK(none.kept.size() == 2);
}

TEST_CASE("blocklist loading and shingle length bound") {
    CHECK_THROWS_AS(Blocklist(7), ConfigError);
    CHECK_NOTHROW(Blocklist(8));

    TempDir dir;
    std::filesystem::create_directories(dir / "mbpp");
    write_file_atomic(dir / "mbpp" / "task1.txt", numbered_tokens("m", 0, 13));
    write_file_atomic(dir / "humaneval.txt", numbered_tokens("h", 0, 13));
    auto bl = Blocklist::from_directory(dir.path());
    CHECK(bl.size() == 2);
    const auto* hit = bl.first_match("pre " + numbered_tokens("m", 0, 13));
    REQUIRE(hit != nullptr);
    CHECK(*hit == "mbpp");
    hit = bl.first_match(numbered_tokens("h", 0, 13));
    REQUIRE(hit != nullptr);
    CHECK(*hit == "humaneval");
    CHECK_THROWS_AS(Blocklist::from_directory(dir / "nope"), IoError);
}

}
