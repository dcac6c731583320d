#include <doctest.h>

#include <string>
#include <unordered_map>
#include <vector>

#include "helpers.hpp"
#include "tmfill/predictor.hpp"

using namespace tmfill;

namespace {

using Sentences = std::vector<std::vector<std::string>>;

HoleQuery query_of(const std::string& left, const std::string& right) {
    HoleQuery q;
    q.left = left;
    q.right = right;
    q.masked_segment = {left, std::string(kHoleMarker), right};
    q.hole_index = 1;
    return q;
}

} // namespace

TEST_CASE("unigram: always answers the most frequent token") {
    Sentences corpus = {{"the", "dog"}, {"the", "cat"}, {"a", "the"}};
    UnigramPredictor p(corpus);
    auto r1 = p.predict(query_of("a", "b"), 1);
    auto r2 = p.predict(query_of("x", "y"), 1);
    REQUIRE(r1.size() == 1);
    CHECK(r1[0].token == "the");
    CHECK(r1 == r2);

    auto top2 = p.predict(query_of("q", "r"), 2);
    REQUIRE(top2.size() == 2);
    CHECK(top2[0].token == "the");
    CHECK(top2[1].token == "a"); // count 1 tie broken lexicographically
}

TEST_CASE("build_trigram_table: spec count examples") {
    Sentences one = {{"a", "b", "c"}};
    auto t1 = build_trigram_table(one);
    CHECK(t1.count("a", "c", "b") == 1);
    CHECK(t1.total() == 1);

    Sentences two = {{"a", "b", "c", "a", "b", "c"}};
    auto t2 = build_trigram_table(two);
    CHECK(t2.count("a", "c", "b") == 2);
    CHECK(t2.count("b", "a", "c") == 1);
    CHECK(t2.count("c", "b", "a") == 1);
    CHECK(t2.total() == 4);
    CHECK(t2.pair_total("a", "c") == 2);
}

TEST_CASE("build_trigram_table: counts equal a recount oracle") {
    Pcg32 rng(91);
    Sentences corpus;
    for (int s = 0; s < 200; ++s) corpus.push_back(testutil::random_tokens(rng, 10, 5));
    auto table = build_trigram_table(corpus);

    std::unordered_map<std::string, std::uint64_t> recount;
    std::uint64_t total = 0;
    for (const auto& sent : corpus)
        for (std::size_t i = 1; i + 1 < sent.size(); ++i) {
            ++recount[sent[i - 1] + "\x1f" + sent[i + 1] + "\x1f" + sent[i]];
            ++total;
        }
    CHECK(table.total() == total);
    for (const auto& [key, cnt] : recount) {
        auto a = key.find('\x1f');
        auto b = key.find('\x1f', a + 1);
        CHECK(table.count(key.substr(0, a), key.substr(a + 1, b - a - 1), key.substr(b + 1)) ==
              cnt);
    }
}

TEST_CASE("trigram_predict: the paper-style anchor pair") {
    Sentences corpus = {{"to", "assess", "whether", "the", "institution", "identifies"}};
    auto table = build_trigram_table(corpus);
    auto res = trigram_predict(table, "assess", "the", 1);
    REQUIRE(res.size() == 1);
    CHECK(res[0].token == "whether");
}

TEST_CASE("trigram_predict: ordering by count then lexicographic") {
    Sentences corpus = {{"a", "x", "b"}, {"a", "x", "b"}, {"a", "m", "b"}, {"a", "c", "b"}};
    auto table = build_trigram_table(corpus);
    auto res = trigram_predict(table, "a", "b", 3);
    REQUIRE(res.size() == 3);
    CHECK(res[0].token == "x"); // count 2
    CHECK(res[1].token == "c"); // ties: c before m
    CHECK(res[2].token == "m");
}

TEST_CASE("trigram_predict: unseen anchor pair is empty") {
    Sentences corpus = {{"a", "b", "c"}};
    auto table = build_trigram_table(corpus);
    CHECK(trigram_predict(table, "zz", "yy", 5).empty());
}

TEST_CASE("trigram oracle: perfect on its own text when anchors are unique") {
    // every (left, right) pair maps to exactly one center
    Sentences corpus;
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 5; ++j)
            corpus.push_back({"l" + std::to_string(i), "c" + std::to_string(i),
                              "r" + std::to_string(i)});
    auto table = build_trigram_table(corpus);
    TrigramPredictor p(table);
    for (int i = 0; i < 8; ++i) {
        auto res = p.predict(query_of("l" + std::to_string(i), "r" + std::to_string(i)), 1);
        REQUIRE(res.size() == 1);
        CHECK(res[0].token == "c" + std::to_string(i));
    }
}

TEST_CASE("cbow adapter: delegates to predict_center with the same k") {
    Sentences corpus;
    Pcg32 rng(95);
    for (int s = 0; s < 300; ++s) {
        int i = static_cast<int>(rng.bounded(3)), j = static_cast<int>(rng.bounded(3));
        corpus.push_back({"x" + std::to_string(i), "y" + std::to_string(i) + std::to_string(j),
                          "z" + std::to_string(j)});
    }
    auto vocab = Vocab::build(corpus, 1);
    CbowHyperparams hp;
    hp.dims = 12;
    hp.epochs = 3;
    auto model = train_cbow(corpus, vocab, hp);
    CbowPredictor p(model);

    for (std::size_t k : {1u, 3u, 7u}) {
        auto direct = predict_center(model, "x1", "z2", k);
        auto adapted = p.predict(query_of("x1", "z2"), k);
        REQUIRE(adapted.size() == direct.size());
        for (std::size_t i = 0; i < direct.size(); ++i) {
            CHECK(adapted[i].token == direct[i].token);
            CHECK(adapted[i].score == direct[i].score);
        }
    }
}

TEST_CASE("predict_batch: one bad query never aborts the rest") {
    struct Flaky : Predictor {
        std::string name() const override { return "flaky"; }
        std::vector<PredictionCandidate> predict(const HoleQuery& q, std::size_t) override {
            if (q.left == "boom") throw Error("backend exploded");
            return {{q.left, 1.0, false}};
        }
    };
    Flaky p;
    std::vector<HoleQuery> queries = {query_of("ok1", "r"), query_of("boom", "r"),
                                      query_of("ok2", "r")};
    for (std::size_t i = 0; i < queries.size(); ++i) queries[i].id = static_cast<std::uint32_t>(i);
    auto results = p.predict_batch(queries, 1);
    REQUIRE(results.size() == 3);
    CHECK(results[0].ok());
    CHECK(!results[1].ok());
    CHECK(results[1].error == "backend exploded");
    CHECK(results[2].ok());
    CHECK(results[2].candidates[0].token == "ok2");
}

TEST_CASE("sanitize_candidate: single token passes through") {
    auto c = sanitize_candidate("whether", 0.5);
    REQUIRE(c.has_value());
    CHECK(c->token == "whether");
    CHECK(c->score == 0.5);
    CHECK(!c->truncated);
}

TEST_CASE("sanitize_candidate: multi-token answers keep the first and get flagged") {
    auto c = sanitize_candidate("several words more", 1.0);
    REQUIRE(c.has_value());
    CHECK(c->token == "several");
    CHECK(c->truncated);

    auto p = sanitize_candidate("word.", 1.0); // trailing punctuation splits off
    REQUIRE(p.has_value());
    CHECK(p->token == "word");
    CHECK(p->truncated);
}

TEST_CASE("sanitize_candidate: empty or whitespace answers are dropped") {
    CHECK(!sanitize_candidate("", 1.0).has_value());
    CHECK(!sanitize_candidate("   ", 1.0).has_value());
}
