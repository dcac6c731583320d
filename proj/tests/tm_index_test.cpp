#include <doctest.h>

#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "helpers.hpp"
#include "tmfill/tm_index.hpp"

using namespace tmfill;

namespace {

// Index-free oracle: score every unit, filter, sort by the same public
// ordering contract (FMS desc via exact rational compare, then id).
std::vector<FuzzyMatch> exhaustive_lookup(const TranslationMemory& tm, Side side,
                                          const Segment& query, double min_fms, std::size_t k,
                                          bool exclude_exact = false) {
    auto q = folded_tokens(query);
    struct Row {
        std::uint32_t id;
        std::uint32_t d;
        std::size_t mx;
    };
    std::vector<Row> rows;
    for (const auto& u : tm.units) {
        auto t = folded_tokens(u.side(side));
        if (q.empty() && t.empty()) continue;
        std::uint32_t d = word_levenshtein(q, t);
        if (exclude_exact && d == 0) continue;
        std::size_t mx = std::max(q.size(), t.size());
        if (static_cast<double>(mx - d) * 100.0 < min_fms * static_cast<double>(mx)) continue;
        rows.push_back({u.id, d, mx});
    }
    std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
        int c = fms_compare(a.d, a.mx, b.d, b.mx);
        if (c != 0) return c > 0;
        return a.id < b.id;
    });
    if (rows.size() > k) rows.resize(k);
    std::vector<FuzzyMatch> out;
    for (const auto& r : rows) {
        FuzzyMatch fm;
        fm.unit_id = r.id;
        fm.fms = 100.0 * (1.0 - static_cast<double>(r.d) / static_cast<double>(r.mx));
        fm.script = edit_script(q, folded_tokens(tm.units[r.id].side(side)));
        out.push_back(std::move(fm));
    }
    return out;
}

bool same_results(const std::vector<FuzzyMatch>& a, const std::vector<FuzzyMatch>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].unit_id != b[i].unit_id) return false;
        if (a[i].fms != b[i].fms) return false;
        if (!(a[i].script == b[i].script)) return false;
    }
    return true;
}

TranslationMemory tiny_memory(std::vector<std::string> targets) {
    TranslationMemory tm;
    tm.src_lang = "fr";
    tm.tgt_lang = "en";
    for (std::size_t i = 0; i < targets.size(); ++i) {
        TranslationUnit u;
        u.id = static_cast<std::uint32_t>(i);
        u.source = testutil::seg("src " + std::to_string(i), "fr");
        u.target = testutil::seg(targets[i]);
        tm.units.push_back(std::move(u));
    }
    return tm;
}

} // namespace

TEST_CASE("build_index: postings match a hand-built map") {
    auto tm = tiny_memory({"the red dog", "the blue cat", "red cat"});
    auto idx = TmIndex::build(tm, Side::Target);

    std::map<std::string, std::vector<std::uint32_t>> expected = {
        {"the", {0, 1}}, {"red", {0, 2}}, {"dog", {0}},
        {"blue", {1}},   {"cat", {1, 2}},
    };
    CHECK(idx.postings().size() == expected.size());
    for (const auto& [key, ids] : expected) {
        REQUIRE(idx.postings().count(key) == 1);
        CHECK(idx.postings().at(key) == ids);
    }
    CHECK(idx.lengths() == std::vector<std::uint32_t>{3, 3, 2});
}

TEST_CASE("build_index: brute-force postings comparison on random memories") {
    Pcg32 rng(51);
    for (int iter = 0; iter < 10; ++iter) {
        auto tm = testutil::random_memory(rng, 10);
        auto idx = TmIndex::build(tm, Side::Target);
        // oracle map
        std::map<std::string, std::set<std::uint32_t>> oracle;
        for (const auto& u : tm.units)
            for (const auto& t : u.target.tokens) oracle[t.folded].insert(u.id);
        REQUIRE(idx.postings().size() == oracle.size());
        for (const auto& [key, ids] : idx.postings()) {
            std::set<std::uint32_t> got(ids.begin(), ids.end());
            CHECK(got.size() == ids.size()); // strictly increasing, no dups
            CHECK(std::is_sorted(ids.begin(), ids.end()));
            CHECK(got == oracle[key]);
        }
    }
}

TEST_CASE("build_index: unit with empty indexed side appears only in lengths") {
    auto tm = tiny_memory({"the red dog", "", "red cat"});
    auto idx = TmIndex::build(tm, Side::Target);
    CHECK(idx.lengths()[1] == 0);
    for (const auto& [key, ids] : idx.postings())
        for (auto id : ids) CHECK(id != 1);
}

TEST_CASE("build_index: all-empty side is an error") {
    auto tm = tiny_memory({"", ""});
    CHECK_THROWS_AS(TmIndex::build(tm, Side::Target), Error);
}

TEST_CASE("candidates: superset of the exhaustive qualifying set") {
    Pcg32 rng(53);
    for (int iter = 0; iter < 20; ++iter) {
        auto tm = testutil::random_memory(rng, 50, 8, 5);
        auto idx = TmIndex::build(tm, Side::Target);
        auto query = testutil::seg(testutil::join(testutil::random_tokens(rng, 8, 5)));
        for (double min_fms : {60.0, 75.0, 30.0}) {
            auto cand = idx.candidates(query, min_fms);
            std::set<std::uint32_t> cset(cand.begin(), cand.end());
            for (const auto& m : exhaustive_lookup(tm, Side::Target, query, min_fms, 1000)) {
                CAPTURE(min_fms);
                CAPTURE(query.raw);
                CHECK(cset.count(m.unit_id) == 1);
            }
        }
    }
}

TEST_CASE("candidates: min_fms 0 returns every unit") {
    auto tm = tiny_memory({"the red dog", "nothing shared", "red cat"});
    auto idx = TmIndex::build(tm, Side::Target);
    auto query = testutil::seg("zz yy");
    auto cand = idx.candidates(query, 0.0);
    CHECK(cand == std::vector<std::uint32_t>{0, 1, 2});
}

TEST_CASE("candidates: query identical to a unit is kept at min_fms 60") {
    auto tm = tiny_memory({"a b", "c d", "the exact query text here"});
    auto idx = TmIndex::build(tm, Side::Target);
    auto cand = idx.candidates(testutil::seg("the exact query text here"), 60.0);
    CHECK(std::find(cand.begin(), cand.end(), 2u) != cand.end());
}

TEST_CASE("fuzzy_lookup: exact copy of a unit scores 100 and comes first") {
    auto tm = tiny_memory({"the red dog", "the blue dog", "a cat"});
    auto idx = TmIndex::build(tm, Side::Target);
    auto res = fuzzy_lookup(idx, tm, testutil::seg("the blue dog"), 60.0, 3);
    REQUIRE(!res.empty());
    CHECK(res[0].unit_id == 1);
    CHECK(res[0].fms == 100.0);
    CHECK(res[0].script.cost == 0);
}

TEST_CASE("fuzzy_lookup: no shared tokens above threshold gives empty") {
    auto tm = tiny_memory({"aa bb cc", "dd ee ff"});
    auto idx = TmIndex::build(tm, Side::Target);
    CHECK(fuzzy_lookup(idx, tm, testutil::seg("xx yy zz"), 60.0, 2).empty());
}

TEST_CASE("fuzzy_lookup: equals exhaustive scan on random memories") {
    Pcg32 rng(59);
    for (int mem = 0; mem < 12; ++mem) {
        auto tm = testutil::random_memory(rng, 20 + rng.bounded(180), 8, 5);
        auto idx = TmIndex::build(tm, Side::Target);
        for (int q = 0; q < 20; ++q) {
            auto query = testutil::seg(testutil::join(testutil::random_tokens(rng, 8, 5)));
            double min_fms = static_cast<double>(rng.bounded(3) * 30); // 0, 30, 60
            std::size_t k = 1 + rng.bounded(5);
            auto got = fuzzy_lookup(idx, tm, query, min_fms, k);
            auto want = exhaustive_lookup(tm, Side::Target, query, min_fms, k);
            CAPTURE(query.raw);
            CAPTURE(min_fms);
            CAPTURE(k);
            CHECK(same_results(got, want));
        }
    }
}

TEST_CASE("fuzzy_lookup: monotone in min_fms") {
    Pcg32 rng(61);
    auto tm = testutil::random_memory(rng, 40, 8, 5);
    auto idx = TmIndex::build(tm, Side::Target);
    for (int q = 0; q < 10; ++q) {
        auto query = testutil::seg(testutil::join(testutil::random_tokens(rng, 8, 5)));
        std::size_t prev_n = SIZE_MAX;
        for (double f : {0.0, 40.0, 60.0, 80.0, 95.0}) {
            auto res = fuzzy_lookup(idx, tm, query, f, 1000);
            CHECK(res.size() <= prev_n);
            prev_n = res.size();
        }
    }
}

TEST_CASE("fuzzy_lookup: equal scores break ties by ascending unit id") {
    auto tm = tiny_memory({"a x c", "a b z", "a b c"});
    auto idx = TmIndex::build(tm, Side::Target);
    auto res = fuzzy_lookup(idx, tm, testutil::seg("a b c"), 0.0, 3);
    REQUIRE(res.size() == 3);
    CHECK(res[0].unit_id == 2);   // exact match first
    CHECK(res[1].unit_id == 0);   // 66.67 ties broken by ascending id
    CHECK(res[2].unit_id == 1);
    CHECK(res[1].fms == res[2].fms);
}

TEST_CASE("fuzzy_lookup: exclude_exact drops only distance-zero results") {
    auto tm = tiny_memory({"a b c", "a b c", "a b d"});
    auto idx = TmIndex::build(tm, Side::Target);
    auto res = fuzzy_lookup(idx, tm, testutil::seg("a b c"), 60.0, 3, {true});
    REQUIRE(res.size() == 1);
    CHECK(res[0].unit_id == 2);
    CHECK(res[0].fms < 100.0);
}

TEST_CASE("fuzzy_lookup: n-gram order 2 stays exact") {
    Pcg32 rng(67);
    for (int mem = 0; mem < 6; ++mem) {
        auto tm = testutil::random_memory(rng, 60, 8, 5);
        auto idx = TmIndex::build(tm, Side::Target, {2, 0.0});
        for (int q = 0; q < 10; ++q) {
            auto query = testutil::seg(testutil::join(testutil::random_tokens(rng, 8, 5)));
            auto got = fuzzy_lookup(idx, tm, query, 60.0, 3);
            auto want = exhaustive_lookup(tm, Side::Target, query, 60.0, 3);
            CAPTURE(query.raw);
            CHECK(same_results(got, want));
        }
    }
}

TEST_CASE("index snapshot: round-trips bit-exactly") {
    Pcg32 rng(71);
    auto tm = testutil::random_memory(rng, 30);
    auto idx = TmIndex::build(tm, Side::Target, {1, 0.5});
    std::ostringstream os(std::ios::binary);
    idx.save(os);
    std::istringstream is(os.str(), std::ios::binary);
    auto back = TmIndex::load(is);
    CHECK(back.side() == idx.side());
    CHECK(back.config() == idx.config());
    CHECK(back.lengths() == idx.lengths());
    CHECK(back.postings() == idx.postings());
    CHECK(back.memory_fingerprint() == idx.memory_fingerprint());
    CHECK(back.fingerprint() == idx.fingerprint());

    // saving the loaded index reproduces the same bytes
    std::ostringstream os2(std::ios::binary);
    back.save(os2);
    CHECK(os.str() == os2.str());
}

TEST_CASE("index snapshot: wrong magic and truncation fail loudly") {
    Pcg32 rng(73);
    auto tm = testutil::random_memory(rng, 5);
    auto idx = TmIndex::build(tm, Side::Target);
    std::ostringstream os(std::ios::binary);
    idx.save(os);
    std::string bytes = os.str();

    std::istringstream junk("NOTANIDX" + bytes.substr(8), std::ios::binary);
    CHECK_THROWS_WITH_AS(TmIndex::load(junk), doctest::Contains("not a tmfill index"), Error);

    std::istringstream trunc(bytes.substr(0, bytes.size() / 2), std::ios::binary);
    CHECK_THROWS_WITH_AS(TmIndex::load(trunc), doctest::Contains("truncated"), Error);

    std::string wrong_version = bytes;
    wrong_version[8] = 9; // bump the little-endian version field
    std::istringstream vs(wrong_version, std::ios::binary);
    CHECK_THROWS_WITH_AS(TmIndex::load(vs), doctest::Contains("version mismatch"), Error);
}
