#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>
#include <string>

#include "ctxlab/metrics.hpp"

using namespace ctxlab;

namespace {

std::string random_ascii(std::mt19937_64& rng, std::size_t max_len, const char* alphabet = "abc") {
    std::size_t len = rng() % (max_len + 1);
    std::string s;
    s.reserve(len);
    std::size_t n = std::string(alphabet).size();
    for (std::size_t i = 0; i < len; ++i) s.push_back(alphabet[rng() % n]);
    return s;
}

// Full DP table over bytes; callers feed it ASCII so bytes == scalars.
std::size_t dp_table_oracle(const std::string& a, const std::string& b) {
    std::vector<std::vector<std::size_t>> dp(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
    for (std::size_t i = 0; i <= a.size(); ++i) dp[i][0] = i;
    for (std::size_t j = 0; j <= b.size(); ++j) dp[0][j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            std::size_t sub = dp[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
            dp[i][j] = std::min({dp[i - 1][j] + 1, dp[i][j - 1] + 1, sub});
        }
    }
    return dp[a.size()][b.size()];
}

}  // namespace

TEST_CASE("levenshtein on hand cases") {
    CHECK(levenshtein("", "abc") == 3);
    CHECK(levenshtein("abc", "") == 3);
    CHECK(levenshtein("same", "same") == 0);
    CHECK(levenshtein("kitten", "sitting") == 3);
}

TEST_CASE("levenshtein counts Unicode scalars, not bytes") {
    CHECK(levenshtein("λ", "") == 1);        // one scalar, two bytes
    CHECK(levenshtein("λx", "x") == 1);
    CHECK(levenshtein("héllo", "hello") == 1);
}

TEST_CASE("levenshtein matches the full DP-table oracle on random pairs") {
    std::mt19937_64 rng(101);
    for (int trial = 0; trial < 500; ++trial) {
        std::string a = random_ascii(rng, 64);
        std::string b = random_ascii(rng, 64);
        CHECK(levenshtein(a, b) == dp_table_oracle(a, b));
    }
}

TEST_CASE("levenshtein satisfies the metric axioms on random triples") {
    std::mt19937_64 rng(103);
    for (int trial = 0; trial < 500; ++trial) {
        std::string a = random_ascii(rng, 24);
        std::string b = random_ascii(rng, 24);
        std::string c = random_ascii(rng, 24);
        std::size_t ab = levenshtein(a, b);
        CHECK(ab == levenshtein(b, a));                       // symmetry
        CHECK((ab == 0) == (a == b));                         // identity
        CHECK(levenshtein(a, c) <= ab + levenshtein(b, c));   // triangle
    }
}

TEST_CASE("edit similarity endpoints") {
    CHECK(edit_similarity("def f():", "def f():") == 100.0);
    CHECK(edit_similarity("abc", "") == 0.0);
    CHECK(edit_similarity("", "") == 100.0);  // defined away from 0/0
}

TEST_CASE("edit similarity of kitten/sitting is 100*(1 - 3/7)") {
    double sim = edit_similarity("kitten", "sitting");
    CHECK(sim == doctest::Approx(57.142857).epsilon(1e-8));
    CHECK(std::abs(sim - 400.0 / 7.0) < 1e-12);
}

TEST_CASE("edit similarity is symmetric and 100 only for identical strings") {
    std::mt19937_64 rng(105);
    for (int trial = 0; trial < 200; ++trial) {
        std::string a = random_ascii(rng, 16);
        std::string b = random_ascii(rng, 16);
        double ab = edit_similarity(a, b);
        CHECK(ab == edit_similarity(b, a));
        CHECK((ab == 100.0) == (a == b));
    }
}

TEST_CASE("each fresh insertion strictly lowers edit similarity") {
    std::string base = "return value;";
    std::string grown = base;
    double prev = edit_similarity(base, grown);
    CHECK(prev == 100.0);
    // Appended sentinels never occur in the base string, so every step adds
    // exactly one unavoidable edit.
    for (char sentinel : {'#', '$', '%', '&', '@'}) {
        grown.push_back(sentinel);
        double sim = edit_similarity(base, grown);
        CHECK(sim < prev);
        prev = sim;
    }
}

TEST_CASE("exact match trims edges but keeps interior whitespace strict") {
    CHECK(exact_match("x = 1", "x = 1"));
    CHECK(exact_match("x = 1 ", "x = 1"));
    CHECK(exact_match("\tx = 1\n", "x = 1"));
    CHECK_FALSE(exact_match("x=1", "x = 1"));
    CHECK_FALSE(exact_match("x  =  1", "x = 1"));
}

TEST_CASE("score_pair forces edit_sim to 100 whenever em holds") {
    ScoredPair p = score_pair("x = 1   ", "x = 1");
    CHECK(p.em);
    CHECK(p.edit_sim == 100.0);

    ScoredPair q = score_pair("x = 2", "x = 1");
    CHECK_FALSE(q.em);
    CHECK(q.edit_sim < 100.0);
}

TEST_CASE("aggregate of all exact matches reports 100/100") {
    std::vector<std::pair<GroupKey, ScoredPair>> pairs;
    for (int i = 0; i < 4; ++i) {
        pairs.emplace_back(GroupKey{"python", "rope+naive"}, score_pair("a = 1", "a = 1"));
    }
    EvalReport report = aggregate(pairs);
    const GroupStats& s = report.groups.at(GroupKey{"python", "rope+naive"});
    CHECK(s.task_count == 4);
    CHECK(*s.em_percent == 100.0);
    CHECK(*s.mean_edit_sim == 100.0);
}

TEST_CASE("aggregate of a single miss reports (0, 50)") {
    std::vector<std::pair<GroupKey, ScoredPair>> pairs;
    ScoredPair p;
    p.em = false;
    p.edit_sim = 50.0;
    pairs.emplace_back(GroupKey{"java", "rope+flash"}, p);
    EvalReport report = aggregate(pairs);
    const GroupStats& s = report.groups.at(GroupKey{"java", "rope+flash"});
    CHECK(s.task_count == 1);
    CHECK(*s.em_percent == 0.0);
    CHECK(*s.mean_edit_sim == 50.0);
}

TEST_CASE("aggregate matches an independent fold and ignores input order") {
    std::mt19937_64 rng(107);
    std::vector<std::pair<GroupKey, ScoredPair>> pairs;
    std::vector<GroupKey> keys = {{"python", "s"}, {"csharp", "s"}, {"java", "s"}};
    for (int i = 0; i < 100; ++i) {
        ScoredPair p;
        p.em = rng() % 4 == 0;
        p.edit_sim = p.em ? 100.0 : static_cast<double>(rng() % 1000) / 10.0;
        pairs.emplace_back(keys[rng() % keys.size()], p);
    }

    EvalReport report = aggregate(pairs);

    // Fold oracle: single pass sums per key.
    for (const GroupKey& key : keys) {
        std::size_t count = 0, ems = 0;
        double sum = 0.0;
        for (const auto& [k, p] : pairs) {
            if (!(k == key)) continue;
            ++count;
            ems += p.em ? 1 : 0;
            sum += p.edit_sim;
        }
        const GroupStats& s = report.groups.at(key);
        CHECK(s.task_count == count);
        if (count > 0) {
            CHECK(*s.em_percent == doctest::Approx(100.0 * ems / count).epsilon(1e-12));
            CHECK(*s.mean_edit_sim == doctest::Approx(sum / count).epsilon(1e-12));
        }
    }

    // Permutation invariance.
    std::shuffle(pairs.begin(), pairs.end(), rng);
    EvalReport shuffled = aggregate(pairs);
    CHECK(shuffled.groups.size() == report.groups.size());
    for (const auto& [key, s] : report.groups) {
        const GroupStats& t = shuffled.groups.at(key);
        CHECK(t.task_count == s.task_count);
        CHECK(t.em_percent == s.em_percent);
        CHECK(t.mean_edit_sim == s.mean_edit_sim);
    }
}

TEST_CASE("an expected group with no pairs reports zero tasks and null scores") {
    EvalReport report = aggregate({}, {{"python", "rope+naive"}});
    const GroupStats& s = report.groups.at(GroupKey{"python", "rope+naive"});
    CHECK(s.task_count == 0);
    CHECK_FALSE(s.em_percent.has_value());
    CHECK_FALSE(s.mean_edit_sim.has_value());
}

TEST_CASE("em percent never exceeds the share of perfect-similarity pairs") {
    std::mt19937_64 rng(109);
    std::vector<std::pair<GroupKey, ScoredPair>> pairs;
    GroupKey key{"python", "s"};
    std::size_t perfect = 0;
    for (int i = 0; i < 50; ++i) {
        std::string truth = random_ascii(rng, 10, "xyz ");
        std::string pred = rng() % 2 == 0 ? truth : random_ascii(rng, 10, "xyz ");
        ScoredPair p = score_pair(pred, truth);
        if (p.edit_sim == 100.0) ++perfect;
        pairs.emplace_back(key, p);
    }
    EvalReport report = aggregate(pairs);
    CHECK(*report.groups.at(key).em_percent <= 100.0 * perfect / 50.0 + 1e-12);
}
