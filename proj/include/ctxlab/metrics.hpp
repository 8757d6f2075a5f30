#pragma once

// Exact Match and Edit Similarity scoring for next-line code completion,
// plus grouped aggregation into a per-(language, strategy) report.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ctxlab {

// Unicode scalar values of a UTF-8 string. Lenient: bytes that do not form a
// valid sequence each decode to their own code point, so any byte stream
// (e.g. a truncated model generation) still scores deterministically.
std::vector<char32_t> decode_utf8(std::string_view text);

// Unit-cost insert/delete/substitute distance over Unicode scalar values.
std::size_t levenshtein(std::string_view a, std::string_view b);

// 100 * (1 - levenshtein(a, b) / max(|a|, |b|)); 100 when both are empty.
double edit_similarity(std::string_view a, std::string_view b);

// Strips leading/trailing ASCII whitespace. Interior whitespace is kept:
// matching stays stringent on content, only decode edge artifacts are forgiven.
std::string_view trim_edges(std::string_view text);

bool exact_match(std::string_view prediction, std::string_view ground_truth);

struct ScoredPair {
    std::string prediction;
    std::string ground_truth;
    bool em = false;
    double edit_sim = 0.0;  // in [0, 100]; em implies 100
};

// Applies edge-trim normalization to both sides, then scores. em == true
// forces edit_sim == 100 because both metrics see the same normalized text.
ScoredPair score_pair(std::string_view prediction, std::string_view ground_truth);

struct GroupKey {
    std::string language;
    std::string strategy;

    auto operator<=>(const GroupKey&) const = default;
};

struct GroupStats {
    std::size_t task_count = 0;
    std::optional<double> em_percent;     // null when the group is empty
    std::optional<double> mean_edit_sim;  // null when the group is empty
};

struct EvalReport {
    std::map<GroupKey, GroupStats> groups;  // deterministic order
};

// Groups pairs by key and averages. Keys listed in expected_groups appear in
// the report even when no pair landed there (task_count 0, null scores).
EvalReport aggregate(const std::vector<std::pair<GroupKey, ScoredPair>>& pairs,
                     const std::vector<GroupKey>& expected_groups = {});

}  // namespace ctxlab
