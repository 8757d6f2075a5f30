#include "ctxlab/metrics.hpp"

#include <algorithm>
#include <cctype>

namespace ctxlab {

std::vector<char32_t> decode_utf8(std::string_view text) {
    std::vector<char32_t> out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        unsigned char b0 = static_cast<unsigned char>(text[i]);
        std::size_t extra = 0;
        char32_t cp = 0;
        if (b0 < 0x80) {
            cp = b0;
        } else if ((b0 & 0xe0) == 0xc0) {
            extra = 1;
            cp = b0 & 0x1f;
        } else if ((b0 & 0xf0) == 0xe0) {
            extra = 2;
            cp = b0 & 0x0f;
        } else if ((b0 & 0xf8) == 0xf0) {
            extra = 3;
            cp = b0 & 0x07;
        } else {
            out.push_back(b0);  // stray continuation / invalid lead byte
            ++i;
            continue;
        }
        if (i + extra + 1 > text.size()) {
            // Truncated sequence: fall back to byte-per-scalar.
            out.push_back(b0);
            ++i;
            continue;
        }
        bool ok = true;
        char32_t acc = cp;
        for (std::size_t k = 1; k <= extra; ++k) {
            unsigned char bk = static_cast<unsigned char>(text[i + k]);
            if ((bk & 0xc0) != 0x80) {
                ok = false;
                break;
            }
            acc = (acc << 6) | (bk & 0x3f);
        }
        if (!ok) {
            out.push_back(b0);
            ++i;
            continue;
        }
        out.push_back(acc);
        i += extra + 1;
    }
    return out;
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
    std::vector<char32_t> ua = decode_utf8(a);
    std::vector<char32_t> ub = decode_utf8(b);
    if (ua.empty()) return ub.size();
    if (ub.empty()) return ua.size();

    // Two-row DP over scalar values.
    std::vector<std::size_t> prev(ub.size() + 1), curr(ub.size() + 1);
    for (std::size_t j = 0; j <= ub.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= ua.size(); ++i) {
        curr[0] = i;
        for (std::size_t j = 1; j <= ub.size(); ++j) {
            std::size_t sub = prev[j - 1] + (ua[i - 1] == ub[j - 1] ? 0 : 1);
            curr[j] = std::min({prev[j] + 1, curr[j - 1] + 1, sub});
        }
        std::swap(prev, curr);
    }
    return prev[ub.size()];
}

double edit_similarity(std::string_view a, std::string_view b) {
    std::size_t la = decode_utf8(a).size();
    std::size_t lb = decode_utf8(b).size();
    std::size_t longest = std::max(la, lb);
    if (longest == 0) return 100.0;
    double dist = static_cast<double>(levenshtein(a, b));
    return 100.0 * (1.0 - dist / static_cast<double>(longest));
}

std::string_view trim_edges(std::string_view text) {
    auto is_ws = [](char c) {
        return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
    };
    std::size_t begin = 0;
    std::size_t end = text.size();
    while (begin < end && is_ws(text[begin])) ++begin;
    while (end > begin && is_ws(text[end - 1])) --end;
    return text.substr(begin, end - begin);
}

bool exact_match(std::string_view prediction, std::string_view ground_truth) {
    return trim_edges(prediction) == trim_edges(ground_truth);
}

ScoredPair score_pair(std::string_view prediction, std::string_view ground_truth) {
    ScoredPair p;
    p.prediction = std::string(prediction);
    p.ground_truth = std::string(ground_truth);
    p.em = exact_match(prediction, ground_truth);
    p.edit_sim = edit_similarity(trim_edges(prediction), trim_edges(ground_truth));
    return p;
}

EvalReport aggregate(const std::vector<std::pair<GroupKey, ScoredPair>>& pairs,
                     const std::vector<GroupKey>& expected_groups) {
    struct Acc {
        std::size_t em_count = 0;
        std::vector<double> edit_sims;
    };
    std::map<GroupKey, Acc> accs;
    for (const auto& g : expected_groups) accs.try_emplace(g);
    for (const auto& [key, pair] : pairs) {
        Acc& a = accs[key];
        if (pair.em) ++a.em_count;
        a.edit_sims.push_back(pair.edit_sim);
    }

    EvalReport report;
    for (auto& [key, a] : accs) {
        GroupStats s;
        s.task_count = a.edit_sims.size();
        if (s.task_count > 0) {
            // Order-insensitive reduce: summation order is fixed by sorting,
            // so the report does not depend on task arrival order.
            std::sort(a.edit_sims.begin(), a.edit_sims.end());
            double sum = 0.0;
            for (double v : a.edit_sims) sum += v;
            s.em_percent =
                100.0 * static_cast<double>(a.em_count) / static_cast<double>(s.task_count);
            s.mean_edit_sim = sum / static_cast<double>(s.task_count);
        }
        report.groups.emplace(key, s);
    }
    return report;
}

}  // namespace ctxlab
