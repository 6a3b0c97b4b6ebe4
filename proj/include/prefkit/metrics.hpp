#pragma once

// Scores any reward function against gold partial rankings. Accuracy is the
// fraction of closure pairs where the preferred response scores strictly
// higher; exact match is the fraction of prompts where every closure pair
// does. Score ties count as incorrect (strict inequality), and results are
// macro-averaged over categories.

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "prefkit/errors.hpp"
#include "prefkit/graph.hpp"
#include "prefkit/types.hpp"

namespace prefkit::metrics {

inline constexpr const char* kUncategorized = "uncategorized";

struct PairStat {
    std::size_t correct = 0;
    std::size_t pairs = 0;

    // A category with no comparable pairs counts as fully ordered; together
    // with exact-matching prompts with empty closures, this keeps the
    // invariant exact_match == 1 => accuracy == 1.
    double value() const {
        return pairs == 0 ? 1.0 : static_cast<double>(correct) / static_cast<double>(pairs);
    }
};

struct PromptStat {
    std::size_t matched = 0;
    std::size_t prompts = 0;

    double value() const {
        return prompts == 0 ? 1.0 : static_cast<double>(matched) / static_cast<double>(prompts);
    }
};

struct CategoryMetrics {
    double accuracy = 0.0;
    double exact_match = 0.0;
    std::size_t n_pairs = 0;
    std::size_t n_prompts = 0;
};

struct MetricReport {
    std::map<std::string, CategoryMetrics> per_category;
    double macro_accuracy = 0.0;
    double macro_exact = 0.0;
};

using CategoryMap = std::map<std::string, std::string>;  // prompt_id -> category

namespace detail {

inline const std::string& category_of(const CategoryMap& categories, const std::string& prompt_id) {
    static const std::string uncategorized = kUncategorized;
    const auto it = categories.find(prompt_id);
    return it == categories.end() ? uncategorized : it->second;
}

inline void check_coverage(const std::vector<graph::PartialRanking>& rankings,
                           const ScoreTable& scores) {
    for (const auto& ranking : rankings) {
        for (const auto& tier : ranking.tiers) {
            for (const auto& id : tier) {
                if (scores.find(ranking.prompt_id, id) == nullptr) {
                    throw MissingScore("missing score for (" + ranking.prompt_id + ", " + id + ")");
                }
            }
        }
    }
}

}  // namespace detail

// Per-category pairwise accuracy counts over all closure pairs.
inline std::map<std::string, PairStat> pairwise_accuracy(
    const std::vector<graph::PartialRanking>& rankings, const ScoreTable& scores,
    const CategoryMap& categories) {
    detail::check_coverage(rankings, scores);
    std::map<std::string, PairStat> out;
    for (const auto& ranking : rankings) {
        auto& stat = out[detail::category_of(categories, ranking.prompt_id)];
        for (const auto& [winner, loser] : ranking.closure) {
            ++stat.pairs;
            if (scores.at(ranking.prompt_id, winner) > scores.at(ranking.prompt_id, loser)) {
                ++stat.correct;
            }
        }
    }
    return out;
}

// Per-category exact-match counts. A prompt matches iff every closure pair
// is ordered correctly; an empty closure matches vacuously.
inline std::map<std::string, PromptStat> exact_match(
    const std::vector<graph::PartialRanking>& rankings, const ScoreTable& scores,
    const CategoryMap& categories) {
    detail::check_coverage(rankings, scores);
    std::map<std::string, PromptStat> out;
    for (const auto& ranking : rankings) {
        auto& stat = out[detail::category_of(categories, ranking.prompt_id)];
        ++stat.prompts;
        bool all_correct = true;
        for (const auto& [winner, loser] : ranking.closure) {
            if (!(scores.at(ranking.prompt_id, winner) > scores.at(ranking.prompt_id, loser))) {
                all_correct = false;
                break;
            }
        }
        if (all_correct) ++stat.matched;
    }
    return out;
}

// Unweighted mean over categories, not prompt-weighted.
inline double macro_average(const std::vector<double>& values) {
    if (values.empty()) throw EmptyInput("macro average of zero categories");
    double sum = 0.0;
    for (const double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

// Arithmetic mean of accuracy and exact match across two evaluation subsets.
inline double aggregate_overall(double acc_open, double exact_open, double acc_human,
                                double exact_human) {
    return (acc_open + exact_open + acc_human + exact_human) / 4.0;
}

// Response with the maximal score; ties break to the smallest response id.
inline std::string best_of_n(const std::string& prompt_id, const ScoreTable& scores) {
    const auto* prompt_scores = scores.prompt_scores(prompt_id);
    if (prompt_scores == nullptr || prompt_scores->empty()) {
        throw NoResponses("no scored responses for prompt " + prompt_id);
    }
    auto best = prompt_scores->begin();
    for (auto it = std::next(best); it != prompt_scores->end(); ++it) {
        if (it->second > best->second) best = it;
    }
    return best->first;
}

// Full report: per-category accuracy/exact match plus macro averages.
inline MetricReport evaluate(const std::vector<graph::PartialRanking>& rankings,
                             const ScoreTable& scores, const CategoryMap& categories) {
    const auto acc = pairwise_accuracy(rankings, scores, categories);
    const auto exact = exact_match(rankings, scores, categories);

    MetricReport report;
    std::vector<double> acc_values, exact_values;
    for (const auto& [category, stat] : exact) {
        const auto& pair_stat = acc.at(category);
        CategoryMetrics m;
        m.accuracy = pair_stat.value();
        m.exact_match = stat.value();
        m.n_pairs = pair_stat.pairs;
        m.n_prompts = stat.prompts;
        report.per_category.emplace(category, m);
        acc_values.push_back(m.accuracy);
        exact_values.push_back(m.exact_match);
    }
    report.macro_accuracy = macro_average(acc_values);
    report.macro_exact = macro_average(exact_values);
    return report;
}

}  // namespace prefkit::metrics
