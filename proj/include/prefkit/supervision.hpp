#pragma once

// Annotation task scheduling, distant-supervision filtering of machine
// verdicts, length debiasing, rule-based quality screening, and annotator
// bias reporting.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "prefkit/errors.hpp"
#include "prefkit/graph.hpp"
#include "prefkit/rng.hpp"
#include "prefkit/text.hpp"
#include "prefkit/types.hpp"

namespace prefkit::supervision {

enum class TaskKind { Pair, Triple };

// One comparison task; `presented` records the exact presentation order.
struct AnnotationTask {
    std::string prompt_id;
    TaskKind kind = TaskKind::Pair;
    std::vector<std::string> presented;

    friend bool operator==(const AnnotationTask&, const AnnotationTask&) = default;
};

namespace detail {

inline std::vector<std::string> distinct_sorted(const std::vector<std::string>& ids) {
    std::vector<std::string> out(ids);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

}  // namespace detail

// All C(N, 2) pair tasks, one per unordered pair, enumerated over the sorted
// response ids. The presentation order inside each task is a seeded coin
// flip, so the pair set is seed-independent but slot assignment is not.
inline std::vector<AnnotationTask> schedule_pairs(const std::string& prompt_id,
                                                  const std::vector<std::string>& response_ids,
                                                  std::uint64_t seed) {
    const std::vector<std::string> ids = detail::distinct_sorted(response_ids);
    if (ids.size() < 2) {
        throw TooFewResponses("prompt " + prompt_id + " has " + std::to_string(ids.size()) +
                              " distinct responses; need at least 2");
    }
    Rng rng(seed);
    std::vector<AnnotationTask> tasks;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        for (std::size_t j = i + 1; j < ids.size(); ++j) {
            AnnotationTask task;
            task.prompt_id = prompt_id;
            task.kind = TaskKind::Pair;
            if (rng.coin()) {
                task.presented = {ids[j], ids[i]};
            } else {
                task.presented = {ids[i], ids[j]};
            }
            tasks.push_back(std::move(task));
        }
    }
    return tasks;
}

// Five triple tasks over circularly adjacent positions of a seeded shuffle
// of exactly five responses. The within-triple pairs cover all ten unordered
// pairs, the five adjacent ones twice.
inline std::vector<AnnotationTask> schedule_triples(const std::string& prompt_id,
                                                    const std::vector<std::string>& response_ids,
                                                    std::uint64_t seed) {
    std::vector<std::string> ids = detail::distinct_sorted(response_ids);
    if (ids.size() != 5) {
        throw WrongCount("prompt " + prompt_id + " has " + std::to_string(ids.size()) +
                         " distinct responses; triple scheduling requires exactly 5");
    }
    Rng rng(seed);
    rng.shuffle(ids);
    std::vector<AnnotationTask> tasks;
    for (std::size_t i = 0; i < 5; ++i) {
        AnnotationTask task;
        task.prompt_id = prompt_id;
        task.kind = TaskKind::Triple;
        task.presented = {ids[i], ids[(i + 1) % 5], ids[(i + 2) % 5]};
        tasks.push_back(std::move(task));
    }
    return tasks;
}

struct FilterOptions {
    double margin = 0.0;
    // Keep ties whose two responses score exactly equal, merging them in the
    // output graph instead of dropping the record. Tolerance-based tie
    // keeping is not offered: a chain of near-equal ties can span more than
    // the margin and reintroduce cycles.
    bool keep_equal_score_ties = false;
};

struct FilterResult {
    std::vector<PreferencePair> kept;
    std::size_t dropped = 0;
    std::size_t merged_ties = 0;
    std::vector<graph::PreferenceGraph> graphs;  // one per prompt, acyclic

    bool all_acyclic() const {
        for (const auto& g : graphs) {
            if (!g.acyclic()) return false;
        }
        return true;
    }
};

// Code-point length of every response text, for filling PreferencePair.
using LengthTable = std::map<std::string, std::map<std::string, std::size_t>>;

inline LengthTable response_lengths(const std::vector<ResponseRecord>& responses) {
    LengthTable lengths;
    for (const auto& r : responses) {
        lengths[r.prompt_id][r.response_id] = text::count_codepoints(r.text);
    }
    return lengths;
}

namespace detail {

inline std::size_t length_of(const LengthTable* lengths, const std::string& prompt_id,
                             const std::string& response_id) {
    if (lengths == nullptr) return 0;
    const auto p = lengths->find(prompt_id);
    if (p != lengths->end()) {
        const auto r = p->second.find(response_id);
        if (r != p->second.end()) return r->second;
    }
    throw DanglingResponse("no response text for (" + prompt_id + ", " + response_id + ")");
}

// Union-find over response ids, for merging equal-score ties.
struct UnionFind {
    std::map<std::string, std::string> parent;

    const std::string& find(const std::string& x) {
        auto it = parent.find(x);
        if (it == parent.end()) it = parent.emplace(x, x).first;
        if (it->second == x) return it->first;
        const std::string root = find(it->second);
        parent[x] = root;
        return parent.find(x)->second;
    }

    void unite(const std::string& a, const std::string& b) {
        const std::string ra = find(a);
        const std::string rb = find(b);
        if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
    }
};

}  // namespace detail

// Distant supervision: keeps a strict machine verdict (w beats l) iff
// score(w) - score(l) > margin. Every kept edge agrees with the strict order
// induced by the scores, so the per-prompt graphs are acyclic for any input,
// including annotation cycles. Ties are dropped (or, optionally, merged
// when the scores are exactly equal). Margin grows, kept set shrinks.
inline FilterResult filter_with_scores(const std::vector<AnnotationRecord>& annotations,
                                       const ScoreTable& scores, const FilterOptions& options = {},
                                       const LengthTable* lengths = nullptr) {
    if (options.margin < 0.0) {
        throw ConfigError("filter margin must be >= 0, got " + std::to_string(options.margin));
    }
    for (const auto& a : annotations) {
        for (const auto* id : {&a.first, &a.second}) {
            if (scores.find(a.prompt_id, *id) == nullptr) {
                throw MissingScore("missing score for (" + a.prompt_id + ", " + *id + ")");
            }
        }
    }

    FilterResult result;
    std::map<std::string, std::vector<PreferencePair>> kept_by_prompt;
    std::map<std::string, detail::UnionFind> merges;
    std::set<std::string> prompts;
    for (const auto& a : annotations) {
        prompts.insert(a.prompt_id);
        if (a.is_tie()) {
            if (options.keep_equal_score_ties &&
                scores.at(a.prompt_id, a.first) == scores.at(a.prompt_id, a.second)) {
                merges[a.prompt_id].unite(a.first, a.second);
                ++result.merged_ties;
            } else {
                ++result.dropped;
            }
            continue;
        }
        const std::string& w = a.winner();
        const std::string& l = a.loser();
        if (scores.at(a.prompt_id, w) - scores.at(a.prompt_id, l) > options.margin) {
            PreferencePair pair;
            pair.prompt_id = a.prompt_id;
            pair.chosen = w;
            pair.rejected = l;
            pair.chosen_len = detail::length_of(lengths, a.prompt_id, w);
            pair.rejected_len = detail::length_of(lengths, a.prompt_id, l);
            kept_by_prompt[a.prompt_id].push_back(std::move(pair));
        } else {
            ++result.dropped;
        }
    }

    for (const auto& prompt_id : prompts) {
        const auto kept_it = kept_by_prompt.find(prompt_id);
        const bool has_pairs = kept_it != kept_by_prompt.end();
        auto& uf = merges[prompt_id];

        // Nodes: everything mentioned by kept pairs or merged ties.
        std::map<std::string, std::vector<std::string>> classes;
        for (const auto& [id, _] : uf.parent) classes[uf.find(id)].push_back(id);
        if (has_pairs) {
            for (const auto& pair : kept_it->second) {
                for (const auto* id : {&pair.chosen, &pair.rejected}) {
                    if (uf.parent.count(*id) == 0) classes[*id].push_back(*id);
                }
            }
        }
        if (classes.empty()) continue;

        graph::PreferenceGraph g;
        g.prompt_id = prompt_id;
        for (auto& [root, members] : classes) {
            (void)root;
            std::sort(members.begin(), members.end());
            members.erase(std::unique(members.begin(), members.end()), members.end());
            g.supernodes.push_back(std::move(members));
        }
        std::sort(g.supernodes.begin(), g.supernodes.end());
        for (std::size_t s = 0; s < g.supernodes.size(); ++s) {
            for (const auto& id : g.supernodes[s]) g.membership.emplace(id, s);
        }
        if (has_pairs) {
            for (const auto& pair : kept_it->second) {
                g.edges.insert({g.membership.at(pair.chosen), g.membership.at(pair.rejected)});
            }
            result.kept.insert(result.kept.end(), kept_it->second.begin(), kept_it->second.end());
        }
        result.graphs.push_back(std::move(g));
    }
    return result;
}

inline FilterResult filter_with_scores(const std::vector<AnnotationRecord>& annotations,
                                       const ScoreTable& scores, double margin,
                                       const LengthTable* lengths = nullptr) {
    FilterOptions options;
    options.margin = margin;
    return filter_with_scores(annotations, scores, options, lengths);
}

// Balances chosen-longer against chosen-shorter pairs by downsampling the
// larger group (seeded, without replacement). Equal-length pairs pass
// through; output keeps the original order.
inline std::vector<PreferencePair> length_debias(const std::vector<PreferencePair>& pairs,
                                                 std::uint64_t seed) {
    std::vector<std::size_t> longer, shorter;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (pairs[i].chosen_len > pairs[i].rejected_len) {
            longer.push_back(i);
        } else if (pairs[i].chosen_len < pairs[i].rejected_len) {
            shorter.push_back(i);
        }
    }
    const std::size_t target = std::min(longer.size(), shorter.size());
    std::vector<bool> keep(pairs.size(), true);
    auto& larger = longer.size() > shorter.size() ? longer : shorter;
    if (larger.size() > target) {
        Rng rng(seed);
        std::vector<std::size_t> sampled(larger);
        rng.shuffle(sampled);
        sampled.resize(target);
        const std::set<std::size_t> retained(sampled.begin(), sampled.end());
        for (const std::size_t i : larger) {
            if (retained.count(i) == 0) keep[i] = false;
        }
    }
    std::vector<PreferencePair> out;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (keep[i]) out.push_back(pairs[i]);
    }
    return out;
}

// Rule-based response screening thresholds.
struct QualityConfig {
    std::size_t max_chars = 4096;
    double min_target_script_ratio = 0.3;

    void validate() const {
        if (max_chars == 0) throw ConfigError("quality max_chars must be > 0");
        if (!(min_target_script_ratio >= 0.0 && min_target_script_ratio <= 1.0)) {
            throw ConfigError("quality min_target_script_ratio must be in [0, 1]");
        }
    }
};

struct QualityFlags {
    bool abnormal_length = false;
    bool non_target_script = false;

    bool any() const { return abnormal_length || non_target_script; }

    friend bool operator==(const QualityFlags&, const QualityFlags&) = default;
};

// Flags abnormally long responses and responses whose CJK-ideograph share of
// content characters (everything except whitespace, ASCII digits, and
// punctuation) falls strictly below the threshold. Empty or symbol-only
// text has no content characters and is flagged whenever a positive ratio
// is required.
inline QualityFlags quality_flags(const ResponseRecord& response, const QualityConfig& config) {
    config.validate();
    std::size_t total = 0, content = 0, target = 0;
    std::string_view s(response.text);
    for (std::size_t i = 0; i < s.size();) {
        const char32_t c = text::decode(s, i);
        ++total;
        if (text::is_whitespace(c) || text::is_ascii_digit(c) || text::is_punctuation(c)) continue;
        ++content;
        if (text::is_cjk_ideograph(c)) ++target;
    }
    QualityFlags flags;
    flags.abnormal_length = total > config.max_chars;
    if (content == 0) {
        flags.non_target_script = config.min_target_script_ratio > 0.0;
    } else {
        const double ratio = static_cast<double>(target) / static_cast<double>(content);
        flags.non_target_script = ratio < config.min_target_script_ratio;
    }
    return flags;
}

struct PositionBias {
    std::optional<double> first_shown_win_rate;  // absent when no strict records
    std::size_t n = 0;                           // strict records
    std::size_t ties = 0;
};

struct LengthBucket {
    std::optional<long long> delta_min;  // absent = unbounded below
    std::optional<long long> delta_max;  // absent = unbounded above
    std::optional<double> first_win_rate;
    std::size_t n = 0;
};

struct BiasReport {
    PositionBias position;
    std::vector<LengthBucket> length_buckets;
};

// Matches the default reporting bins: (-inf,-500], (-500,-200], (-200,-50],
// (-50,50), [50,200), [200,500), [500,inf).
inline std::vector<long long> default_bucket_edges() { return {-500, -200, -50, 50, 200, 500}; }

namespace detail {

// Boundary values belong to the bucket farther from zero, which makes the
// default bins mirror-symmetric around zero.
inline std::size_t bucket_index(long long delta, const std::vector<long long>& edges) {
    std::size_t index = 0;
    for (const long long e : edges) {
        const bool passed = e < 0 ? delta > e : delta >= e;
        if (passed) ++index;
    }
    return index;
}

}  // namespace detail

// Positional and length bias of an annotator: the rate at which the
// first-shown response wins, overall and by length difference
// len(first) - len(second). Tie records are counted but excluded from rates.
inline BiasReport bias_report(const std::vector<AnnotationRecord>& annotations,
                              const std::vector<ResponseRecord>& responses,
                              const std::vector<long long>& bucket_edges = default_bucket_edges()) {
    for (std::size_t i = 1; i < bucket_edges.size(); ++i) {
        if (!(bucket_edges[i - 1] < bucket_edges[i])) {
            throw ConfigError("bucket edges must be strictly increasing");
        }
    }
    const LengthTable lengths = response_lengths(responses);

    BiasReport report;
    report.length_buckets.resize(bucket_edges.size() + 1);
    for (std::size_t b = 0; b < report.length_buckets.size(); ++b) {
        if (b > 0) report.length_buckets[b].delta_min = bucket_edges[b - 1];
        if (b < bucket_edges.size()) report.length_buckets[b].delta_max = bucket_edges[b];
    }

    std::size_t first_wins = 0;
    std::vector<std::size_t> bucket_first_wins(report.length_buckets.size(), 0);
    for (const auto& a : annotations) {
        const auto len_first = detail::length_of(&lengths, a.prompt_id, a.first);
        const auto len_second = detail::length_of(&lengths, a.prompt_id, a.second);
        if (a.is_tie()) {
            ++report.position.ties;
            continue;
        }
        ++report.position.n;
        const long long delta =
            static_cast<long long>(len_first) - static_cast<long long>(len_second);
        const std::size_t b = detail::bucket_index(delta, bucket_edges);
        ++report.length_buckets[b].n;
        if (a.verdict == Verdict::First) {
            ++first_wins;
            ++bucket_first_wins[b];
        }
    }
    if (report.position.n > 0) {
        report.position.first_shown_win_rate =
            static_cast<double>(first_wins) / static_cast<double>(report.position.n);
    }
    for (std::size_t b = 0; b < report.length_buckets.size(); ++b) {
        if (report.length_buckets[b].n > 0) {
            report.length_buckets[b].first_win_rate = static_cast<double>(bucket_first_wins[b]) /
                                                      static_cast<double>(report.length_buckets[b].n);
        }
    }
    return report;
}

}  // namespace prefkit::supervision
