#pragma once

// Per-prompt preference graphs: pairwise verdicts in, conflict-free partial
// rankings out.
//
// A strict verdict adds one directed edge winner -> loser; a tie adds both
// directions. Annotation conflicts show up as cycles. Conflicting responses
// are treated as equal quality: every cycle is collapsed into a supernode
// until the graph is acyclic, which is exactly one strongly-connected-
// component condensation. Kahn layers of the condensed graph become ranking
// tiers, and the transitive closure, expanded back to response ids, gives
// the strict (winner, loser) pairs the ranking actually asserts.

#include <algorithm>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "prefkit/errors.hpp"
#include "prefkit/types.hpp"

namespace prefkit::graph {

// Condensed directed preference structure for one prompt. Supernodes are
// equal-quality response sets; members are sorted and the supernode list is
// sorted by its smallest member, so equal inputs produce identical graphs.
struct PreferenceGraph {
    std::string prompt_id;
    std::vector<std::vector<std::string>> supernodes;
    std::set<std::pair<std::size_t, std::size_t>> edges;  // supernode indices
    std::map<std::string, std::size_t> membership;

    bool acyclic() const {
        const std::size_t n = supernodes.size();
        std::vector<std::size_t> indegree(n, 0);
        for (const auto& [u, v] : edges) {
            if (u == v) return false;
            ++indegree[v];
        }
        std::vector<std::size_t> ready;
        for (std::size_t i = 0; i < n; ++i) {
            if (indegree[i] == 0) ready.push_back(i);
        }
        std::size_t removed = 0;
        while (!ready.empty()) {
            const std::size_t u = ready.back();
            ready.pop_back();
            ++removed;
            for (const auto& [a, b] : edges) {
                if (a == u && --indegree[b] == 0) ready.push_back(b);
            }
        }
        return removed == n;
    }
};

// Ordered tiers (tier 0 best) plus the strict-partial-order closure.
// Incomparable pairs assert nothing and do not appear in the closure.
struct PartialRanking {
    std::string prompt_id;
    std::vector<std::vector<std::string>> tiers;
    std::set<std::pair<std::string, std::string>> closure;

    friend bool operator==(const PartialRanking&, const PartialRanking&) = default;

    std::set<std::string> response_ids() const {
        std::set<std::string> ids;
        for (const auto& tier : tiers) ids.insert(tier.begin(), tier.end());
        return ids;
    }
};

namespace detail {

inline void check_endpoints(const AnnotationRecord& a, const std::set<std::string>* known) {
    if (a.first == a.second) {
        throw DataError("annotation compares response '" + a.first + "' with itself (prompt " +
                        a.prompt_id + ")");
    }
    if (known != nullptr) {
        for (const auto* id : {&a.first, &a.second}) {
            if (known->count(*id) == 0) {
                throw DanglingResponse("annotation references unknown response '" + *id +
                                       "' (prompt " + a.prompt_id + ")");
            }
        }
    }
}

inline PreferenceGraph build_graph_impl(const std::vector<AnnotationRecord>& annotations,
                                        const std::set<std::string>* known) {
    PreferenceGraph g;
    if (annotations.empty()) return g;
    g.prompt_id = annotations.front().prompt_id;
    std::set<std::string> ids;
    for (const auto& a : annotations) {
        if (a.prompt_id != g.prompt_id) {
            throw MixedPrompt("annotations mix prompts '" + g.prompt_id + "' and '" +
                              a.prompt_id + "'");
        }
        check_endpoints(a, known);
        ids.insert(a.first);
        ids.insert(a.second);
    }
    for (const auto& id : ids) {
        g.membership.emplace(id, g.supernodes.size());
        g.supernodes.push_back({id});
    }
    for (const auto& a : annotations) {
        const std::size_t u = g.membership.at(a.first);
        const std::size_t v = g.membership.at(a.second);
        switch (a.verdict) {
            case Verdict::First:
                g.edges.insert({u, v});
                break;
            case Verdict::Second:
                g.edges.insert({v, u});
                break;
            case Verdict::Tie:
                g.edges.insert({u, v});
                g.edges.insert({v, u});
                break;
        }
    }
    return g;
}

// Iterative Tarjan; returns the component id per node.
inline std::size_t strongly_connected_components(
    std::size_t n, const std::vector<std::vector<std::size_t>>& adj,
    std::vector<std::size_t>& component) {
    constexpr std::size_t kUnvisited = static_cast<std::size_t>(-1);
    component.assign(n, kUnvisited);
    std::vector<std::size_t> index(n, kUnvisited), lowlink(n, 0);
    std::vector<bool> on_stack(n, false);
    std::vector<std::size_t> stack;
    std::size_t next_index = 0, n_components = 0;

    struct Frame {
        std::size_t node;
        std::size_t edge;
    };
    std::vector<Frame> call;

    for (std::size_t root = 0; root < n; ++root) {
        if (index[root] != kUnvisited) continue;
        call.push_back({root, 0});
        index[root] = lowlink[root] = next_index++;
        stack.push_back(root);
        on_stack[root] = true;
        while (!call.empty()) {
            auto& [u, next_edge] = call.back();
            if (next_edge < adj[u].size()) {
                const std::size_t v = adj[u][next_edge++];
                if (index[v] == kUnvisited) {
                    index[v] = lowlink[v] = next_index++;
                    stack.push_back(v);
                    on_stack[v] = true;
                    call.push_back({v, 0});
                } else if (on_stack[v]) {
                    lowlink[u] = std::min(lowlink[u], index[v]);
                }
            } else {
                if (lowlink[u] == index[u]) {
                    std::size_t w;
                    do {
                        w = stack.back();
                        stack.pop_back();
                        on_stack[w] = false;
                        component[w] = n_components;
                    } while (w != u);
                    ++n_components;
                }
                const std::size_t done = u;
                call.pop_back();
                if (!call.empty()) {
                    const std::size_t parent = call.back().node;
                    lowlink[parent] = std::min(lowlink[parent], lowlink[done]);
                }
            }
        }
    }
    return n_components;
}

}  // namespace detail

// Builds the raw graph for one prompt: one singleton supernode per distinct
// response, deduplicated edges. Contradictory strict verdicts on the same
// pair leave a 2-cycle for resolve() to merge.
inline PreferenceGraph build_graph(const std::vector<AnnotationRecord>& annotations) {
    return detail::build_graph_impl(annotations, nullptr);
}

// As above, but validates endpoints against a known response set.
inline PreferenceGraph build_graph(const std::vector<AnnotationRecord>& annotations,
                                   const std::set<std::string>& known_responses) {
    return detail::build_graph_impl(annotations, &known_responses);
}

// Collapses every cycle into a supernode in one strongly-connected-component
// pass. The iterated detect-merge loop reaches the same fixpoint; the test
// suite checks the equivalence on randomized graphs.
inline PreferenceGraph condense(const PreferenceGraph& g) {
    const std::size_t n = g.supernodes.size();
    std::vector<std::vector<std::size_t>> adj(n);
    for (const auto& [u, v] : g.edges) {
        if (u >= n || v >= n) {
            throw DataError("graph edge references supernode " + std::to_string(std::max(u, v)) +
                            " of " + std::to_string(n));
        }
        adj[u].push_back(v);
    }

    std::vector<std::size_t> component;
    const std::size_t n_components = detail::strongly_connected_components(n, adj, component);

    std::vector<std::vector<std::string>> members(n_components);
    for (std::size_t i = 0; i < n; ++i) {
        auto& dst = members[component[i]];
        dst.insert(dst.end(), g.supernodes[i].begin(), g.supernodes[i].end());
    }
    for (auto& m : members) std::sort(m.begin(), m.end());

    // Renumber components so the supernode list is sorted by smallest member.
    std::vector<std::size_t> order(n_components);
    for (std::size_t c = 0; c < n_components; ++c) order[c] = c;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return members[a] < members[b]; });
    std::vector<std::size_t> rank(n_components);
    for (std::size_t pos = 0; pos < n_components; ++pos) rank[order[pos]] = pos;

    PreferenceGraph out;
    out.prompt_id = g.prompt_id;
    out.supernodes.resize(n_components);
    for (std::size_t c = 0; c < n_components; ++c) {
        out.supernodes[rank[c]] = std::move(members[c]);
    }
    for (std::size_t s = 0; s < out.supernodes.size(); ++s) {
        for (const auto& id : out.supernodes[s]) out.membership.emplace(id, s);
    }
    for (const auto& [u, v] : g.edges) {
        const std::size_t cu = rank[component[u]];
        const std::size_t cv = rank[component[v]];
        if (cu != cv) out.edges.insert({cu, cv});
    }
    return out;
}

// Condenses, layers, and closes the graph. An empty graph yields an empty
// ranking. Tiers are successive Kahn layers expanded to response sets; the
// closure is the transitive closure of the condensed graph expanded to
// cross-supernode response pairs.
inline PartialRanking resolve(const PreferenceGraph& g) {
    PartialRanking ranking;
    ranking.prompt_id = g.prompt_id;
    if (g.supernodes.empty()) return ranking;

    const PreferenceGraph c = condense(g);
    const std::size_t n = c.supernodes.size();
    std::vector<std::vector<std::size_t>> adj(n);
    std::vector<std::size_t> indegree(n, 0);
    for (const auto& [u, v] : c.edges) {
        adj[u].push_back(v);
        ++indegree[v];
    }

    std::vector<bool> removed(n, false);
    std::size_t remaining = n;
    while (remaining > 0) {
        std::vector<std::size_t> layer;
        for (std::size_t i = 0; i < n; ++i) {
            if (!removed[i] && indegree[i] == 0) layer.push_back(i);
        }
        std::vector<std::string> tier;
        for (const std::size_t u : layer) {
            removed[u] = true;
            --remaining;
            tier.insert(tier.end(), c.supernodes[u].begin(), c.supernodes[u].end());
            for (const std::size_t v : adj[u]) --indegree[v];
        }
        std::sort(tier.begin(), tier.end());
        ranking.tiers.push_back(std::move(tier));
    }

    // Reachability from each supernode over the condensed DAG.
    for (std::size_t u = 0; u < n; ++u) {
        std::vector<bool> seen(n, false);
        std::vector<std::size_t> stack(adj[u]);
        while (!stack.empty()) {
            const std::size_t v = stack.back();
            stack.pop_back();
            if (seen[v]) continue;
            seen[v] = true;
            stack.insert(stack.end(), adj[v].begin(), adj[v].end());
        }
        for (std::size_t v = 0; v < n; ++v) {
            if (!seen[v]) continue;
            for (const auto& w : c.supernodes[u]) {
                for (const auto& l : c.supernodes[v]) ranking.closure.insert({w, l});
            }
        }
    }
    return ranking;
}

struct ConflictCounts {
    std::size_t inconsistent = 0;
    std::size_t total = 0;

    double ratio() const {
        return total == 0 ? 0.0 : static_cast<double>(inconsistent) / static_cast<double>(total);
    }

    ConflictCounts& operator+=(const ConflictCounts& other) {
        inconsistent += other.inconsistent;
        total += other.total;
        return *this;
    }
};

// Fraction of annotation records inconsistent with the resolved ranking.
// A strict record (w beats l) is consistent iff (w, l) is in the closure; a
// tie is consistent iff both responses share a supernode. Serialized
// rankings do not carry supernodes, so the equal-quality classes are
// recomputed from the annotations themselves (mutual reachability), which
// matches the ranking's supernodes whenever the ranking was produced from
// these records.
inline ConflictCounts conflict_counts(const std::vector<AnnotationRecord>& annotations,
                                      const PartialRanking& ranking) {
    ConflictCounts counts;
    counts.total = annotations.size();
    if (annotations.empty()) return counts;

    const std::set<std::string> universe = ranking.response_ids();
    bool any_tie = false;
    for (const auto& a : annotations) {
        for (const auto* id : {&a.first, &a.second}) {
            if (universe.count(*id) == 0) {
                throw RankingMismatch("annotation references response '" + *id +
                                      "' absent from the ranking of prompt " + ranking.prompt_id);
            }
        }
        any_tie = any_tie || a.is_tie();
    }

    PreferenceGraph merged;
    if (any_tie) merged = condense(build_graph(annotations));

    for (const auto& a : annotations) {
        bool consistent;
        if (a.is_tie()) {
            consistent = merged.membership.at(a.first) == merged.membership.at(a.second);
        } else {
            consistent = ranking.closure.count({a.winner(), a.loser()}) > 0;
        }
        if (!consistent) ++counts.inconsistent;
    }
    return counts;
}

inline double conflict_ratio(const std::vector<AnnotationRecord>& annotations,
                             const PartialRanking& ranking) {
    return conflict_counts(annotations, ranking).ratio();
}

// The closure as a deterministic list sorted by (winner, loser). Equal-
// quality pairs are excluded by construction.
inline std::vector<std::pair<std::string, std::string>> closure_pairs(
    const PartialRanking& ranking) {
    return {ranking.closure.begin(), ranking.closure.end()};
}

}  // namespace prefkit::graph
