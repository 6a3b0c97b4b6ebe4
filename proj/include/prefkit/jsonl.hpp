#pragma once

// UTF-8 JSON-lines readers and writers for every interchange format. Writers
// emit keys in a fixed order and floating-point values with up to 17
// significant digits, so round trips are lossless and reruns are
// byte-identical. Readers report 1-based line numbers on malformed input.

#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "prefkit/errors.hpp"
#include "prefkit/graph.hpp"
#include "prefkit/supervision.hpp"
#include "prefkit/types.hpp"

namespace prefkit::io {

using nlohmann::json;

inline std::string format_double(double value) {
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%.17g", value);
    return buffer;
}

inline std::string json_string(const std::string& s) { return json(s).dump(); }

// ---------------------------------------------------------------------------
// Writers. One record per line, keys in the documented order.

inline std::string to_line(const ResponseRecord& r) {
    return "{\"prompt_id\":" + json_string(r.prompt_id) +
           ",\"response_id\":" + json_string(r.response_id) +
           ",\"category\":" + json_string(r.category) + ",\"model\":" + json_string(r.model) +
           ",\"text\":" + json_string(r.text) + "}";
}

inline const char* verdict_name(Verdict v) {
    switch (v) {
        case Verdict::First:
            return "first";
        case Verdict::Second:
            return "second";
        case Verdict::Tie:
            return "tie";
    }
    return "tie";
}

inline const char* source_name(Source s) {
    return s == Source::Human ? "human" : "machine";
}

inline std::string to_line(const AnnotationRecord& a) {
    return "{\"prompt_id\":" + json_string(a.prompt_id) + ",\"first\":" + json_string(a.first) +
           ",\"second\":" + json_string(a.second) + ",\"verdict\":\"" + verdict_name(a.verdict) +
           "\",\"source\":\"" + source_name(a.source) + "\"}";
}

inline std::string to_line(const graph::PartialRanking& r) {
    std::string line = "{\"prompt_id\":" + json_string(r.prompt_id) + ",\"tiers\":[";
    for (std::size_t t = 0; t < r.tiers.size(); ++t) {
        if (t > 0) line += ",";
        line += "[";
        for (std::size_t i = 0; i < r.tiers[t].size(); ++i) {
            if (i > 0) line += ",";
            line += json_string(r.tiers[t][i]);
        }
        line += "]";
    }
    line += "],\"closure\":[";
    bool first = true;
    for (const auto& [winner, loser] : r.closure) {
        if (!first) line += ",";
        first = false;
        line += "[" + json_string(winner) + "," + json_string(loser) + "]";
    }
    line += "]}";
    return line;
}

inline std::string score_line(const std::string& prompt_id, const std::string& response_id,
                              double score) {
    return "{\"prompt_id\":" + json_string(prompt_id) +
           ",\"response_id\":" + json_string(response_id) +
           ",\"score\":" + format_double(score) + "}";
}

inline std::string to_line(const PreferencePair& p) {
    return "{\"prompt_id\":" + json_string(p.prompt_id) + ",\"chosen\":" + json_string(p.chosen) +
           ",\"rejected\":" + json_string(p.rejected) +
           ",\"chosen_len\":" + std::to_string(p.chosen_len) +
           ",\"rejected_len\":" + std::to_string(p.rejected_len) + "}";
}

inline std::string to_line(const FeatureRecord& f) {
    std::string line = "{\"prompt_id\":" + json_string(f.prompt_id) +
                       ",\"response_id\":" + json_string(f.response_id) + ",\"features\":[";
    for (std::size_t i = 0; i < f.features.size(); ++i) {
        if (i > 0) line += ",";
        line += format_double(f.features[i]);
    }
    line += "]}";
    return line;
}

inline std::string to_line(const supervision::AnnotationTask& t) {
    std::string line = "{\"prompt_id\":" + json_string(t.prompt_id) + ",\"kind\":\"";
    line += t.kind == supervision::TaskKind::Pair ? "pair" : "triple";
    line += "\",\"presented\":[";
    for (std::size_t i = 0; i < t.presented.size(); ++i) {
        if (i > 0) line += ",";
        line += json_string(t.presented[i]);
    }
    line += "]}";
    return line;
}

// ---------------------------------------------------------------------------
// Readers.

namespace detail {

inline ParseError at_line(const char* what, std::size_t lineno, const std::string& message) {
    return ParseError(std::string(what) + " line " + std::to_string(lineno) + ": " + message);
}

inline json parse_object(const std::string& line, std::size_t lineno, const char* what) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw at_line(what, lineno, e.what());
    }
    if (!j.is_object()) throw at_line(what, lineno, "expected a JSON object");
    return j;
}

inline std::string get_string(const json& j, const char* key, std::size_t lineno,
                              const char* what) {
    const auto it = j.find(key);
    if (it == j.end() || !it->is_string()) {
        throw at_line(what, lineno, std::string("missing string field \"") + key + "\"");
    }
    return it->get<std::string>();
}

inline double get_number(const json& j, const char* key, std::size_t lineno, const char* what) {
    const auto it = j.find(key);
    if (it == j.end() || !it->is_number()) {
        throw at_line(what, lineno, std::string("missing numeric field \"") + key + "\"");
    }
    return it->get<double>();
}

template <typename Fn>
void for_each_line(std::istream& in, Fn&& fn) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        fn(line, lineno);
    }
}

}  // namespace detail

inline std::vector<ResponseRecord> read_responses(std::istream& in,
                                                  const char* what = "responses") {
    std::vector<ResponseRecord> records;
    detail::for_each_line(in, [&](const std::string& line, std::size_t lineno) {
        const json j = detail::parse_object(line, lineno, what);
        ResponseRecord r;
        r.prompt_id = detail::get_string(j, "prompt_id", lineno, what);
        r.response_id = detail::get_string(j, "response_id", lineno, what);
        r.category = detail::get_string(j, "category", lineno, what);
        r.model = detail::get_string(j, "model", lineno, what);
        r.text = detail::get_string(j, "text", lineno, what);
        if (r.category.empty()) {
            throw detail::at_line(what, lineno, "category must be non-empty");
        }
        records.push_back(std::move(r));
    });
    return records;
}

inline std::vector<AnnotationRecord> read_annotations(std::istream& in,
                                                      const char* what = "annotations") {
    std::vector<AnnotationRecord> records;
    detail::for_each_line(in, [&](const std::string& line, std::size_t lineno) {
        const json j = detail::parse_object(line, lineno, what);
        AnnotationRecord a;
        a.prompt_id = detail::get_string(j, "prompt_id", lineno, what);
        a.first = detail::get_string(j, "first", lineno, what);
        a.second = detail::get_string(j, "second", lineno, what);
        const std::string verdict = detail::get_string(j, "verdict", lineno, what);
        if (verdict == "first") {
            a.verdict = Verdict::First;
        } else if (verdict == "second") {
            a.verdict = Verdict::Second;
        } else if (verdict == "tie") {
            a.verdict = Verdict::Tie;
        } else {
            throw detail::at_line(what, lineno, "unknown verdict \"" + verdict + "\"");
        }
        const std::string source = detail::get_string(j, "source", lineno, what);
        if (source == "human") {
            a.source = Source::Human;
        } else if (source == "machine") {
            a.source = Source::Machine;
        } else {
            throw detail::at_line(what, lineno, "unknown source \"" + source + "\"");
        }
        records.push_back(std::move(a));
    });
    return records;
}

inline std::vector<graph::PartialRanking> read_rankings(std::istream& in,
                                                        const char* what = "rankings") {
    std::vector<graph::PartialRanking> rankings;
    detail::for_each_line(in, [&](const std::string& line, std::size_t lineno) {
        const json j = detail::parse_object(line, lineno, what);
        graph::PartialRanking r;
        r.prompt_id = detail::get_string(j, "prompt_id", lineno, what);

        const auto tiers = j.find("tiers");
        if (tiers == j.end() || !tiers->is_array()) {
            throw detail::at_line(what, lineno, "missing array field \"tiers\"");
        }
        std::set<std::string> seen;
        for (const auto& tier : *tiers) {
            if (!tier.is_array() || tier.empty()) {
                throw detail::at_line(what, lineno, "tiers must be non-empty arrays");
            }
            std::vector<std::string> members;
            for (const auto& id : tier) {
                if (!id.is_string()) {
                    throw detail::at_line(what, lineno, "tier members must be strings");
                }
                members.push_back(id.get<std::string>());
                if (!seen.insert(members.back()).second) {
                    throw DataError(std::string(what) + " line " + std::to_string(lineno) +
                                    ": response '" + members.back() + "' appears in two tiers");
                }
            }
            r.tiers.push_back(std::move(members));
        }

        const auto closure = j.find("closure");
        if (closure == j.end() || !closure->is_array()) {
            throw detail::at_line(what, lineno, "missing array field \"closure\"");
        }
        for (const auto& pair : *closure) {
            if (!pair.is_array() || pair.size() != 2 || !pair[0].is_string() ||
                !pair[1].is_string()) {
                throw detail::at_line(what, lineno, "closure entries must be [winner, loser]");
            }
            const auto winner = pair[0].get<std::string>();
            const auto loser = pair[1].get<std::string>();
            if (winner == loser || seen.count(winner) == 0 || seen.count(loser) == 0) {
                throw DataError(std::string(what) + " line " + std::to_string(lineno) +
                                ": closure pair [" + winner + ", " + loser +
                                "] does not reference two distinct ranked responses");
            }
            r.closure.emplace(winner, loser);
        }
        rankings.push_back(std::move(r));
    });
    return rankings;
}

inline ScoreTable read_scores(std::istream& in, const char* what = "scores") {
    ScoreTable table;
    detail::for_each_line(in, [&](const std::string& line, std::size_t lineno) {
        const json j = detail::parse_object(line, lineno, what);
        const std::string prompt_id = detail::get_string(j, "prompt_id", lineno, what);
        const std::string response_id = detail::get_string(j, "response_id", lineno, what);
        const double score = detail::get_number(j, "score", lineno, what);
        if (table.find(prompt_id, response_id) != nullptr) {
            throw DataError(std::string(what) + " line " + std::to_string(lineno) +
                            ": duplicate score for (" + prompt_id + ", " + response_id + ")");
        }
        table.set(prompt_id, response_id, score);
    });
    return table;
}

inline std::vector<PreferencePair> read_pairs(std::istream& in, const char* what = "pairs") {
    std::vector<PreferencePair> pairs;
    detail::for_each_line(in, [&](const std::string& line, std::size_t lineno) {
        const json j = detail::parse_object(line, lineno, what);
        PreferencePair p;
        p.prompt_id = detail::get_string(j, "prompt_id", lineno, what);
        p.chosen = detail::get_string(j, "chosen", lineno, what);
        p.rejected = detail::get_string(j, "rejected", lineno, what);
        const double chosen_len = detail::get_number(j, "chosen_len", lineno, what);
        const double rejected_len = detail::get_number(j, "rejected_len", lineno, what);
        if (chosen_len < 0 || rejected_len < 0) {
            throw detail::at_line(what, lineno, "lengths must be non-negative");
        }
        p.chosen_len = static_cast<std::size_t>(chosen_len);
        p.rejected_len = static_cast<std::size_t>(rejected_len);
        if (p.chosen == p.rejected) {
            throw DataError(std::string(what) + " line " + std::to_string(lineno) +
                            ": chosen and rejected are the same response");
        }
        pairs.push_back(std::move(p));
    });
    return pairs;
}

inline std::vector<FeatureRecord> read_features(std::istream& in, const char* what = "features") {
    std::vector<FeatureRecord> records;
    detail::for_each_line(in, [&](const std::string& line, std::size_t lineno) {
        const json j = detail::parse_object(line, lineno, what);
        FeatureRecord f;
        f.prompt_id = detail::get_string(j, "prompt_id", lineno, what);
        f.response_id = detail::get_string(j, "response_id", lineno, what);
        const auto features = j.find("features");
        if (features == j.end() || !features->is_array()) {
            throw detail::at_line(what, lineno, "missing array field \"features\"");
        }
        for (const auto& v : *features) {
            if (!v.is_number()) {
                throw detail::at_line(what, lineno, "features must be numbers");
            }
            f.features.push_back(v.get<double>());
        }
        records.push_back(std::move(f));
    });
    return records;
}

// Indexes responses by (prompt, response); rejects duplicates.
inline std::map<std::string, std::map<std::string, ResponseRecord>> index_responses(
    const std::vector<ResponseRecord>& responses) {
    std::map<std::string, std::map<std::string, ResponseRecord>> index;
    for (const auto& r : responses) {
        if (!index[r.prompt_id].emplace(r.response_id, r).second) {
            throw DataError("duplicate response (" + r.prompt_id + ", " + r.response_id + ")");
        }
    }
    return index;
}

}  // namespace prefkit::io
