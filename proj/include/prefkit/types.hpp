#pragma once

#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "prefkit/errors.hpp"

namespace prefkit {

// Verdict of one comparison, relative to presentation order.
enum class Verdict { First, Second, Tie };

enum class Source { Human, Machine };

// One candidate answer to a prompt. (prompt_id, response_id) is unique
// within a dataset; category is non-empty.
struct ResponseRecord {
    std::string prompt_id;
    std::string response_id;
    std::string category;
    std::string model;
    std::string text;
};

// One pairwise verdict. `first` was shown first, `second` second; both must
// reference responses of the same prompt and differ from each other.
struct AnnotationRecord {
    std::string prompt_id;
    std::string first;
    std::string second;
    Verdict verdict = Verdict::Tie;
    Source source = Source::Human;

    bool is_tie() const { return verdict == Verdict::Tie; }

    const std::string& winner() const {
        if (verdict == Verdict::Tie) throw DataError("tie record has no winner");
        return verdict == Verdict::First ? first : second;
    }

    const std::string& loser() const {
        if (verdict == Verdict::Tie) throw DataError("tie record has no loser");
        return verdict == Verdict::First ? second : first;
    }
};

// Training pair with text lengths in Unicode code points.
struct PreferencePair {
    std::string prompt_id;
    std::string chosen;
    std::string rejected;
    std::size_t chosen_len = 0;
    std::size_t rejected_len = 0;

    friend bool operator==(const PreferencePair&, const PreferencePair&) = default;
};

// Externally computed embedding of one (prompt, response) pair.
struct FeatureRecord {
    std::string prompt_id;
    std::string response_id;
    std::vector<double> features;
};

// Real-valued scorer output per (prompt, response). All scores finite.
class ScoreTable {
public:
    using PromptScores = std::map<std::string, double>;

    void set(const std::string& prompt_id, const std::string& response_id, double score) {
        if (!std::isfinite(score)) {
            throw DataError("non-finite score for (" + prompt_id + ", " + response_id + ")");
        }
        table_[prompt_id][response_id] = score;
    }

    const double* find(const std::string& prompt_id, const std::string& response_id) const {
        const auto p = table_.find(prompt_id);
        if (p == table_.end()) return nullptr;
        const auto r = p->second.find(response_id);
        return r == p->second.end() ? nullptr : &r->second;
    }

    double at(const std::string& prompt_id, const std::string& response_id) const {
        const double* s = find(prompt_id, response_id);
        if (s == nullptr) {
            throw MissingScore("missing score for (" + prompt_id + ", " + response_id + ")");
        }
        return *s;
    }

    const PromptScores* prompt_scores(const std::string& prompt_id) const {
        const auto p = table_.find(prompt_id);
        return p == table_.end() ? nullptr : &p->second;
    }

    const std::map<std::string, PromptScores>& by_prompt() const { return table_; }

    std::size_t size() const {
        std::size_t n = 0;
        for (const auto& [_, scores] : table_) n += scores.size();
        return n;
    }

    bool empty() const { return table_.empty(); }

private:
    std::map<std::string, PromptScores> table_;
};

}  // namespace prefkit
