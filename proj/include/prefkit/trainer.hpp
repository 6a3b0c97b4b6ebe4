#pragma once

// Desk-scale Bradley-Terry reward training: a linear head over externally
// computed feature vectors, the partial-chain pair loss with a Gaussian
// prior on reward scores, and greedy sample-based batching. Pair losses are
// computed only among same-prompt responses that land in the same batch, so
// splitting a prompt group across batches bypasses some comparisons but
// never duplicates a response within an epoch.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "prefkit/errors.hpp"
#include "prefkit/graph.hpp"
#include "prefkit/rng.hpp"
#include "prefkit/types.hpp"

namespace prefkit::trainer {

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline double log_sigmoid(double x) {
    if (x >= 0.0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

struct LinearRewardModel {
    std::vector<double> weights;
    double bias = 0.0;

    double score(const std::vector<double>& features) const {
        if (features.size() != weights.size()) {
            throw DimensionMismatch("feature dimension " + std::to_string(features.size()) +
                                    " does not match model dimension " +
                                    std::to_string(weights.size()));
        }
        double r = bias;
        for (std::size_t d = 0; d < weights.size(); ++d) r += weights[d] * features[d];
        return r;
    }
};

enum class PackMode {
    Split,       // fill remaining capacity, spill the excess forward
    DeferWhole,  // a group that fits an empty batch is never split mid-batch
};

struct TrainingConfig {
    std::size_t batch_capacity = 256;  // responses per batch
    double learning_rate = 0.01;
    double reg_coefficient = 0.1;  // weight of the mean squared reward prior
    std::size_t epochs = 2;
    std::uint64_t seed = 0;
    PackMode pack_mode = PackMode::Split;

    void validate() const {
        if (batch_capacity < 2) {
            throw CapacityTooSmall("batch_capacity must be >= 2, got " +
                                   std::to_string(batch_capacity));
        }
        if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
        if (!(reg_coefficient >= 0.0)) throw ConfigError("reg_coefficient must be >= 0");
        if (epochs < 1) throw ConfigError("epochs must be >= 1");
    }
};

struct BatchGroup {
    std::string prompt_id;
    std::vector<std::string> response_ids;
};

struct Batch {
    std::vector<BatchGroup> groups;

    std::size_t size() const {
        std::size_t n = 0;
        for (const auto& g : groups) n += g.response_ids.size();
        return n;
    }
};

using PromptGroups = std::map<std::string, std::vector<std::string>>;
using ClosureMap = std::map<std::string, std::set<std::pair<std::string, std::string>>>;

// Greedy sample-based batching: prompt groups are visited in a seeded
// shuffled order and poured into fixed-capacity batches; excess responses
// continue in subsequent batches. Every response is placed exactly once.
inline std::vector<Batch> pack_batches(const PromptGroups& groups, std::size_t capacity,
                                       std::uint64_t seed, PackMode mode = PackMode::Split) {
    if (capacity < 2) {
        throw CapacityTooSmall("batch capacity must be >= 2, got " + std::to_string(capacity));
    }
    std::vector<const PromptGroups::value_type*> order;
    for (const auto& entry : groups) {
        if (!entry.second.empty()) order.push_back(&entry);
    }
    Rng rng(seed);
    rng.shuffle(order);

    std::vector<Batch> batches;
    Batch current;
    std::size_t remaining = capacity;
    const auto flush = [&] {
        if (!current.groups.empty()) {
            batches.push_back(std::move(current));
            current = Batch{};
            remaining = capacity;
        }
    };
    for (const auto* entry : order) {
        const auto& [prompt_id, responses] = *entry;
        if (mode == PackMode::DeferWhole && responses.size() <= capacity &&
            responses.size() > remaining) {
            flush();
        }
        std::size_t offset = 0;
        while (offset < responses.size()) {
            if (remaining == 0) flush();
            const std::size_t take = std::min(responses.size() - offset, remaining);
            BatchGroup group;
            group.prompt_id = prompt_id;
            group.response_ids.assign(responses.begin() + static_cast<std::ptrdiff_t>(offset),
                                      responses.begin() + static_cast<std::ptrdiff_t>(offset + take));
            current.groups.push_back(std::move(group));
            offset += take;
            remaining -= take;
        }
    }
    flush();
    return batches;
}

struct CoResidentPair {
    std::string prompt_id;
    std::string winner;
    std::string loser;
};

// Closure pairs whose two responses sit in the same batch.
inline std::vector<CoResidentPair> co_resident_pairs(const Batch& batch,
                                                     const ClosureMap& closure) {
    std::vector<CoResidentPair> pairs;
    for (const auto& group : batch.groups) {
        const auto it = closure.find(group.prompt_id);
        if (it == closure.end()) continue;
        const std::set<std::string> present(group.response_ids.begin(), group.response_ids.end());
        for (const auto& [winner, loser] : it->second) {
            if (present.count(winner) != 0 && present.count(loser) != 0) {
                pairs.push_back({group.prompt_id, winner, loser});
            }
        }
    }
    return pairs;
}

// Feature vectors keyed by (prompt, response); all share one dimension.
class FeatureSet {
public:
    void add(const FeatureRecord& record) {
        if (table_.empty() && dim_ == 0) dim_ = record.features.size();
        if (record.features.size() != dim_) {
            throw DimensionMismatch("feature dimension " + std::to_string(record.features.size()) +
                                    " for (" + record.prompt_id + ", " + record.response_id +
                                    ") differs from " + std::to_string(dim_));
        }
        for (const double v : record.features) {
            if (!std::isfinite(v)) {
                throw DataError("non-finite feature for (" + record.prompt_id + ", " +
                                record.response_id + ")");
            }
        }
        const bool inserted =
            table_[record.prompt_id].emplace(record.response_id, record.features).second;
        if (!inserted) {
            throw DataError("duplicate features for (" + record.prompt_id + ", " +
                            record.response_id + ")");
        }
    }

    static FeatureSet from_records(const std::vector<FeatureRecord>& records) {
        FeatureSet fs;
        for (const auto& r : records) fs.add(r);
        return fs;
    }

    bool contains(const std::string& prompt_id, const std::string& response_id) const {
        const auto p = table_.find(prompt_id);
        return p != table_.end() && p->second.count(response_id) != 0;
    }

    const std::vector<double>& at(const std::string& prompt_id,
                                  const std::string& response_id) const {
        const auto p = table_.find(prompt_id);
        if (p != table_.end()) {
            const auto r = p->second.find(response_id);
            if (r != p->second.end()) return r->second;
        }
        throw DataError("no features for (" + prompt_id + ", " + response_id + ")");
    }

    std::size_t dimension() const { return dim_; }

private:
    std::map<std::string, std::map<std::string, std::vector<double>>> table_;
    std::size_t dim_ = 0;
};

namespace detail {

struct BatchScores {
    std::vector<double> rewards;                       // one per placed response, batch order
    std::map<std::pair<std::string, std::string>, std::size_t> index;
};

inline BatchScores score_batch(const Batch& batch, const FeatureSet& features,
                               const LinearRewardModel& model) {
    BatchScores scores;
    for (const auto& group : batch.groups) {
        for (const auto& id : group.response_ids) {
            scores.index.emplace(std::make_pair(group.prompt_id, id), scores.rewards.size());
            scores.rewards.push_back(model.score(features.at(group.prompt_id, id)));
        }
    }
    return scores;
}

}  // namespace detail

// L = -mean over co-resident pairs of log sigmoid(r_w - r_l)
//     + lambda * mean over batch responses of r^2.
// An empty pair set leaves only the regularization term.
inline double bt_loss(const Batch& batch, const ClosureMap& closure, const FeatureSet& features,
                      const LinearRewardModel& model, double lambda) {
    if (lambda < 0.0) throw ConfigError("regularization coefficient must be >= 0");
    const auto scores = detail::score_batch(batch, features, model);
    const auto pairs = co_resident_pairs(batch, closure);

    double loss = 0.0;
    if (!pairs.empty()) {
        double pair_sum = 0.0;
        for (const auto& p : pairs) {
            const double rw = scores.rewards[scores.index.at({p.prompt_id, p.winner})];
            const double rl = scores.rewards[scores.index.at({p.prompt_id, p.loser})];
            pair_sum += -log_sigmoid(rw - rl);
        }
        loss += pair_sum / static_cast<double>(pairs.size());
    }
    if (!scores.rewards.empty() && lambda > 0.0) {
        double sq_sum = 0.0;
        for (const double r : scores.rewards) sq_sum += r * r;
        loss += lambda * sq_sum / static_cast<double>(scores.rewards.size());
    }
    return loss;
}

struct Gradient {
    std::vector<double> weights;
    double bias = 0.0;
};

// Analytic gradient of bt_loss. Per pair, dL/dr_w = (sigmoid(delta) - 1) /
// n_pairs and dL/dr_l the negative; the prior adds 2 * lambda * r / n_resp
// per response. Accumulation order is fixed, so results are bitwise
// reproducible.
inline Gradient bt_gradient(const Batch& batch, const ClosureMap& closure,
                            const FeatureSet& features, const LinearRewardModel& model,
                            double lambda) {
    if (lambda < 0.0) throw ConfigError("regularization coefficient must be >= 0");
    const auto scores = detail::score_batch(batch, features, model);
    const auto pairs = co_resident_pairs(batch, closure);

    std::vector<double> d_reward(scores.rewards.size(), 0.0);
    if (!pairs.empty()) {
        const double inv_pairs = 1.0 / static_cast<double>(pairs.size());
        for (const auto& p : pairs) {
            const std::size_t iw = scores.index.at({p.prompt_id, p.winner});
            const std::size_t il = scores.index.at({p.prompt_id, p.loser});
            const double slope = (sigmoid(scores.rewards[iw] - scores.rewards[il]) - 1.0) * inv_pairs;
            d_reward[iw] += slope;
            d_reward[il] -= slope;
        }
    }
    if (!scores.rewards.empty() && lambda > 0.0) {
        const double scale = 2.0 * lambda / static_cast<double>(scores.rewards.size());
        for (std::size_t i = 0; i < scores.rewards.size(); ++i) {
            d_reward[i] += scale * scores.rewards[i];
        }
    }

    Gradient grad;
    grad.weights.assign(model.weights.size(), 0.0);
    std::size_t i = 0;
    for (const auto& group : batch.groups) {
        for (const auto& id : group.response_ids) {
            const auto& x = features.at(group.prompt_id, id);
            const double dr = d_reward[i++];
            for (std::size_t d = 0; d < grad.weights.size(); ++d) grad.weights[d] += dr * x[d];
            grad.bias += dr;
        }
    }
    return grad;
}

struct EpochStats {
    double mean_loss = 0.0;
    double pair_accuracy = 0.0;
};

struct TrainResult {
    LinearRewardModel model;
    std::vector<EpochStats> history;
};

// Full-batch-per-batch gradient descent over the packed batches, repacked
// with a fresh seeded shuffle each epoch. mean_loss is the mean of batch
// losses before each update; pair_accuracy is measured over all closure
// pairs with the end-of-epoch model.
inline TrainResult train(const std::vector<FeatureRecord>& features,
                         const std::vector<graph::PartialRanking>& rankings,
                         const TrainingConfig& config) {
    config.validate();
    const FeatureSet fs = FeatureSet::from_records(features);

    PromptGroups groups;
    ClosureMap closure;
    std::size_t total_pairs = 0;
    for (const auto& ranking : rankings) {
        if (ranking.tiers.empty()) continue;
        if (groups.count(ranking.prompt_id) != 0) {
            throw DataError("duplicate ranking for prompt " + ranking.prompt_id);
        }
        auto& members = groups[ranking.prompt_id];
        for (const auto& tier : ranking.tiers) {
            for (const auto& id : tier) {
                if (!fs.contains(ranking.prompt_id, id)) {
                    throw DataError("no features for ranked response (" + ranking.prompt_id +
                                    ", " + id + ")");
                }
                members.push_back(id);
            }
        }
        closure[ranking.prompt_id] = ranking.closure;
        total_pairs += ranking.closure.size();
    }
    if (total_pairs == 0) throw NoPairs("rankings contain no closure pairs to train on");

    TrainResult result;
    result.model.weights.assign(fs.dimension(), 0.0);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const auto batches = pack_batches(groups, config.batch_capacity,
                                          mix_seed(config.seed, static_cast<std::uint64_t>(epoch)),
                                          config.pack_mode);
        if (epoch == 0) {
            std::size_t available = 0;
            for (const auto& b : batches) available += co_resident_pairs(b, closure).size();
            if (available == 0) {
                throw NoPairs("no closure pair is co-resident in any batch at capacity " +
                              std::to_string(config.batch_capacity));
            }
        }
        double loss_sum = 0.0;
        for (const auto& batch : batches) {
            loss_sum += bt_loss(batch, closure, fs, result.model, config.reg_coefficient);
            const Gradient grad =
                bt_gradient(batch, closure, fs, result.model, config.reg_coefficient);
            for (std::size_t d = 0; d < result.model.weights.size(); ++d) {
                result.model.weights[d] -= config.learning_rate * grad.weights[d];
            }
            result.model.bias -= config.learning_rate * grad.bias;
        }
        for (const double w : result.model.weights) {
            if (!std::isfinite(w) || !std::isfinite(result.model.bias)) {
                throw DataError("training diverged at epoch " + std::to_string(epoch + 1) +
                                "; reduce learning_rate");
            }
        }
        EpochStats stats;
        stats.mean_loss = batches.empty() ? 0.0 : loss_sum / static_cast<double>(batches.size());
        std::size_t correct = 0;
        for (const auto& [prompt_id, pairs] : closure) {
            for (const auto& [winner, loser] : pairs) {
                const double rw = result.model.score(fs.at(prompt_id, winner));
                const double rl = result.model.score(fs.at(prompt_id, loser));
                if (rw > rl) ++correct;
            }
        }
        stats.pair_accuracy = static_cast<double>(correct) / static_cast<double>(total_pairs);
        result.history.push_back(stats);
    }
    return result;
}

}  // namespace prefkit::trainer
