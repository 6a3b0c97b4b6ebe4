#pragma once

// File-level command implementations behind the CLI: resolve -> eval and
// schedule -> filter -> debias -> train, plus bias reporting. Every command
// is a pure function of its input files and flags; outputs are written in
// prompt_id-sorted order and are byte-identical across reruns.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "prefkit/errors.hpp"
#include "prefkit/graph.hpp"
#include "prefkit/jsonl.hpp"
#include "prefkit/metrics.hpp"
#include "prefkit/supervision.hpp"
#include "prefkit/trainer.hpp"
#include "prefkit/types.hpp"

namespace prefkit::cli {

// Defaults shared across commands.
struct PipelineConfig {
    std::uint64_t seed = 0;
    double margin = 0.0;
    supervision::QualityConfig quality;
    std::vector<long long> bucket_edges = supervision::default_bucket_edges();
    trainer::TrainingConfig training;
};

namespace detail {

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open input file: " + path);
    return in;
}

inline std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open output file: " + path);
    return out;
}

inline std::string opt_double(const std::optional<double>& v) {
    return v ? io::format_double(*v) : "null";
}

inline std::string opt_ll(const std::optional<long long>& v) {
    return v ? std::to_string(*v) : "null";
}

inline std::map<std::string, std::vector<AnnotationRecord>> group_by_prompt(
    const std::vector<AnnotationRecord>& annotations) {
    std::map<std::string, std::vector<AnnotationRecord>> groups;
    for (const auto& a : annotations) groups[a.prompt_id].push_back(a);
    return groups;
}

// prompt -> category, taken from the prompt's first response record.
inline metrics::CategoryMap categories_of(
    const std::map<std::string, std::map<std::string, ResponseRecord>>& index) {
    metrics::CategoryMap categories;
    for (const auto& [prompt_id, responses] : index) {
        if (!responses.empty()) categories[prompt_id] = responses.begin()->second.category;
    }
    return categories;
}

}  // namespace detail

// --- resolve ---------------------------------------------------------------

struct ResolveArgs {
    std::string annotations_path;
    std::string out_path;
    std::string responses_path;  // optional; validates endpoints when given
    std::string report_path;     // defaults to out_path + ".conflict.json"
    std::string dataset_name;    // defaults to the annotations file stem
    bool macro = false;
};

struct ResolveSummary {
    std::size_t n_prompts = 0;
    std::size_t n_records = 0;
    double conflict_ratio = 0.0;        // micro: records pooled across prompts
    double macro_conflict_ratio = 0.0;  // unweighted mean of per-prompt ratios
};

inline ResolveSummary cmd_resolve(const ResolveArgs& args) {
    auto annotations_in = detail::open_input(args.annotations_path);
    const auto annotations = io::read_annotations(annotations_in);

    std::map<std::string, std::set<std::string>> known;
    bool have_responses = false;
    if (!args.responses_path.empty()) {
        auto responses_in = detail::open_input(args.responses_path);
        const auto index = io::index_responses(io::read_responses(responses_in));
        for (const auto& [prompt_id, responses] : index) {
            auto& ids = known[prompt_id];
            for (const auto& [response_id, _] : responses) ids.insert(response_id);
        }
        have_responses = true;
    }

    const auto groups = detail::group_by_prompt(annotations);
    auto out = detail::open_output(args.out_path);

    ResolveSummary summary;
    summary.n_records = annotations.size();
    summary.n_prompts = groups.size();
    graph::ConflictCounts pooled;
    double ratio_sum = 0.0;
    for (const auto& [prompt_id, records] : groups) {
        graph::PreferenceGraph g;
        if (have_responses) {
            const auto it = known.find(prompt_id);
            if (it == known.end()) {
                throw DanglingResponse("annotations reference unknown prompt '" + prompt_id + "'");
            }
            g = graph::build_graph(records, it->second);
        } else {
            g = graph::build_graph(records);
        }
        const graph::PartialRanking ranking = graph::resolve(g);
        out << io::to_line(ranking) << "\n";
        const auto counts = graph::conflict_counts(records, ranking);
        pooled += counts;
        ratio_sum += counts.ratio();
    }
    summary.conflict_ratio = pooled.ratio();
    summary.macro_conflict_ratio =
        groups.empty() ? 0.0 : ratio_sum / static_cast<double>(groups.size());

    std::string dataset = args.dataset_name;
    if (dataset.empty()) dataset = std::filesystem::path(args.annotations_path).stem().string();
    std::string report_path = args.report_path;
    if (report_path.empty()) report_path = args.out_path + ".conflict.json";

    auto report = detail::open_output(report_path);
    report << "{\"dataset\":" << io::json_string(dataset)
           << ",\"n_prompts\":" << summary.n_prompts << ",\"n_records\":" << summary.n_records
           << ",\"conflict_ratio\":" << io::format_double(summary.conflict_ratio);
    if (args.macro) {
        report << ",\"macro_conflict_ratio\":" << io::format_double(summary.macro_conflict_ratio);
    }
    report << "}\n";
    return summary;
}

// --- eval ------------------------------------------------------------------

struct EvalArgs {
    std::string rankings_path;
    std::string scores_path;
    std::string responses_path;
    std::string out_path;
};

inline metrics::MetricReport cmd_eval(const EvalArgs& args) {
    auto rankings_in = detail::open_input(args.rankings_path);
    const auto rankings = io::read_rankings(rankings_in);
    if (rankings.empty()) throw DataError("rankings file is empty: " + args.rankings_path);
    std::set<std::string> seen;
    for (const auto& r : rankings) {
        if (!seen.insert(r.prompt_id).second) {
            throw DataError("duplicate ranking for prompt " + r.prompt_id);
        }
    }
    auto scores_in = detail::open_input(args.scores_path);
    const auto scores = io::read_scores(scores_in);
    auto responses_in = detail::open_input(args.responses_path);
    const auto categories =
        detail::categories_of(io::index_responses(io::read_responses(responses_in)));

    const auto report = metrics::evaluate(rankings, scores, categories);

    auto out = detail::open_output(args.out_path);
    out << "{\"macro_accuracy\":" << io::format_double(report.macro_accuracy)
        << ",\"macro_exact_match\":" << io::format_double(report.macro_exact)
        << ",\"per_category\":{";
    bool first = true;
    for (const auto& [category, m] : report.per_category) {
        if (!first) out << ",";
        first = false;
        out << io::json_string(category) << ":{\"accuracy\":" << io::format_double(m.accuracy)
            << ",\"exact_match\":" << io::format_double(m.exact_match)
            << ",\"n_pairs\":" << m.n_pairs << ",\"n_prompts\":" << m.n_prompts << "}";
    }
    out << "}}\n";
    return report;
}

// --- schedule ----------------------------------------------------------------

struct ScheduleArgs {
    std::string responses_path;
    std::string out_path;
    std::string mode = "pair";  // "pair" | "triple"
    std::uint64_t seed = 0;
};

inline std::size_t cmd_schedule(const ScheduleArgs& args) {
    if (args.mode != "pair" && args.mode != "triple") {
        throw ConfigError("schedule mode must be \"pair\" or \"triple\", got \"" + args.mode +
                          "\"");
    }
    auto responses_in = detail::open_input(args.responses_path);
    const auto index = io::index_responses(io::read_responses(responses_in));

    auto out = detail::open_output(args.out_path);
    std::size_t n_tasks = 0;
    for (const auto& [prompt_id, responses] : index) {
        std::vector<std::string> ids;
        for (const auto& [response_id, _] : responses) ids.push_back(response_id);
        const std::uint64_t prompt_seed = mix_seed(args.seed, prompt_id);
        const auto tasks = args.mode == "pair"
                               ? supervision::schedule_pairs(prompt_id, ids, prompt_seed)
                               : supervision::schedule_triples(prompt_id, ids, prompt_seed);
        for (const auto& task : tasks) {
            out << io::to_line(task) << "\n";
            ++n_tasks;
        }
    }
    return n_tasks;
}

// --- filter ------------------------------------------------------------------

struct FilterArgs {
    std::string annotations_path;
    std::string scores_path;
    std::string responses_path;  // optional; fills pair lengths when given
    std::string out_path;
    std::string stats_path;  // optional
    double margin = 0.0;
    bool keep_equal_score_ties = false;
};

struct FilterSummary {
    std::size_t kept = 0;
    std::size_t dropped = 0;
    std::size_t merged_ties = 0;
};

inline FilterSummary cmd_filter(const FilterArgs& args) {
    auto annotations_in = detail::open_input(args.annotations_path);
    const auto annotations = io::read_annotations(annotations_in);
    auto scores_in = detail::open_input(args.scores_path);
    const auto scores = io::read_scores(scores_in);

    std::optional<supervision::LengthTable> lengths;
    if (!args.responses_path.empty()) {
        auto responses_in = detail::open_input(args.responses_path);
        lengths = supervision::response_lengths(io::read_responses(responses_in));
    }

    supervision::FilterOptions options;
    options.margin = args.margin;
    options.keep_equal_score_ties = args.keep_equal_score_ties;
    const auto result = supervision::filter_with_scores(annotations, scores, options,
                                                        lengths ? &*lengths : nullptr);

    auto out = detail::open_output(args.out_path);
    for (const auto& pair : result.kept) out << io::to_line(pair) << "\n";

    FilterSummary summary{result.kept.size(), result.dropped, result.merged_ties};
    if (!args.stats_path.empty()) {
        auto stats = detail::open_output(args.stats_path);
        stats << "{\"kept\":" << summary.kept << ",\"dropped\":" << summary.dropped
              << ",\"merged_ties\":" << summary.merged_ties << "}\n";
    }
    return summary;
}

// --- debias ------------------------------------------------------------------

struct DebiasArgs {
    std::string pairs_path;
    std::string out_path;
    std::uint64_t seed = 0;
};

inline std::size_t cmd_debias(const DebiasArgs& args) {
    auto pairs_in = detail::open_input(args.pairs_path);
    const auto pairs = io::read_pairs(pairs_in);
    const auto balanced = supervision::length_debias(pairs, args.seed);
    auto out = detail::open_output(args.out_path);
    for (const auto& pair : balanced) out << io::to_line(pair) << "\n";
    return balanced.size();
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
    std::string features_path;
    std::string rankings_path;
    std::string config_path;  // optional; defaults apply when empty
    std::string model_path;
    std::string history_path;
    std::optional<std::uint64_t> seed_override;
};

inline trainer::TrainingConfig read_training_config(const std::string& path) {
    trainer::TrainingConfig config;
    auto in = detail::open_input(path);
    std::stringstream buffer;
    buffer << in.rdbuf();
    io::json j;
    try {
        j = io::json::parse(buffer.str());
    } catch (const io::json::exception& e) {
        throw ConfigError("training config " + path + ": " + e.what());
    }
    if (!j.is_object()) throw ConfigError("training config " + path + ": expected a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (key == "batch_capacity" && value.is_number_unsigned()) {
            config.batch_capacity = value.get<std::size_t>();
        } else if (key == "learning_rate" && value.is_number()) {
            config.learning_rate = value.get<double>();
        } else if (key == "reg_coefficient" && value.is_number()) {
            config.reg_coefficient = value.get<double>();
        } else if (key == "epochs" && value.is_number_unsigned()) {
            config.epochs = value.get<std::size_t>();
        } else if (key == "seed" && value.is_number_unsigned()) {
            config.seed = value.get<std::uint64_t>();
        } else if (key == "pack_mode" && value.is_string()) {
            const auto mode = value.get<std::string>();
            if (mode == "split") {
                config.pack_mode = trainer::PackMode::Split;
            } else if (mode == "defer_whole") {
                config.pack_mode = trainer::PackMode::DeferWhole;
            } else {
                throw ConfigError("training config " + path + ": unknown pack_mode \"" + mode +
                                  "\"");
            }
        } else {
            throw ConfigError("training config " + path + ": unknown or mistyped key \"" + key +
                              "\"");
        }
    }
    return config;
}

inline trainer::TrainResult cmd_train(const TrainArgs& args) {
    auto features_in = detail::open_input(args.features_path);
    const auto features = io::read_features(features_in);
    auto rankings_in = detail::open_input(args.rankings_path);
    const auto rankings = io::read_rankings(rankings_in);

    trainer::TrainingConfig config;
    if (!args.config_path.empty()) config = read_training_config(args.config_path);
    if (args.seed_override) config.seed = *args.seed_override;
    config.validate();

    const auto result = trainer::train(features, rankings, config);

    auto model_out = detail::open_output(args.model_path);
    model_out << "{\"d\":" << result.model.weights.size() << ",\"weights\":[";
    for (std::size_t d = 0; d < result.model.weights.size(); ++d) {
        if (d > 0) model_out << ",";
        model_out << io::format_double(result.model.weights[d]);
    }
    model_out << "],\"bias\":" << io::format_double(result.model.bias) << "}\n";

    auto history_out = detail::open_output(args.history_path);
    for (std::size_t e = 0; e < result.history.size(); ++e) {
        history_out << "{\"epoch\":" << (e + 1)
                    << ",\"mean_loss\":" << io::format_double(result.history[e].mean_loss)
                    << ",\"pair_accuracy\":" << io::format_double(result.history[e].pair_accuracy)
                    << "}\n";
    }
    return result;
}

// --- bias-report ---------------------------------------------------------------

struct BiasReportArgs {
    std::string annotations_path;
    std::string responses_path;
    std::string out_path;
    std::vector<long long> bucket_edges = supervision::default_bucket_edges();
};

inline supervision::BiasReport cmd_bias_report(const BiasReportArgs& args) {
    auto annotations_in = detail::open_input(args.annotations_path);
    const auto annotations = io::read_annotations(annotations_in);
    auto responses_in = detail::open_input(args.responses_path);
    const auto responses = io::read_responses(responses_in);

    const auto report = supervision::bias_report(annotations, responses, args.bucket_edges);

    auto out = detail::open_output(args.out_path);
    out << "{\"position\":{\"first_shown_win_rate\":"
        << detail::opt_double(report.position.first_shown_win_rate)
        << ",\"n\":" << report.position.n << ",\"ties\":" << report.position.ties
        << "},\"length_buckets\":[";
    for (std::size_t b = 0; b < report.length_buckets.size(); ++b) {
        const auto& bucket = report.length_buckets[b];
        if (b > 0) out << ",";
        out << "{\"delta_min\":" << detail::opt_ll(bucket.delta_min)
            << ",\"delta_max\":" << detail::opt_ll(bucket.delta_max)
            << ",\"first_win_rate\":" << detail::opt_double(bucket.first_win_rate)
            << ",\"n\":" << bucket.n << "}";
    }
    out << "]}\n";
    return report;
}

}  // namespace prefkit::cli
