// prefkit: preference-data engineering and reward-model evaluation toolkit.
//
// Subcommands cover the pipeline resolve -> eval and
// schedule -> filter -> debias -> train, plus annotator bias reporting.
// Exit codes: 0 success, 2 parse error, 3 referential/coverage error,
// 4 configuration error.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "prefkit/pipeline.hpp"

namespace {

int dispatch(const CLI::App& app, prefkit::cli::ResolveArgs& resolve_args,
             prefkit::cli::EvalArgs& eval_args, prefkit::cli::ScheduleArgs& schedule_args,
             prefkit::cli::FilterArgs& filter_args, prefkit::cli::DebiasArgs& debias_args,
             prefkit::cli::TrainArgs& train_args, prefkit::cli::BiasReportArgs& bias_args) {
    using namespace prefkit;

    if (app.got_subcommand("resolve")) {
        const auto summary = cli::cmd_resolve(resolve_args);
        std::cerr << "resolved " << summary.n_prompts << " prompts (" << summary.n_records
                  << " records), conflict ratio "
                  << io::format_double(summary.conflict_ratio) << "\n";
    } else if (app.got_subcommand("eval")) {
        const auto report = cli::cmd_eval(eval_args);
        std::cerr << "macro accuracy " << io::format_double(report.macro_accuracy)
                  << ", macro exact match " << io::format_double(report.macro_exact) << "\n";
    } else if (app.got_subcommand("schedule")) {
        const auto n = cli::cmd_schedule(schedule_args);
        std::cerr << "scheduled " << n << " tasks\n";
    } else if (app.got_subcommand("filter")) {
        const auto summary = cli::cmd_filter(filter_args);
        std::cout << "{\"kept\":" << summary.kept << ",\"dropped\":" << summary.dropped
                  << ",\"merged_ties\":" << summary.merged_ties << "}\n";
    } else if (app.got_subcommand("debias")) {
        const auto n = cli::cmd_debias(debias_args);
        std::cerr << "kept " << n << " balanced pairs\n";
    } else if (app.got_subcommand("train")) {
        const auto result = cli::cmd_train(train_args);
        if (!result.history.empty()) {
            std::cerr << "trained " << result.history.size() << " epochs, final pair accuracy "
                      << io::format_double(result.history.back().pair_accuracy) << "\n";
        }
    } else if (app.got_subcommand("bias-report")) {
        cli::cmd_bias_report(bias_args);
    } else {
        std::cerr << "no subcommand given; try --help\n";
        return 4;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"preference-data engineering and reward-model evaluation toolkit"};
    app.require_subcommand(0, 1);

    const prefkit::cli::PipelineConfig defaults;
    std::uint64_t global_seed = defaults.seed;
    app.add_option("--seed", global_seed, "default seed for all stochastic operations")
        ->default_val(defaults.seed);

    prefkit::cli::ResolveArgs resolve_args;
    auto* resolve = app.add_subcommand(
        "resolve", "resolve annotation conflicts into partial rankings + conflict report");
    resolve->add_option("--annotations", resolve_args.annotations_path, "annotations JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    resolve->add_option("--out", resolve_args.out_path, "output rankings JSONL")->required();
    resolve->add_option("--responses", resolve_args.responses_path,
                        "responses JSONL for endpoint validation")
        ->check(CLI::ExistingFile);
    resolve->add_option("--report", resolve_args.report_path,
                        "conflict report path (default: <out>.conflict.json)");
    resolve->add_option("--dataset", resolve_args.dataset_name,
                        "dataset name in the report (default: annotations file stem)");
    resolve->add_flag("--macro", resolve_args.macro,
                      "also report the macro-averaged conflict ratio");

    prefkit::cli::EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "score a reward function against gold rankings");
    eval->add_option("--rankings", eval_args.rankings_path, "rankings JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("--scores", eval_args.scores_path, "scores JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("--responses", eval_args.responses_path, "responses JSONL (categories)")
        ->required()
        ->check(CLI::ExistingFile);
    eval->add_option("--out", eval_args.out_path, "output metric report JSON")->required();

    prefkit::cli::ScheduleArgs schedule_args;
    bool schedule_seed_given = false;
    auto* schedule = app.add_subcommand("schedule", "emit annotation task schedules");
    schedule->add_option("--responses", schedule_args.responses_path, "responses JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    schedule->add_option("--mode", schedule_args.mode, "pair | triple")
        ->required()
        ->check(CLI::IsMember({"pair", "triple"}));
    schedule->add_option("--out", schedule_args.out_path, "output tasks JSONL")->required();
    schedule->add_option("--seed", schedule_args.seed, "schedule seed")
        ->each([&](const std::string&) { schedule_seed_given = true; });

    prefkit::cli::FilterArgs filter_args;
    auto* filter = app.add_subcommand(
        "filter", "filter machine annotations against a score table (distant supervision)");
    filter->add_option("--annotations", filter_args.annotations_path, "annotations JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    filter->add_option("--scores", filter_args.scores_path, "scores JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    filter->add_option("--responses", filter_args.responses_path,
                       "responses JSONL; fills pair text lengths")
        ->check(CLI::ExistingFile);
    filter->add_option("--out", filter_args.out_path, "output pairs JSONL")->required();
    filter->add_option("--stats", filter_args.stats_path, "optional stats JSON path");
    filter->add_option("--margin", filter_args.margin, "score margin required to keep a verdict")
        ->default_val(defaults.margin);
    filter->add_flag("--keep-equal-ties", filter_args.keep_equal_score_ties,
                     "merge ties whose responses score exactly equal instead of dropping them");

    prefkit::cli::DebiasArgs debias_args;
    bool debias_seed_given = false;
    auto* debias = app.add_subcommand("debias", "balance chosen-longer vs chosen-shorter pairs");
    debias->add_option("--pairs", debias_args.pairs_path, "pairs JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    debias->add_option("--out", debias_args.out_path, "output pairs JSONL")->required();
    debias->add_option("--seed", debias_args.seed, "downsampling seed")
        ->each([&](const std::string&) { debias_seed_given = true; });

    prefkit::cli::TrainArgs train_args;
    std::uint64_t train_seed = 0;
    bool train_seed_given = false;
    auto* train = app.add_subcommand("train", "train the linear Bradley-Terry reward head");
    train->add_option("--features", train_args.features_path, "features JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    train->add_option("--rankings", train_args.rankings_path, "rankings JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    train->add_option("--config", train_args.config_path, "training config JSON")
        ->check(CLI::ExistingFile);
    train->add_option("--out-model", train_args.model_path, "output model JSON")->required();
    train->add_option("--history", train_args.history_path, "output history JSONL")->required();
    train->add_option("--seed", train_seed, "overrides the config seed")
        ->each([&](const std::string&) { train_seed_given = true; });

    prefkit::cli::BiasReportArgs bias_args;
    bias_args.bucket_edges = defaults.bucket_edges;
    auto* bias = app.add_subcommand("bias-report", "report positional and length bias");
    bias->add_option("--annotations", bias_args.annotations_path, "annotations JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    bias->add_option("--responses", bias_args.responses_path, "responses JSONL")
        ->required()
        ->check(CLI::ExistingFile);
    bias->add_option("--out", bias_args.out_path, "output bias report JSON")->required();
    bias->add_option("--bucket-edges", bias_args.bucket_edges,
                     "length-difference bucket edges (ascending)")
        ->delimiter(',');

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 4;
    }

    // The global seed backfills any stochastic command that was not given
    // its own --seed. For train, an explicit seed (subcommand, else global)
    // overrides the config file; otherwise the config file wins.
    if (!schedule_seed_given) schedule_args.seed = global_seed;
    if (!debias_seed_given) debias_args.seed = global_seed;
    if (train_seed_given) {
        train_args.seed_override = train_seed;
    } else if (app.count("--seed") > 0) {
        train_args.seed_override = global_seed;
    }

    try {
        return dispatch(app, resolve_args, eval_args, schedule_args, filter_args, debias_args,
                        train_args, bias_args);
    } catch (const prefkit::ParseError& e) {
        std::cerr << "parse error: " << e.what() << "\n";
        return 2;
    } catch (const prefkit::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return 4;
    } catch (const prefkit::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
