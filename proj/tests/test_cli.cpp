#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "prefkit/jsonl.hpp"
#include "prefkit/pipeline.hpp"

namespace fs = std::filesystem;
using namespace prefkit;

namespace {

const std::string kBin = PREFKIT_BIN;

struct TempDir {
    fs::path path;

    TempDir() {
        path = fs::temp_directory_path() /
               ("prefkit_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    static int& counter() {
        static int n = 0;
        return n;
    }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

int run(const std::string& args, const std::string& stderr_to = "") {
    std::string cmd = "\"" + kBin + "\" " + args + " >/dev/null";
    cmd += stderr_to.empty() ? " 2>/dev/null" : " 2>\"" + stderr_to + "\"";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    return WEXITSTATUS(status);
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    REQUIRE(out.good());
    out << content;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

std::string annotation_line(const std::string& prompt, const std::string& first,
                            const std::string& second, const std::string& verdict) {
    return "{\"prompt_id\":\"" + prompt + "\",\"first\":\"" + first + "\",\"second\":\"" + second +
           "\",\"verdict\":\"" + verdict + "\",\"source\":\"human\"}\n";
}

std::string score_line(const std::string& prompt, const std::string& response, double score) {
    return io::score_line(prompt, response, score) + "\n";
}

std::string response_line(const std::string& prompt, const std::string& response,
                          const std::string& category, const std::string& text = "t") {
    return "{\"prompt_id\":\"" + prompt + "\",\"response_id\":\"" + response +
           "\",\"category\":\"" + category + "\",\"model\":\"m\",\"text\":\"" + text + "\"}\n";
}

}  // namespace

TEST_CASE("cli resolve: consistent fixture reports zero conflicts", "[cli]") {
    TempDir dir;
    std::string annotations;
    for (const auto* prompt : {"p1", "p2", "p3"}) {
        annotations += annotation_line(prompt, "a", "b", "first");
        annotations += annotation_line(prompt, "b", "c", "first");
        annotations += annotation_line(prompt, "a", "c", "first");
    }
    write_file(dir.file("ann.jsonl"), annotations);
    REQUIRE(run("resolve --annotations \"" + dir.file("ann.jsonl") + "\" --out \"" +
                dir.file("rankings.jsonl") + "\"") == 0);

    const std::string report = slurp(dir.file("rankings.jsonl") + ".conflict.json");
    REQUIRE(report.find("\"dataset\":\"ann\"") != std::string::npos);
    REQUIRE(report.find("\"conflict_ratio\":0") != std::string::npos);

    std::ifstream in(dir.file("rankings.jsonl"));
    const auto rankings = io::read_rankings(in);
    REQUIRE(rankings.size() == 3);
    REQUIRE(rankings[0].prompt_id == "p1");
    REQUIRE(rankings[0].tiers ==
            std::vector<std::vector<std::string>>{{"a"}, {"b"}, {"c"}});
}

TEST_CASE("cli resolve: all-cycle fixture reports ratio one", "[cli]") {
    TempDir dir;
    std::string annotations = annotation_line("p", "a", "b", "first") +
                              annotation_line("p", "b", "c", "first") +
                              annotation_line("p", "c", "a", "first");
    write_file(dir.file("ann.jsonl"), annotations);
    REQUIRE(run("resolve --annotations \"" + dir.file("ann.jsonl") + "\" --out \"" +
                dir.file("r.jsonl") + "\" --report \"" + dir.file("conflict.json") +
                "\" --dataset cycles --macro") == 0);
    const std::string report = slurp(dir.file("conflict.json"));
    REQUIRE(report.find("\"dataset\":\"cycles\"") != std::string::npos);
    REQUIRE(report.find("\"conflict_ratio\":1") != std::string::npos);
    REQUIRE(report.find("\"macro_conflict_ratio\":1") != std::string::npos);
}

TEST_CASE("cli resolve: malformed input exits 2 and names the line", "[cli]") {
    TempDir dir;
    write_file(dir.file("ann.jsonl"),
               annotation_line("p", "a", "b", "first") + "this is not json\n");
    const int code = run("resolve --annotations \"" + dir.file("ann.jsonl") + "\" --out \"" +
                             dir.file("r.jsonl") + "\"",
                         dir.file("stderr.txt"));
    REQUIRE(code == 2);
    REQUIRE(slurp(dir.file("stderr.txt")).find("line 2") != std::string::npos);
}

TEST_CASE("cli resolve: dangling endpoints exit 3 when responses are given", "[cli]") {
    TempDir dir;
    write_file(dir.file("ann.jsonl"), annotation_line("p", "a", "ghost", "first"));
    write_file(dir.file("resp.jsonl"),
               response_line("p", "a", "qa") + response_line("p", "b", "qa"));
    REQUIRE(run("resolve --annotations \"" + dir.file("ann.jsonl") + "\" --responses \"" +
                dir.file("resp.jsonl") + "\" --out \"" + dir.file("r.jsonl") + "\"") == 3);
}

TEST_CASE("cli eval: perfect and imperfect scorers", "[cli]") {
    TempDir dir;
    write_file(dir.file("ann.jsonl"), annotation_line("p1", "a", "b", "first") +
                                          annotation_line("p1", "b", "c", "first") +
                                          annotation_line("p1", "a", "c", "first"));
    REQUIRE(run("resolve --annotations \"" + dir.file("ann.jsonl") + "\" --out \"" +
                dir.file("rankings.jsonl") + "\"") == 0);
    write_file(dir.file("resp.jsonl"), response_line("p1", "a", "qa") +
                                           response_line("p1", "b", "qa") +
                                           response_line("p1", "c", "qa"));

    write_file(dir.file("perfect.jsonl"), score_line("p1", "a", 3) + score_line("p1", "b", 2) +
                                              score_line("p1", "c", 1));
    REQUIRE(run("eval --rankings \"" + dir.file("rankings.jsonl") + "\" --scores \"" +
                dir.file("perfect.jsonl") + "\" --responses \"" + dir.file("resp.jsonl") +
                "\" --out \"" + dir.file("perfect.json") + "\"") == 0);
    const std::string perfect = slurp(dir.file("perfect.json"));
    REQUIRE(perfect.find("\"macro_accuracy\":1") != std::string::npos);
    REQUIRE(perfect.find("\"macro_exact_match\":1") != std::string::npos);

    write_file(dir.file("mixed.jsonl"), score_line("p1", "a", 0.5) + score_line("p1", "b", 0.9) +
                                            score_line("p1", "c", 0.1));
    REQUIRE(run("eval --rankings \"" + dir.file("rankings.jsonl") + "\" --scores \"" +
                dir.file("mixed.jsonl") + "\" --responses \"" + dir.file("resp.jsonl") +
                "\" --out \"" + dir.file("mixed.json") + "\"") == 0);
    const std::string mixed = slurp(dir.file("mixed.json"));
    REQUIRE(mixed.find("\"accuracy\":0.66666666666666663") != std::string::npos);
    REQUIRE(mixed.find("\"exact_match\":0,") != std::string::npos);
}

TEST_CASE("cli eval: two categories macro-average, incomplete scores exit 3", "[cli]") {
    TempDir dir;
    // Category A: 4/5 pairs correct (0.8); category B: 3/5 (0.6); macro 0.7.
    std::string annotations, responses, scores;
    const auto add_prompt = [&](const std::string& prompt, const std::string& category,
                                bool correct) {
        annotations += annotation_line(prompt, "a", "b", "first");
        responses += response_line(prompt, "a", category);
        responses += response_line(prompt, "b", category);
        scores += score_line(prompt, "a", correct ? 1.0 : 0.0);
        scores += score_line(prompt, "b", 0.5);
    };
    for (int i = 0; i < 5; ++i) add_prompt("a" + std::to_string(i), "A", i != 0);
    for (int i = 0; i < 5; ++i) add_prompt("b" + std::to_string(i), "B", i >= 2);
    write_file(dir.file("ann.jsonl"), annotations);
    write_file(dir.file("resp.jsonl"), responses);
    write_file(dir.file("scores.jsonl"), scores);
    REQUIRE(run("resolve --annotations \"" + dir.file("ann.jsonl") + "\" --out \"" +
                dir.file("rankings.jsonl") + "\"") == 0);
    REQUIRE(run("eval --rankings \"" + dir.file("rankings.jsonl") + "\" --scores \"" +
                dir.file("scores.jsonl") + "\" --responses \"" + dir.file("resp.jsonl") +
                "\" --out \"" + dir.file("metrics.json") + "\"") == 0);
    const std::string metrics = slurp(dir.file("metrics.json"));
    const std::string expected =
        "\"macro_accuracy\":" + io::format_double((4.0 / 5.0 + 3.0 / 5.0) / 2.0);
    REQUIRE(metrics.find(expected) != std::string::npos);

    write_file(dir.file("short.jsonl"), score_line("a0", "a", 1.0));
    const int code = run("eval --rankings \"" + dir.file("rankings.jsonl") + "\" --scores \"" +
                             dir.file("short.jsonl") + "\" --responses \"" +
                             dir.file("resp.jsonl") + "\" --out \"" + dir.file("x.json") + "\"",
                         dir.file("stderr.txt"));
    REQUIRE(code == 3);
    const std::string err = slurp(dir.file("stderr.txt"));
    REQUIRE(err.find("a0") != std::string::npos);
    REQUIRE(err.find("b") != std::string::npos);
}

TEST_CASE("cli schedule: pair and triple modes, byte-stable reruns", "[cli]") {
    TempDir dir;
    std::string responses;
    for (int i = 1; i <= 5; ++i) {
        responses += response_line("p", "r" + std::to_string(i), "qa");
    }
    write_file(dir.file("resp.jsonl"), responses);

    REQUIRE(run("schedule --responses \"" + dir.file("resp.jsonl") +
                "\" --mode pair --seed 0 --out \"" + dir.file("pair.jsonl") + "\"") == 0);
    std::ifstream pair_in(dir.file("pair.jsonl"));
    std::string line;
    int n_pair = 0;
    while (std::getline(pair_in, line)) ++n_pair;
    REQUIRE(n_pair == 10);

    REQUIRE(run("schedule --responses \"" + dir.file("resp.jsonl") +
                "\" --mode triple --seed 0 --out \"" + dir.file("triple.jsonl") + "\"") == 0);
    std::ifstream triple_in(dir.file("triple.jsonl"));
    int n_triple = 0;
    while (std::getline(triple_in, line)) ++n_triple;
    REQUIRE(n_triple == 5);

    REQUIRE(run("schedule --responses \"" + dir.file("resp.jsonl") +
                "\" --mode pair --seed 0 --out \"" + dir.file("pair2.jsonl") + "\"") == 0);
    REQUIRE(slurp(dir.file("pair.jsonl")) == slurp(dir.file("pair2.jsonl")));

    // Global --seed feeds the command when no subcommand seed is given.
    REQUIRE(run("--seed 9 schedule --responses \"" + dir.file("resp.jsonl") +
                "\" --mode pair --out \"" + dir.file("pair9.jsonl") + "\"") == 0);
    REQUIRE(run("schedule --responses \"" + dir.file("resp.jsonl") +
                "\" --mode pair --seed 9 --out \"" + dir.file("pair9b.jsonl") + "\"") == 0);
    REQUIRE(slurp(dir.file("pair9.jsonl")) == slurp(dir.file("pair9b.jsonl")));

    write_file(dir.file("four.jsonl"), response_line("p", "r1", "qa") +
                                           response_line("p", "r2", "qa") +
                                           response_line("p", "r3", "qa") +
                                           response_line("p", "r4", "qa"));
    REQUIRE(run("schedule --responses \"" + dir.file("four.jsonl") +
                "\" --mode triple --seed 0 --out \"" + dir.file("t.jsonl") + "\"") == 3);
}

TEST_CASE("cli filter: keep counts and margins", "[cli]") {
    TempDir dir;
    write_file(dir.file("ann.jsonl"),
               "{\"prompt_id\":\"p\",\"first\":\"a\",\"second\":\"b\",\"verdict\":\"first\","
               "\"source\":\"machine\"}\n"
               "{\"prompt_id\":\"p\",\"first\":\"c\",\"second\":\"b\",\"verdict\":\"first\","
               "\"source\":\"machine\"}\n"
               "{\"prompt_id\":\"p\",\"first\":\"a\",\"second\":\"c\",\"verdict\":\"first\","
               "\"source\":\"machine\"}\n");
    write_file(dir.file("scores.jsonl"), score_line("p", "a", 2.0) + score_line("p", "b", 1.0) +
                                             score_line("p", "c", 0.5));
    REQUIRE(run("filter --annotations \"" + dir.file("ann.jsonl") + "\" --scores \"" +
                dir.file("scores.jsonl") + "\" --margin 0 --out \"" + dir.file("pairs.jsonl") +
                "\" --stats \"" + dir.file("stats.json") + "\"") == 0);
    REQUIRE(slurp(dir.file("stats.json")) == "{\"kept\":2,\"dropped\":1,\"merged_ties\":0}\n");
    std::ifstream pairs_in(dir.file("pairs.jsonl"));
    const auto pairs = io::read_pairs(pairs_in);
    REQUIRE(pairs.size() == 2);
    REQUIRE(pairs[0].chosen_len == 0);  // no --responses: lengths default to 0

    REQUIRE(run("filter --annotations \"" + dir.file("ann.jsonl") + "\" --scores \"" +
                dir.file("scores.jsonl") + "\" --margin 10 --out \"" + dir.file("none.jsonl") +
                "\" --stats \"" + dir.file("stats2.json") + "\"") == 0);
    REQUIRE(slurp(dir.file("stats2.json")) == "{\"kept\":0,\"dropped\":3,\"merged_ties\":0}\n");

    write_file(dir.file("resp.jsonl"),
               response_line("p", "a", "qa", "aaaa") + response_line("p", "b", "qa", "bb") +
                   response_line("p", "c", "qa", "c"));
    REQUIRE(run("filter --annotations \"" + dir.file("ann.jsonl") + "\" --scores \"" +
                dir.file("scores.jsonl") + "\" --responses \"" + dir.file("resp.jsonl") +
                "\" --margin 0 --out \"" + dir.file("pairs_len.jsonl") + "\"") == 0);
    std::ifstream len_in(dir.file("pairs_len.jsonl"));
    const auto with_lengths = io::read_pairs(len_in);
    REQUIRE(with_lengths[0].chosen_len == 4);
    REQUIRE(with_lengths[0].rejected_len == 2);

    write_file(dir.file("tie.jsonl"),
               "{\"prompt_id\":\"p\",\"first\":\"a\",\"second\":\"b\",\"verdict\":\"tie\","
               "\"source\":\"machine\"}\n");
    write_file(dir.file("tie_scores.jsonl"), score_line("p", "a", 1.0) + score_line("p", "b", 1.0));
    REQUIRE(run("filter --annotations \"" + dir.file("tie.jsonl") + "\" --scores \"" +
                dir.file("tie_scores.jsonl") + "\" --margin 0 --keep-equal-ties --out \"" +
                dir.file("tie_pairs.jsonl") + "\" --stats \"" + dir.file("tie_stats.json") +
                "\"") == 0);
    REQUIRE(slurp(dir.file("tie_stats.json")) ==
            "{\"kept\":0,\"dropped\":0,\"merged_ties\":1}\n");
}

TEST_CASE("cli debias: balances the bundled ratio fixture", "[cli]") {
    TempDir dir;
    std::string pairs;
    for (int i = 0; i < 10; ++i) {
        pairs += "{\"prompt_id\":\"p\",\"chosen\":\"c" + std::to_string(i) +
                 "\",\"rejected\":\"r\",\"chosen_len\":100,\"rejected_len\":50}\n";
    }
    for (int i = 0; i < 4; ++i) {
        pairs += "{\"prompt_id\":\"p\",\"chosen\":\"s" + std::to_string(i) +
                 "\",\"rejected\":\"r\",\"chosen_len\":50,\"rejected_len\":100}\n";
    }
    pairs += "{\"prompt_id\":\"p\",\"chosen\":\"e\",\"rejected\":\"r\",\"chosen_len\":70,"
             "\"rejected_len\":70}\n";
    write_file(dir.file("pairs.jsonl"), pairs);
    REQUIRE(run("debias --pairs \"" + dir.file("pairs.jsonl") + "\" --seed 0 --out \"" +
                dir.file("balanced.jsonl") + "\"") == 0);
    std::ifstream in(dir.file("balanced.jsonl"));
    REQUIRE(io::read_pairs(in).size() == 9);

    REQUIRE(run("debias --pairs \"" + dir.file("pairs.jsonl") + "\" --seed 0 --out \"" +
                dir.file("balanced2.jsonl") + "\"") == 0);
    REQUIRE(slurp(dir.file("balanced.jsonl")) == slurp(dir.file("balanced2.jsonl")));
}

TEST_CASE("cli train: config validation and reproducible outputs", "[cli]") {
    TempDir dir;
    std::string features, rankings;
    for (int i = 0; i < 20; ++i) {
        const std::string prompt = "p" + std::to_string(i);
        features += "{\"prompt_id\":\"" + prompt + "\",\"response_id\":\"w\",\"features\":[1]}\n";
        features += "{\"prompt_id\":\"" + prompt + "\",\"response_id\":\"l\",\"features\":[-1]}\n";
        rankings += "{\"prompt_id\":\"" + prompt +
                    "\",\"tiers\":[[\"w\"],[\"l\"]],\"closure\":[[\"w\",\"l\"]]}\n";
    }
    write_file(dir.file("features.jsonl"), features);
    write_file(dir.file("rankings.jsonl"), rankings);

    write_file(dir.file("bad.json"), "{\"batch_capacity\":1}\n");
    REQUIRE(run("train --features \"" + dir.file("features.jsonl") + "\" --rankings \"" +
                dir.file("rankings.jsonl") + "\" --config \"" + dir.file("bad.json") +
                "\" --out-model \"" + dir.file("m.json") + "\" --history \"" +
                dir.file("h.jsonl") + "\"") == 4);

    write_file(dir.file("unknown.json"), "{\"learning_rte\":0.1}\n");
    REQUIRE(run("train --features \"" + dir.file("features.jsonl") + "\" --rankings \"" +
                dir.file("rankings.jsonl") + "\" --config \"" + dir.file("unknown.json") +
                "\" --out-model \"" + dir.file("m.json") + "\" --history \"" +
                dir.file("h.jsonl") + "\"") == 4);

    write_file(dir.file("config.json"),
               "{\"batch_capacity\":8,\"learning_rate\":0.01,\"reg_coefficient\":0.0,"
               "\"epochs\":3,\"seed\":0}\n");
    REQUIRE(run("train --features \"" + dir.file("features.jsonl") + "\" --rankings \"" +
                dir.file("rankings.jsonl") + "\" --config \"" + dir.file("config.json") +
                "\" --out-model \"" + dir.file("model.json") + "\" --history \"" +
                dir.file("history.jsonl") + "\"") == 0);
    const std::string model = slurp(dir.file("model.json"));
    REQUIRE(model.rfind("{\"d\":1,\"weights\":[", 0) == 0);
    const std::string history = slurp(dir.file("history.jsonl"));
    REQUIRE(history.find("\"epoch\":1,") != std::string::npos);
    REQUIRE(history.find("\"pair_accuracy\":1") != std::string::npos);

    REQUIRE(run("train --features \"" + dir.file("features.jsonl") + "\" --rankings \"" +
                dir.file("rankings.jsonl") + "\" --config \"" + dir.file("config.json") +
                "\" --out-model \"" + dir.file("model2.json") + "\" --history \"" +
                dir.file("history2.jsonl") + "\"") == 0);
    REQUIRE(slurp(dir.file("model.json")) == slurp(dir.file("model2.json")));
    REQUIRE(slurp(dir.file("history.jsonl")) == slurp(dir.file("history2.jsonl")));

    // Defaults apply when no config file is given.
    REQUIRE(run("train --features \"" + dir.file("features.jsonl") + "\" --rankings \"" +
                dir.file("rankings.jsonl") + "\" --out-model \"" + dir.file("m3.json") +
                "\" --history \"" + dir.file("h3.jsonl") + "\"") == 0);

    // Rankings without any closure pair cannot be trained on.
    write_file(dir.file("flat.jsonl"),
               "{\"prompt_id\":\"p0\",\"tiers\":[[\"w\",\"l\"]],\"closure\":[]}\n");
    REQUIRE(run("train --features \"" + dir.file("features.jsonl") + "\" --rankings \"" +
                dir.file("flat.jsonl") + "\" --out-model \"" + dir.file("m4.json") +
                "\" --history \"" + dir.file("h4.jsonl") + "\"") == 3);
}

TEST_CASE("cli bias-report: document shape", "[cli]") {
    TempDir dir;
    write_file(dir.file("resp.jsonl"),
               response_line("p", "a", "qa", "aaaaaaaaaa") + response_line("p", "b", "qa", "bb"));
    write_file(dir.file("ann.jsonl"), annotation_line("p", "a", "b", "first") +
                                          annotation_line("p", "b", "a", "second") +
                                          annotation_line("p", "a", "b", "tie"));
    REQUIRE(run("bias-report --annotations \"" + dir.file("ann.jsonl") + "\" --responses \"" +
                dir.file("resp.jsonl") + "\" --out \"" + dir.file("bias.json") + "\"") == 0);
    const std::string report = slurp(dir.file("bias.json"));
    REQUIRE(report.find("\"position\":{\"first_shown_win_rate\":0.5,\"n\":2,\"ties\":1}") !=
            std::string::npos);
    REQUIRE(report.find("\"length_buckets\":[{\"delta_min\":null,\"delta_max\":-500,") !=
            std::string::npos);

    REQUIRE(run("bias-report --annotations \"" + dir.file("ann.jsonl") + "\" --responses \"" +
                dir.file("resp.jsonl") + "\" --out \"" + dir.file("bias2.json") +
                "\" --bucket-edges -10,0,10") == 0);
    REQUIRE(slurp(dir.file("bias2.json")).find("\"delta_max\":-10") != std::string::npos);
}

TEST_CASE("cli: usage problems exit 4", "[cli]") {
    REQUIRE(run("resolve --no-such-flag") == 4);
    REQUIRE(run("schedule --mode nonsense --responses /dev/null --out /dev/null") == 4);
    REQUIRE(run("") == 4);
}

TEST_CASE("cli rankings round trip through resolve output", "[cli]") {
    TempDir dir;
    write_file(dir.file("ann.jsonl"), annotation_line("p", "a", "b", "first") +
                                          annotation_line("p", "b", "c", "first") +
                                          annotation_line("p", "c", "a", "first") +
                                          annotation_line("p", "a", "d", "first"));
    REQUIRE(run("resolve --annotations \"" + dir.file("ann.jsonl") + "\" --out \"" +
                dir.file("r.jsonl") + "\"") == 0);
    std::ifstream in(dir.file("r.jsonl"));
    const auto rankings = io::read_rankings(in);
    REQUIRE(rankings.size() == 1);
    REQUIRE(rankings[0].tiers ==
            std::vector<std::vector<std::string>>{{"a", "b", "c"}, {"d"}});
    REQUIRE(rankings[0].closure == std::set<std::pair<std::string, std::string>>{
                                       {"a", "d"}, {"b", "d"}, {"c", "d"}});
}
