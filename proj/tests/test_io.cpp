#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "prefkit/jsonl.hpp"
#include "prefkit/rng.hpp"

using namespace prefkit;

namespace {

template <typename T, typename Reader>
T round_trip(const std::string& line, Reader reader) {
    std::istringstream in(line + "\n");
    const auto records = reader(in);
    REQUIRE(records.size() == 1);
    return records.front();
}

}  // namespace

TEST_CASE("format_double survives a parse round trip", "[io]") {
    Rng rng(1);
    for (int i = 0; i < 2000; ++i) {
        double x = (rng.unit() - 0.5) * std::pow(10.0, static_cast<double>(rng.below(13)) - 6.0);
        if (rng.below(10) == 0) x = -x;
        const std::string s = io::format_double(x);
        REQUIRE(std::stod(s) == x);
    }
    REQUIRE(io::format_double(0.0) == "0");
    REQUIRE(std::stod(io::format_double(0.1)) == 0.1);
}

TEST_CASE("response records round trip, CJK intact", "[io]") {
    ResponseRecord r;
    r.prompt_id = "p1";
    r.response_id = "r\"quoted\"";
    r.category = "writing";
    r.model = "m-7b";
    r.text = "\xe4\xbd\xa0\xe5\xa5\xbd\xef\xbc\x8c\xe4\xb8\x96\xe7\x95\x8c\nline two";
    const auto back = round_trip<ResponseRecord>(
        io::to_line(r), [](std::istream& in) { return io::read_responses(in); });
    REQUIRE(back.prompt_id == r.prompt_id);
    REQUIRE(back.response_id == r.response_id);
    REQUIRE(back.category == r.category);
    REQUIRE(back.model == r.model);
    REQUIRE(back.text == r.text);
    // Keys appear in the documented order.
    REQUIRE(io::to_line(r).rfind("{\"prompt_id\":", 0) == 0);
}

TEST_CASE("annotation records round trip", "[io]") {
    AnnotationRecord a;
    a.prompt_id = "p";
    a.first = "x";
    a.second = "y";
    a.verdict = Verdict::Second;
    a.source = Source::Machine;
    const auto back = round_trip<AnnotationRecord>(
        io::to_line(a), [](std::istream& in) { return io::read_annotations(in); });
    REQUIRE(back.verdict == Verdict::Second);
    REQUIRE(back.source == Source::Machine);
    REQUIRE(back.first == "x");
}

TEST_CASE("rankings round trip structurally", "[io]") {
    graph::PartialRanking r;
    r.prompt_id = "p7";
    r.tiers = {{"a", "b"}, {"c"}};
    r.closure = {{"a", "c"}, {"b", "c"}};
    const auto back = round_trip<graph::PartialRanking>(
        io::to_line(r), [](std::istream& in) { return io::read_rankings(in); });
    REQUIRE(back == r);
}

TEST_CASE("scores, pairs, features round trip", "[io]") {
    std::istringstream scores_in(io::score_line("p", "r", 0.1234567890123456789) + "\n");
    const auto scores = io::read_scores(scores_in);
    REQUIRE(scores.at("p", "r") == 0.1234567890123456789);

    PreferencePair p;
    p.prompt_id = "p";
    p.chosen = "a";
    p.rejected = "b";
    p.chosen_len = 120;
    p.rejected_len = 80;
    const auto pair_back = round_trip<PreferencePair>(
        io::to_line(p), [](std::istream& in) { return io::read_pairs(in); });
    REQUIRE(pair_back == p);

    FeatureRecord f;
    f.prompt_id = "p";
    f.response_id = "r";
    f.features = {0.5, -1.25, 3e-7};
    const auto feat_back = round_trip<FeatureRecord>(
        io::to_line(f), [](std::istream& in) { return io::read_features(in); });
    REQUIRE(feat_back.features == f.features);
}

TEST_CASE("tasks serialize with kind and presentation order", "[io]") {
    supervision::AnnotationTask t;
    t.prompt_id = "p";
    t.kind = supervision::TaskKind::Triple;
    t.presented = {"c", "a", "b"};
    REQUIRE(io::to_line(t) ==
            "{\"prompt_id\":\"p\",\"kind\":\"triple\",\"presented\":[\"c\",\"a\",\"b\"]}");
}

TEST_CASE("parse errors carry 1-based line numbers", "[io]") {
    std::istringstream bad("{\"prompt_id\":\"p\",\"response_id\":\"r\",\"category\":\"c\","
                           "\"model\":\"m\",\"text\":\"t\"}\nnot json\n");
    REQUIRE_THROWS_WITH([&] { io::read_responses(bad); }(),
                        Catch::Matchers::ContainsSubstring("line 2"));

    std::istringstream bad_verdict(
        "{\"prompt_id\":\"p\",\"first\":\"a\",\"second\":\"b\",\"verdict\":\"draw\","
        "\"source\":\"human\"}\n");
    REQUIRE_THROWS_AS(io::read_annotations(bad_verdict), ParseError);

    std::istringstream empty_category(
        "{\"prompt_id\":\"p\",\"response_id\":\"r\",\"category\":\"\",\"model\":\"m\","
        "\"text\":\"t\"}\n");
    REQUIRE_THROWS_AS(io::read_responses(empty_category), ParseError);
}

TEST_CASE("referential validation of rankings and duplicates", "[io]") {
    std::istringstream twice("{\"prompt_id\":\"p\",\"tiers\":[[\"a\"],[\"a\"]],\"closure\":[]}\n");
    REQUIRE_THROWS_AS(io::read_rankings(twice), DataError);

    std::istringstream ghost(
        "{\"prompt_id\":\"p\",\"tiers\":[[\"a\",\"b\"]],\"closure\":[[\"a\",\"z\"]]}\n");
    REQUIRE_THROWS_AS(io::read_rankings(ghost), DataError);

    std::istringstream dup_scores(
        "{\"prompt_id\":\"p\",\"response_id\":\"r\",\"score\":1}\n"
        "{\"prompt_id\":\"p\",\"response_id\":\"r\",\"score\":2}\n");
    REQUIRE_THROWS_AS(io::read_scores(dup_scores), DataError);

    const std::vector<ResponseRecord> duplicate{
        {"p", "r", "c", "m", "t"},
        {"p", "r", "c", "m", "t"},
    };
    REQUIRE_THROWS_AS(io::index_responses(duplicate), DataError);
}

TEST_CASE("blank lines and trailing CR are tolerated", "[io]") {
    std::istringstream in(
        "\n{\"prompt_id\":\"p\",\"response_id\":\"r\",\"score\":0.5}\r\n\n");
    const auto scores = io::read_scores(in);
    REQUIRE(scores.at("p", "r") == 0.5);
}
