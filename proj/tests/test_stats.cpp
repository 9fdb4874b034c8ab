#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>

#include "chartgen/stats.hpp"
#include "helpers.hpp"

using namespace chartgen;

namespace {

Chart uniform_chart(int n_notes, double duration_s, Difficulty diff, const std::string& genre) {
    Chart c;
    c.resolution = 192;
    c.tempo_map = {{0, 120000}};
    c.metadata.difficulty = diff;
    c.metadata.set("Genre", genre, true);
    for (int i = 0; i < n_notes; ++i) {
        NoteEvent n;
        n.time_s = duration_s * double(i) / double(n_notes - 1);
        n.frets.add(0);
        c.notes.push_back(n);
    }
    return c;
}

}  // namespace

TEST_CASE("notes per minute on a 60 s chart") {
    const Chart c = uniform_chart(100, 60.0, Difficulty::Expert, "rock");
    const CorpusReport r = corpus_report({c});
    const auto& s = r.per_difficulty.at(Difficulty::Expert);
    CHECK(s.mean_notes_per_song == doctest::Approx(100.0));
    CHECK(s.mean_notes_per_min == doctest::Approx(100.0));
    CHECK(s.share_pct == doctest::Approx(100.0));
}

TEST_CASE("sustain percentage") {
    Chart c = uniform_chart(3, 10.0, Difficulty::Hard, "pop");
    c.notes[1].sustain_s = 0.5;
    const CorpusReport r = corpus_report({c});
    CHECK(r.per_difficulty.at(Difficulty::Hard).sustain_pct == doctest::Approx(100.0 / 3.0));
}

TEST_CASE("genre grouping by rock/metal substrings") {
    std::vector<Chart> charts = {
        uniform_chart(4, 10.0, Difficulty::Expert, "progressive rock"),
        uniform_chart(4, 10.0, Difficulty::Expert, "thrash metal"),
        uniform_chart(4, 10.0, Difficulty::Expert, "pop"),
    };
    const CorpusReport r = corpus_report(charts);
    REQUIRE(r.genre_histogram.size() == 3);
    int64_t rock = 0, metal = 0, pop = 0;
    for (const auto& [g, n] : r.genre_histogram) {
        if (g == "rock") rock = n;
        if (g == "metal") metal = n;
        if (g == "pop") pop = n;
    }
    CHECK(rock == 1);
    CHECK(metal == 1);
    CHECK(pop == 1);
}

TEST_CASE("report is permutation invariant") {
    Rng rng(31);
    std::vector<Chart> charts;
    for (int i = 0; i < 10; ++i) charts.push_back(test::make_random_chart(rng, 30 + i));
    const CorpusReport a = corpus_report(charts);
    std::reverse(charts.begin(), charts.end());
    const CorpusReport b = corpus_report(charts);
    for (const auto& [diff, s] : a.per_difficulty) {
        const auto& t = b.per_difficulty.at(diff);
        CHECK(s.mean_notes_per_song == doctest::Approx(t.mean_notes_per_song));
        CHECK(s.mean_notes_per_min == doctest::Approx(t.mean_notes_per_min));
        CHECK(s.sustain_pct == doctest::Approx(t.sustain_pct));
    }
}

TEST_CASE("shares sum to 100") {
    std::vector<Chart> charts = {
        uniform_chart(4, 10.0, Difficulty::Expert, "rock"),
        uniform_chart(4, 10.0, Difficulty::Hard, "rock"),
        uniform_chart(4, 10.0, Difficulty::Medium, "rock"),
        uniform_chart(4, 10.0, Difficulty::Easy, "rock"),
        uniform_chart(4, 10.0, Difficulty::Expert, "rock"),
    };
    const CorpusReport r = corpus_report(charts);
    double total = 0.0;
    for (const auto& [diff, s] : r.per_difficulty) total += s.share_pct;
    CHECK(total == doctest::Approx(100.0).epsilon(1e-9));
}

TEST_CASE("corpus built to the Expert row lands at its notes/min") {
    // 1285 notes over 1285/294.8 minutes
    const double duration_s = 1285.0 / 294.8 * 60.0;
    std::vector<Chart> charts;
    for (int i = 0; i < 5; ++i) {
        Chart c = uniform_chart(1285, duration_s, Difficulty::Expert, "metalcore");
        charts.push_back(c);
    }
    const CorpusReport r = corpus_report(charts);
    const auto& s = r.per_difficulty.at(Difficulty::Expert);
    CHECK(std::abs(s.mean_notes_per_min - 294.8) <= 0.5);
    CHECK(s.mean_notes_per_song == doctest::Approx(1285.0));
}

TEST_CASE("duration outliers are flagged and excluded from means") {
    std::vector<Chart> charts = {
        uniform_chart(600, 240.0, Difficulty::Expert, "rock"),
        uniform_chart(600, 240.0, Difficulty::Expert, "rock"),
        uniform_chart(9000, 3600.0, Difficulty::Expert, "rock"),  // a full album
    };
    const CorpusReport r = corpus_report(charts);
    const auto& s = r.per_difficulty.at(Difficulty::Expert);
    CHECK(s.n_outliers == 1);
    CHECK(s.mean_duration_min == doctest::Approx(4.0));
    CHECK(s.mean_notes_per_min == doctest::Approx(150.0));
    // notes/song still counts every chart
    CHECK(s.mean_notes_per_song == doctest::Approx((600.0 + 600.0 + 9000.0) / 3.0));
}

TEST_CASE("empty corpus raises") {
    CHECK_THROWS_AS(corpus_report({}), Error);
}

TEST_CASE("text and json reports render") {
    Rng rng(8);
    std::vector<Chart> charts;
    for (int i = 0; i < 4; ++i) charts.push_back(test::make_random_chart(rng, 25));
    const CorpusReport r = corpus_report(charts);
    CHECK(!report_to_text(r).empty());
    CHECK(report_to_json(r).find("difficulty") != std::string::npos);
}
