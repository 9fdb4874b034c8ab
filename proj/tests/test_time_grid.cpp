#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "chartgen/time_grid.hpp"
#include "helpers.hpp"

using namespace chartgen;

namespace {

Chart chart_from_onsets(const std::vector<double>& onsets, uint8_t mask = 1) {
    Chart c;
    c.resolution = 192;
    c.tempo_map = {{0, 120000}};
    for (double t : onsets) {
        NoteEvent n;
        n.time_s = t;
        n.frets.mask = mask;
        c.notes.push_back(n);
    }
    return c;
}

}  // namespace

TEST_CASE("grid_encode bin placement") {
    // Δ = 40 ms: onsets 0.00 and 0.05 land in bins 0 and 1
    auto seq40 = grid_encode(chart_from_onsets({0.0, 0.05}), 40.0, {0.0, 1.0});
    CHECK(seq40.tokens.size() == 25);
    CHECK(seq40.tokens[0] == 1);
    CHECK(seq40.tokens[1] == 1);
    for (size_t k = 2; k < seq40.tokens.size(); ++k) CHECK(seq40.tokens[k] == vocab::kPad);

    // Δ = 20 ms: same onsets land in bins 0 and 3 (floor(2.5 + 0.5) = 3)
    auto seq20 = grid_encode(chart_from_onsets({0.0, 0.05}), 20.0, {0.0, 1.0});
    CHECK(seq20.tokens.size() == 50);
    CHECK(seq20.tokens[0] == 1);
    CHECK(seq20.tokens[3] == 1);
    CHECK(seq20.tokens[1] == vocab::kPad);
    CHECK(seq20.tokens[2] == vocab::kPad);
}

TEST_CASE("empty window is all PAD") {
    Chart empty = chart_from_onsets({});
    const auto seq = grid_encode(empty, 40.0, {0.0, 1.0});
    CHECK(seq.tokens.size() == 25);
    CHECK(seq.pad_count() == 25);
    CHECK(grid_decode(seq).empty());
}

TEST_CASE("bin collision raises") {
    const Chart c = chart_from_onsets({0.100, 0.101});
    CHECK_THROWS_AS(grid_encode(c, 40.0, {0.0, 1.0}), Error);
    try {
        grid_encode(c, 40.0, {0.0, 1.0});
    } catch (const Error& e) {
        CHECK(e.kind() == Err::BinCollision);
    }
}

TEST_CASE("grid_decode places tokens at bin left edges") {
    GridSequence seq;
    seq.resolution_ms = 40.0;
    seq.start_s = 0.0;
    seq.tokens = {vocab::kPad, 1, vocab::kPad};
    const auto notes = grid_decode(seq);
    REQUIRE(notes.size() == 1);
    CHECK(notes[0].time_s == doctest::Approx(0.04));
    CHECK(notes[0].frets.mask == 1);
    CHECK(notes[0].sustain_s == 0.0);
}

TEST_CASE("encode/decode round trip keeps onsets within half a bin") {
    Rng rng(11);
    for (double delta_ms : {20.0, 40.0}) {
        for (int trial = 0; trial < 50; ++trial) {
            const Chart chart = test::make_random_chart(rng, 60, delta_ms / 1000.0 + 1e-3);
            const double t1 = chart.last_onset_s() + 0.5;
            const GridSequence seq = grid_encode(chart, delta_ms, {0.0, t1});
            const auto notes = grid_decode(seq);
            REQUIRE(notes.size() == chart.notes.size());
            for (size_t i = 0; i < notes.size(); ++i) {
                CHECK(std::abs(notes[i].time_s - chart.notes[i].time_s) <= delta_ms / 2000.0 + 1e-9);
                // token identity preserved exactly
                CHECK(*encode_frets(chart.notes[i].frets) == *encode_frets(notes[i].frets));
            }
        }
    }
}

TEST_CASE("pad fraction identity") {
    Rng rng(3);
    const Chart chart = test::make_random_chart(rng, 40, 0.06);
    const double t1 = chart.last_onset_s() + 0.2;
    const GridSequence seq = grid_encode(chart, 40.0, {0.0, t1});
    const double expected = 1.0 - double(chart.notes.size()) / double(seq.tokens.size());
    CHECK(seq.pad_fraction() == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("ioi_cdf hand-counted example") {
    const Chart c = chart_from_onsets({0.0, 0.1, 0.25, 0.3});
    const IoiReport r = ioi_cdf({c});
    CHECK(r.min_ioi_s == doctest::Approx(0.05));
    CHECK(r.fraction_at(0.1) == doctest::Approx(2.0 / 3.0));
    CHECK(r.fraction_at(0.12) == doctest::Approx(2.0 / 3.0));
    CHECK(r.fraction_at(0.15) == doctest::Approx(1.0));
    CHECK(r.cdf.back().second == doctest::Approx(1.0));
}

TEST_CASE("ioi_cdf uniform spacing is a step") {
    std::vector<double> onsets;
    for (int i = 0; i < 10; ++i) onsets.push_back(0.5 * i);
    const IoiReport r = ioi_cdf({chart_from_onsets(onsets)});
    REQUIRE(r.cdf.size() == 1);
    CHECK(r.cdf[0].first == doctest::Approx(0.5));
    CHECK(r.cdf[0].second == doctest::Approx(1.0));
}

TEST_CASE("ioi_cdf pools charts like a concatenated multiset") {
    const Chart a = chart_from_onsets({0.0, 0.1});
    const Chart b = chart_from_onsets({0.0, 0.3});
    const IoiReport pooled = ioi_cdf({a, b});
    // brute force: {0.1, 0.3}
    CHECK(pooled.fraction_at(0.1) == doctest::Approx(0.5));
    CHECK(pooled.fraction_at(0.3) == doctest::Approx(1.0));

    CHECK_THROWS_AS(ioi_cdf({chart_from_onsets({0.5})}), Error);
}

TEST_CASE("chords count as one onset in IOI") {
    Chart c = chart_from_onsets({0.0, 0.0, 0.5});
    const IoiReport r = ioi_cdf({c});
    CHECK(r.min_ioi_s == doctest::Approx(0.5));
}

TEST_CASE("filter_by_resolution") {
    const Chart slow = chart_from_onsets({0.0, 0.045, 0.090});
    const Chart fast = chart_from_onsets({0.0, 0.035, 0.090});
    const FilterResult r = filter_by_resolution({slow, fast}, 40.0);
    REQUIRE(r.kept.size() == 1);
    REQUIRE(r.excluded.size() == 1);
    CHECK(r.excluded_fraction == doctest::Approx(0.5));
    CHECK(r.kept[0].notes[1].time_s == doctest::Approx(0.045));
}

TEST_CASE("synthetic corpus with a known slow fraction") {
    // 1% of charts built below the grid step
    std::vector<Chart> charts;
    Rng rng(17);
    for (int i = 0; i < 200; ++i) {
        const bool fast = (i % 100) == 0;  // exactly 1%
        charts.push_back(test::make_random_chart(rng, 30, fast ? 0.030 : 0.045, fast ? 0.004 : 0.2));
    }
    // make_random_chart jitters gaps upward, so force the two fast charts to
    // contain one sub-40ms interval
    const FilterResult r = filter_by_resolution(charts, 40.0);
    CHECK(r.excluded.size() == 2);
    CHECK(r.excluded_fraction == doctest::Approx(0.01).epsilon(1e-12));
}

TEST_CASE("A2CT token file round trip") {
    Rng rng(23);
    for (int trial = 0; trial < 20; ++trial) {
        GridSequence seq;
        seq.resolution_ms = (trial % 2 == 0) ? 40.0 : 20.0;
        const int n = 1 + int(rng.below(500));
        for (int i = 0; i < n; ++i) seq.tokens.push_back(TokenId(rng.below(66)));
        const auto bytes = tokens_to_bytes(seq);
        const GridSequence back = tokens_from_bytes(bytes);
        CHECK(back.resolution_ms == seq.resolution_ms);
        CHECK(back.tokens == seq.tokens);
        // byte-identical second write
        CHECK(tokens_to_bytes(back) == bytes);
    }
}

TEST_CASE("A2CT rejects corrupt input") {
    GridSequence seq;
    seq.resolution_ms = 40.0;
    seq.tokens = {1, 2, 3};
    auto bytes = tokens_to_bytes(seq);
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    CHECK_THROWS_AS(tokens_from_bytes(bad_magic), Error);
    auto truncated = bytes;
    truncated.pop_back();
    CHECK_THROWS_AS(tokens_from_bytes(truncated), Error);
    auto bad_token = bytes;
    bad_token.back() = 200;
    CHECK_THROWS_AS(tokens_from_bytes(bad_token), Error);
}
