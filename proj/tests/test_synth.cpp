#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "chartgen/stats.hpp"
#include "chartgen/synth.hpp"
#include "chartgen/time_grid.hpp"

using namespace chartgen;

TEST_CASE("synth corpus hits the requested density and IOI floor") {
    SynthConfig cfg;
    cfg.n_songs = 3;
    cfg.duration_s = 60.0;
    cfg.notes_per_min = 294.8;
    cfg.delta_floor_ms = 40.0;
    cfg.seed = 1;
    const auto songs = synth_corpus(cfg);
    REQUIRE(songs.size() == 3);
    for (const auto& song : songs) {
        CHECK(song.chart.notes.size() == 295);  // round(294.8 * 1 min)
        CHECK(min_ioi_s(song.chart) >= 0.040 - 1e-12);
        CHECK(song.wave.samples.size() == size_t(60 * 16000));
        // last note held to the end keeps the chart duration exact
        CHECK(chart_duration_s(song.chart) == doctest::Approx(60.0).epsilon(1e-9));
    }

    // stats agree with the construction
    std::vector<Chart> charts;
    for (const auto& s : songs) charts.push_back(s.chart);
    const CorpusReport report = corpus_report(charts);
    CHECK(std::abs(report.per_difficulty.at(Difficulty::Expert).mean_notes_per_min - 294.8) <= 0.5);
}

TEST_CASE("synth corpus is deterministic in the seed") {
    SynthConfig cfg;
    cfg.n_songs = 2;
    cfg.duration_s = 10.0;
    cfg.notes_per_min = 120.0;
    cfg.seed = 7;
    const auto a = synth_corpus(cfg);
    const auto b = synth_corpus(cfg);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].wave.samples == b[i].wave.samples);
        REQUIRE(a[i].chart.notes.size() == b[i].chart.notes.size());
        for (size_t n = 0; n < a[i].chart.notes.size(); ++n) {
            CHECK(a[i].chart.notes[n].time_s == b[i].chart.notes[n].time_s);
            CHECK(a[i].chart.notes[n].frets == b[i].chart.notes[n].frets);
        }
    }
    cfg.seed = 8;
    const auto c = synth_corpus(cfg);
    CHECK(a[0].wave.samples != c[0].wave.samples);
}

TEST_CASE("infeasible density raises") {
    SynthConfig cfg;
    cfg.duration_s = 10.0;
    cfg.notes_per_min = 10000.0;
    cfg.delta_floor_ms = 40.0;
    CHECK_THROWS_AS(synth_corpus(cfg), Error);
}

TEST_CASE("generated charts pass the resolution filter at the floor") {
    SynthConfig cfg;
    cfg.n_songs = 5;
    cfg.duration_s = 20.0;
    cfg.notes_per_min = 200.0;
    cfg.delta_floor_ms = 40.0;
    cfg.seed = 3;
    std::vector<Chart> charts;
    for (const auto& s : synth_corpus(cfg)) charts.push_back(s.chart);
    CHECK(filter_by_resolution(charts, 40.0).excluded.empty());
    CHECK(filter_by_resolution(charts, 20.0).excluded.empty());
}

TEST_CASE("tone bursts are separable from silence under the codec, per fret class") {
    const std::vector<double> tones = synth_tone_frequencies_hz();
    REQUIRE(tones.size() == 6);
    for (size_t i = 1; i < tones.size(); ++i) CHECK(tones[i] > tones[i - 1]);

    const int sr = 16000;
    for (int bit = 0; bit < 6; ++bit) {
        Waveform w;
        w.sample_rate_hz = sr;
        w.samples.assign(sr, 0.0f);
        const size_t start = sr / 2;  // exactly frame 25 at 50 Hz
        const size_t burst = size_t(0.06 * sr);
        for (size_t i = 0; i < burst; ++i) {
            const double env = 0.5 - 0.5 * std::cos(2.0 * M_PI * double(i) / double(burst - 1));
            w.samples[start + i] =
                float(0.5 * env * std::sin(2.0 * M_PI * tones[size_t(bit)] * double(i) / sr));
        }
        const AudioCodes codes = pseudo_codec_encode(w);
        bool differs = false;
        for (int q = 0; q < codes.n_q; ++q) differs |= (codes.at(25, q) != codes.at(5, q));
        CHECK(differs);
    }
}

TEST_CASE("onset frames carry distinct codes in a full synthetic song") {
    SynthConfig cfg;
    cfg.n_songs = 1;
    cfg.duration_s = 20.0;
    cfg.notes_per_min = 60.0;
    cfg.delta_floor_ms = 40.0;
    cfg.seed = 11;
    const auto songs = synth_corpus(cfg);
    const AudioCodes codes = pseudo_codec_encode(songs[0].wave);

    // a silence frame: one with no onset within 100 ms
    std::vector<double> onsets;
    for (const auto& n : songs[0].chart.notes) onsets.push_back(n.time_s);
    int64_t silence_frame = -1;
    for (int64_t f = 0; f < codes.n_frames(); ++f) {
        const double t = double(f) / 50.0;
        bool near = false;
        for (double o : onsets) near |= (t > o - 0.1 && t < o + 0.1);
        if (!near) {
            silence_frame = f;
            break;
        }
    }
    REQUIRE(silence_frame >= 0);

    int distinct = 0;
    for (double o : onsets) {
        const int64_t f = llround(o * 50.0);
        if (f >= codes.n_frames()) continue;
        bool differs = false;
        for (int q = 0; q < codes.n_q; ++q) differs |= (codes.at(f, q) != codes.at(silence_frame, q));
        distinct += differs;
    }
    CHECK(distinct == int(onsets.size()) - (onsets.size() > 0 && llround(onsets.back() * 50.0) >= codes.n_frames() ? 1 : 0));
}
