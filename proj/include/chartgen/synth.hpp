#pragma once

#include "chartgen/audio.hpp"
#include "chartgen/chart.hpp"

namespace chartgen {

// Paired synthetic (waveform, chart) corpus where the audio provably
// determines note placement: each onset emits a short tone burst whose
// frequencies encode the fret mask, over a quiet noise floor.
struct SynthConfig {
    int n_songs = 10;
    double duration_s = 60.0;
    double notes_per_min = 294.8;
    double delta_floor_ms = 40.0;  // onsets land on this grid, so IOI >= floor
    int sample_rate_hz = 16000;
    double note_amp = 0.5;
    double noise_amp = 1e-3;
    double burst_s = 0.06;
    double chord_prob = 0.2;  // two-button chords; rest are single buttons
    uint64_t seed = 0;
};

struct SynthSong {
    Chart chart;
    Waveform wave;
};

// One tone per fret bit (bits 0..4 plus open), log-spaced over [220, 1760] Hz
// and snapped to the nearest stand-in codec band center.
std::vector<double> synth_tone_frequencies_hz(const CodecConfig& codec = {});

std::vector<SynthSong> synth_corpus(const SynthConfig& cfg);

// Writes <stem>.chart and <stem>.wav per song; returns the stems.
std::vector<std::string> synth_corpus_to_dir(const SynthConfig& cfg, const std::string& dir);

}  // namespace chartgen
