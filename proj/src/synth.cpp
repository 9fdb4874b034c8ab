#include "chartgen/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

namespace chartgen {

std::vector<double> synth_tone_frequencies_hz(const CodecConfig& codec) {
    const std::vector<double> centers = codec_band_centers_hz(codec);
    std::vector<double> tones;
    for (int b = 0; b < 6; ++b) {
        const double target = 220.0 * std::pow(1760.0 / 220.0, double(b) / 5.0);
        double best = centers.front();
        for (double c : centers) {
            if (std::abs(std::log(c / target)) < std::abs(std::log(best / target))) best = c;
        }
        tones.push_back(best);
    }
    return tones;
}

namespace {

FretSet random_fret_set(Rng& rng, double chord_prob) {
    FretSet frets;
    if (rng.uniform01() < chord_prob) {
        const int a = int(rng.below(6));
        int b = int(rng.below(5));
        if (b >= a) b += 1;
        frets.add(a);
        frets.add(b);
    } else {
        frets.add(int(rng.below(6)));
    }
    return frets;
}

}  // namespace

std::vector<SynthSong> synth_corpus(const SynthConfig& cfg) {
    const double floor_s = cfg.delta_floor_ms / 1000.0;
    const int64_t n_bins = int64_t(std::floor(cfg.duration_s / floor_s + 1e-9));
    const int64_t n_notes = llround(cfg.notes_per_min * cfg.duration_s / 60.0);
    if (n_notes < 1 || n_notes > n_bins) {
        throw Error(Err::InfeasibleDensity,
                    std::to_string(cfg.notes_per_min) + " notes/min does not fit a " +
                        std::to_string(cfg.delta_floor_ms) + " ms floor");
    }

    const std::vector<double> tones = synth_tone_frequencies_hz();
    std::vector<SynthSong> songs;
    songs.reserve(size_t(cfg.n_songs));

    for (int s = 0; s < cfg.n_songs; ++s) {
        Rng rng(derive_seed(cfg.seed, 0x73796e7468ull + uint64_t(s)));

        // Distinct onset bins; the last bin is always used so the chart spans
        // the full duration.
        std::vector<int64_t> bins(size_t(n_bins - 1));
        std::iota(bins.begin(), bins.end(), 0);
        rng.shuffle(bins);
        bins.resize(size_t(n_notes - 1));
        bins.push_back(n_bins - 1);
        std::sort(bins.begin(), bins.end());

        SynthSong song;
        song.wave.sample_rate_hz = cfg.sample_rate_hz;
        song.wave.samples.assign(size_t(llround(cfg.duration_s * cfg.sample_rate_hz)), 0.0f);
        for (float& x : song.wave.samples) {
            x = float(cfg.noise_amp * (2.0 * rng.uniform01() - 1.0));
        }

        // 125 BPM at 480 ticks/beat puts one tick at exactly 1 ms, so onsets
        // on the millisecond grid survive chart-file round trips unmoved
        song.chart.resolution = 480;
        song.chart.tempo_map = {{0, 125000}};
        song.chart.metadata.difficulty = Difficulty::Expert;
        song.chart.metadata.set("Name", "synth-" + std::to_string(s), true);
        song.chart.metadata.set("Artist", "synth", true);
        song.chart.metadata.set("Genre", "synthetic", true);

        const size_t burst_len = size_t(llround(cfg.burst_s * cfg.sample_rate_hz));
        for (int64_t bin : bins) {
            const double onset_s = double(bin) * floor_s;
            NoteEvent note;
            note.time_s = onset_s;
            note.frets = random_fret_set(rng, cfg.chord_prob);
            song.chart.notes.push_back(note);

            const size_t start = size_t(llround(onset_s * cfg.sample_rate_hz));
            const double amp = cfg.note_amp / note.frets.count();
            for (int bit = 0; bit < 6; ++bit) {
                if (!note.frets.has(bit)) continue;
                const double w = 2.0 * M_PI * tones[size_t(bit)] / cfg.sample_rate_hz;
                for (size_t i = 0; i < burst_len && start + i < song.wave.samples.size(); ++i) {
                    const double env =
                        0.5 - 0.5 * std::cos(2.0 * M_PI * double(i) / double(burst_len - 1));
                    song.wave.samples[start + i] += float(amp * env * std::sin(w * double(i)));
                }
            }
        }
        // Hold the final note to the end of the audio so the chart duration
        // matches the requested one.
        song.chart.notes.back().sustain_s = cfg.duration_s - song.chart.notes.back().time_s;
        songs.push_back(std::move(song));
    }
    return songs;
}

std::vector<std::string> synth_corpus_to_dir(const SynthConfig& cfg, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::vector<std::string> stems;
    const auto songs = synth_corpus(cfg);
    for (size_t i = 0; i < songs.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "synth-%04zu", i);
        const std::string stem = (fs::path(dir) / name).string();
        save_chart_file(songs[i].chart, stem + ".chart");
        write_wave(songs[i].wave, stem + ".wav");
        stems.push_back(stem);
    }
    return stems;
}

}  // namespace chartgen
