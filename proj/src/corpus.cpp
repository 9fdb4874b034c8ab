#include "chartgen/corpus.hpp"

#include <algorithm>
#include <filesystem>

namespace chartgen {

namespace fs = std::filesystem;

Corpus load_corpus_dir(const std::string& dir, const CodecConfig* codec,
                       std::vector<std::string>* warnings) {
    if (!fs::is_directory(dir)) throw Error(Err::IoError, dir + " is not a directory");

    std::vector<fs::path> chart_paths;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const auto ext = entry.path().extension().string();
        if (ext == ".chart" || ext == ".txt") chart_paths.push_back(entry.path());
    }
    std::sort(chart_paths.begin(), chart_paths.end());
    if (chart_paths.empty()) throw Error(Err::EmptyCorpus, "no chart files in " + dir);

    Corpus corpus;
    for (const auto& path : chart_paths) {
        ParseOptions opts;
        opts.warnings = warnings;
        CorpusEntry entry;
        entry.chart = load_chart_file(path.string(), opts);
        entry.id = path.stem().string();

        fs::path codes_path = path;
        codes_path.replace_extension(".a2cc");
        fs::path wav_path = path;
        wav_path.replace_extension(".wav");
        if (fs::exists(codes_path)) {
            entry.codes = read_codes_file(codes_path.string());
        } else if (codec != nullptr && fs::exists(wav_path)) {
            entry.codes = pseudo_codec_encode(read_wave(wav_path.string()), *codec);
        }
        corpus.push_back(std::move(entry));
    }
    return corpus;
}

Corpus corpus_from_synth(const std::vector<SynthSong>& songs, const CodecConfig& codec) {
    Corpus corpus;
    corpus.reserve(songs.size());
    for (const auto& song : songs) {
        CorpusEntry entry;
        entry.chart = song.chart;
        entry.codes = pseudo_codec_encode(song.wave, codec);
        entry.id = song.chart.song_id();
        corpus.push_back(std::move(entry));
    }
    return corpus;
}

std::vector<Chart> corpus_charts(const Corpus& corpus) {
    std::vector<Chart> charts;
    charts.reserve(corpus.size());
    for (const auto& e : corpus) charts.push_back(e.chart);
    return charts;
}

}  // namespace chartgen
