#pragma once

#include <optional>
#include <string>
#include <vector>

#include "chartgen/audio.hpp"
#include "chartgen/chart.hpp"
#include "chartgen/synth.hpp"

namespace chartgen {

struct CorpusEntry {
    Chart chart;
    std::optional<AudioCodes> codes;
    std::string id;
};

using Corpus = std::vector<CorpusEntry>;

// Loads every *.chart / *.txt under dir (sorted by name). Audio codes come
// from a sibling <stem>.a2cc if present, else from <stem>.wav through the
// stand-in codec when `codec` is given.
Corpus load_corpus_dir(const std::string& dir, const CodecConfig* codec = nullptr,
                       std::vector<std::string>* warnings = nullptr);

// In-memory corpus from synthetic songs, codes computed with `codec`.
Corpus corpus_from_synth(const std::vector<SynthSong>& songs, const CodecConfig& codec);

std::vector<Chart> corpus_charts(const Corpus& corpus);

}  // namespace chartgen
