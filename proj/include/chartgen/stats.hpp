#pragma once

#include <map>
#include <string>
#include <vector>

#include "chartgen/chart.hpp"

namespace chartgen {

struct DifficultyStats {
    int64_t n_charts = 0;
    double share_pct = 0.0;
    double mean_notes_per_song = 0.0;
    double mean_notes_per_min = 0.0;
    double sustain_pct = 0.0;        // mean per-chart fraction of notes held
    double mean_duration_min = 0.0;  // outlier-capped
    int64_t n_outliers = 0;          // charts above the duration cap
};

struct CorpusReport {
    std::map<Difficulty, DifficultyStats> per_difficulty;
    // genre -> chart count, with any genre containing "rock"/"metal" grouped
    // under those names (case-insensitive substring match)
    std::vector<std::pair<std::string, int64_t>> genre_histogram;  // sorted by count desc
    int64_t n_charts = 0;
};

struct StatsOptions {
    // Charts longer than this are flagged and excluded from duration and
    // notes/min means (full-album files skew them otherwise).
    double duration_cap_min = 15.0;
};

// Song duration visible to a chart alone: last onset plus its sustain.
double chart_duration_s(const Chart& chart);

CorpusReport corpus_report(const std::vector<Chart>& charts, const StatsOptions& opts = {});

std::string report_to_text(const CorpusReport& report);
std::string report_to_json(const CorpusReport& report);

}  // namespace chartgen
