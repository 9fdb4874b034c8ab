#pragma once

#include <string>
#include <utility>
#include <vector>

#include "chartgen/tokenizer.hpp"

namespace chartgen {

// Token sequence on a uniform time grid. Every bin holds PAD or a note
// token; BOS/EOS never live here (the training batcher adds them).
struct GridSequence {
    double resolution_ms = 40.0;  // grid step
    double start_s = 0.0;         // grid origin
    std::vector<TokenId> tokens;  // one per bin

    size_t pad_count() const;
    double pad_fraction() const {
        return tokens.empty() ? 0.0 : double(pad_count()) / double(tokens.size());
    }
};

struct TimeWindow {
    double t0_s = 0.0;
    double t1_s = 0.0;
};

// Number of grid bins covering a window; arithmetic is done in milliseconds
// so exact multiples stay exact.
int64_t grid_bin_count(double window_ms, double delta_ms);

// Nearest bin for an onset relative to the grid origin (ties round up).
int64_t grid_bin_index(double time_s, double start_s, double delta_ms);

// Chart window -> grid tokens. Two onsets mapping to the same bin is a
// BinCollision; callers are expected to have excluded such charts via
// filter_by_resolution.
GridSequence grid_encode(const Chart& chart, double delta_ms, TimeWindow window,
                         const TokenPolicy& policy = {});

// Grid tokens -> note events at bin left edges (sustains and flags are not
// represented on the grid and come back zeroed).
std::vector<NoteEvent> grid_decode(const GridSequence& seq);

struct IoiReport {
    double min_ioi_s = 0.0;
    // (delta_t, cumulative fraction), sorted by delta_t, final fraction 1
    std::vector<std::pair<double, double>> cdf;

    // fraction of intervals <= dt
    double fraction_at(double dt_s) const;
};

// Inter-onset intervals between consecutive distinct onsets, pooled over the
// corpus. Charts need at least two notes.
IoiReport ioi_cdf(const std::vector<Chart>& charts);

// Minimum IOI of one chart; +inf when it has fewer than two distinct onsets.
double min_ioi_s(const Chart& chart);

// True when the chart's minimum IOI falls below the grid step. A 1 ns slack
// keeps onsets that sit exactly on grid multiples from being excluded by
// floating-point rounding.
bool ioi_below_resolution(const Chart& chart, double delta_ms);

struct FilterResult {
    std::vector<Chart> kept;
    std::vector<Chart> excluded;
    double excluded_fraction = 0.0;
};

// Exclude charts whose minimum IOI is below the grid step.
FilterResult filter_by_resolution(const std::vector<Chart>& charts, double delta_ms);

// ----------------------------- A2CT binary format -----------------------------
// magic "A2CT", version u8, grid step in microseconds u32, token count u32,
// one u8 per token; little-endian.
void write_tokens_file(const GridSequence& seq, const std::string& path);
GridSequence read_tokens_file(const std::string& path);

std::vector<uint8_t> tokens_to_bytes(const GridSequence& seq);
GridSequence tokens_from_bytes(const std::vector<uint8_t>& bytes);

}  // namespace chartgen
