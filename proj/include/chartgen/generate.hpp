#pragma once

#include <string>
#include <vector>

#include "chartgen/model.hpp"
#include "chartgen/time_grid.hpp"

namespace chartgen {

struct SamplePolicy {
    enum class Kind : uint8_t { Greedy, Temperature, TopK } kind = Kind::TopK;
    double temperature = 1.0;
    int top_k = 16;

    // "greedy" | "temp:<t>" | "topk:<k>" | "topk:<k>@<t>"
    static SamplePolicy parse(const std::string& text);
    void validate() const;
};

// Non-overlapping segment_s windows of audio codes; the last partial window
// is kept, empty codes yield zero slices.
std::vector<AudioCodes> chunk_codes(const AudioCodes& codes, double segment_s, double delta_ms);

// Autoregressive chart generation: windows are decoded independently, each
// BOS-seeded and stopped early at EOS, then grid-decoded and assembled into
// one chart. Deterministic given the seed.
Chart sample_chart(const Transformer& model, const AudioCodes& codes, double delta_ms,
                   const SamplePolicy& policy, uint64_t seed, double segment_s = 30.0);

// The raw token grid of sample_chart, one GridSequence per window; useful for
// accuracy comparisons against a reference grid.
std::vector<GridSequence> sample_token_grid(const Transformer& model, const AudioCodes& codes,
                                            double delta_ms, const SamplePolicy& policy,
                                            uint64_t seed, double segment_s = 30.0);

}  // namespace chartgen
