#pragma once

#include <optional>
#include <string>
#include <vector>

#include "chartgen/model.hpp"
#include "chartgen/training.hpp"

namespace chartgen {

struct MetricValue {
    double mean = 0.0;  // pooled over all positions
    double se = 0.0;    // standard error across evaluation charts
};

struct EvalReport {
    MetricValue perplexity_full, accuracy_full;
    // absent when the eval set has no non-pad targets
    std::optional<MetricValue> perplexity_nonpad, accuracy_nonpad;
    int64_t n_positions_full = 0;
    int64_t n_positions_nonpad = 0;
    int64_t n_charts = 0;
};

// Per-position argmax, ties broken by the lowest token id.
std::vector<TokenId> argmax_predictions(const Mat& logits);

// Full-sequence and non-pad perplexity/accuracy in evaluation mode.
// Position sets: full = every target position (BOS is never a target and the
// batcher only emits genuine EOS targets); non-pad = targets != PAD.
EvalReport evaluate(const Transformer& model, const std::vector<SeqExample>& seqs, int workers = 1);

std::string eval_report_to_text(const EvalReport& report);
std::string eval_report_to_json(const EvalReport& report);

}  // namespace chartgen
