#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "chartgen/corpus.hpp"
#include "chartgen/model.hpp"
#include "chartgen/time_grid.hpp"

namespace chartgen {

enum class Regime : uint8_t { Baseline, Uncond, Conditioned };

const char* regime_name(Regime r);
std::optional<Regime> regime_from_name(std::string_view name);

// 0.1 at the 20 ms grid, 0.2 at 40 ms and coarser.
double default_pad_weight(double delta_ms);

struct TrainConfig {
    Regime regime = Regime::Uncond;
    double delta_ms = 40.0;
    double segment_s = 30.0;
    int context_tokens = 256;  // baseline regime only
    double lr_peak = 1e-3;
    double lr_final = 1e-4;
    double decay_epochs = 10.0;
    double weight_decay = 0.01;
    double pad_weight = 0.2;
    double dropout = 0.2;
    int batch_size = 8;
    int epochs = 10;
    double grad_clip = 1.0;
    int val_percent = 10;  // per-song validation share
    int workers = 1;
    int ablate_every = 0;  // probe the permuted-audio loss gap every N steps
    // early stop once non-pad training accuracy reaches this (0 disables);
    // checked every stop_check_epochs epochs
    double stop_nonpad_acc = 0.0;
    int stop_check_epochs = 1;
    uint64_t seed = 0;
    uint64_t split_seed = 0;
    TokenPolicy policy;
    ModelConfig model;  // dimensions; conditioned/dropout/seed are overridden

    std::vector<std::pair<std::string, std::string>> to_kv() const;
    void apply_kv(const std::vector<std::pair<std::string, std::string>>& kv);

    ModelConfig resolved_model_config() const;
};

// One training sequence: shifted input/target pair plus its code window.
struct SeqExample {
    std::vector<TokenId> input;   // BOS-prefixed
    std::vector<TokenId> target;  // EOS-suffixed on the final window
    std::optional<AudioCodes> codes;
    int chart_idx = 0;
    bool final_window = false;
};

struct SplitDataset {
    std::vector<SeqExample> train, val;
    std::vector<std::string> train_ids, val_ids;
    double exclusion_fraction = 0.0;  // charts dropped by filter_by_resolution
};

// Builds the per-song split and all sequences for the regime. Baseline
// sequences are note-token chunks with no PAD; discrete regimes grid-encode
// non-overlapping segment_s windows.
SplitDataset make_dataset(const Corpus& corpus, const TrainConfig& cfg);

// Linear decay from lr_peak at epoch 0 to lr_final at decay_epochs, constant
// afterwards.
double lr_at(double epoch, const TrainConfig& cfg);

struct BatchStats {
    double loss = 0.0;  // pooled weighted cross-entropy
    double weight_sum = 0.0;
};

// Pooled weighted loss + gradients over a batch of sequences; items are
// distributed over `workers` threads with a fixed reduction order.
BatchStats batch_forward_backward(const Transformer& model, const std::vector<const SeqExample*>& batch,
                                  double pad_weight, bool train_mode, uint64_t dropout_seed,
                                  int workers, Gradients* grads);

// Relative loss difference (L_perm - L_std) / L_std of one batch when audio
// codes are deranged within the batch. Evaluation mode on both passes.
double permuted_audio_rel_diff(const Transformer& model, const std::vector<const SeqExample*>& batch,
                               double pad_weight, uint64_t perm_seed, int workers);

struct TrainResult {
    ModelConfig model_cfg;
    ParamSet best_params;
    ParamSet final_params;
    double best_val_loss = 0.0;
    int best_epoch = -1;
    std::vector<std::string> log_lines;                 // "step\tloss\tlr[\trel_diff]"
    std::vector<std::pair<int, double>> ablation;       // (step, rel_diff)
    size_t n_train_seqs = 0, n_val_seqs = 0;
};

using StepCallback = std::function<void(int step, double loss, double lr)>;

TrainResult train(const Corpus& corpus, const TrainConfig& cfg, const StepCallback& on_step = {});

// Per-batch permuted-audio loss gap over a dataset with a frozen model.
std::vector<double> ablate_audio(const Transformer& model, const std::vector<SeqExample>& seqs,
                                 const TrainConfig& cfg);

struct SweepRow {
    int context = 0;
    double val_perplexity = 0.0;
    double val_accuracy = 0.0;
};

// Trains one baseline model per context length, otherwise identical setup.
std::vector<SweepRow> context_sweep(const Corpus& corpus, const std::vector<int>& contexts,
                                    const TrainConfig& base_cfg);

}  // namespace chartgen
