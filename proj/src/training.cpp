#include "chartgen/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "chartgen/metrics.hpp"

namespace chartgen {

const char* regime_name(Regime r) {
    switch (r) {
        case Regime::Baseline: return "baseline";
        case Regime::Uncond: return "uncond";
        case Regime::Conditioned: return "conditioned";
    }
    return "uncond";
}

std::optional<Regime> regime_from_name(std::string_view name) {
    if (name == "baseline") return Regime::Baseline;
    if (name == "uncond" || name == "unconditional") return Regime::Uncond;
    if (name == "conditioned" || name == "cond") return Regime::Conditioned;
    return std::nullopt;
}

double default_pad_weight(double delta_ms) { return delta_ms < 30.0 ? 0.1 : 0.2; }

std::vector<std::pair<std::string, std::string>> TrainConfig::to_kv() const {
    auto fmt = [](double v) {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        return std::string(buf);
    };
    return {
        {"regime", regime_name(regime)},
        {"delta_ms", fmt(delta_ms)},
        {"segment_s", fmt(segment_s)},
        {"context_tokens", std::to_string(context_tokens)},
        {"lr_peak", fmt(lr_peak)},
        {"lr_final", fmt(lr_final)},
        {"decay_epochs", fmt(decay_epochs)},
        {"weight_decay", fmt(weight_decay)},
        {"pad_weight", fmt(pad_weight)},
        {"dropout", fmt(dropout)},
        {"batch_size", std::to_string(batch_size)},
        {"epochs", std::to_string(epochs)},
        {"grad_clip", fmt(grad_clip)},
        {"val_percent", std::to_string(val_percent)},
        {"workers", std::to_string(workers)},
        {"ablate_every", std::to_string(ablate_every)},
        {"seed", std::to_string(seed)},
        {"split_seed", std::to_string(split_seed)},
        {"d_model", std::to_string(model.d_model)},
        {"n_layers", std::to_string(model.n_layers)},
        {"n_heads", std::to_string(model.n_heads)},
        {"d_ff", std::to_string(model.d_ff)},
    };
}

void TrainConfig::apply_kv(const std::vector<std::pair<std::string, std::string>>& kv) {
    for (const auto& [k, v] : kv) {
        try {
            if (k == "regime") {
                auto r = regime_from_name(v);
                if (!r) throw Error(Err::PolicyInvalid, "unknown regime " + v);
                regime = *r;
            } else if (k == "delta_ms") delta_ms = std::stod(v);
            else if (k == "segment_s") segment_s = std::stod(v);
            else if (k == "context_tokens") context_tokens = std::stoi(v);
            else if (k == "lr_peak") lr_peak = std::stod(v);
            else if (k == "lr_final") lr_final = std::stod(v);
            else if (k == "decay_epochs") decay_epochs = std::stod(v);
            else if (k == "weight_decay") weight_decay = std::stod(v);
            else if (k == "pad_weight") pad_weight = std::stod(v);
            else if (k == "dropout") dropout = std::stod(v);
            else if (k == "batch_size") batch_size = std::stoi(v);
            else if (k == "epochs") epochs = std::stoi(v);
            else if (k == "grad_clip") grad_clip = std::stod(v);
            else if (k == "val_percent") val_percent = std::stoi(v);
            else if (k == "workers") workers = std::stoi(v);
            else if (k == "ablate_every") ablate_every = std::stoi(v);
            else if (k == "seed") seed = std::stoull(v);
            else if (k == "split_seed") split_seed = std::stoull(v);
            else if (k == "d_model") model.d_model = std::stoi(v);
            else if (k == "n_layers") model.n_layers = std::stoi(v);
            else if (k == "n_heads") model.n_heads = std::stoi(v);
            else if (k == "d_ff") model.d_ff = std::stoi(v);
            // unknown keys ignored
        } catch (const Error&) {
            throw;
        } catch (const std::exception&) {
            throw Error(Err::PolicyInvalid, "bad config value for " + k + ": " + v);
        }
    }
}

ModelConfig TrainConfig::resolved_model_config() const {
    ModelConfig mc = model;
    mc.vocab_size = vocab::kSize;
    mc.conditioned = (regime == Regime::Conditioned);
    mc.dropout_p = dropout;
    mc.seed = seed;
    if (regime == Regime::Baseline) {
        mc.max_seq_len = context_tokens + 2;
    } else {
        mc.max_seq_len = int(grid_bin_count(segment_s * 1000.0, delta_ms)) + 2;
    }
    return mc;
}

double lr_at(double epoch, const TrainConfig& cfg) {
    if (cfg.decay_epochs <= 0.0) return cfg.lr_final;
    const double f = std::clamp(epoch / cfg.decay_epochs, 0.0, 1.0);
    return cfg.lr_peak + (cfg.lr_final - cfg.lr_peak) * f;
}

// ----------------------------- dataset -----------------------------

namespace {

void build_shifted_pair(const std::vector<TokenId>& tokens, bool final_window, SeqExample& ex) {
    // full = BOS + tokens (+ EOS when the segment genuinely ends); input and
    // target are the usual one-step shift of it
    ex.input.clear();
    ex.target.clear();
    ex.input.push_back(vocab::kBos);
    if (final_window) {
        ex.input.insert(ex.input.end(), tokens.begin(), tokens.end());
        ex.target = tokens;
        ex.target.push_back(vocab::kEos);
    } else {
        ex.input.insert(ex.input.end(), tokens.begin(), tokens.end() - 1);
        ex.target = tokens;
    }
    ex.final_window = final_window;
}

}  // namespace

SplitDataset make_dataset(const Corpus& corpus, const TrainConfig& cfg) {
    if (corpus.empty()) throw Error(Err::EmptyCorpus, "empty corpus");

    SplitDataset ds;
    const bool discrete = cfg.regime != Regime::Baseline;
    const bool conditioned = cfg.regime == Regime::Conditioned;

    // per-song split, then per-song sequences
    int chart_counter = 0;
    size_t n_excluded = 0;
    for (const CorpusEntry& entry : corpus) {
        if (discrete && ioi_below_resolution(entry.chart, cfg.delta_ms)) {
            n_excluded++;
            continue;
        }
        const uint64_t h = fnv1a64(entry.id + "#" + std::to_string(cfg.split_seed)) % 100;
        const bool is_val = int(h) < cfg.val_percent;
        auto& seqs = is_val ? ds.val : ds.train;
        auto& ids = is_val ? ds.val_ids : ds.train_ids;
        ids.push_back(entry.id);
        const int chart_idx = chart_counter++;

        if (cfg.regime == Regime::Baseline) {
            std::vector<TokenId> tokens;
            for (const TimedToken& t : tokenize_chart(entry.chart, cfg.policy)) {
                tokens.push_back(t.token);
            }
            if (tokens.empty()) continue;
            const size_t c = size_t(cfg.context_tokens);
            for (size_t i = 0; i < tokens.size(); i += c) {
                const size_t end = std::min(i + c, tokens.size());
                std::vector<TokenId> chunk(tokens.begin() + ptrdiff_t(i), tokens.begin() + ptrdiff_t(end));
                SeqExample ex;
                ex.chart_idx = chart_idx;
                build_shifted_pair(chunk, end == tokens.size(), ex);
                if (ex.input.empty() || ex.target.empty()) continue;
                seqs.push_back(std::move(ex));
            }
        } else {
            if (conditioned && !entry.codes) {
                throw Error(Err::MissingCodes, "chart '" + entry.id + "' has no audio codes");
            }
            const int64_t bins_per_window = grid_bin_count(cfg.segment_s * 1000.0, cfg.delta_ms);
            int64_t n_windows = 1;
            if (!entry.chart.notes.empty()) {
                const int64_t last_bin =
                    grid_bin_index(entry.chart.last_onset_s(), 0.0, cfg.delta_ms);
                n_windows = last_bin / bins_per_window + 1;
            }
            for (int64_t w = 0; w < n_windows; ++w) {
                TimeWindow window{double(w) * cfg.segment_s, double(w + 1) * cfg.segment_s};
                GridSequence grid = grid_encode(entry.chart, cfg.delta_ms, window, cfg.policy);
                SeqExample ex;
                ex.chart_idx = chart_idx;
                build_shifted_pair(grid.tokens, w + 1 == n_windows, ex);
                if (conditioned) {
                    const AudioCodes& codes = *entry.codes;
                    const int64_t f0 = llround(double(w) * cfg.segment_s * codes.frame_rate_hz);
                    const int64_t f1 = llround(double(w + 1) * cfg.segment_s * codes.frame_rate_hz);
                    AudioCodes slice = codes.slice(f0, f1);
                    if (slice.n_frames() == 0) continue;  // audio shorter than the chart
                    ex.codes = std::move(slice);
                }
                seqs.push_back(std::move(ex));
            }
        }
    }
    ds.exclusion_fraction = double(n_excluded) / double(corpus.size());
    if (ds.train.empty() && ds.val.empty()) {
        throw Error(Err::EmptyAfterFilter, "no sequences left after resolution filtering");
    }
    return ds;
}

// ----------------------------- batch passes -----------------------------

namespace {

double batch_weight_sum(const std::vector<const SeqExample*>& batch, double pad_weight) {
    double w = 0.0;
    for (const SeqExample* ex : batch) {
        for (TokenId t : ex->target) w += (t == vocab::kPad) ? pad_weight : 1.0;
    }
    return w;
}

void run_workers(int n_workers, size_t n_items, const std::function<void(size_t, int)>& fn) {
    if (n_workers <= 1) {
        for (size_t i = 0; i < n_items; ++i) fn(i, 0);
        return;
    }
    std::vector<std::thread> threads;
    threads.reserve(size_t(n_workers));
    for (int w = 0; w < n_workers; ++w) {
        threads.emplace_back([&, w]() {
            for (size_t i = size_t(w); i < n_items; i += size_t(n_workers)) fn(i, w);
        });
    }
    for (auto& t : threads) t.join();
}

// Pooled eval-mode loss; codes_override (when given) substitutes each item's
// codes pointer.
double eval_pooled_loss(const Transformer& model, const std::vector<const SeqExample*>& batch,
                        double pad_weight, const std::vector<const AudioCodes*>* codes_override,
                        int workers) {
    const double w_total = batch_weight_sum(batch, pad_weight);
    const int nw = std::max(1, std::min<int>(workers, int(batch.size())));
    std::vector<double> partial(size_t(nw), 0.0);
    run_workers(nw, batch.size(), [&](size_t i, int w) {
        const SeqExample& ex = *batch[i];
        const AudioCodes* codes =
            codes_override ? (*codes_override)[i] : (ex.codes ? &*ex.codes : nullptr);
        auto trace = model.forward(ex.input, codes, false, 0);
        partial[size_t(w)] += token_loss(trace.logits, ex.target, pad_weight).weighted_sum;
    });
    double sum = 0.0;
    for (double p : partial) sum += p;
    return w_total > 0.0 ? sum / w_total : 0.0;
}

}  // namespace

BatchStats batch_forward_backward(const Transformer& model, const std::vector<const SeqExample*>& batch,
                                  double pad_weight, bool train_mode, uint64_t dropout_seed,
                                  int workers, Gradients* grads) {
    BatchStats stats;
    stats.weight_sum = batch_weight_sum(batch, pad_weight);
    const int nw = std::max(1, std::min<int>(workers, int(batch.size())));

    std::vector<Gradients> worker_grads;
    if (grads != nullptr) {
        worker_grads.assign(size_t(nw), grads->zeros_like());
    }
    std::vector<double> partial(size_t(nw), 0.0);

    run_workers(nw, batch.size(), [&](size_t i, int w) {
        const SeqExample& ex = *batch[i];
        const AudioCodes* codes = ex.codes ? &*ex.codes : nullptr;
        auto trace =
            model.forward(ex.input, codes, train_mode, derive_seed(dropout_seed, uint64_t(i)));
        partial[size_t(w)] += token_loss(trace.logits, ex.target, pad_weight).weighted_sum;
        if (grads != nullptr) {
            Mat dlogits(int(ex.target.size()), model.config().vocab_size);
            token_loss_grad(trace.logits, ex.target, pad_weight, stats.weight_sum, dlogits);
            model.backward(trace, dlogits, worker_grads[size_t(w)]);
        }
    });

    double sum = 0.0;
    for (double p : partial) sum += p;
    stats.loss = stats.weight_sum > 0.0 ? sum / stats.weight_sum : 0.0;
    if (grads != nullptr) {
        for (const Gradients& g : worker_grads) accumulate(*grads, g);
    }
    return stats;
}

double permuted_audio_rel_diff(const Transformer& model, const std::vector<const SeqExample*>& batch,
                               double pad_weight, uint64_t perm_seed, int workers) {
    if (!model.config().conditioned) {
        throw Error(Err::MissingCodes, "permuted-audio probe needs a conditioned model");
    }
    const size_t n = batch.size();
    if (n < 2) throw Error(Err::BatchTooSmall, "permuted-audio probe needs batch_size >= 2");
    for (const SeqExample* ex : batch) {
        if (!ex->codes) throw Error(Err::MissingCodes, "batch item has no audio codes");
    }

    const double l_std = eval_pooled_loss(model, batch, pad_weight, nullptr, workers);

    // rotation by a random non-zero offset is always a derangement
    Rng rng(derive_seed(perm_seed, 0x61626c617465ull));
    const size_t r = 1 + size_t(rng.below(uint64_t(n - 1)));
    std::vector<const AudioCodes*> permuted(n);
    for (size_t i = 0; i < n; ++i) permuted[i] = &*batch[(i + r) % n]->codes;

    const double l_perm = eval_pooled_loss(model, batch, pad_weight, &permuted, workers);
    return l_std > 0.0 ? (l_perm - l_std) / l_std : 0.0;
}

// ----------------------------- training loop -----------------------------

TrainResult train(const Corpus& corpus, const TrainConfig& cfg, const StepCallback& on_step) {
    SplitDataset ds = make_dataset(corpus, cfg);
    if (ds.train.empty()) throw Error(Err::EmptyAfterFilter, "empty training split");

    ModelConfig mc = cfg.resolved_model_config();
    if (mc.conditioned) {
        // conditioning geometry comes from the data
        const AudioCodes& first = *ds.train.front().codes;
        mc.n_q = first.n_q;
        mc.codebook_size = first.codebook_size;
        mc.adapter_stride =
            std::max<int>(1, int(llround(first.frame_rate_hz * cfg.delta_ms / 1000.0)));
        int64_t max_frames = 0;
        for (const auto& split : {std::cref(ds.train), std::cref(ds.val)}) {
            for (const SeqExample& ex : split.get()) {
                if (ex.codes) max_frames = std::max(max_frames, ex.codes->n_frames());
            }
        }
        mc.max_cond_len = int((max_frames + mc.adapter_stride - 1) / mc.adapter_stride) + 1;
    }
    mc.validate();

    Transformer model = Transformer::make(mc, InitOptions{true});
    AdamState adam = AdamState::zeros_like(model.params());
    AdamHyper hyper;
    hyper.weight_decay = cfg.weight_decay;

    TrainResult result;
    result.model_cfg = mc;
    result.n_train_seqs = ds.train.size();
    result.n_val_seqs = ds.val.size();

    // fixed probe batch for the permuted-audio curve
    std::vector<const SeqExample*> probe;
    if (mc.conditioned && cfg.ablate_every > 0) {
        for (size_t i = 0; i < ds.train.size() && i < size_t(cfg.batch_size); ++i) {
            probe.push_back(&ds.train[i]);
        }
        if (probe.size() < 2) probe.clear();
    }

    const size_t n_train = ds.train.size();
    const size_t bs = size_t(std::max(1, cfg.batch_size));
    const size_t steps_per_epoch = (n_train + bs - 1) / bs;

    std::vector<size_t> order(n_train);
    std::iota(order.begin(), order.end(), 0);

    double best_val = std::numeric_limits<double>::infinity();
    result.best_params = model.params();
    result.final_params = model.params();

    int step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(cfg.seed, 0x65706f6368ull + uint64_t(epoch)));
        shuffle_rng.shuffle(order);

        for (size_t b = 0; b < steps_per_epoch; ++b) {
            std::optional<double> rel_diff;
            if (!probe.empty() && step % cfg.ablate_every == 0) {
                rel_diff = permuted_audio_rel_diff(model, probe, cfg.pad_weight,
                                                   derive_seed(cfg.seed, 0xabbaull + uint64_t(step)),
                                                   cfg.workers);
                result.ablation.emplace_back(step, *rel_diff);
            }

            std::vector<const SeqExample*> batch;
            for (size_t i = b * bs; i < std::min((b + 1) * bs, n_train); ++i) {
                batch.push_back(&ds.train[order[i]]);
            }
            const double lr = lr_at(double(epoch) + double(b) / double(steps_per_epoch), cfg);

            Gradients grads = model.params().zeros_like();
            const BatchStats stats = batch_forward_backward(
                model, batch, cfg.pad_weight, true,
                derive_seed(cfg.seed, 0x73746570ull + uint64_t(step)), cfg.workers, &grads);
            if (!std::isfinite(stats.loss)) {
                throw Error(Err::DivergedLoss, "non-finite loss at step " + std::to_string(step));
            }
            clip_gradients(grads, cfg.grad_clip);
            adamw_step(model.params(), grads, adam, lr, hyper);

            std::ostringstream line;
            line << step << "\t" << stats.loss << "\t" << lr;
            if (rel_diff) line << "\t" << *rel_diff;
            result.log_lines.push_back(line.str());
            if (on_step) on_step(step, stats.loss, lr);
            ++step;
        }

        // best-checkpoint selection on the validation split (training split
        // when there is no validation data)
        const std::vector<SeqExample>& val_set = ds.val.empty() ? ds.train : ds.val;
        std::vector<const SeqExample*> val_ptrs;
        val_ptrs.reserve(val_set.size());
        for (const auto& ex : val_set) val_ptrs.push_back(&ex);
        const double val_loss =
            eval_pooled_loss(model, val_ptrs, cfg.pad_weight, nullptr, cfg.workers);
        if (val_loss < best_val) {
            best_val = val_loss;
            result.best_params = model.params();
            result.best_epoch = epoch;
        }

        if (cfg.stop_nonpad_acc > 0.0 &&
            (epoch % std::max(1, cfg.stop_check_epochs) == 0 || epoch + 1 == cfg.epochs)) {
            const EvalReport report = evaluate(model, ds.train, cfg.workers);
            if (report.accuracy_nonpad && report.accuracy_nonpad->mean >= cfg.stop_nonpad_acc) {
                result.best_params = model.params();
                result.best_epoch = epoch;
                best_val = val_loss;
                break;
            }
        }
    }

    result.final_params = model.params();
    result.best_val_loss = best_val;
    return result;
}

std::vector<double> ablate_audio(const Transformer& model, const std::vector<SeqExample>& seqs,
                                 const TrainConfig& cfg) {
    if (!model.config().conditioned) {
        throw Error(Err::MissingCodes, "ablate_audio needs a conditioned model");
    }
    if (cfg.batch_size < 2) throw Error(Err::BatchTooSmall, "ablate_audio needs batch_size >= 2");

    std::vector<double> series;
    const size_t bs = size_t(cfg.batch_size);
    for (size_t start = 0; start + 2 <= seqs.size(); start += bs) {
        std::vector<const SeqExample*> batch;
        for (size_t i = start; i < std::min(start + bs, seqs.size()); ++i) batch.push_back(&seqs[i]);
        if (batch.size() < 2) break;
        series.push_back(permuted_audio_rel_diff(model, batch, cfg.pad_weight,
                                                 derive_seed(cfg.seed, 0xfeedull + start),
                                                 cfg.workers));
    }
    if (series.empty()) throw Error(Err::BatchTooSmall, "no batch with at least 2 sequences");
    return series;
}

std::vector<SweepRow> context_sweep(const Corpus& corpus, const std::vector<int>& contexts,
                                    const TrainConfig& base_cfg) {
    std::vector<SweepRow> rows;
    for (int ctx : contexts) {
        TrainConfig cfg = base_cfg;
        cfg.regime = Regime::Baseline;
        cfg.context_tokens = ctx;
        TrainResult tr = train(corpus, cfg);

        Transformer best(tr.model_cfg, tr.best_params);
        SplitDataset ds = make_dataset(corpus, cfg);
        const std::vector<SeqExample>& val_set = ds.val.empty() ? ds.train : ds.val;
        const EvalReport report = evaluate(best, val_set, cfg.workers);

        SweepRow row;
        row.context = ctx;
        row.val_perplexity = report.perplexity_full.mean;
        row.val_accuracy = report.accuracy_full.mean;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace chartgen
