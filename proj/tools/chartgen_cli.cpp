// chartgen: command-line front end for the chart toolkit. Every subcommand is
// a thin wrapper over one library operation; all randomness flows from
// --seed and all outputs are files or stdout.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "chartgen/corpus.hpp"
#include "chartgen/generate.hpp"
#include "chartgen/metrics.hpp"
#include "chartgen/stats.hpp"
#include "chartgen/synth.hpp"
#include "chartgen/time_grid.hpp"
#include "chartgen/training.hpp"

namespace fs = std::filesystem;
using namespace chartgen;

namespace {

void write_text(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Err::IoError, "cannot open " + path + " for writing");
    out << text;
}

std::vector<Chart> gather_charts(const std::string& corpus_dir, const std::vector<std::string>& files,
                                 std::vector<std::string>* warnings) {
    std::vector<Chart> charts;
    if (!corpus_dir.empty()) {
        for (const auto& e : load_corpus_dir(corpus_dir, nullptr, warnings)) charts.push_back(e.chart);
    }
    for (const auto& f : files) {
        ParseOptions opts;
        opts.warnings = warnings;
        charts.push_back(load_chart_file(f, opts));
    }
    if (charts.empty()) throw Error(Err::EmptyCorpus, "no charts given");
    return charts;
}

TokenPolicy policy_from_name(const std::string& name) {
    TokenPolicy p;
    if (name == "keep") p.open_plus_fret = OpenPlusFret::Keep;
    else if (name == "strip-open") p.open_plus_fret = OpenPlusFret::StripOpen;
    else if (name == "drop-event") p.open_plus_fret = OpenPlusFret::DropEvent;
    else throw Error(Err::PolicyInvalid, "unknown token policy " + name);
    return p;
}

std::vector<std::pair<std::string, std::string>> read_kv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Err::IoError, "cannot open config " + path);
    std::vector<std::pair<std::string, std::string>> kv;
    std::string line;
    while (std::getline(in, line)) {
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const size_t eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const size_t b = s.find_first_not_of(" \t\r");
            const size_t e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!key.empty()) kv.emplace_back(key, value);
    }
    return kv;
}

// Options shared by the training-flavored subcommands. Flags override the
// --config file, which overrides the defaults.
struct TrainFlags {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "key=value config file");
        auto track = [this](const std::string& key) {
            return [this, key](const std::string& v) { overrides.emplace_back(key, v); };
        };
        cmd->add_option_function<std::string>("--regime", track("regime"),
                                              "baseline | uncond | conditioned");
        cmd->add_option_function<std::string>("--delta-ms", track("delta_ms"), "grid step in ms");
        cmd->add_option_function<std::string>("--segment-s", track("segment_s"), "window length");
        cmd->add_option_function<std::string>("--context", track("context_tokens"),
                                              "baseline context length");
        cmd->add_option_function<std::string>("--lr-peak", track("lr_peak"), "peak learning rate");
        cmd->add_option_function<std::string>("--lr-final", track("lr_final"), "final learning rate");
        cmd->add_option_function<std::string>("--decay-epochs", track("decay_epochs"),
                                              "epochs to reach lr-final");
        cmd->add_option_function<std::string>("--weight-decay", track("weight_decay"), "AdamW decay");
        cmd->add_option_function<std::string>("--pad-weight", track("pad_weight"),
                                              "loss weight of PAD targets");
        cmd->add_option_function<std::string>("--dropout", track("dropout"), "dropout rate");
        cmd->add_option_function<std::string>("--batch-size", track("batch_size"), "sequences per step");
        cmd->add_option_function<std::string>("--epochs", track("epochs"), "training epochs");
        cmd->add_option_function<std::string>("--grad-clip", track("grad_clip"), "global-norm clip");
        cmd->add_option_function<std::string>("--val-percent", track("val_percent"),
                                              "validation song share");
        cmd->add_option_function<std::string>("--workers", track("workers"), "parallel workers");
        cmd->add_option_function<std::string>("--ablate-every", track("ablate_every"),
                                              "permuted-audio probe interval");
        cmd->add_option_function<std::string>("--seed", track("seed"), "run seed");
        cmd->add_option_function<std::string>("--split-seed", track("split_seed"), "split seed");
        cmd->add_option_function<std::string>("--d-model", track("d_model"), "model width");
        cmd->add_option_function<std::string>("--n-layers", track("n_layers"), "decoder blocks");
        cmd->add_option_function<std::string>("--n-heads", track("n_heads"), "attention heads");
        cmd->add_option_function<std::string>("--d-ff", track("d_ff"), "feed-forward width");
    }

    TrainConfig resolve(bool pad_weight_from_delta = true) const {
        TrainConfig cfg;
        cfg.workers = int(std::thread::hardware_concurrency());
        if (cfg.workers < 1) cfg.workers = 1;
        if (!config_path.empty()) cfg.apply_kv(read_kv_file(config_path));
        bool pad_set = false, delta_set = false;
        for (const auto& [k, v] : overrides) {
            pad_set |= (k == "pad_weight");
            delta_set |= (k == "delta_ms");
        }
        cfg.apply_kv(overrides);
        if (pad_weight_from_delta && !pad_set && delta_set) {
            cfg.pad_weight = default_pad_weight(cfg.delta_ms);
        }
        return cfg;
    }
};

struct CodecFlags {
    CodecConfig cfg;
    void add_to(CLI::App* cmd) {
        cmd->add_option("--frame-rate", cfg.frame_rate_hz, "codec frames per second");
        cmd->add_option("--n-q", cfg.n_q, "number of codebooks");
        cmd->add_option("--codebook", cfg.codebook_size, "codebook size");
        cmd->add_option("--n-bands", cfg.n_bands, "filterbank bands");
        cmd->add_option("--codec-seed", cfg.seed, "codec projection seed");
    }
};

void print_warnings(const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"chartgen: rhythm-game chart tokenization, training and generation toolkit"};
    app.require_subcommand(1);
    int exit_code = 0;

    // ---- stats ----
    auto* stats_cmd = app.add_subcommand("stats", "corpus statistics report");
    static std::string st_corpus, st_out;
    static std::vector<std::string> st_files;
    static bool st_json = false;
    stats_cmd->add_option("--corpus", st_corpus, "directory of chart files");
    stats_cmd->add_option("charts", st_files, "chart files");
    stats_cmd->add_flag("--json", st_json, "machine-readable output");
    stats_cmd->add_option("--out", st_out, "output file (default stdout)");
    stats_cmd->callback([&]() {
        std::vector<std::string> warnings;
        const auto charts = gather_charts(st_corpus, st_files, &warnings);
        print_warnings(warnings);
        const CorpusReport report = corpus_report(charts);
        write_text(st_out, st_json ? report_to_json(report) + "\n" : report_to_text(report));
    });

    // ---- ioi-cdf ----
    auto* ioi_cmd = app.add_subcommand("ioi-cdf", "inter-onset interval CDF");
    static std::string io_corpus, io_out;
    static std::vector<std::string> io_files;
    ioi_cmd->add_option("--corpus", io_corpus, "directory of chart files");
    ioi_cmd->add_option("charts", io_files, "chart files");
    ioi_cmd->add_option("--out", io_out, "two-column output file (default stdout)");
    ioi_cmd->callback([&]() {
        std::vector<std::string> warnings;
        const auto charts = gather_charts(io_corpus, io_files, &warnings);
        print_warnings(warnings);
        const IoiReport report = ioi_cdf(charts);
        std::ostringstream out;
        out << "# min_ioi_s " << report.min_ioi_s << "\n";
        for (const auto& [dt, cum] : report.cdf) out << dt << "\t" << cum << "\n";
        write_text(io_out, out.str());
        std::cerr << "min IOI " << report.min_ioi_s * 1000.0 << " ms, fraction above 40 ms "
                  << 1.0 - report.fraction_at(0.040 - 1e-12) << "\n";
    });

    // ---- tokenize ----
    auto* tok_cmd = app.add_subcommand("tokenize", "chart -> note token ids");
    static std::string tk_chart, tk_out, tk_policy = "strip-open";
    static bool tk_times = false;
    tok_cmd->add_option("--chart", tk_chart, "input chart")->required();
    tok_cmd->add_option("--out", tk_out, "output file (default stdout)");
    tok_cmd->add_option("--policy", tk_policy, "keep | strip-open | drop-event");
    tok_cmd->add_flag("--with-times", tk_times, "emit 'time_s<TAB>id' instead of bare ids");
    tok_cmd->callback([&]() {
        const Chart chart = load_chart_file(tk_chart);
        std::ostringstream out;
        for (const TimedToken& t : tokenize_chart(chart, policy_from_name(tk_policy))) {
            if (tk_times) {
                char buf[40];
                std::snprintf(buf, sizeof(buf), "%.9f", t.time_s);
                out << buf << "\t";
            }
            out << t.token << "\n";
        }
        write_text(tk_out, out.str());
    });

    // ---- detokenize ----
    auto* detok_cmd = app.add_subcommand("detokenize", "token ids -> chart");
    static std::string dt_tokens, dt_out;
    static double dt_delta = 40.0;
    detok_cmd->add_option("--tokens", dt_tokens, "id-per-line file, optionally 'time<TAB>id'")
        ->required();
    detok_cmd->add_option("--out", dt_out, "output chart")->required();
    detok_cmd->add_option("--delta-ms", dt_delta, "spacing when the file has no times");
    detok_cmd->callback([&]() {
        std::ifstream in(dt_tokens);
        if (!in) throw Error(Err::IoError, "cannot open " + dt_tokens);
        Chart chart;
        chart.resolution = 192;
        chart.tempo_map = {{0, 120000}};
        chart.metadata.set("Name", "detokenized", true);
        std::string line;
        size_t idx = 0;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::istringstream ls(line);
            double first = 0.0;
            long second = -1;
            ls >> first;
            NoteEvent note;
            if (ls >> second) {
                note.time_s = first;
                note.frets = decode_token(TokenId(second));
            } else {
                note.time_s = double(idx) * dt_delta / 1000.0;
                note.frets = decode_token(TokenId(llround(first)));
            }
            chart.notes.push_back(note);
            ++idx;
        }
        save_chart_file(chart, dt_out);
    });

    // ---- grid-encode ----
    auto* genc_cmd = app.add_subcommand("grid-encode", "chart -> token grid (A2CT)");
    static std::string ge_chart, ge_out;
    static double ge_delta = 40.0, ge_t0 = 0.0, ge_t1 = -1.0;
    static std::string ge_policy = "strip-open";
    genc_cmd->add_option("--chart", ge_chart, "input chart")->required();
    genc_cmd->add_option("--out", ge_out, "output .a2ct file")->required();
    genc_cmd->add_option("--delta-ms", ge_delta, "grid step in ms");
    genc_cmd->add_option("--t0", ge_t0, "window start (s)");
    genc_cmd->add_option("--t1", ge_t1, "window end (s); default covers the chart");
    genc_cmd->add_option("--policy", ge_policy, "keep | strip-open | drop-event");
    genc_cmd->callback([&]() {
        const Chart chart = load_chart_file(ge_chart);
        double t1 = ge_t1;
        if (t1 < 0.0) {
            const int64_t last_bin = grid_bin_index(chart.last_onset_s(), ge_t0, ge_delta);
            t1 = ge_t0 + double(last_bin + 1) * ge_delta / 1000.0;
        }
        const GridSequence seq =
            grid_encode(chart, ge_delta, {ge_t0, t1}, policy_from_name(ge_policy));
        write_tokens_file(seq, ge_out);
        std::cerr << seq.tokens.size() << " bins, pad fraction " << seq.pad_fraction() << "\n";
    });

    // ---- grid-decode ----
    auto* gdec_cmd = app.add_subcommand("grid-decode", "token grid (A2CT) -> chart");
    static std::string gd_tokens, gd_out;
    static double gd_start = 0.0;
    gdec_cmd->add_option("--tokens", gd_tokens, "input .a2ct file")->required();
    gdec_cmd->add_option("--out", gd_out, "output chart")->required();
    gdec_cmd->add_option("--start-s", gd_start, "grid origin in seconds");
    gdec_cmd->callback([&]() {
        GridSequence seq = read_tokens_file(gd_tokens);
        seq.start_s = gd_start;
        Chart chart;
        chart.resolution = 192;
        chart.tempo_map = {{0, 120000}};
        chart.metadata.set("Name", "grid-decoded", true);
        chart.notes = grid_decode(seq);
        save_chart_file(chart, gd_out);
    });

    // ---- codes ----
    auto* codes_cmd = app.add_subcommand("codes", "waveform -> audio codes (A2CC)");
    static std::string cd_audio, cd_codes_in, cd_out;
    static CodecFlags cd_codec;
    codes_cmd->add_option("--audio", cd_audio, "input 16-bit PCM wav");
    codes_cmd->add_option("--codes", cd_codes_in, "existing .a2cc to inspect");
    codes_cmd->add_option("--out", cd_out, "output .a2cc file");
    cd_codec.add_to(codes_cmd);
    codes_cmd->callback([&]() {
        if (!cd_codes_in.empty()) {
            const AudioCodes codes = read_codes_file(cd_codes_in);
            std::cout << "frames " << codes.n_frames() << ", n_q " << codes.n_q << ", codebook "
                      << codes.codebook_size << ", frame_rate " << codes.frame_rate_hz << " Hz\n";
            return;
        }
        if (cd_audio.empty() || cd_out.empty()) {
            throw Error(Err::IoError, "codes needs --audio and --out (or --codes to inspect)");
        }
        const Waveform wave = read_wave(cd_audio);
        const AudioCodes codes = pseudo_codec_encode(wave, cd_codec.cfg);
        write_codes_file(codes, cd_out);
        std::cerr << codes.n_frames() << " frames x " << codes.n_q << " codebooks\n";
    });

    // ---- synth ----
    auto* synth_cmd = app.add_subcommand("synth", "paired synthetic corpus");
    static std::string sy_dir;
    static SynthConfig sy_cfg;
    static bool sy_write_codes = false;
    static CodecFlags sy_codec;
    synth_cmd->add_option("--out-dir", sy_dir, "output directory")->required();
    synth_cmd->add_option("--n-songs", sy_cfg.n_songs, "number of songs");
    synth_cmd->add_option("--duration-s", sy_cfg.duration_s, "song duration");
    synth_cmd->add_option("--notes-per-min", sy_cfg.notes_per_min, "note density");
    synth_cmd->add_option("--delta-floor-ms", sy_cfg.delta_floor_ms, "minimum inter-onset interval");
    synth_cmd->add_option("--sample-rate", sy_cfg.sample_rate_hz, "waveform sample rate");
    synth_cmd->add_option("--seed", sy_cfg.seed, "corpus seed");
    synth_cmd->add_flag("--write-codes", sy_write_codes, "also write .a2cc code files");
    sy_codec.add_to(synth_cmd);
    synth_cmd->callback([&]() {
        const auto stems = synth_corpus_to_dir(sy_cfg, sy_dir);
        if (sy_write_codes) {
            for (const auto& stem : stems) {
                const AudioCodes codes = pseudo_codec_encode(read_wave(stem + ".wav"), sy_codec.cfg);
                write_codes_file(codes, stem + ".a2cc");
            }
        }
        std::cerr << stems.size() << " songs in " << sy_dir << "\n";
    });

    // ---- train ----
    auto* train_cmd = app.add_subcommand("train", "train a model on a chart corpus");
    static std::string tr_corpus, tr_out, tr_log;
    static TrainFlags tr_flags;
    static CodecFlags tr_codec;
    train_cmd->add_option("--corpus", tr_corpus, "corpus directory")->required();
    train_cmd->add_option("--out", tr_out, "checkpoint path")->required();
    train_cmd->add_option("--log", tr_log, "per-step training log");
    tr_flags.add_to(train_cmd);
    tr_codec.add_to(train_cmd);
    train_cmd->callback([&]() {
        const TrainConfig cfg = tr_flags.resolve();
        std::vector<std::string> warnings;
        const Corpus corpus = load_corpus_dir(
            tr_corpus, cfg.regime == Regime::Conditioned ? &tr_codec.cfg : nullptr, &warnings);
        print_warnings(warnings);
        const TrainResult result = train(corpus, cfg, [](int step, double loss, double lr) {
            if (step % 50 == 0) {
                std::cerr << "step " << step << " loss " << loss << " lr " << lr << "\n";
            }
        });
        save_checkpoint(result.model_cfg, result.best_params, tr_out);
        if (!tr_log.empty()) {
            std::ostringstream out;
            for (const auto& line : result.log_lines) out << line << "\n";
            write_text(tr_log, out.str());
        }
        std::cerr << "best val loss " << result.best_val_loss << " (epoch " << result.best_epoch
                  << "), checkpoint " << tr_out << "\n";
    });

    // ---- eval ----
    auto* eval_cmd = app.add_subcommand("eval", "full + non-pad perplexity/accuracy");
    static std::string ev_corpus, ev_ckpt, ev_out, ev_split = "val";
    static bool ev_json = false;
    static TrainFlags ev_flags;
    static CodecFlags ev_codec;
    eval_cmd->add_option("--corpus", ev_corpus, "corpus directory")->required();
    eval_cmd->add_option("--checkpoint", ev_ckpt, "model checkpoint")->required();
    eval_cmd->add_option("--split", ev_split, "val | train | all");
    eval_cmd->add_flag("--json", ev_json, "machine-readable output");
    eval_cmd->add_option("--out", ev_out, "output file (default stdout)");
    ev_flags.add_to(eval_cmd);
    ev_codec.add_to(eval_cmd);
    eval_cmd->callback([&]() {
        auto [mc, params] = load_checkpoint(ev_ckpt);
        TrainConfig cfg = ev_flags.resolve();
        if (mc.conditioned) cfg.regime = Regime::Conditioned;
        else if (cfg.regime == Regime::Conditioned) cfg.regime = Regime::Uncond;
        std::vector<std::string> warnings;
        const Corpus corpus =
            load_corpus_dir(ev_corpus, mc.conditioned ? &ev_codec.cfg : nullptr, &warnings);
        print_warnings(warnings);
        const Transformer model(mc, std::move(params));
        SplitDataset ds = make_dataset(corpus, cfg);
        std::vector<SeqExample> seqs;
        if (ev_split == "train") seqs = std::move(ds.train);
        else if (ev_split == "val") seqs = std::move(ds.val);
        else {
            seqs = std::move(ds.train);
            seqs.insert(seqs.end(), ds.val.begin(), ds.val.end());
        }
        const EvalReport report = evaluate(model, seqs, cfg.workers);
        write_text(ev_out, ev_json ? eval_report_to_json(report) + "\n" : eval_report_to_text(report));
    });

    // ---- ablate ----
    auto* abl_cmd = app.add_subcommand("ablate", "permuted-audio loss gap of a trained model");
    static std::string ab_corpus, ab_ckpt, ab_out;
    static TrainFlags ab_flags;
    static CodecFlags ab_codec;
    abl_cmd->add_option("--corpus", ab_corpus, "corpus directory")->required();
    abl_cmd->add_option("--checkpoint", ab_ckpt, "model checkpoint")->required();
    abl_cmd->add_option("--out", ab_out, "per-batch output (default stdout)");
    ab_flags.add_to(abl_cmd);
    ab_codec.add_to(abl_cmd);
    abl_cmd->callback([&]() {
        auto [mc, params] = load_checkpoint(ab_ckpt);
        TrainConfig cfg = ab_flags.resolve();
        cfg.regime = Regime::Conditioned;
        std::vector<std::string> warnings;
        const Corpus corpus = load_corpus_dir(ab_corpus, &ab_codec.cfg, &warnings);
        print_warnings(warnings);
        const Transformer model(mc, std::move(params));
        SplitDataset ds = make_dataset(corpus, cfg);
        std::vector<SeqExample> seqs = std::move(ds.train);
        seqs.insert(seqs.end(), ds.val.begin(), ds.val.end());
        const std::vector<double> series = ablate_audio(model, seqs, cfg);
        std::ostringstream out;
        for (size_t i = 0; i < series.size(); ++i) out << i << "\t" << series[i] << "\n";
        write_text(ab_out, out.str());
    });

    // ---- sweep-context ----
    auto* sweep_cmd = app.add_subcommand("sweep-context", "baseline metric sweep over context lengths");
    static std::string sw_corpus, sw_out, sw_contexts = "128,256,512,1024";
    static TrainFlags sw_flags;
    sweep_cmd->add_option("--corpus", sw_corpus, "corpus directory")->required();
    sweep_cmd->add_option("--contexts", sw_contexts, "comma-separated context lengths");
    sweep_cmd->add_option("--out", sw_out, "output file (default stdout)");
    sw_flags.add_to(sweep_cmd);
    sweep_cmd->callback([&]() {
        std::vector<int> contexts;
        std::istringstream cs(sw_contexts);
        std::string item;
        while (std::getline(cs, item, ',')) {
            if (!item.empty()) contexts.push_back(std::stoi(item));
        }
        std::vector<std::string> warnings;
        const Corpus corpus = load_corpus_dir(sw_corpus, nullptr, &warnings);
        print_warnings(warnings);
        const auto rows = context_sweep(corpus, contexts, sw_flags.resolve(false));
        std::ostringstream out;
        out << "context\tval_perplexity\tval_accuracy\n";
        for (const auto& row : rows) {
            out << row.context << "\t" << row.val_perplexity << "\t" << row.val_accuracy << "\n";
        }
        write_text(sw_out, out.str());
    });

    // ---- generate ----
    auto* gen_cmd = app.add_subcommand("generate", "sample a chart from audio");
    static std::string gn_audio, gn_codes, gn_ckpt, gn_out, gn_policy = "topk:16";
    static double gn_delta = 40.0;
    static uint64_t gn_seed = 0;
    static CodecFlags gn_codec;
    gen_cmd->add_option("--audio", gn_audio, "input wav (encoded with the stand-in codec)");
    gen_cmd->add_option("--codes", gn_codes, "input .a2cc codes (takes precedence)");
    gen_cmd->add_option("--checkpoint", gn_ckpt, "model checkpoint")->required();
    gen_cmd->add_option("--delta-ms", gn_delta, "grid step in ms");
    gen_cmd->add_option("--policy", gn_policy, "greedy | temp:<t> | topk:<k>[@<t>]");
    gen_cmd->add_option("--seed", gn_seed, "sampling seed");
    gen_cmd->add_option("--out", gn_out, "output chart")->required();
    gn_codec.add_to(gen_cmd);
    gen_cmd->callback([&]() {
        auto [mc, params] = load_checkpoint(gn_ckpt);
        const Transformer model(mc, std::move(params));
        AudioCodes codes;
        if (!gn_codes.empty()) {
            codes = read_codes_file(gn_codes);
        } else if (!gn_audio.empty()) {
            codes = pseudo_codec_encode(read_wave(gn_audio), gn_codec.cfg);
        } else {
            throw Error(Err::MissingCodes, "generate needs --audio or --codes");
        }
        const Chart chart =
            sample_chart(model, codes, gn_delta, SamplePolicy::parse(gn_policy), gn_seed);
        save_chart_file(chart, gn_out);
        std::cerr << chart.notes.size() << " notes -> " << gn_out << "\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
        std::cerr << "usage error: " << e.what() << "\n" << app.help() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return exit_code;
}
