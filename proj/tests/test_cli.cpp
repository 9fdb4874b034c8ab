#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "chartgen/chart.hpp"
#include "chartgen/time_grid.hpp"

namespace fs = std::filesystem;
using namespace chartgen;

namespace {

struct RunResult {
    int exit_code;
    std::string out;
};

RunResult run_cli(const std::string& args) {
    const std::string out_file =
        (fs::temp_directory_path() / ("chartgen_cli_out_" + std::to_string(::getpid()))).string();
    const std::string cmd = std::string(CHARTGEN_CLI_PATH) + " " + args + " >" + out_file + " 2>&1";
    const int status = std::system(cmd.c_str());
    std::ifstream in(out_file);
    std::stringstream buf;
    buf << in.rdbuf();
    fs::remove(out_file);
    return {WEXITSTATUS(status), buf.str()};
}

fs::path temp_dir() {
    const fs::path dir = fs::temp_directory_path() / "chartgen_cli_test";
    fs::create_directories(dir);
    return dir;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

// note lines only, for comparisons that ignore metadata
std::string note_section(const std::string& chart_text) {
    const size_t pos = chart_text.find("Single]");
    return pos == std::string::npos ? "" : chart_text.substr(pos);
}

}  // namespace

TEST_CASE("help exits 0, unknown subcommand exits 2") {
    CHECK(run_cli("--help").exit_code == 0);
    const RunResult bad = run_cli("frobnicate");
    CHECK(bad.exit_code == 2);
    CHECK(bad.out.find("usage") != std::string::npos);
}

TEST_CASE("domain errors exit 1 with a categorized line") {
    const RunResult r = run_cli("stats");
    CHECK(r.exit_code == 1);
    CHECK(r.out.find("error: EmptyCorpus") != std::string::npos);
}

TEST_CASE("synth -> stats pipeline") {
    const fs::path dir = temp_dir() / "corpus_a";
    fs::remove_all(dir);
    const RunResult synth = run_cli("synth --out-dir " + dir.string() +
                                    " --n-songs 3 --duration-s 20 --notes-per-min 294.8 --seed 5");
    CHECK(synth.exit_code == 0);
    CHECK(fs::exists(dir / "synth-0000.chart"));
    CHECK(fs::exists(dir / "synth-0000.wav"));

    const RunResult stats = run_cli("stats --corpus " + dir.string());
    CHECK(stats.exit_code == 0);
    CHECK(stats.out.find("Expert") != std::string::npos);

    const RunResult js = run_cli("stats --corpus " + dir.string() + " --json");
    CHECK(js.exit_code == 0);
    CHECK(js.out.find("\"difficulty\"") != std::string::npos);

    const RunResult ioi = run_cli("ioi-cdf --corpus " + dir.string());
    CHECK(ioi.exit_code == 0);
    CHECK(ioi.out.find("min_ioi_s") != std::string::npos);
}

TEST_CASE("tokenize/detokenize round trip preserves the note list") {
    const fs::path dir = temp_dir();
    const fs::path chart_path = dir / "roundtrip.chart";
    // a flagless, sustainless chart so the note list is fully token-representable
    Chart chart;
    chart.resolution = 192;
    chart.tempo_map = {{0, 120000}};
    chart.metadata.set("Name", "detokenized", true);
    Rng rng(70);
    double t = 0.0;
    for (int i = 0; i < 40; ++i) {
        NoteEvent n;
        n.time_s = t;
        n.frets.add(int(rng.below(6)));
        chart.notes.push_back(n);
        t += 0.05 + rng.uniform01() * 0.2;
    }
    save_chart_file(chart, chart_path.string());

    const fs::path ids = dir / "roundtrip.tokens";
    const fs::path back = dir / "roundtrip_back.chart";
    CHECK(run_cli("tokenize --chart " + chart_path.string() + " --with-times --out " + ids.string())
              .exit_code == 0);
    CHECK(run_cli("detokenize --tokens " + ids.string() + " --out " + back.string()).exit_code == 0);
    CHECK(note_section(read_file(back)) == note_section(read_file(chart_path)));
    CHECK(!note_section(read_file(back)).empty());

    // bare-id mode: fret sequence survives, times become a uniform grid
    const fs::path bare = dir / "bare.tokens";
    CHECK(run_cli("tokenize --chart " + chart_path.string() + " --out " + bare.string()).exit_code ==
          0);
    const fs::path back2 = dir / "roundtrip_back2.chart";
    CHECK(run_cli("detokenize --tokens " + bare.string() + " --delta-ms 40 --out " + back2.string())
              .exit_code == 0);
    const Chart reparsed = load_chart_file(back2.string());
    REQUIRE(reparsed.notes.size() == chart.notes.size());
    for (size_t i = 0; i < reparsed.notes.size(); ++i) {
        CHECK(reparsed.notes[i].frets == chart.notes[i].frets);
    }
}

TEST_CASE("grid-encode/grid-decode round trip") {
    const fs::path dir = temp_dir();
    const fs::path chart_path = dir / "grid.chart";
    Chart chart;
    chart.resolution = 192;
    chart.tempo_map = {{0, 120000}};
    chart.metadata.set("Name", "grid-decoded", true);
    for (int i = 0; i < 20; ++i) {
        NoteEvent n;
        n.time_s = 0.08 * double(i);
        n.frets.add(i % 6);
        chart.notes.push_back(n);
    }
    save_chart_file(chart, chart_path.string());

    const fs::path a2ct = dir / "grid.a2ct";
    CHECK(run_cli("grid-encode --chart " + chart_path.string() + " --delta-ms 40 --out " +
                  a2ct.string())
              .exit_code == 0);
    const GridSequence seq = read_tokens_file(a2ct.string());
    CHECK(seq.resolution_ms == 40.0);
    CHECK(seq.tokens.size() == 39);  // last onset 1.52 s -> bin 38

    const fs::path decoded = dir / "grid_back.chart";
    CHECK(run_cli("grid-decode --tokens " + a2ct.string() + " --out " + decoded.string())
              .exit_code == 0);
    const Chart back = load_chart_file(decoded.string());
    REQUIRE(back.notes.size() == chart.notes.size());
    for (size_t i = 0; i < back.notes.size(); ++i) {
        CHECK(std::abs(back.notes[i].time_s - chart.notes[i].time_s) <= 0.020 + 1e-9);
        CHECK(back.notes[i].frets == chart.notes[i].frets);
    }
}

TEST_CASE("codes subcommand encodes and inspects") {
    const fs::path dir = temp_dir() / "corpus_b";
    fs::remove_all(dir);
    CHECK(run_cli("synth --out-dir " + dir.string() + " --n-songs 1 --duration-s 5 --seed 2")
              .exit_code == 0);
    const fs::path wav = dir / "synth-0000.wav";
    const fs::path a2cc = dir / "synth-0000.a2cc";
    CHECK(run_cli("codes --audio " + wav.string() + " --out " + a2cc.string()).exit_code == 0);
    const RunResult info = run_cli("codes --codes " + a2cc.string());
    CHECK(info.exit_code == 0);
    CHECK(info.out.find("frames 250") != std::string::npos);
}

TEST_CASE("train, eval, ablate and generate wire together") {
    const fs::path dir = temp_dir() / "corpus_c";
    fs::remove_all(dir);
    CHECK(run_cli("synth --out-dir " + dir.string() +
                  " --n-songs 6 --duration-s 5 --notes-per-min 120 --seed 8")
              .exit_code == 0);

    const fs::path ckpt = temp_dir() / "tiny.ckpt";
    const fs::path log = temp_dir() / "tiny.log";
    const RunResult tr = run_cli(
        "train --corpus " + dir.string() + " --out " + ckpt.string() + " --log " + log.string() +
        " --regime conditioned --delta-ms 40 --segment-s 5 --epochs 2 --batch-size 2"
        " --d-model 16 --n-layers 1 --n-heads 2 --d-ff 32 --dropout 0 --val-percent 20"
        " --ablate-every 2 --workers 2 --seed 1");
    CHECK(tr.exit_code == 0);
    CHECK(fs::exists(ckpt));
    CHECK(fs::exists(log));
    const std::string log_text = read_file(log);
    CHECK(log_text.find('\t') != std::string::npos);

    const RunResult ev = run_cli("eval --corpus " + dir.string() + " --checkpoint " + ckpt.string() +
                                 " --split all --json --delta-ms 40 --segment-s 5 --workers 2");
    CHECK(ev.exit_code == 0);
    CHECK(ev.out.find("perplexity_full") != std::string::npos);

    const RunResult ab = run_cli("ablate --corpus " + dir.string() + " --checkpoint " +
                                 ckpt.string() + " --delta-ms 40 --segment-s 5 --batch-size 2");
    CHECK(ab.exit_code == 0);

    const fs::path gen_out = temp_dir() / "generated.chart";
    const RunResult gen =
        run_cli("generate --audio " + (dir / "synth-0000.wav").string() + " --checkpoint " +
                ckpt.string() + " --delta-ms 40 --policy topk:4 --seed 3 --out " + gen_out.string());
    CHECK(gen.exit_code == 0);
    CHECK(fs::exists(gen_out));
    CHECK(run_cli("generate --checkpoint " + ckpt.string() + " --out x.chart").exit_code == 1);
}

TEST_CASE("sweep-context runs a tiny sweep") {
    const fs::path dir = temp_dir() / "corpus_d";
    fs::remove_all(dir);
    CHECK(run_cli("synth --out-dir " + dir.string() +
                  " --n-songs 4 --duration-s 5 --notes-per-min 200 --seed 9")
              .exit_code == 0);
    const RunResult sw =
        run_cli("sweep-context --corpus " + dir.string() +
                " --contexts 8,16 --epochs 1 --batch-size 4 --d-model 16 --n-layers 1"
                " --n-heads 2 --d-ff 32 --dropout 0 --val-percent 25 --workers 2");
    CHECK(sw.exit_code == 0);
    CHECK(sw.out.find("context") != std::string::npos);
    CHECK(sw.out.find("8\t") != std::string::npos);
    CHECK(sw.out.find("16\t") != std::string::npos);
}

TEST_CASE("config file feeds train flags") {
    const fs::path dir = temp_dir() / "corpus_e";
    fs::remove_all(dir);
    CHECK(run_cli("synth --out-dir " + dir.string() + " --n-songs 2 --duration-s 5 --seed 4")
              .exit_code == 0);
    const fs::path cfg_file = temp_dir() / "train.cfg";
    {
        std::ofstream out(cfg_file);
        out << "# tiny run\n";
        out << "regime = uncond\n";
        out << "delta_ms = 40\n";
        out << "segment_s = 5\n";
        out << "epochs = 1\n";
        out << "batch_size = 2\n";
        out << "d_model = 16\nn_layers = 1\nn_heads = 2\nd_ff = 32\n";
        out << "dropout = 0\nval_percent = 0\nworkers = 1\n";
    }
    const fs::path ckpt = temp_dir() / "cfgrun.ckpt";
    const RunResult tr = run_cli("train --corpus " + dir.string() + " --config " +
                                 cfg_file.string() + " --out " + ckpt.string());
    CHECK(tr.exit_code == 0);
    CHECK(fs::exists(ckpt));
}
