#include "chartgen/generate.hpp"

#include <algorithm>
#include <cmath>

namespace chartgen {

SamplePolicy SamplePolicy::parse(const std::string& text) {
    SamplePolicy p;
    if (text == "greedy") {
        p.kind = Kind::Greedy;
        p.validate();
        return p;
    }
    auto parse_tail = [&](const std::string& tail, Kind kind) {
        p.kind = kind;
        const size_t at = tail.find('@');
        try {
            if (kind == Kind::Temperature) {
                p.temperature = std::stod(tail);
            } else {
                p.top_k = std::stoi(tail.substr(0, at));
                if (at != std::string::npos) p.temperature = std::stod(tail.substr(at + 1));
            }
        } catch (const std::exception&) {
            throw Error(Err::PolicyInvalid, "cannot parse sampling policy '" + text + "'");
        }
    };
    if (text.rfind("temp:", 0) == 0) {
        parse_tail(text.substr(5), Kind::Temperature);
    } else if (text.rfind("topk:", 0) == 0) {
        parse_tail(text.substr(5), Kind::TopK);
    } else {
        throw Error(Err::PolicyInvalid, "unknown sampling policy '" + text + "'");
    }
    p.validate();
    return p;
}

void SamplePolicy::validate() const {
    if (kind == Kind::Temperature && temperature <= 0.0) {
        throw Error(Err::PolicyInvalid, "temperature must be > 0");
    }
    if (kind == Kind::TopK && (top_k < 1 || temperature <= 0.0)) {
        throw Error(Err::PolicyInvalid, "top_k must be >= 1 and temperature > 0");
    }
}

std::vector<AudioCodes> chunk_codes(const AudioCodes& codes, double segment_s, double delta_ms) {
    if (segment_s <= 0.0 || delta_ms <= 0.0) {
        throw Error(Err::PolicyInvalid, "segment and grid step must be positive");
    }
    const int64_t frames_per_window = llround(segment_s * codes.frame_rate_hz);
    if (frames_per_window <= 0) throw Error(Err::ShapeMismatch, "segment shorter than one frame");
    std::vector<AudioCodes> slices;
    for (int64_t f0 = 0; f0 < codes.n_frames(); f0 += frames_per_window) {
        slices.push_back(codes.slice(f0, std::min(f0 + frames_per_window, codes.n_frames())));
    }
    return slices;
}

namespace {

TokenId sample_from_logits(const std::vector<float>& logits, const SamplePolicy& policy, Rng& rng) {
    const int n = int(logits.size());

    // BOS is never a valid continuation
    auto masked = [&](int i) { return i == vocab::kBos; };

    if (policy.kind == SamplePolicy::Kind::Greedy) {
        int best = -1;
        for (int i = 0; i < n; ++i) {
            if (masked(i)) continue;
            if (best < 0 || logits[size_t(i)] > logits[size_t(best)]) best = i;
        }
        return best;
    }

    // candidate set: all tokens, or the k largest for top-k
    std::vector<int> cand;
    for (int i = 0; i < n; ++i) {
        if (!masked(i)) cand.push_back(i);
    }
    if (policy.kind == SamplePolicy::Kind::TopK && int(cand.size()) > policy.top_k) {
        std::stable_sort(cand.begin(), cand.end(), [&](int a, int b) {
            if (logits[size_t(a)] != logits[size_t(b)]) return logits[size_t(a)] > logits[size_t(b)];
            return a < b;
        });
        cand.resize(size_t(policy.top_k));
    }

    double max_l = -std::numeric_limits<double>::infinity();
    for (int i : cand) max_l = std::max(max_l, double(logits[size_t(i)]));
    std::vector<double> probs(cand.size());
    double sum = 0.0;
    for (size_t j = 0; j < cand.size(); ++j) {
        probs[j] = std::exp((double(logits[size_t(cand[j])]) - max_l) / policy.temperature);
        sum += probs[j];
    }
    const double r = rng.uniform01() * sum;
    double c = 0.0;
    for (size_t j = 0; j < cand.size(); ++j) {
        c += probs[j];
        if (r < c) return cand[j];
    }
    return cand.back();
}

}  // namespace

std::vector<GridSequence> sample_token_grid(const Transformer& model, const AudioCodes& codes,
                                            double delta_ms, const SamplePolicy& policy,
                                            uint64_t seed, double segment_s) {
    policy.validate();
    if (!model.config().conditioned) {
        throw Error(Err::MissingCodes, "generation needs an audio-conditioned model");
    }
    if (codes.n_frames() == 0) throw Error(Err::MissingCodes, "empty audio codes");

    const std::vector<AudioCodes> windows = chunk_codes(codes, segment_s, delta_ms);
    std::vector<GridSequence> grids;

    for (size_t w = 0; w < windows.size(); ++w) {
        const AudioCodes& slice = windows[w];
        const double window_ms = double(slice.n_frames()) / slice.frame_rate_hz * 1000.0;
        const int64_t n_bins = grid_bin_count(window_ms, delta_ms);

        Rng rng(derive_seed(seed, 0x67656eull + w));
        auto state = model.decode_start(&slice);
        GridSequence grid;
        grid.resolution_ms = delta_ms;
        grid.start_s = double(w) * segment_s;

        TokenId token = vocab::kBos;
        for (int64_t i = 0; i < n_bins; ++i) {
            const std::vector<float> logits = model.decode_step(state, token);
            const TokenId next = sample_from_logits(logits, policy, rng);
            if (next == vocab::kEos) break;
            grid.tokens.push_back(next);
            token = next;
        }
        grids.push_back(std::move(grid));
    }
    return grids;
}

Chart sample_chart(const Transformer& model, const AudioCodes& codes, double delta_ms,
                   const SamplePolicy& policy, uint64_t seed, double segment_s) {
    const std::vector<GridSequence> grids =
        sample_token_grid(model, codes, delta_ms, policy, seed, segment_s);

    Chart chart;
    chart.resolution = 192;
    chart.tempo_map = {{0, 120000}};
    chart.metadata.difficulty = Difficulty::Expert;
    chart.metadata.set("Name", "generated", true);
    chart.metadata.set("Artist", "chartgen", true);
    for (const GridSequence& grid : grids) {
        for (NoteEvent note : grid_decode(grid)) {
            chart.notes.push_back(note);
        }
    }
    return chart;
}

}  // namespace chartgen
