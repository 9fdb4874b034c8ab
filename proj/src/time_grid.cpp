#include "chartgen/time_grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

namespace chartgen {

size_t GridSequence::pad_count() const {
    size_t n = 0;
    for (TokenId t : tokens) n += (t == vocab::kPad);
    return n;
}

int64_t grid_bin_count(double window_ms, double delta_ms) {
    return int64_t(std::ceil(window_ms / delta_ms - 1e-9));
}

int64_t grid_bin_index(double time_s, double start_s, double delta_ms) {
    const double offset_ms = (time_s - start_s) * 1000.0;
    return int64_t(std::floor(offset_ms / delta_ms + 0.5));
}

GridSequence grid_encode(const Chart& chart, double delta_ms, TimeWindow window,
                         const TokenPolicy& policy) {
    if (delta_ms <= 0.0) throw Error(Err::WindowEmpty, "grid step must be positive");
    const double window_ms = (window.t1_s - window.t0_s) * 1000.0;
    const int64_t n_bins = grid_bin_count(window_ms, delta_ms);
    if (n_bins <= 0) throw Error(Err::WindowEmpty, "window shorter than one grid step");

    GridSequence seq;
    seq.resolution_ms = delta_ms;
    seq.start_s = window.t0_s;
    seq.tokens.assign(size_t(n_bins), vocab::kPad);

    for (const TimedToken& t : tokenize_chart(chart, policy)) {
        const int64_t bin = grid_bin_index(t.time_s, window.t0_s, delta_ms);
        if (bin < 0 || bin >= n_bins) continue;
        if (seq.tokens[size_t(bin)] != vocab::kPad) {
            throw Error(Err::BinCollision, "two onsets in bin " + std::to_string(bin) + " at " +
                                               std::to_string(delta_ms) + " ms");
        }
        seq.tokens[size_t(bin)] = t.token;
    }
    return seq;
}

std::vector<NoteEvent> grid_decode(const GridSequence& seq) {
    std::vector<NoteEvent> notes;
    for (size_t k = 0; k < seq.tokens.size(); ++k) {
        const TokenId id = seq.tokens[k];
        if (id == vocab::kPad) continue;
        NoteEvent note;
        note.time_s = seq.start_s + double(k) * seq.resolution_ms / 1000.0;
        note.frets = decode_token(id);
        notes.push_back(note);
    }
    return notes;
}

namespace {

// Intervals between consecutive distinct onsets of one chart.
std::vector<double> chart_iois(const Chart& chart) {
    std::vector<double> iois;
    double prev = std::numeric_limits<double>::quiet_NaN();
    for (const NoteEvent& n : chart.notes) {
        if (!std::isnan(prev) && n.time_s > prev) {
            iois.push_back(n.time_s - prev);
        }
        if (std::isnan(prev) || n.time_s > prev) prev = n.time_s;
    }
    return iois;
}

}  // namespace

double IoiReport::fraction_at(double dt_s) const {
    double f = 0.0;
    for (const auto& [dt, cum] : cdf) {
        if (dt <= dt_s) {
            f = cum;
        } else {
            break;
        }
    }
    return f;
}

IoiReport ioi_cdf(const std::vector<Chart>& charts) {
    std::vector<double> pooled;
    for (const Chart& c : charts) {
        if (c.notes.size() < 2) {
            throw Error(Err::TooFewNotes, "chart '" + c.song_id() + "' has fewer than 2 notes");
        }
        auto iois = chart_iois(c);
        pooled.insert(pooled.end(), iois.begin(), iois.end());
    }
    if (pooled.empty()) throw Error(Err::TooFewNotes, "no inter-onset intervals in corpus");

    std::sort(pooled.begin(), pooled.end());
    IoiReport report;
    report.min_ioi_s = pooled.front();
    const double n = double(pooled.size());
    for (size_t i = 0; i < pooled.size(); ++i) {
        const bool last_of_value = (i + 1 == pooled.size()) || (pooled[i + 1] > pooled[i]);
        if (last_of_value) {
            report.cdf.emplace_back(pooled[i], double(i + 1) / n);
        }
    }
    return report;
}

double min_ioi_s(const Chart& chart) {
    auto iois = chart_iois(chart);
    if (iois.empty()) return std::numeric_limits<double>::infinity();
    return *std::min_element(iois.begin(), iois.end());
}

bool ioi_below_resolution(const Chart& chart, double delta_ms) {
    return min_ioi_s(chart) < delta_ms / 1000.0 - 1e-9;
}

FilterResult filter_by_resolution(const std::vector<Chart>& charts, double delta_ms) {
    FilterResult result;
    for (const Chart& c : charts) {
        if (ioi_below_resolution(c, delta_ms)) {
            result.excluded.push_back(c);
        } else {
            result.kept.push_back(c);
        }
    }
    result.excluded_fraction =
        charts.empty() ? 0.0 : double(result.excluded.size()) / double(charts.size());
    return result;
}

// ----------------------------- A2CT binary format -----------------------------

namespace {

constexpr char kTokenMagic[4] = {'A', '2', 'C', 'T'};
constexpr uint8_t kTokenVersion = 1;

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(uint8_t(v & 0xFF));
    out.push_back(uint8_t((v >> 8) & 0xFF));
    out.push_back(uint8_t((v >> 16) & 0xFF));
    out.push_back(uint8_t((v >> 24) & 0xFF));
}

uint32_t get_u32(const std::vector<uint8_t>& in, size_t& pos) {
    if (pos + 4 > in.size()) throw Error(Err::ShapeMismatch, "truncated token file");
    uint32_t v = uint32_t(in[pos]) | (uint32_t(in[pos + 1]) << 8) | (uint32_t(in[pos + 2]) << 16) |
                 (uint32_t(in[pos + 3]) << 24);
    pos += 4;
    return v;
}

}  // namespace

std::vector<uint8_t> tokens_to_bytes(const GridSequence& seq) {
    std::vector<uint8_t> out;
    out.insert(out.end(), kTokenMagic, kTokenMagic + 4);
    out.push_back(kTokenVersion);
    put_u32(out, uint32_t(llround(seq.resolution_ms * 1000.0)));  // microseconds
    put_u32(out, uint32_t(seq.tokens.size()));
    for (TokenId t : seq.tokens) {
        if (t < 0 || t >= vocab::kSize) {
            throw Error(Err::ShapeMismatch, "token " + std::to_string(t) + " out of range");
        }
        out.push_back(uint8_t(t));
    }
    return out;
}

GridSequence tokens_from_bytes(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kTokenMagic, 4) != 0) {
        throw Error(Err::BadMagic, "not an A2CT token file");
    }
    size_t pos = 4;
    if (pos >= bytes.size()) throw Error(Err::ShapeMismatch, "truncated token file");
    const uint8_t version = bytes[pos++];
    if (version != kTokenVersion) {
        throw Error(Err::ShapeMismatch, "unsupported token file version " + std::to_string(version));
    }
    GridSequence seq;
    seq.resolution_ms = double(get_u32(bytes, pos)) / 1000.0;
    const uint32_t count = get_u32(bytes, pos);
    if (pos + count != bytes.size()) throw Error(Err::ShapeMismatch, "token count mismatch");
    seq.tokens.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        const uint8_t t = bytes[pos + i];
        if (t >= vocab::kSize) throw Error(Err::ShapeMismatch, "token value out of range");
        seq.tokens.push_back(TokenId(t));
    }
    return seq;
}

void write_tokens_file(const GridSequence& seq, const std::string& path) {
    const auto bytes = tokens_to_bytes(seq);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Err::IoError, "cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw Error(Err::IoError, "write failed: " + path);
}

GridSequence read_tokens_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Err::IoError, "cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return tokens_from_bytes(bytes);
}

}  // namespace chartgen
