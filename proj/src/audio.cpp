#include "chartgen/audio.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>

namespace chartgen {

AudioCodes AudioCodes::slice(int64_t frame_begin, int64_t frame_end) const {
    frame_begin = std::clamp<int64_t>(frame_begin, 0, n_frames());
    frame_end = std::clamp<int64_t>(frame_end, frame_begin, n_frames());
    AudioCodes out;
    out.frame_rate_hz = frame_rate_hz;
    out.n_q = n_q;
    out.codebook_size = codebook_size;
    out.codes.assign(codes.begin() + frame_begin * n_q, codes.begin() + frame_end * n_q);
    return out;
}

// ----------------------------- WAV I/O -----------------------------

namespace {

uint32_t rd_u32(const uint8_t* p) {
    return uint32_t(p[0]) | (uint32_t(p[1]) << 8) | (uint32_t(p[2]) << 16) | (uint32_t(p[3]) << 24);
}
uint16_t rd_u16(const uint8_t* p) { return uint16_t(p[0]) | (uint16_t(p[1]) << 8); }

void wr_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(uint8_t(v & 0xFF));
    out.push_back(uint8_t((v >> 8) & 0xFF));
    out.push_back(uint8_t((v >> 16) & 0xFF));
    out.push_back(uint8_t((v >> 24) & 0xFF));
}
void wr_u16(std::vector<uint8_t>& out, uint16_t v) {
    out.push_back(uint8_t(v & 0xFF));
    out.push_back(uint8_t((v >> 8) & 0xFF));
}

}  // namespace

Waveform wave_from_bytes(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 44 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw Error(Err::CorruptHeader, "not a RIFF/WAVE file");
    }

    int channels = 0;
    int sample_rate = 0;
    int bits = 0;
    int format = 0;
    const uint8_t* data = nullptr;
    size_t data_len = 0;

    size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
        const uint32_t size = rd_u32(bytes.data() + pos + 4);
        pos += 8;
        if (pos + size > bytes.size()) throw Error(Err::CorruptHeader, "truncated chunk");
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (size < 16) throw Error(Err::CorruptHeader, "fmt chunk too small");
            format = rd_u16(bytes.data() + pos);
            channels = rd_u16(bytes.data() + pos + 2);
            sample_rate = int(rd_u32(bytes.data() + pos + 4));
            bits = rd_u16(bytes.data() + pos + 14);
        } else if (std::memcmp(id, "data", 4) == 0) {
            data = bytes.data() + pos;
            data_len = size;
        }
        pos += size + (size & 1);  // chunks are word-aligned
    }

    if (channels == 0 || sample_rate <= 0 || data == nullptr) {
        throw Error(Err::CorruptHeader, "missing fmt or data chunk");
    }
    if (format != 1 || bits != 16) {
        throw Error(Err::UnsupportedEncoding, "only 16-bit integer PCM is supported");
    }
    if (channels != 1 && channels != 2) {
        throw Error(Err::UnsupportedEncoding, "only mono or stereo supported");
    }

    Waveform w;
    w.sample_rate_hz = sample_rate;
    const size_t n = data_len / (2 * size_t(channels));
    w.samples.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        if (channels == 1) {
            const int16_t s = int16_t(rd_u16(data + 2 * i));
            w.samples.push_back(float(s) / 32768.0f);
        } else {
            const int16_t l = int16_t(rd_u16(data + 4 * i));
            const int16_t r = int16_t(rd_u16(data + 4 * i + 2));
            w.samples.push_back((float(l) + float(r)) / (2.0f * 32768.0f));
        }
    }
    return w;
}

Waveform read_wave(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Err::IoError, "cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return wave_from_bytes(bytes);
}

void write_wave(const Waveform& w, const std::string& path) {
    std::vector<uint8_t> out;
    const uint32_t data_len = uint32_t(w.samples.size() * 2);
    out.insert(out.end(), {'R', 'I', 'F', 'F'});
    wr_u32(out, 36 + data_len);
    out.insert(out.end(), {'W', 'A', 'V', 'E'});
    out.insert(out.end(), {'f', 'm', 't', ' '});
    wr_u32(out, 16);
    wr_u16(out, 1);  // PCM
    wr_u16(out, 1);  // mono
    wr_u32(out, uint32_t(w.sample_rate_hz));
    wr_u32(out, uint32_t(w.sample_rate_hz) * 2);
    wr_u16(out, 2);
    wr_u16(out, 16);
    out.insert(out.end(), {'d', 'a', 't', 'a'});
    wr_u32(out, data_len);
    for (float s : w.samples) {
        const float clamped = std::clamp(s, -1.0f, 1.0f);
        const int16_t v = int16_t(std::lround(clamped * 32767.0f));
        wr_u16(out, uint16_t(v));
    }

    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error(Err::IoError, "cannot open " + path + " for writing");
    f.write(reinterpret_cast<const char*>(out.data()), std::streamsize(out.size()));
    if (!f) throw Error(Err::IoError, "write failed: " + path);
}

// ----------------------------- stand-in codec -----------------------------

namespace {

// In-place iterative radix-2 FFT; n must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& a) {
    const size_t n = a.size();
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * M_PI / double(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0);
            for (size_t j = 0; j < len / 2; ++j) {
                const auto u = a[i + j];
                const auto v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

size_t next_pow2(size_t n) {
    size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

struct Filterbank {
    size_t fft_size = 0;
    int n_bands = 0;
    // triangular weights per band over FFT bins, normalized to unit sum
    std::vector<std::vector<std::pair<size_t, double>>> bands;
};

Filterbank build_filterbank(const CodecConfig& cfg, int sample_rate, size_t frame_len) {
    Filterbank fb;
    fb.fft_size = next_pow2(frame_len);
    fb.n_bands = cfg.n_bands;
    fb.bands.resize(size_t(cfg.n_bands));

    const double hi = std::min(cfg.band_hi_hz, 0.5 * sample_rate);
    const double lo = std::min(cfg.band_lo_hz, hi * 0.5);
    // geometric edges: n_bands triangles need n_bands + 2 points
    std::vector<double> edges(size_t(cfg.n_bands) + 2);
    for (size_t i = 0; i < edges.size(); ++i) {
        edges[i] = lo * std::pow(hi / lo, double(i) / double(edges.size() - 1));
    }
    const double hz_per_bin = double(sample_rate) / double(fb.fft_size);
    for (int b = 0; b < cfg.n_bands; ++b) {
        const double f0 = edges[size_t(b)], f1 = edges[size_t(b) + 1], f2 = edges[size_t(b) + 2];
        double wsum = 0.0;
        auto& band = fb.bands[size_t(b)];
        for (size_t k = 1; k <= fb.fft_size / 2; ++k) {
            const double f = double(k) * hz_per_bin;
            double w = 0.0;
            if (f > f0 && f <= f1) {
                w = (f - f0) / (f1 - f0);
            } else if (f > f1 && f < f2) {
                w = (f2 - f) / (f2 - f1);
            }
            if (w > 0.0) {
                band.emplace_back(k, w);
                wsum += w;
            }
        }
        for (auto& [k, w] : band) w /= std::max(wsum, 1e-12);
    }
    return fb;
}

}  // namespace

std::vector<double> codec_band_centers_hz(const CodecConfig& cfg) {
    std::vector<double> centers(size_t(cfg.n_bands));
    const size_t n_pts = size_t(cfg.n_bands) + 2;
    for (int b = 0; b < cfg.n_bands; ++b) {
        centers[size_t(b)] =
            cfg.band_lo_hz * std::pow(cfg.band_hi_hz / cfg.band_lo_hz, double(b + 1) / double(n_pts - 1));
    }
    return centers;
}

AudioCodes pseudo_codec_encode(const Waveform& w, const CodecConfig& cfg) {
    if (w.sample_rate_hz <= 0 || cfg.frame_rate_hz <= 0.0) {
        throw Error(Err::ShapeMismatch, "bad sample or frame rate");
    }
    const size_t frame_len = size_t(llround(double(w.sample_rate_hz) / cfg.frame_rate_hz));
    if (frame_len == 0 || w.samples.size() < frame_len) {
        throw Error(Err::TooShort, "waveform shorter than one codec frame");
    }
    const int64_t n_frames = int64_t(w.samples.size() / frame_len);

    const Filterbank fb = build_filterbank(cfg, w.sample_rate_hz, frame_len);

    // Seed-derived mixing matrix: each quantizer draws a non-negative weight
    // row over the bands, normalized to sum 1. Projected values then stay in
    // the clamped/normalized [0, 1] range of the band energies.
    Rng rng(derive_seed(cfg.seed, 0x636f646563ull));
    std::vector<std::vector<double>> mix(size_t(cfg.n_q), std::vector<double>(size_t(cfg.n_bands)));
    for (auto& row : mix) {
        double sum = 0.0;
        for (double& v : row) {
            v = std::exp(rng.normal());
            sum += v;
        }
        for (double& v : row) v /= sum;
    }

    AudioCodes out;
    out.frame_rate_hz = cfg.frame_rate_hz;
    out.n_q = cfg.n_q;
    out.codebook_size = cfg.codebook_size;
    out.codes.reserve(size_t(n_frames) * size_t(cfg.n_q));

    std::vector<std::complex<double>> buf(fb.fft_size);
    std::vector<double> norm_energy(size_t(cfg.n_bands));
    const double clamp_span = cfg.log_clamp_hi - cfg.log_clamp_lo;

    for (int64_t f = 0; f < n_frames; ++f) {
        const float* frame = w.samples.data() + size_t(f) * frame_len;
        for (size_t i = 0; i < fb.fft_size; ++i) {
            buf[i] = (i < frame_len) ? std::complex<double>(double(frame[i]), 0.0)
                                     : std::complex<double>(0.0, 0.0);
        }
        fft_radix2(buf);

        for (int b = 0; b < cfg.n_bands; ++b) {
            double energy = 0.0;
            for (const auto& [k, weight] : fb.bands[size_t(b)]) {
                energy += weight * std::norm(buf[k]);
            }
            energy /= double(frame_len);  // mean band power per sample
            const double log_e = std::clamp(std::log(energy + 1e-10), cfg.log_clamp_lo, cfg.log_clamp_hi);
            norm_energy[size_t(b)] = (log_e - cfg.log_clamp_lo) / clamp_span;
        }

        for (int q = 0; q < cfg.n_q; ++q) {
            double v = 0.0;
            for (int b = 0; b < cfg.n_bands; ++b) v += mix[size_t(q)][size_t(b)] * norm_energy[size_t(b)];
            int code = int(std::floor(v * double(cfg.codebook_size)));
            code = std::clamp(code, 0, cfg.codebook_size - 1);
            out.codes.push_back(uint16_t(code));
        }
    }
    return out;
}

// ----------------------------- A2CC binary format -----------------------------

namespace {
constexpr char kCodesMagic[4] = {'A', '2', 'C', 'C'};
constexpr uint8_t kCodesVersion = 1;
}  // namespace

std::vector<uint8_t> codes_to_bytes(const AudioCodes& codes) {
    if (codes.n_q <= 0 || codes.codebook_size <= 0 || codes.codes.size() % size_t(codes.n_q) != 0) {
        throw Error(Err::ShapeMismatch, "inconsistent code matrix");
    }
    std::vector<uint8_t> out;
    out.insert(out.end(), kCodesMagic, kCodesMagic + 4);
    out.push_back(kCodesVersion);
    wr_u32(out, uint32_t(llround(codes.frame_rate_hz * 1000.0)));  // millihertz
    wr_u16(out, uint16_t(codes.n_q));
    wr_u16(out, uint16_t(codes.codebook_size));
    wr_u32(out, uint32_t(codes.n_frames()));
    for (uint16_t c : codes.codes) {
        if (c >= codes.codebook_size) throw Error(Err::ShapeMismatch, "code out of range");
        wr_u16(out, c);
    }
    return out;
}

AudioCodes codes_from_bytes(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kCodesMagic, 4) != 0) {
        throw Error(Err::BadMagic, "not an A2CC codes file");
    }
    size_t pos = 4;
    if (pos + 1 + 4 + 2 + 2 + 4 > bytes.size()) throw Error(Err::ShapeMismatch, "truncated codes file");
    const uint8_t version = bytes[pos++];
    if (version != kCodesVersion) {
        throw Error(Err::ShapeMismatch, "unsupported codes file version " + std::to_string(version));
    }
    AudioCodes out;
    out.frame_rate_hz = double(rd_u32(bytes.data() + pos)) / 1000.0;
    pos += 4;
    out.n_q = rd_u16(bytes.data() + pos);
    pos += 2;
    out.codebook_size = rd_u16(bytes.data() + pos);
    pos += 2;
    const uint32_t n_frames = rd_u32(bytes.data() + pos);
    pos += 4;
    if (out.n_q <= 0 || out.codebook_size <= 0) throw Error(Err::ShapeMismatch, "bad codes header");
    const size_t need = size_t(n_frames) * size_t(out.n_q) * 2;
    if (bytes.size() - pos != need) throw Error(Err::ShapeMismatch, "code matrix size mismatch");
    out.codes.reserve(size_t(n_frames) * size_t(out.n_q));
    for (size_t i = 0; i < need; i += 2) {
        const uint16_t c = rd_u16(bytes.data() + pos + i);
        if (c >= out.codebook_size) throw Error(Err::ShapeMismatch, "code value out of range");
        out.codes.push_back(c);
    }
    return out;
}

void write_codes_file(const AudioCodes& codes, const std::string& path) {
    const auto bytes = codes_to_bytes(codes);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Err::IoError, "cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw Error(Err::IoError, "write failed: " + path);
}

AudioCodes read_codes_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Err::IoError, "cannot open " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return codes_from_bytes(bytes);
}

}  // namespace chartgen
