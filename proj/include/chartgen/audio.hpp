#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chartgen/common.hpp"

namespace chartgen {

struct Waveform {
    std::vector<float> samples;  // mono, in [-1, 1]
    int sample_rate_hz = 16000;

    double duration_s() const {
        return sample_rate_hz > 0 ? double(samples.size()) / double(sample_rate_hz) : 0.0;
    }
};

// Quantized audio codes: one integer per (frame, codebook).
struct AudioCodes {
    double frame_rate_hz = 50.0;
    int n_q = 4;
    int codebook_size = 1024;
    std::vector<uint16_t> codes;  // row-major, frames x n_q

    int64_t n_frames() const { return n_q > 0 ? int64_t(codes.size()) / n_q : 0; }
    uint16_t at(int64_t frame, int q) const { return codes[size_t(frame * n_q + q)]; }
    AudioCodes slice(int64_t frame_begin, int64_t frame_end) const;
};

// ----------------------------- WAV I/O -----------------------------
// 16-bit integer PCM only; stereo is averaged to mono, samples scaled by
// 1/32768.
Waveform read_wave(const std::string& path);
Waveform wave_from_bytes(const std::vector<uint8_t>& bytes);
void write_wave(const Waveform& w, const std::string& path);

// ----------------------------- stand-in codec -----------------------------
// Deterministic replacement for a pretrained neural codec: per frame, a DFT
// magnitude spectrum is pooled into triangular log-energy bands, projected to
// n_q scalars with a seed-derived mixing matrix, and uniformly quantized.
// Real codec output can be ingested through the codes file instead.
struct CodecConfig {
    double frame_rate_hz = 50.0;
    int n_q = 4;
    int codebook_size = 1024;
    int n_bands = 32;
    double band_lo_hz = 55.0;
    double band_hi_hz = 7040.0;
    double log_clamp_lo = -6.0;  // clamp range on band log-energies
    double log_clamp_hi = 2.0;
    uint64_t seed = 0;
};

AudioCodes pseudo_codec_encode(const Waveform& w, const CodecConfig& cfg = {});

// Geometrically spaced band centers of the codec filterbank, exposed so the
// synthetic corpus can place its tones on them.
std::vector<double> codec_band_centers_hz(const CodecConfig& cfg = {});

// ----------------------------- A2CC binary format -----------------------------
// magic "A2CC", version u8, frame rate u32 (millihertz), n_q u16,
// codebook_size u16, frame count u32, then row-major u16 codes;
// little-endian.
void write_codes_file(const AudioCodes& codes, const std::string& path);
AudioCodes read_codes_file(const std::string& path);

std::vector<uint8_t> codes_to_bytes(const AudioCodes& codes);
AudioCodes codes_from_bytes(const std::vector<uint8_t>& bytes);

}  // namespace chartgen
