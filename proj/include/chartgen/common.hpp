#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace chartgen {

// ----------------------------- error handling -----------------------------
// One exception type for the whole library. The kind survives to the CLI,
// which prints it as a categorized error line.
enum class Err {
    MissingSection,
    MalformedLine,
    NonMonotonicTempo,
    UnknownFretIndex,
    EmptyFretSet,
    NotANoteToken,
    BinCollision,
    WindowEmpty,
    TooFewNotes,
    EmptyCorpus,
    UnsupportedEncoding,
    CorruptHeader,
    TooShort,
    BadMagic,
    ShapeMismatch,
    SequenceTooLong,
    MissingCodes,
    EmptyAfterFilter,
    DivergedLoss,
    BatchTooSmall,
    EmptyEvalSet,
    PolicyInvalid,
    InfeasibleDensity,
    IoError,
};

const char* err_name(Err kind);

class Error : public std::runtime_error {
public:
    Error(Err kind, const std::string& msg)
        : std::runtime_error(std::string(err_name(kind)) + ": " + msg), kind_(kind) {}

    Err kind() const { return kind_; }

private:
    Err kind_;
};

// ----------------------------- deterministic RNG -----------------------------
// splitmix64 core. Small, fast, and bit-reproducible across platforms, which
// std:: distributions are not.
struct Rng {
    uint64_t state;

    explicit Rng(uint64_t seed) : state(seed) {}

    uint64_t next_u64() {
        uint64_t z = (state += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1) with 53 bits
    double uniform01() { return double(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Box-Muller with cached spare
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u = 1.0 - uniform01();  // avoid log(0)
        double v = uniform01();
        double r = std::sqrt(-2.0 * std::log(u));
        double a = 6.283185307179586 * v;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // uniform integer in [0, n)
    uint64_t below(uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

    template <class T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = size_t(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Derive an independent stream from a base seed and a stream tag.
inline uint64_t derive_seed(uint64_t seed, uint64_t stream) {
    Rng r(seed ^ (0xA5A5A5A5DEADBEEFull + stream * 0x9E3779B97F4A7C15ull));
    return r.next_u64();
}

// ----------------------------- misc -----------------------------
inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

}  // namespace chartgen
