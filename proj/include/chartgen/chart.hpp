#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "chartgen/common.hpp"

namespace chartgen {

enum class Difficulty : uint8_t { Easy, Medium, Hard, Expert };

const char* difficulty_name(Difficulty d);
std::optional<Difficulty> difficulty_from_name(std::string_view name);

// Button indices 0..4 are the five frets; index 7 in chart files is an open
// strum, carried as bit 5 of the fret mask.
inline constexpr int kNumFrets = 5;
inline constexpr int kOpenFileIndex = 7;
inline constexpr int kOpenBit = 5;

// Non-empty subset of {fret0..fret4, open}, packed into 6 bits.
struct FretSet {
    uint8_t mask = 0;

    static FretSet from_bit(int bit) { return FretSet{uint8_t(1u << bit)}; }
    bool empty() const { return mask == 0; }
    bool has(int bit) const { return (mask >> bit) & 1u; }
    bool has_open() const { return has(kOpenBit); }
    void add(int bit) { mask |= uint8_t(1u << bit); }
    void remove(int bit) { mask &= uint8_t(~(1u << bit)); }
    int count() const { return __builtin_popcount(mask); }
    bool operator==(const FretSet&) const = default;
};

struct NoteEvent {
    double time_s = 0.0;
    FretSet frets;
    double sustain_s = 0.0;
    bool hopo = false;
    bool tap = false;
    bool star_power = false;
};

struct TempoEvent {
    int64_t tick = 0;
    int64_t bpm_milli = 0;  // beats-per-minute * 1000
};

struct ChartMetadata {
    std::string instrument = "Single";
    Difficulty difficulty = Difficulty::Expert;
    // Every [Song] key except Resolution, in file order, values verbatim
    // (quotes included). Unknown keys survive round trips untouched.
    std::vector<std::pair<std::string, std::string>> song_keys;

    std::optional<std::string> get(std::string_view key) const;  // quotes stripped
    void set(std::string_view key, std::string_view value, bool quoted);

    std::string title() const { return get("Name").value_or(""); }
    std::string artist() const { return get("Artist").value_or(""); }
    std::string genre() const { return get("Genre").value_or(""); }
    // Global audio/chart clock offset in seconds; stored, never applied.
    std::optional<double> offset_s() const;
};

struct Chart {
    ChartMetadata metadata;
    int64_t resolution = 192;  // ticks per beat
    std::vector<TempoEvent> tempo_map;
    std::vector<NoteEvent> notes;  // sorted ascending by time_s

    // id used for train/validation splits and per-chart metrics
    std::string song_id() const;
    double last_onset_s() const { return notes.empty() ? 0.0 : notes.back().time_s; }
};

// ----------------------------- chart_io -----------------------------

// Tick -> seconds through the tempo map (seconds per beat = 60 / BPM,
// accumulated per tempo segment). Map must be non-empty with first event at
// tick 0 and strictly increasing ticks.
double ticks_to_seconds(int64_t tick, int64_t resolution, const std::vector<TempoEvent>& tempo_map);

// Inverse of ticks_to_seconds, rounded to the nearest tick.
int64_t seconds_to_ticks(double time_s, int64_t resolution, const std::vector<TempoEvent>& tempo_map);

struct ParseOptions {
    // Parse this section instead of the first instrument section found,
    // e.g. "ExpertSingle".
    std::string section;
    // When non-null, collects non-fatal parse warnings (skipped sections etc.).
    std::vector<std::string>* warnings = nullptr;
};

Chart parse_chart(std::string_view text, const ParseOptions& opts = {});
std::string serialize_chart(const Chart& chart);

Chart load_chart_file(const std::string& path, const ParseOptions& opts = {});
void save_chart_file(const Chart& chart, const std::string& path);

}  // namespace chartgen
