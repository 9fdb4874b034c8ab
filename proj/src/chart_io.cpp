#include "chartgen/chart.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace chartgen {

const char* err_name(Err kind) {
    switch (kind) {
        case Err::MissingSection: return "MissingSection";
        case Err::MalformedLine: return "MalformedLine";
        case Err::NonMonotonicTempo: return "NonMonotonicTempo";
        case Err::UnknownFretIndex: return "UnknownFretIndex";
        case Err::EmptyFretSet: return "EmptyFretSet";
        case Err::NotANoteToken: return "NotANoteToken";
        case Err::BinCollision: return "BinCollision";
        case Err::WindowEmpty: return "WindowEmpty";
        case Err::TooFewNotes: return "TooFewNotes";
        case Err::EmptyCorpus: return "EmptyCorpus";
        case Err::UnsupportedEncoding: return "UnsupportedEncoding";
        case Err::CorruptHeader: return "CorruptHeader";
        case Err::TooShort: return "TooShort";
        case Err::BadMagic: return "BadMagic";
        case Err::ShapeMismatch: return "ShapeMismatch";
        case Err::SequenceTooLong: return "SequenceTooLong";
        case Err::MissingCodes: return "MissingCodes";
        case Err::EmptyAfterFilter: return "EmptyAfterFilter";
        case Err::DivergedLoss: return "DivergedLoss";
        case Err::BatchTooSmall: return "BatchTooSmall";
        case Err::EmptyEvalSet: return "EmptyEvalSet";
        case Err::PolicyInvalid: return "PolicyInvalid";
        case Err::InfeasibleDensity: return "InfeasibleDensity";
        case Err::IoError: return "IoError";
    }
    return "UnknownError";
}

const char* difficulty_name(Difficulty d) {
    switch (d) {
        case Difficulty::Easy: return "Easy";
        case Difficulty::Medium: return "Medium";
        case Difficulty::Hard: return "Hard";
        case Difficulty::Expert: return "Expert";
    }
    return "Expert";
}

std::optional<Difficulty> difficulty_from_name(std::string_view name) {
    if (name == "Easy") return Difficulty::Easy;
    if (name == "Medium") return Difficulty::Medium;
    if (name == "Hard") return Difficulty::Hard;
    if (name == "Expert") return Difficulty::Expert;
    return std::nullopt;
}

namespace {

std::string strip_quotes(std::string_view v) {
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') {
        return std::string(v.substr(1, v.size() - 2));
    }
    return std::string(v);
}

std::string_view trim(std::string_view s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

void validate_tempo_map(const std::vector<TempoEvent>& tempo_map) {
    if (tempo_map.empty()) {
        throw Error(Err::NonMonotonicTempo, "tempo map is empty");
    }
    if (tempo_map.front().tick != 0) {
        throw Error(Err::NonMonotonicTempo, "first tempo event must be at tick 0");
    }
    for (size_t i = 0; i < tempo_map.size(); ++i) {
        if (tempo_map[i].bpm_milli <= 0) {
            throw Error(Err::NonMonotonicTempo, "non-positive BPM in tempo map");
        }
        if (i > 0 && tempo_map[i].tick <= tempo_map[i - 1].tick) {
            throw Error(Err::NonMonotonicTempo, "tempo ticks must be strictly increasing");
        }
    }
}

}  // namespace

std::optional<std::string> ChartMetadata::get(std::string_view key) const {
    for (const auto& [k, v] : song_keys) {
        if (k == key) return strip_quotes(v);
    }
    return std::nullopt;
}

void ChartMetadata::set(std::string_view key, std::string_view value, bool quoted) {
    std::string stored = quoted ? "\"" + std::string(value) + "\"" : std::string(value);
    for (auto& [k, v] : song_keys) {
        if (k == key) {
            v = stored;
            return;
        }
    }
    song_keys.emplace_back(std::string(key), stored);
}

std::optional<double> ChartMetadata::offset_s() const {
    auto v = get("Offset");
    if (!v) return std::nullopt;
    try {
        return std::stod(*v);
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

std::string Chart::song_id() const {
    return metadata.title() + "|" + metadata.artist() + "|" + difficulty_name(metadata.difficulty) +
           "|" + metadata.instrument;
}

double ticks_to_seconds(int64_t tick, int64_t resolution, const std::vector<TempoEvent>& tempo_map) {
    validate_tempo_map(tempo_map);
    double seconds = 0.0;
    for (size_t i = 0; i < tempo_map.size(); ++i) {
        const int64_t seg_start = tempo_map[i].tick;
        if (tick <= seg_start) break;
        const int64_t seg_end = (i + 1 < tempo_map.size()) ? std::min(tempo_map[i + 1].tick, tick) : tick;
        const double beats = double(seg_end - seg_start) / double(resolution);
        const double sec_per_beat = 60.0 / (double(tempo_map[i].bpm_milli) / 1000.0);
        seconds += beats * sec_per_beat;
    }
    return seconds;
}

int64_t seconds_to_ticks(double time_s, int64_t resolution, const std::vector<TempoEvent>& tempo_map) {
    validate_tempo_map(tempo_map);
    double seg_start_s = 0.0;
    for (size_t i = 0; i < tempo_map.size(); ++i) {
        const double sec_per_beat = 60.0 / (double(tempo_map[i].bpm_milli) / 1000.0);
        double seg_end_s = std::numeric_limits<double>::infinity();
        if (i + 1 < tempo_map.size()) {
            const double beats = double(tempo_map[i + 1].tick - tempo_map[i].tick) / double(resolution);
            seg_end_s = seg_start_s + beats * sec_per_beat;
        }
        if (time_s < seg_end_s || i + 1 == tempo_map.size()) {
            const double beats = (time_s - seg_start_s) / sec_per_beat;
            return tempo_map[i].tick + llround(beats * double(resolution));
        }
        seg_start_s = seg_end_s;
    }
    return 0;  // unreachable
}

namespace {

// Per-tick accumulator for an instrument section.
struct RawTickEvent {
    uint8_t fret_mask = 0;
    int64_t sustain_ticks = 0;
    bool forced = false;
    bool tap = false;
};

struct RawSection {
    std::string name;
    std::map<int64_t, RawTickEvent> events;
    std::vector<std::pair<int64_t, int64_t>> star_phrases;  // (tick, length)
};

constexpr int kForcedIndex = 5;
constexpr int kTapIndex = 6;

}  // namespace

Chart parse_chart(std::string_view text, const ParseOptions& opts) {
    Chart chart;
    chart.resolution = 0;

    auto warn = [&](const std::string& msg) {
        if (opts.warnings) opts.warnings->push_back(msg);
    };

    std::istringstream in{std::string(text)};
    std::string raw_line;
    int line_no = 0;

    bool saw_song = false;
    bool saw_sync = false;
    bool instrument_done = false;
    std::vector<TempoEvent> tempo_map;
    RawSection section;

    auto malformed = [&](const std::string& what) {
        throw Error(Err::MalformedLine, "line " + std::to_string(line_no) + ": " + what);
    };

    while (std::getline(in, raw_line)) {
        ++line_no;
        std::string_view line = trim(raw_line);
        if (line.empty()) continue;
        if (line.front() != '[') malformed("expected section header");
        size_t close = line.find(']');
        if (close == std::string_view::npos) malformed("unterminated section header");
        std::string name(line.substr(1, close - 1));

        // body is wrapped in { ... }
        if (!std::getline(in, raw_line)) malformed("missing '{' after section header");
        ++line_no;
        if (trim(raw_line) != "{") malformed("expected '{'");

        enum class Kind { Song, Sync, Instrument, Skip } kind = Kind::Skip;
        Difficulty diff = Difficulty::Expert;
        std::string instrument;
        if (name == "Song") {
            kind = Kind::Song;
            saw_song = true;
        } else if (name == "SyncTrack") {
            kind = Kind::Sync;
            saw_sync = true;
        } else {
            for (Difficulty d : {Difficulty::Easy, Difficulty::Medium, Difficulty::Hard, Difficulty::Expert}) {
                std::string prefix = difficulty_name(d);
                if (name.size() > prefix.size() && name.compare(0, prefix.size(), prefix) == 0) {
                    kind = Kind::Instrument;
                    diff = d;
                    instrument = name.substr(prefix.size());
                    break;
                }
            }
            if (kind == Kind::Skip) warn("skipping unknown section [" + name + "]");
        }

        const bool want_instrument =
            kind == Kind::Instrument && !instrument_done && (opts.section.empty() || opts.section == name);
        if (kind == Kind::Instrument && !want_instrument) kind = Kind::Skip;

        if (want_instrument) {
            section = RawSection{};
            section.name = name;
            chart.metadata.difficulty = diff;
            chart.metadata.instrument = instrument;
        }

        bool closed = false;
        while (std::getline(in, raw_line)) {
            ++line_no;
            std::string_view body = trim(raw_line);
            if (body.empty()) continue;
            if (body == "}") {
                closed = true;
                break;
            }
            if (kind == Kind::Skip) continue;

            size_t eq = body.find('=');
            if (eq == std::string_view::npos) malformed("expected 'key = value'");
            std::string key(trim(body.substr(0, eq)));
            std::string value(trim(body.substr(eq + 1)));
            if (key.empty()) malformed("empty key");

            if (kind == Kind::Song) {
                if (key == "Resolution") {
                    try {
                        chart.resolution = std::stoll(value);
                    } catch (const std::exception&) {
                        malformed("bad Resolution value");
                    }
                    if (chart.resolution <= 0) malformed("Resolution must be positive");
                } else {
                    chart.metadata.song_keys.emplace_back(key, value);
                }
                continue;
            }

            // Sync and instrument lines share the "<tick> = <type> ..." shape.
            int64_t tick = 0;
            try {
                size_t pos = 0;
                tick = std::stoll(key, &pos);
                if (pos != key.size()) malformed("bad tick");
            } catch (const Error&) {
                throw;
            } catch (const std::exception&) {
                malformed("bad tick");
            }
            if (tick < 0) malformed("negative tick");

            std::istringstream ev(value);
            std::string type;
            ev >> type;

            if (kind == Kind::Sync) {
                if (type == "B") {
                    int64_t bpm_milli = 0;
                    if (!(ev >> bpm_milli)) malformed("bad tempo value");
                    if (bpm_milli <= 0) malformed("tempo must be positive");
                    tempo_map.push_back({tick, bpm_milli});
                } else {
                    // time signatures and friends are irrelevant downstream
                    warn("line " + std::to_string(line_no) + ": skipping sync event '" + type + "'");
                }
                continue;
            }

            // instrument section
            if (type == "N") {
                int idx = 0;
                int64_t len = 0;
                if (!(ev >> idx >> len)) malformed("bad note line");
                if (len < 0) malformed("negative sustain");
                RawTickEvent& e = section.events[tick];
                if (idx >= 0 && idx < kNumFrets) {
                    e.fret_mask |= uint8_t(1u << idx);
                    e.sustain_ticks = std::max(e.sustain_ticks, len);
                } else if (idx == kOpenFileIndex) {
                    e.fret_mask |= uint8_t(1u << kOpenBit);
                    e.sustain_ticks = std::max(e.sustain_ticks, len);
                } else if (idx == kForcedIndex) {
                    e.forced = true;
                } else if (idx == kTapIndex) {
                    e.tap = true;
                } else {
                    throw Error(Err::UnknownFretIndex,
                                "line " + std::to_string(line_no) + ": fret index " + std::to_string(idx));
                }
            } else if (type == "S") {
                int marker = 0;
                int64_t len = 0;
                if (!(ev >> marker >> len)) malformed("bad phrase line");
                if (marker == 2) {
                    section.star_phrases.emplace_back(tick, len);
                } else {
                    warn("line " + std::to_string(line_no) + ": skipping phrase marker S " +
                         std::to_string(marker));
                }
            } else {
                malformed("unknown event type '" + type + "'");
            }
        }
        if (!closed) malformed("unterminated section [" + name + "]");
        if (want_instrument) instrument_done = true;
    }

    if (!saw_song) throw Error(Err::MissingSection, "no [Song] section");
    if (chart.resolution <= 0) throw Error(Err::MissingSection, "no Resolution in [Song]");
    if (!saw_sync) throw Error(Err::MissingSection, "no [SyncTrack] section");
    if (!instrument_done) {
        throw Error(Err::MissingSection,
                    opts.section.empty() ? "no instrument section" : "no section [" + opts.section + "]");
    }

    if (tempo_map.empty() || tempo_map.front().tick != 0) {
        warn("sync track has no tempo at tick 0, assuming 120 BPM");
        tempo_map.insert(tempo_map.begin(), TempoEvent{0, 120000});
    }
    validate_tempo_map(tempo_map);
    chart.tempo_map = std::move(tempo_map);

    for (const auto& [tick, e] : section.events) {
        if (e.fret_mask == 0) continue;  // stray flag marker without a note
        NoteEvent note;
        note.time_s = ticks_to_seconds(tick, chart.resolution, chart.tempo_map);
        note.frets.mask = e.fret_mask;
        note.sustain_s =
            ticks_to_seconds(tick + e.sustain_ticks, chart.resolution, chart.tempo_map) - note.time_s;
        note.hopo = e.forced;
        note.tap = e.tap;
        for (const auto& [pt, plen] : section.star_phrases) {
            if (tick >= pt && tick <= pt + plen) {
                note.star_power = true;
                break;
            }
        }
        chart.notes.push_back(note);
    }
    // std::map iteration is tick-ordered and ticks_to_seconds is monotone,
    // so notes are already sorted; keep the sort as a guard for equal times.
    std::stable_sort(chart.notes.begin(), chart.notes.end(),
                     [](const NoteEvent& a, const NoteEvent& b) { return a.time_s < b.time_s; });
    return chart;
}

std::string serialize_chart(const Chart& chart) {
    std::ostringstream out;
    out << "[Song]\n{\n";
    out << "  Resolution = " << chart.resolution << "\n";
    for (const auto& [k, v] : chart.metadata.song_keys) {
        out << "  " << k << " = " << v << "\n";
    }
    out << "}\n";

    out << "[SyncTrack]\n{\n";
    std::vector<TempoEvent> tempo_map = chart.tempo_map;
    if (tempo_map.empty()) tempo_map.push_back({0, 120000});
    validate_tempo_map(tempo_map);
    for (const auto& ev : tempo_map) {
        out << "  " << ev.tick << " = B " << ev.bpm_milli << "\n";
    }
    out << "}\n";

    out << "[" << difficulty_name(chart.metadata.difficulty) << chart.metadata.instrument << "]\n{\n";

    // Star-power phrases: maximal runs of flagged notes, inclusive tick span.
    struct Line {
        int64_t tick;
        std::string text;
    };
    std::vector<Line> lines;
    int64_t phrase_start = -1, phrase_end = -1;
    auto flush_phrase = [&]() {
        if (phrase_start >= 0) {
            lines.push_back({phrase_start,
                             "S 2 " + std::to_string(phrase_end - phrase_start)});
            phrase_start = phrase_end = -1;
        }
    };

    for (const NoteEvent& note : chart.notes) {
        if (note.frets.empty()) throw Error(Err::EmptyFretSet, "note with no frets");
        const int64_t tick = seconds_to_ticks(note.time_s, chart.resolution, chart.tempo_map);
        const int64_t end_tick =
            seconds_to_ticks(note.time_s + note.sustain_s, chart.resolution, chart.tempo_map);
        const int64_t len = std::max<int64_t>(0, end_tick - tick);
        for (int bit = 0; bit < kNumFrets; ++bit) {
            if (note.frets.has(bit)) {
                lines.push_back({tick, "N " + std::to_string(bit) + " " + std::to_string(len)});
            }
        }
        if (note.frets.has_open()) {
            lines.push_back({tick, "N 7 " + std::to_string(len)});
        }
        if (note.hopo) lines.push_back({tick, "N 5 0"});
        if (note.tap) lines.push_back({tick, "N 6 0"});

        if (note.star_power) {
            if (phrase_start < 0) phrase_start = tick;
            phrase_end = tick;
        } else {
            flush_phrase();
        }
    }
    flush_phrase();

    std::stable_sort(lines.begin(), lines.end(),
                     [](const Line& a, const Line& b) { return a.tick < b.tick; });
    for (const Line& l : lines) {
        out << "  " << l.tick << " = " << l.text << "\n";
    }
    out << "}\n";
    return out.str();
}

Chart load_chart_file(const std::string& path, const ParseOptions& opts) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Err::IoError, "cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_chart(buf.str(), opts);
}

void save_chart_file(const Chart& chart, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(Err::IoError, "cannot open " + path + " for writing");
    out << serialize_chart(chart);
    if (!out) throw Error(Err::IoError, "write failed: " + path);
}

}  // namespace chartgen
