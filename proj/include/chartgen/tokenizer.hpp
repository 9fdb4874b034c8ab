#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "chartgen/chart.hpp"

namespace chartgen {

using TokenId = int32_t;

// 66-entry vocabulary: PAD, the 63 non-empty fret combinations (token id =
// 6-bit mask value), BOS, EOS.
namespace vocab {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kFirstNote = 1;
inline constexpr TokenId kLastNote = 63;
inline constexpr TokenId kBos = 64;
inline constexpr TokenId kEos = 65;
inline constexpr int kSize = 66;

inline bool is_note(TokenId id) { return id >= kFirstNote && id <= kLastNote; }
}  // namespace vocab

// How to treat combinations of the open note with regular frets, the extreme
// tail of the configuration distribution.
enum class OpenPlusFret : uint8_t {
    Keep,       // token as-is
    DropEvent,  // discard the whole event
    StripOpen,  // remove the open bit from mixed sets
};

struct TokenPolicy {
    OpenPlusFret open_plus_fret = OpenPlusFret::StripOpen;
    double rare_token_min_freq = 0.0;  // cutoff used by histogram reports
};

// Fret set -> token id under the policy. nullopt means the event was dropped
// by the policy. Throws EmptyFretSet on an empty input set.
std::optional<TokenId> encode_frets(FretSet frets, const TokenPolicy& policy = {});

// Exact inverse of encode_frets under policy Keep. Throws NotANoteToken for
// PAD/BOS/EOS or anything outside [1, 63].
FretSet decode_token(TokenId id);

struct TokenHistogram {
    struct Entry {
        TokenId id;
        int64_t count;
        double freq;  // over note tokens, sums to 1
    };
    std::vector<Entry> entries;        // sorted by descending frequency
    int64_t total = 0;                 // total note events counted
    std::vector<TokenId> rare_tokens;  // entries with freq < policy cutoff
};

TokenHistogram token_histogram(const std::vector<Chart>& charts, const TokenPolicy& policy = {});

// Note events of one chart as (time, token) pairs with the policy applied;
// dropped events are omitted.
struct TimedToken {
    double time_s;
    TokenId token;
};
std::vector<TimedToken> tokenize_chart(const Chart& chart, const TokenPolicy& policy = {});

}  // namespace chartgen
