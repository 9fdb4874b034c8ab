#include "chartgen/tokenizer.hpp"

#include <algorithm>
#include <array>

namespace chartgen {

std::optional<TokenId> encode_frets(FretSet frets, const TokenPolicy& policy) {
    if (frets.empty()) throw Error(Err::EmptyFretSet, "cannot encode an empty fret set");
    if (frets.has_open() && frets.count() > 1) {
        switch (policy.open_plus_fret) {
            case OpenPlusFret::Keep: break;
            case OpenPlusFret::DropEvent: return std::nullopt;
            case OpenPlusFret::StripOpen: frets.remove(kOpenBit); break;
        }
    }
    return TokenId(frets.mask);
}

FretSet decode_token(TokenId id) {
    if (!vocab::is_note(id)) {
        throw Error(Err::NotANoteToken, "token " + std::to_string(id) + " is not a note");
    }
    return FretSet{uint8_t(id)};
}

std::vector<TimedToken> tokenize_chart(const Chart& chart, const TokenPolicy& policy) {
    std::vector<TimedToken> out;
    out.reserve(chart.notes.size());
    for (const NoteEvent& note : chart.notes) {
        if (auto id = encode_frets(note.frets, policy)) {
            out.push_back({note.time_s, *id});
        }
    }
    return out;
}

TokenHistogram token_histogram(const std::vector<Chart>& charts, const TokenPolicy& policy) {
    TokenHistogram hist;
    std::array<int64_t, vocab::kSize> counts{};
    for (const Chart& chart : charts) {
        for (const TimedToken& t : tokenize_chart(chart, policy)) {
            counts[size_t(t.token)]++;
            hist.total++;
        }
    }
    for (TokenId id = vocab::kFirstNote; id <= vocab::kLastNote; ++id) {
        int64_t c = counts[size_t(id)];
        if (c == 0) continue;
        hist.entries.push_back({id, c, double(c) / double(hist.total)});
    }
    std::stable_sort(hist.entries.begin(), hist.entries.end(),
                     [](const auto& a, const auto& b) { return a.count > b.count; });
    for (const auto& e : hist.entries) {
        if (e.freq < policy.rare_token_min_freq) hist.rare_tokens.push_back(e.id);
    }
    return hist;
}

}  // namespace chartgen
