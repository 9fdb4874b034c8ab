#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "chartgen/tokenizer.hpp"
#include "helpers.hpp"

using namespace chartgen;

TEST_CASE("encode_frets known values") {
    CHECK(*encode_frets(FretSet{0b000001}) == 1);   // green only
    CHECK(*encode_frets(FretSet{0b000011}) == 3);   // {0,1}
    CHECK(*encode_frets(FretSet{0b100000}) == 32);  // open
    TokenPolicy keep;
    keep.open_plus_fret = OpenPlusFret::Keep;
    CHECK(*encode_frets(FretSet{0b111111}, keep) == 63);
    CHECK_THROWS_AS(encode_frets(FretSet{}), Error);
}

TEST_CASE("bijection over all 63 subsets against brute-force enumeration") {
    // oracle: enumerate every non-empty subset of the 6 buttons and build the
    // mask by summing powers of two
    TokenPolicy keep;
    keep.open_plus_fret = OpenPlusFret::Keep;
    std::vector<bool> seen(64, false);
    int count = 0;
    for (int b0 = 0; b0 < 2; ++b0)
        for (int b1 = 0; b1 < 2; ++b1)
            for (int b2 = 0; b2 < 2; ++b2)
                for (int b3 = 0; b3 < 2; ++b3)
                    for (int b4 = 0; b4 < 2; ++b4)
                        for (int b5 = 0; b5 < 2; ++b5) {
                            const int expected = b0 + 2 * b1 + 4 * b2 + 8 * b3 + 16 * b4 + 32 * b5;
                            if (expected == 0) continue;
                            FretSet s;
                            if (b0) s.add(0);
                            if (b1) s.add(1);
                            if (b2) s.add(2);
                            if (b3) s.add(3);
                            if (b4) s.add(4);
                            if (b5) s.add(kOpenBit);
                            const TokenId id = *encode_frets(s, keep);
                            CHECK(id == expected);
                            CHECK(id >= vocab::kFirstNote);
                            CHECK(id <= vocab::kLastNote);
                            CHECK_FALSE(seen[size_t(id)]);
                            seen[size_t(id)] = true;
                            CHECK(decode_token(id) == s);
                            ++count;
                        }
    CHECK(count == 63);
    for (TokenId id = 1; id <= 63; ++id) CHECK(seen[size_t(id)]);
}

TEST_CASE("decode_token rejects specials") {
    CHECK_THROWS_AS(decode_token(vocab::kPad), Error);
    CHECK_THROWS_AS(decode_token(vocab::kBos), Error);
    CHECK_THROWS_AS(decode_token(vocab::kEos), Error);
    CHECK_THROWS_AS(decode_token(-1), Error);
    CHECK(decode_token(1).mask == 1);
    CHECK(decode_token(63).mask == 63);
}

TEST_CASE("open-plus-fret policies") {
    FretSet mixed;
    mixed.add(0);
    mixed.add(kOpenBit);

    TokenPolicy strip;
    strip.open_plus_fret = OpenPlusFret::StripOpen;
    CHECK(*encode_frets(mixed, strip) == 1);

    TokenPolicy keep;
    keep.open_plus_fret = OpenPlusFret::Keep;
    CHECK(*encode_frets(mixed, keep) == 33);

    TokenPolicy drop;
    drop.open_plus_fret = OpenPlusFret::DropEvent;
    CHECK_FALSE(encode_frets(mixed, drop).has_value());

    // pure open is never affected
    CHECK(*encode_frets(FretSet{0b100000}, strip) == 32);
    CHECK(*encode_frets(FretSet{0b100000}, drop) == 32);
}

TEST_CASE("token_histogram basics") {
    Chart chart;
    chart.resolution = 192;
    chart.tempo_map = {{0, 120000}};
    for (int i = 0; i < 3; ++i) {
        NoteEvent n;
        n.time_s = 0.1 * double(i);
        n.frets.add(i < 2 ? 0 : 1);
        chart.notes.push_back(n);
    }
    const TokenHistogram hist = token_histogram({chart});
    REQUIRE(hist.entries.size() == 2);
    CHECK(hist.entries[0].id == 1);
    CHECK(hist.entries[0].freq == doctest::Approx(2.0 / 3.0));
    CHECK(hist.entries[1].id == 2);
    CHECK(hist.entries[1].freq == doctest::Approx(1.0 / 3.0));

    Chart empty;
    empty.resolution = 192;
    empty.tempo_map = {{0, 120000}};
    CHECK(token_histogram({empty}).entries.empty());
}

TEST_CASE("63 distinct singleton charts give a uniform histogram") {
    std::vector<Chart> charts;
    for (int mask = 1; mask <= 63; ++mask) {
        Chart c;
        c.resolution = 192;
        c.tempo_map = {{0, 120000}};
        NoteEvent n;
        n.frets.mask = uint8_t(mask);
        c.notes.push_back(n);
        charts.push_back(c);
    }
    TokenPolicy keep;
    keep.open_plus_fret = OpenPlusFret::Keep;
    const TokenHistogram hist = token_histogram(charts, keep);
    REQUIRE(hist.entries.size() == 63);
    double sum = 0.0;
    for (const auto& e : hist.entries) {
        CHECK(e.freq == doctest::Approx(1.0 / 63.0));
        CHECK(e.freq >= 0.0);
        sum += e.freq;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("histogram frequencies sum to 1 on random charts") {
    Rng rng(5);
    std::vector<Chart> charts;
    for (int i = 0; i < 8; ++i) charts.push_back(test::make_random_chart(rng, 50));
    const TokenHistogram hist = token_histogram(charts);
    double sum = 0.0;
    for (const auto& e : hist.entries) sum += e.freq;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("rare token cutoff report") {
    std::vector<Chart> charts;
    Chart c;
    c.resolution = 192;
    c.tempo_map = {{0, 120000}};
    for (int i = 0; i < 99; ++i) {
        NoteEvent n;
        n.time_s = 0.05 * i;
        n.frets.add(0);
        c.notes.push_back(n);
    }
    NoteEvent rare;
    rare.time_s = 99 * 0.05;
    rare.frets.mask = 63;
    c.notes.push_back(rare);
    charts.push_back(c);

    TokenPolicy policy;
    policy.open_plus_fret = OpenPlusFret::Keep;
    policy.rare_token_min_freq = 0.05;
    const TokenHistogram hist = token_histogram(charts, policy);
    REQUIRE(hist.rare_tokens.size() == 1);
    CHECK(hist.rare_tokens[0] == 63);
}
