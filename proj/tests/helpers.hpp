#pragma once

#include <vector>

#include "chartgen/chart.hpp"
#include "chartgen/common.hpp"

namespace chartgen::test {

// Random chart with IOI >= min_ioi_s, single or chord notes, random flags.
inline Chart make_random_chart(Rng& rng, int n_notes, double min_ioi_s = 0.05,
                               double max_extra_gap_s = 0.3) {
    Chart chart;
    chart.resolution = 192;
    chart.tempo_map = {{0, 120000}};
    chart.metadata.set("Name", "random-" + std::to_string(rng.next_u64() % 100000), true);
    chart.metadata.set("Artist", "test", true);
    chart.metadata.set("Genre", "testcore", true);

    double t = rng.uniform(0.0, 0.2);
    for (int i = 0; i < n_notes; ++i) {
        NoteEvent note;
        note.time_s = t;
        note.frets.add(int(rng.below(6)));
        if (rng.uniform01() < 0.3) note.frets.add(int(rng.below(6)));
        if (rng.uniform01() < 0.2) note.sustain_s = rng.uniform(0.05, 0.5);
        note.hopo = rng.uniform01() < 0.1;
        note.tap = rng.uniform01() < 0.1;
        note.star_power = rng.uniform01() < 0.15;
        chart.notes.push_back(note);
        t += min_ioi_s + rng.uniform01() * max_extra_gap_s;
    }
    return chart;
}

}  // namespace chartgen::test
