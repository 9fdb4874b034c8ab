#include "chartgen/stats.hpp"

#include <algorithm>
#include <cctype>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

namespace chartgen {

double chart_duration_s(const Chart& chart) {
    if (chart.notes.empty()) return 0.0;
    const NoteEvent& last = chart.notes.back();
    return last.time_s + last.sustain_s;
}

namespace {

std::string to_lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::string grouped_genre(const std::string& genre) {
    const std::string g = to_lower(genre);
    if (g.find("rock") != std::string::npos) return "rock";
    if (g.find("metal") != std::string::npos) return "metal";
    return genre.empty() ? "(unknown)" : genre;
}

}  // namespace

CorpusReport corpus_report(const std::vector<Chart>& charts, const StatsOptions& opts) {
    if (charts.empty()) throw Error(Err::EmptyCorpus, "corpus_report needs at least one chart");

    CorpusReport report;
    report.n_charts = int64_t(charts.size());

    struct Acc {
        int64_t n = 0;
        double notes_sum = 0.0;
        double npm_sum = 0.0;
        double sustain_frac_sum = 0.0;
        double duration_min_sum = 0.0;
        int64_t n_capped = 0;  // charts entering the duration-based means
        int64_t n_outliers = 0;
    };
    std::map<Difficulty, Acc> accs;
    std::map<std::string, int64_t> genres;

    for (const Chart& c : charts) {
        Acc& a = accs[c.metadata.difficulty];
        a.n++;
        a.notes_sum += double(c.notes.size());
        int64_t sustained = 0;
        for (const NoteEvent& n : c.notes) sustained += (n.sustain_s > 0.0);
        if (!c.notes.empty()) a.sustain_frac_sum += double(sustained) / double(c.notes.size());

        const double dur_min = chart_duration_s(c) / 60.0;
        if (dur_min > opts.duration_cap_min) {
            a.n_outliers++;
        } else if (dur_min > 0.0) {
            a.n_capped++;
            a.duration_min_sum += dur_min;
            a.npm_sum += double(c.notes.size()) / dur_min;
        }
        genres[grouped_genre(c.metadata.genre())]++;
    }

    for (const auto& [diff, a] : accs) {
        DifficultyStats s;
        s.n_charts = a.n;
        s.share_pct = 100.0 * double(a.n) / double(report.n_charts);
        s.mean_notes_per_song = a.notes_sum / double(a.n);
        s.mean_notes_per_min = a.n_capped > 0 ? a.npm_sum / double(a.n_capped) : 0.0;
        s.sustain_pct = 100.0 * a.sustain_frac_sum / double(a.n);
        s.mean_duration_min = a.n_capped > 0 ? a.duration_min_sum / double(a.n_capped) : 0.0;
        s.n_outliers = a.n_outliers;
        report.per_difficulty[diff] = s;
    }

    report.genre_histogram.assign(genres.begin(), genres.end());
    std::stable_sort(report.genre_histogram.begin(), report.genre_histogram.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    return report;
}

std::string report_to_text(const CorpusReport& report) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(1);
    out << "charts: " << report.n_charts << "\n";
    out << "diff      share%  notes/song  notes/min  sustain%  dur(min)  outliers\n";
    for (const auto& [diff, s] : report.per_difficulty) {
        out << std::left << std::setw(10) << difficulty_name(diff) << std::right << std::setw(6)
            << s.share_pct << std::setw(12) << s.mean_notes_per_song << std::setw(11)
            << s.mean_notes_per_min << std::setw(10) << s.sustain_pct << std::setw(10)
            << s.mean_duration_min << std::setw(10) << s.n_outliers << "\n";
    }
    out << "genres:\n";
    for (const auto& [genre, count] : report.genre_histogram) {
        out << "  " << genre << "\t" << count << "\n";
    }
    return out.str();
}

std::string report_to_json(const CorpusReport& report) {
    nlohmann::json j;
    j["charts"] = report.n_charts;
    for (const auto& [diff, s] : report.per_difficulty) {
        nlohmann::json d;
        d["charts"] = s.n_charts;
        d["share_pct"] = s.share_pct;
        d["mean_notes_per_song"] = s.mean_notes_per_song;
        d["mean_notes_per_min"] = s.mean_notes_per_min;
        d["sustain_pct"] = s.sustain_pct;
        d["mean_duration_min"] = s.mean_duration_min;
        d["outliers"] = s.n_outliers;
        j["difficulty"][difficulty_name(diff)] = d;
    }
    for (const auto& [genre, count] : report.genre_histogram) {
        j["genres"][genre] = count;
    }
    return j.dump(2);
}

}  // namespace chartgen
