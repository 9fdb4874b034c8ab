#include "chartgen/metrics.hpp"

#include <cmath>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace chartgen {

std::vector<TokenId> argmax_predictions(const Mat& logits) {
    std::vector<TokenId> out(size_t(logits.rows));
    for (int t = 0; t < logits.rows; ++t) {
        const float* row = logits.row(t);
        int best = 0;
        for (int c = 1; c < logits.cols; ++c) {
            if (row[c] > row[best]) best = c;  // strict: ties keep the lowest id
        }
        out[size_t(t)] = best;
    }
    return out;
}

namespace {

struct ChartAcc {
    double ce_full = 0.0, ce_nonpad = 0.0;
    int64_t n_full = 0, n_nonpad = 0;
    int64_t correct_full = 0, correct_nonpad = 0;
};

MetricValue se_over_charts(double pooled, const std::vector<double>& per_chart) {
    MetricValue v;
    v.mean = pooled;
    const size_t n = per_chart.size();
    if (n >= 2) {
        double mean = 0.0;
        for (double x : per_chart) mean += x;
        mean /= double(n);
        double var = 0.0;
        for (double x : per_chart) var += (x - mean) * (x - mean);
        var /= double(n - 1);
        v.se = std::sqrt(var / double(n));
    }
    return v;
}

}  // namespace

EvalReport evaluate(const Transformer& model, const std::vector<SeqExample>& seqs, int workers) {
    if (seqs.empty()) throw Error(Err::EmptyEvalSet, "no sequences to evaluate");

    std::map<int, ChartAcc> charts;
    std::mutex mu;

    const int nw = std::max(1, std::min<int>(workers, int(seqs.size())));
    std::vector<std::thread> threads;
    auto work = [&](int w) {
        std::map<int, ChartAcc> local;
        for (size_t i = size_t(w); i < seqs.size(); i += size_t(nw)) {
            const SeqExample& ex = seqs[i];
            const AudioCodes* codes = ex.codes ? &*ex.codes : nullptr;
            const auto trace = model.forward(ex.input, codes, false, 0);
            const SeqLoss loss = token_loss(trace.logits, ex.target, 1.0);
            const std::vector<TokenId> preds = argmax_predictions(trace.logits);
            ChartAcc& acc = local[ex.chart_idx];
            for (size_t t = 0; t < ex.target.size(); ++t) {
                const bool correct = preds[t] == ex.target[t];
                acc.ce_full += loss.per_pos[t];
                acc.n_full++;
                acc.correct_full += correct;
                if (ex.target[t] != vocab::kPad) {
                    acc.ce_nonpad += loss.per_pos[t];
                    acc.n_nonpad++;
                    acc.correct_nonpad += correct;
                }
            }
        }
        std::lock_guard<std::mutex> lock(mu);
        for (const auto& [idx, acc] : local) {
            ChartAcc& g = charts[idx];
            g.ce_full += acc.ce_full;
            g.ce_nonpad += acc.ce_nonpad;
            g.n_full += acc.n_full;
            g.n_nonpad += acc.n_nonpad;
            g.correct_full += acc.correct_full;
            g.correct_nonpad += acc.correct_nonpad;
        }
    };
    if (nw <= 1) {
        work(0);
    } else {
        for (int w = 0; w < nw; ++w) threads.emplace_back(work, w);
        for (auto& t : threads) t.join();
    }

    EvalReport report;
    report.n_charts = int64_t(charts.size());

    double ce_full = 0.0, ce_nonpad = 0.0;
    int64_t n_full = 0, n_nonpad = 0, correct_full = 0, correct_nonpad = 0;
    std::vector<double> ppl_full_c, acc_full_c, ppl_np_c, acc_np_c;
    for (const auto& [idx, a] : charts) {
        ce_full += a.ce_full;
        ce_nonpad += a.ce_nonpad;
        n_full += a.n_full;
        n_nonpad += a.n_nonpad;
        correct_full += a.correct_full;
        correct_nonpad += a.correct_nonpad;
        if (a.n_full > 0) {
            ppl_full_c.push_back(std::exp(a.ce_full / double(a.n_full)));
            acc_full_c.push_back(double(a.correct_full) / double(a.n_full));
        }
        if (a.n_nonpad > 0) {
            ppl_np_c.push_back(std::exp(a.ce_nonpad / double(a.n_nonpad)));
            acc_np_c.push_back(double(a.correct_nonpad) / double(a.n_nonpad));
        }
    }
    if (n_full == 0) throw Error(Err::EmptyEvalSet, "evaluation set has no target positions");

    report.n_positions_full = n_full;
    report.n_positions_nonpad = n_nonpad;
    report.perplexity_full = se_over_charts(std::exp(ce_full / double(n_full)), ppl_full_c);
    report.accuracy_full = se_over_charts(double(correct_full) / double(n_full), acc_full_c);
    if (n_nonpad > 0) {
        report.perplexity_nonpad = se_over_charts(std::exp(ce_nonpad / double(n_nonpad)), ppl_np_c);
        report.accuracy_nonpad = se_over_charts(double(correct_nonpad) / double(n_nonpad), acc_np_c);
    }
    return report;
}

std::string eval_report_to_text(const EvalReport& r) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(4);
    out << "charts: " << r.n_charts << "  positions: " << r.n_positions_full
        << " (non-pad: " << r.n_positions_nonpad << ")\n";
    out << "perplexity_full   " << r.perplexity_full.mean << " +/- " << r.perplexity_full.se << "\n";
    out << "accuracy_full     " << r.accuracy_full.mean << " +/- " << r.accuracy_full.se << "\n";
    if (r.perplexity_nonpad) {
        out << "perplexity_nonpad " << r.perplexity_nonpad->mean << " +/- " << r.perplexity_nonpad->se
            << "\n";
        out << "accuracy_nonpad   " << r.accuracy_nonpad->mean << " +/- " << r.accuracy_nonpad->se
            << "\n";
    } else {
        out << "perplexity_nonpad (absent: no non-pad targets)\n";
        out << "accuracy_nonpad   (absent: no non-pad targets)\n";
    }
    return out.str();
}

std::string eval_report_to_json(const EvalReport& r) {
    nlohmann::json j;
    j["charts"] = r.n_charts;
    j["positions_full"] = r.n_positions_full;
    j["positions_nonpad"] = r.n_positions_nonpad;
    j["perplexity_full"] = {{"mean", r.perplexity_full.mean}, {"se", r.perplexity_full.se}};
    j["accuracy_full"] = {{"mean", r.accuracy_full.mean}, {"se", r.accuracy_full.se}};
    if (r.perplexity_nonpad) {
        j["perplexity_nonpad"] = {{"mean", r.perplexity_nonpad->mean}, {"se", r.perplexity_nonpad->se}};
        j["accuracy_nonpad"] = {{"mean", r.accuracy_nonpad->mean}, {"se", r.accuracy_nonpad->se}};
    } else {
        j["perplexity_nonpad"] = nullptr;
        j["accuracy_nonpad"] = nullptr;
    }
    return j.dump(2);
}

}  // namespace chartgen
