#include "beamsel/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "beamsel/dataset_io.hpp"
#include "beamsel/errors.hpp"

namespace beamsel {

LabelVector make_labels(const std::vector<double>& y, LabelNorm norm) {
    if (y.empty()) throw ConfigError("make_labels: empty gain vector");
    double sum_sq = 0.0, sum_abs = 0.0;
    int best = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] < 0.0 || !std::isfinite(y[i]))
            throw ConfigError("make_labels: gains must be finite and nonnegative");
        sum_sq += y[i] * y[i];
        sum_abs += y[i];
        if (y[i] > y[best]) best = static_cast<int>(i);
    }
    if (sum_abs == 0.0) throw ConfigError("make_labels: all-zero gain vector (degenerate record)");

    LabelVector out;
    out.y = y;
    out.best = best;
    const double denom = norm == LabelNorm::Euclidean ? std::sqrt(sum_sq) : sum_abs;
    out.ybar.resize(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) out.ybar[i] = y[i] / denom;
    out.ystar.assign(y.size(), 0.0);
    out.ystar[best] = 1.0;
    return out;
}

double cross_entropy(const std::vector<double>& p, const std::vector<double>& q, double eps) {
    if (p.size() != q.size()) throw ShapeError("cross_entropy: length mismatch");
    double loss = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] < 0.0) throw ConfigError("cross_entropy: negative target entry");
        if (p[i] == 0.0) continue;
        loss -= p[i] * std::log(std::max(q[i], eps));
    }
    return loss;
}

double kd_loss(const LabelVector& labels, const std::vector<double>& yhat, const LossConfig& cfg) {
    if (cfg.beta < 0.0 || cfg.beta > 1.0) throw ConfigError("kd_loss: beta must be in [0,1]");
    return (1.0 - cfg.beta) * cross_entropy(labels.ystar, yhat, cfg.epsilon) +
           cfg.beta * cross_entropy(labels.ybar, yhat, cfg.epsilon);
}

std::vector<int> topk_select(const std::vector<double>& yhat, int k) {
    const int n = static_cast<int>(yhat.size());
    if (k < 1 || k > n) throw ConfigError("topk_select: k out of range");
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (yhat[a] != yhat[b]) return yhat[a] > yhat[b];
        return a < b;
    });
    idx.resize(k);
    return idx;
}

double topk_accuracy(const std::vector<ScoredRecord>& records, int k) {
    if (records.empty()) throw ConfigError("topk_accuracy: empty evaluation set");
    int hits = 0;
    for (const ScoredRecord& r : records) {
        auto sel = topk_select(r.yhat, k);
        if (std::find(sel.begin(), sel.end(), r.best) != sel.end()) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(records.size());
}

namespace {

double rate(double gain) { return std::log2(1.0 + gain); }

// Accumulates the two expectations of the throughput ratio over a subset.
struct ThroughputAccum {
    double num = 0.0, den = 0.0;
    int count = 0;

    void add(const ScoredRecord& r, const std::vector<int>& sel) {
        double best_rate = 0.0;
        for (int s : sel) best_rate = std::max(best_rate, rate(r.y[s]));
        num += best_rate;
        den += rate(r.y[r.best]);
        ++count;
    }
    double ratio() const {
        if (count == 0 || den == 0.0) throw ConfigError("throughput_ratio: no usable records");
        return num / den;
    }
};

}  // namespace

double throughput_ratio(const std::vector<ScoredRecord>& records, int k) {
    if (records.empty()) throw ConfigError("throughput_ratio: empty evaluation set");
    ThroughputAccum acc;
    for (const ScoredRecord& r : records) {
        if (r.degenerate) continue;
        acc.add(r, topk_select(r.yhat, k));
    }
    return acc.ratio();
}

const MetricsRow& MetricsReport::row_for(int k) const {
    for (const MetricsRow& r : rows) {
        if (r.k == k) return r;
    }
    throw ConfigError("metrics report has no row for k=" + std::to_string(k));
}

std::string MetricsReport::to_csv() const {
    std::ostringstream os;
    os << "k,accuracy,throughput_ratio,accuracy_los,accuracy_nlos,throughput_los,throughput_nlos\n";
    for (const MetricsRow& r : rows) {
        os << r.k << "," << format_double(r.accuracy) << "," << format_double(r.throughput) << ","
           << format_double(r.accuracy_los) << "," << format_double(r.accuracy_nlos) << ","
           << format_double(r.throughput_los) << "," << format_double(r.throughput_nlos) << "\n";
    }
    return os.str();
}

MetricsReport compute_metrics(const std::vector<ScoredRecord>& records,
                              const std::vector<int>& ks) {
    if (records.empty()) throw ConfigError("compute_metrics: empty evaluation set");
    MetricsReport report;
    report.samples = static_cast<int>(records.size());
    for (const ScoredRecord& r : records) {
        if (r.los) ++report.los_samples;
        if (r.degenerate) ++report.degenerate_samples;
    }

    for (int k : ks) {
        MetricsRow row;
        row.k = k;
        int hits = 0, hits_los = 0, hits_nlos = 0, n_los = 0, n_nlos = 0;
        ThroughputAccum t_all, t_los, t_nlos;
        for (const ScoredRecord& r : records) {
            auto sel = topk_select(r.yhat, k);
            const bool hit = std::find(sel.begin(), sel.end(), r.best) != sel.end();
            hits += hit;
            if (r.los) {
                ++n_los;
                hits_los += hit;
            } else {
                ++n_nlos;
                hits_nlos += hit;
            }
            if (!r.degenerate) {
                t_all.add(r, sel);
                (r.los ? t_los : t_nlos).add(r, sel);
            }
        }
        row.accuracy = static_cast<double>(hits) / report.samples;
        row.accuracy_los = n_los ? static_cast<double>(hits_los) / n_los : 0.0;
        row.accuracy_nlos = n_nlos ? static_cast<double>(hits_nlos) / n_nlos : 0.0;
        row.throughput = t_all.count ? t_all.ratio() : 0.0;
        row.throughput_los = t_los.count ? t_los.ratio() : 0.0;
        row.throughput_nlos = t_nlos.count ? t_nlos.ratio() : 0.0;
        report.rows.push_back(row);
    }
    return report;
}

}  // namespace beamsel
