#pragma once

#include <string>
#include <vector>

namespace beamsel {

// Labels, the distillation-mixed loss and the top-k evaluation metrics.

enum class LabelNorm { Euclidean, L1 };

struct LabelVector {
    std::vector<double> y;      // raw nonnegative gains
    std::vector<double> ybar;   // y scaled to unit norm (soft target)
    std::vector<double> ystar;  // one-hot at the argmax (hard target)
    int best = 0;
};

struct LossConfig {
    double beta = 0.8;    // weight of the soft-label term
    double epsilon = 1e-12;  // floor for log arguments
};

// ybar = y / ||y|| (Euclidean by default, L1 behind the flag for sensitivity
// checks); ystar is one-hot at the lowest-index argmax. All-zero y is
// rejected; degenerate records must be excluded upstream.
LabelVector make_labels(const std::vector<double>& y, LabelNorm norm = LabelNorm::Euclidean);

// -sum_i p_i log(max(q_i, eps)); 0 * log(0) contributes 0. p must be
// nonnegative but need not sum to one.
double cross_entropy(const std::vector<double>& p, const std::vector<double>& q,
                     double eps = 1e-12);

// (1-beta) * H(ystar, yhat) + beta * H(ybar, yhat).
double kd_loss(const LabelVector& labels, const std::vector<double>& yhat, const LossConfig& cfg);

// Indices of the k largest scores, descending, ties toward the lowest index.
std::vector<int> topk_select(const std::vector<double>& yhat, int k);

// One evaluated sample: the record's ground truth plus the predicted scores.
struct ScoredRecord {
    std::vector<double> y;
    int best = 0;
    bool los = false;
    bool degenerate = false;
    std::vector<double> yhat;
};

double topk_accuracy(const std::vector<ScoredRecord>& records, int k);

// Ratio of expectations per the metric's definition: mean of the best top-k
// rate over mean of the exhaustive-search rate, log2(1+gain) at raw gains.
// Degenerate records are excluded.
double throughput_ratio(const std::vector<ScoredRecord>& records, int k);

struct MetricsRow {
    int k = 0;
    double accuracy = 0.0;
    double throughput = 0.0;
    double accuracy_los = 0.0;
    double accuracy_nlos = 0.0;
    double throughput_los = 0.0;
    double throughput_nlos = 0.0;
};

struct MetricsReport {
    std::vector<MetricsRow> rows;
    int samples = 0;
    int los_samples = 0;
    int degenerate_samples = 0;

    const MetricsRow& row_for(int k) const;
    std::string to_csv() const;  // header: k,accuracy,throughput_ratio,...
};

MetricsReport compute_metrics(const std::vector<ScoredRecord>& records,
                              const std::vector<int>& ks);

}  // namespace beamsel
