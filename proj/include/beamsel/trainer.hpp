#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "beamsel/curriculum.hpp"
#include "beamsel/model.hpp"
#include "beamsel/objective.hpp"
#include "beamsel/scenario.hpp"

namespace beamsel {

// Mini-batch training loop, evaluation and the seeded ablation driver.

struct OptimizerConfig {
    double step_size = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

struct TrainConfig {
    int epochs = 45;
    int batch_size = 32;
    OptimizerConfig optimizer;
    LossConfig loss;
    LabelNorm label_norm = LabelNorm::Euclidean;
    CurriculumSchedule curriculum;
    ModelConfig model;
    GridSpec grid;
    double area_x = 200.0, area_y = 40.0;  // coordinate normalization extents
    std::string train_dataset;
    std::string test_dataset;
    std::uint64_t seed = 1;
    std::string run_dir = "runs/default";
    int eval_subset = 0;  // 0 = evaluate the full held-out split each epoch

    void validate() const;
    std::string to_json() const;
    static TrainConfig from_json(const std::string& text);
};

struct HistoryRow {
    int epoch = 0;
    double loss = 0.0;
    double a1 = 0.0, a5 = 0.0, a10 = 0.0;
    double t1 = 0.0, t5 = 0.0, t10 = 0.0;
    double seconds = 0.0;  // wall-clock, excluded from the CSV artifact
};

struct TrainHistory {
    std::vector<HistoryRow> rows;
    std::string to_csv() const;  // epoch,loss,A1,A5,A10,T1,T5,T10
};

// Entries with value 0 are frozen at exactly zero through every update.
using WeightMask = std::map<std::string, std::vector<std::uint8_t>>;

struct TrainOptions {
    const WeightMask* mask = nullptr;
    const BeamClassifier* init_from = nullptr;  // warm start for fine-tuning
    std::function<void(int, const BeamClassifier&)> on_epoch;
};

struct TrainResult {
    BeamClassifier model;
    TrainHistory history;
};

std::vector<Grid> preprocess_records(const std::vector<DatasetRecord>& records,
                                     const GridSpec& spec);

TrainResult train_model(const TrainConfig& cfg, const std::vector<DatasetRecord>& train_set,
                        const std::vector<DatasetRecord>& eval_set,
                        const TrainOptions& options = {});

MetricsReport evaluate(const BeamClassifier& model, const std::vector<DatasetRecord>& records,
                       const std::vector<Grid>& grids, double area_x, double area_y,
                       const std::vector<int>& ks);

// Metric plumbing check: predictions replaced by the normalized gain labels.
MetricsReport evaluate_oracle(const std::vector<DatasetRecord>& records,
                              const std::vector<int>& ks);

// One adaptive-moment step over all parameters; masked entries stay zero.
void adam_step(ParamStore& params, const OptimizerConfig& cfg, int t,
               const WeightMask* mask = nullptr);

struct AblationCell {
    std::string name;
    TrainConfig config;
};

struct AblationRow {
    std::string cell;
    int seeds = 0;
    // mean and 95% confidence half-width per metric, A1,A5,A10,T1,T5,T10.
    std::vector<double> mean;
    std::vector<double> ci;
};

struct AblationReport {
    std::vector<AblationRow> rows;
    std::string to_csv() const;
};

// Runs every (cell, seed) pair under out_dir, skipping cells whose recorded
// per-seed results already cover the requested seeds, then aggregates.
AblationReport run_ablation(const std::vector<AblationCell>& cells,
                            const std::vector<std::uint64_t>& seeds, const std::string& out_dir);

}  // namespace beamsel
