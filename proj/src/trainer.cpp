#include "beamsel/trainer.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "beamsel/dataset_io.hpp"
#include "beamsel/errors.hpp"
#include "beamsel/rng.hpp"

namespace beamsel {

using nlohmann::json;

void TrainConfig::validate() const {
    if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("train: batch size must be >= 1");
    if (loss.beta < 0.0 || loss.beta > 1.0) throw ConfigError("train: beta must be in [0,1]");
    if (optimizer.step_size <= 0.0) throw ConfigError("train: step size must be positive");
    if (area_x <= 0.0 || area_y <= 0.0) throw ConfigError("train: invalid coverage extents");
    if (eval_subset < 0) throw ConfigError("train: eval subset must be >= 0");
    curriculum.validate();
    if (curriculum.mode != CurriculumMode::Standard && epochs > curriculum.total_epochs()) {
        throw ConfigError("train: " + std::to_string(epochs) + " epochs exceed the " +
                          std::to_string(curriculum.total_epochs()) + "-epoch curriculum schedule");
    }
    model.validate();
    grid.validate();
    if (grid.rows != model.grid_rows || grid.cols != model.grid_cols)
        throw ConfigError("train: grid extents do not match the model input");
}

std::string TrainConfig::to_json() const {
    json j;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["optimizer"] = {{"step_size", optimizer.step_size},
                      {"beta1", optimizer.beta1},
                      {"beta2", optimizer.beta2},
                      {"epsilon", optimizer.epsilon}};
    j["loss"] = {{"beta", loss.beta},
                 {"epsilon", loss.epsilon},
                 {"label_norm", label_norm == LabelNorm::Euclidean ? "euclidean" : "l1"}};
    j["curriculum"] = {{"mode", to_string(curriculum.mode)},
                       {"stage_len", curriculum.stage_len},
                       {"reject_stages", curriculum.reject_stages}};
    j["model"] = json::parse(model.to_json());
    j["grid"] = {{"origin_x", grid.origin_x}, {"origin_y", grid.origin_y},
                 {"cell_x", grid.cell_x},     {"cell_y", grid.cell_y},
                 {"rows", grid.rows},         {"cols", grid.cols}};
    j["area_x"] = area_x;
    j["area_y"] = area_y;
    j["train_dataset"] = train_dataset;
    j["test_dataset"] = test_dataset;
    j["seed"] = seed;
    j["run_dir"] = run_dir;
    j["eval_subset"] = eval_subset;
    return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("train config is not valid JSON: ") + e.what());
    }
    TrainConfig cfg;
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    if (j.contains("optimizer")) {
        const auto& o = j["optimizer"];
        cfg.optimizer.step_size = o.value("step_size", cfg.optimizer.step_size);
        cfg.optimizer.beta1 = o.value("beta1", cfg.optimizer.beta1);
        cfg.optimizer.beta2 = o.value("beta2", cfg.optimizer.beta2);
        cfg.optimizer.epsilon = o.value("epsilon", cfg.optimizer.epsilon);
    }
    if (j.contains("loss")) {
        const auto& l = j["loss"];
        cfg.loss.beta = l.value("beta", cfg.loss.beta);
        cfg.loss.epsilon = l.value("epsilon", cfg.loss.epsilon);
        const std::string norm = l.value("label_norm", "euclidean");
        if (norm == "euclidean") cfg.label_norm = LabelNorm::Euclidean;
        else if (norm == "l1") cfg.label_norm = LabelNorm::L1;
        else throw ConfigError("train: unknown label_norm " + norm);
    }
    if (j.contains("curriculum")) {
        const auto& c = j["curriculum"];
        if (c.contains("mode"))
            cfg.curriculum.mode = curriculum_mode_from_string(c["mode"].get<std::string>());
        cfg.curriculum.stage_len = c.value("stage_len", cfg.curriculum.stage_len);
        if (c.contains("reject_stages"))
            cfg.curriculum.reject_stages = c["reject_stages"].get<std::vector<double>>();
    }
    if (j.contains("model")) cfg.model = ModelConfig::from_json(j["model"].dump());
    if (j.contains("grid")) {
        const auto& g = j["grid"];
        cfg.grid.origin_x = g.value("origin_x", cfg.grid.origin_x);
        cfg.grid.origin_y = g.value("origin_y", cfg.grid.origin_y);
        cfg.grid.cell_x = g.value("cell_x", cfg.grid.cell_x);
        cfg.grid.cell_y = g.value("cell_y", cfg.grid.cell_y);
        cfg.grid.rows = g.value("rows", cfg.grid.rows);
        cfg.grid.cols = g.value("cols", cfg.grid.cols);
    }
    cfg.area_x = j.value("area_x", cfg.area_x);
    cfg.area_y = j.value("area_y", cfg.area_y);
    cfg.train_dataset = j.value("train_dataset", cfg.train_dataset);
    cfg.test_dataset = j.value("test_dataset", cfg.test_dataset);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.run_dir = j.value("run_dir", cfg.run_dir);
    cfg.eval_subset = j.value("eval_subset", cfg.eval_subset);
    cfg.validate();
    return cfg;
}

std::string TrainHistory::to_csv() const {
    std::ostringstream os;
    os << "epoch,loss,A1,A5,A10,T1,T5,T10\n";
    for (const HistoryRow& r : rows) {
        os << r.epoch << "," << format_double(r.loss) << "," << format_double(r.a1) << ","
           << format_double(r.a5) << "," << format_double(r.a10) << "," << format_double(r.t1)
           << "," << format_double(r.t5) << "," << format_double(r.t10) << "\n";
    }
    return os.str();
}

std::vector<Grid> preprocess_records(const std::vector<DatasetRecord>& records,
                                     const GridSpec& spec) {
    std::vector<Grid> grids;
    grids.reserve(records.size());
    for (const DatasetRecord& r : records) {
        grids.push_back(preprocess_cloud(r.cloud, r.bs, r.veh, spec));
    }
    return grids;
}

void adam_step(ParamStore& params, const OptimizerConfig& cfg, int t, const WeightMask* mask) {
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (int s = 0; s < params.size(); ++s) {
        auto& e = params.entry(s);
        const std::vector<std::uint8_t>* keep = nullptr;
        if (mask) {
            auto it = mask->find(e.name);
            if (it != mask->end()) keep = &it->second;
        }
        for (std::size_t i = 0; i < e.value.data.size(); ++i) {
            double g = e.grad[i];
            if (keep && !(*keep)[i]) {
                // Masked entries receive no update and stay at exactly zero.
                e.value.data[i] = 0.0;
                continue;
            }
            e.m[i] = cfg.beta1 * e.m[i] + (1.0 - cfg.beta1) * g;
            e.v[i] = cfg.beta2 * e.v[i] + (1.0 - cfg.beta2) * g * g;
            const double mhat = e.m[i] / bc1;
            const double vhat = e.v[i] / bc2;
            e.value.data[i] -= cfg.step_size * mhat / (std::sqrt(vhat) + cfg.epsilon);
        }
    }
}

namespace {

std::vector<ScoredRecord> score_records(const BeamClassifier& model,
                                        const std::vector<DatasetRecord>& records,
                                        const std::vector<Grid>& grids, double area_x,
                                        double area_y) {
    if (records.size() != grids.size())
        throw ConfigError("evaluate: record/grid count mismatch");
    std::vector<ScoredRecord> scored;
    scored.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        const DatasetRecord& r = records[i];
        Tensor yhat = model.predict(grids[i], r.veh.x / area_x, r.veh.y / area_y);
        scored.push_back({r.y, r.best, r.los, r.degenerate, yhat.data});
    }
    return scored;
}

}  // namespace

MetricsReport evaluate(const BeamClassifier& model, const std::vector<DatasetRecord>& records,
                       const std::vector<Grid>& grids, double area_x, double area_y,
                       const std::vector<int>& ks) {
    if (records.empty()) throw ConfigError("evaluate: empty dataset");
    return compute_metrics(score_records(model, records, grids, area_x, area_y), ks);
}

MetricsReport evaluate_oracle(const std::vector<DatasetRecord>& records,
                              const std::vector<int>& ks) {
    if (records.empty()) throw ConfigError("evaluate: empty dataset");
    std::vector<ScoredRecord> scored;
    scored.reserve(records.size());
    for (const DatasetRecord& r : records) {
        std::vector<double> yhat;
        if (r.degenerate) {
            yhat.assign(r.y.size(), 0.0);
        } else {
            yhat = make_labels(r.y).ybar;
        }
        scored.push_back({r.y, r.best, r.los, r.degenerate, std::move(yhat)});
    }
    return compute_metrics(scored, ks);
}

TrainResult train_model(const TrainConfig& cfg, const std::vector<DatasetRecord>& train_set,
                        const std::vector<DatasetRecord>& eval_set, const TrainOptions& options) {
    cfg.validate();
    if (train_set.empty()) throw ConfigError("train: empty training set");

    BeamClassifier model =
        options.init_from ? *options.init_from : BeamClassifier::init(cfg.model);

    const std::vector<Grid> train_grids = preprocess_records(train_set, cfg.grid);

    // Labels for non-degenerate records; degenerate scenes carry no usable
    // target and are skipped by the loss.
    std::vector<LabelVector> labels(train_set.size());
    std::vector<bool> usable(train_set.size(), false);
    for (std::size_t i = 0; i < train_set.size(); ++i) {
        if (train_set[i].degenerate) continue;
        labels[i] = make_labels(train_set[i].y, cfg.label_norm);
        usable[i] = true;
    }

    std::vector<DatasetRecord> eval_subset;
    const std::vector<DatasetRecord>* eval_ptr = &eval_set;
    if (cfg.eval_subset > 0 && static_cast<int>(eval_set.size()) > cfg.eval_subset) {
        eval_subset.assign(eval_set.begin(), eval_set.begin() + cfg.eval_subset);
        eval_ptr = &eval_subset;
    }
    const std::vector<Grid> eval_grids =
        eval_ptr->empty() ? std::vector<Grid>{} : preprocess_records(*eval_ptr, cfg.grid);

    if (options.mask) {
        // Start from a consistent masked state.
        for (const auto& [name, keep] : *options.mask) {
            auto& value = model.params().value(name);
            for (std::size_t i = 0; i < value.data.size(); ++i) {
                if (!keep[i]) value.data[i] = 0.0;
            }
        }
    }

    TrainHistory history;
    Tape tape;
    int adam_t = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t_start = std::chrono::steady_clock::now();
        const double lambda = pacing_lambda(epoch, cfg.curriculum);
        EpochPlan plan =
            sample_epoch_dataset(train_set, lambda, cfg.curriculum.mode, cfg.seed, epoch);

        std::vector<int> order = permutation(static_cast<int>(plan.admitted.size()),
                                             mix_seed(cfg.seed, 0x5f17, epoch));
        double loss_sum = 0.0;
        int loss_count = 0;
        std::size_t cursor = 0;
        int batch_id = 0;
        while (cursor < order.size()) {
            const std::size_t batch_end =
                std::min(order.size(), cursor + static_cast<std::size_t>(cfg.batch_size));
            // Collect the usable samples of this batch first so the mean is
            // taken over what actually contributes.
            std::vector<int> batch;
            for (std::size_t b = cursor; b < batch_end; ++b) {
                const int rec_idx = plan.admitted[order[b]];
                if (usable[rec_idx]) batch.push_back(rec_idx);
            }
            cursor = batch_end;
            ++batch_id;
            if (batch.empty()) continue;

            model.params().zero_grad();
            const double inv = 1.0 / static_cast<double>(batch.size());
            for (int rec_idx : batch) {
                const DatasetRecord& rec = train_set[rec_idx];
                tape.reset();
                Tape::NodeId yhat =
                    model.forward(tape, train_grids[rec_idx], rec.veh.x / cfg.area_x,
                                  rec.veh.y / cfg.area_y);
                const LabelVector& lv = labels[rec_idx];
                Tape::NodeId hard =
                    tape.cross_entropy(Tensor::vec(lv.ystar), yhat, cfg.loss.epsilon);
                Tape::NodeId soft =
                    tape.cross_entropy(Tensor::vec(lv.ybar), yhat, cfg.loss.epsilon);
                Tape::NodeId loss = tape.add(tape.scale(hard, 1.0 - cfg.loss.beta),
                                             tape.scale(soft, cfg.loss.beta));
                const double loss_val = tape.value(loss).data[0];
                if (!std::isfinite(loss_val)) {
                    throw NumericalError("non-finite loss at epoch " + std::to_string(epoch) +
                                         " batch " + std::to_string(batch_id) + " (record id " +
                                         std::to_string(rec.id) + ")");
                }
                loss_sum += loss_val;
                ++loss_count;
                tape.backward(loss);
                tape.accumulate_param_grads(model.params(), inv);
            }
            if (options.mask) {
                for (const auto& [name, keep] : *options.mask) {
                    auto& g = model.params().grad(name);
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        if (!keep[i]) g[i] = 0.0;
                    }
                }
            }
            adam_step(model.params(), cfg.optimizer, ++adam_t, options.mask);
        }

        HistoryRow row;
        row.epoch = epoch;
        row.loss = loss_count ? loss_sum / loss_count : 0.0;
        if (!eval_ptr->empty()) {
            MetricsReport report =
                evaluate(model, *eval_ptr, eval_grids, cfg.area_x, cfg.area_y, {1, 5, 10});
            row.a1 = report.row_for(1).accuracy;
            row.a5 = report.row_for(5).accuracy;
            row.a10 = report.row_for(10).accuracy;
            row.t1 = report.row_for(1).throughput;
            row.t5 = report.row_for(5).throughput;
            row.t10 = report.row_for(10).throughput;
        }
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        history.rows.push_back(row);
        if (options.on_epoch) options.on_epoch(epoch, model);
    }
    return {std::move(model), std::move(history)};
}

namespace {

double mean_of(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

// 95% half-width under the normal approximation; NaN for a single seed.
double ci95_of(const std::vector<double>& xs) {
    const std::size_t n = xs.size();
    if (n < 2) return std::numeric_limits<double>::quiet_NaN();
    const double mu = mean_of(xs);
    double ss = 0.0;
    for (double x : xs) ss += (x - mu) * (x - mu);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    return 1.96 * sd / std::sqrt(static_cast<double>(n));
}

std::string ci_cell(double v) { return std::isnan(v) ? "na" : format_double(v); }

}  // namespace

std::string AblationReport::to_csv() const {
    std::ostringstream os;
    os << "cell,seeds,A1_mean,A1_ci,A5_mean,A5_ci,A10_mean,A10_ci,"
          "T1_mean,T1_ci,T5_mean,T5_ci,T10_mean,T10_ci\n";
    for (const AblationRow& r : rows) {
        os << r.cell << "," << r.seeds;
        for (std::size_t i = 0; i < r.mean.size(); ++i) {
            os << "," << format_double(r.mean[i]) << "," << ci_cell(r.ci[i]);
        }
        os << "\n";
    }
    return os.str();
}

AblationReport run_ablation(const std::vector<AblationCell>& cells,
                            const std::vector<std::uint64_t>& seeds, const std::string& out_dir) {
    if (cells.empty()) throw ConfigError("ablate: no cells");
    if (seeds.empty()) throw ConfigError("ablate: no seeds");
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    // Datasets shared across cells are loaded once.
    std::map<std::string, std::vector<DatasetRecord>> dataset_cache;
    auto load = [&](const std::string& path) -> const std::vector<DatasetRecord>& {
        auto it = dataset_cache.find(path);
        if (it == dataset_cache.end()) it = dataset_cache.emplace(path, read_dataset(path)).first;
        return it->second;
    };

    AblationReport report;
    for (const AblationCell& cell : cells) {
        const fs::path cell_dir = fs::path(out_dir) / cell.name;
        const fs::path summary_path = cell_dir / "cell_summary.json";

        json per_seed = json::object();
        bool resume = false;
        if (fs::exists(summary_path)) {
            json existing = json::parse(read_file(summary_path.string()));
            resume = true;
            for (std::uint64_t s : seeds) {
                if (!existing.contains(std::to_string(s))) {
                    resume = false;
                    break;
                }
            }
            if (resume) per_seed = existing;
        }

        if (!resume) {
            for (std::uint64_t seed : seeds) {
                TrainConfig cfg = cell.config;
                cfg.seed = seed;
                cfg.model.init_seed = seed;
                const fs::path run_dir = cell_dir / ("seed_" + std::to_string(seed));
                fs::create_directories(run_dir);
                const auto& train_set = load(cfg.train_dataset);
                const auto& test_set = load(cfg.test_dataset);
                TrainResult result = train_model(cfg, train_set, test_set);
                write_file_atomic((run_dir / "history.csv").string(), result.history.to_csv());
                result.model.save_checkpoint((run_dir / "final.ckpt.json").string(), cfg.epochs,
                                             seed);
                const std::vector<Grid> grids = preprocess_records(test_set, cfg.grid);
                MetricsReport metrics =
                    evaluate(result.model, test_set, grids, cfg.area_x, cfg.area_y, {1, 5, 10});
                write_file_atomic((run_dir / "metrics.csv").string(), metrics.to_csv());
                per_seed[std::to_string(seed)] = {
                    {"A1", metrics.row_for(1).accuracy},   {"A5", metrics.row_for(5).accuracy},
                    {"A10", metrics.row_for(10).accuracy}, {"T1", metrics.row_for(1).throughput},
                    {"T5", metrics.row_for(5).throughput}, {"T10", metrics.row_for(10).throughput}};
            }
            fs::create_directories(cell_dir);
            write_file_atomic(summary_path.string(), per_seed.dump(2) + "\n");
        }

        AblationRow row;
        row.cell = cell.name;
        row.seeds = static_cast<int>(seeds.size());
        for (const char* key : {"A1", "A5", "A10", "T1", "T5", "T10"}) {
            std::vector<double> xs;
            for (std::uint64_t s : seeds) xs.push_back(per_seed.at(std::to_string(s)).at(key));
            row.mean.push_back(mean_of(xs));
            row.ci.push_back(ci95_of(xs));
        }
        report.rows.push_back(std::move(row));
    }
    return report;
}

}  // namespace beamsel
