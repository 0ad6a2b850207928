#include "beamsel/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "beamsel/dataset_io.hpp"
#include "beamsel/errors.hpp"

namespace beamsel {

std::string to_string(PruneFlavor f) {
    return f == PruneFlavor::Unstructured ? "unstructured" : "structured";
}

PruneFlavor prune_flavor_from_string(const std::string& s) {
    if (s == "unstructured") return PruneFlavor::Unstructured;
    if (s == "structured") return PruneFlavor::Structured;
    throw ConfigError("unknown pruning flavor: " + s);
}

PruneMask full_mask(const BeamClassifier& model, PruneFlavor flavor) {
    PruneMask mask;
    mask.flavor = flavor;
    for (const LayerRef& layer : model.layers()) {
        const Tensor& w = model.params().value(layer.weight);
        mask.masks[layer.weight].assign(w.numel(), 1);
        const Tensor& b = model.params().value(layer.bias);
        mask.masks[layer.bias].assign(b.numel(), 1);
    }
    return mask;
}

std::size_t PruneMask::weight_count(const BeamClassifier& model) const {
    std::size_t n = 0;
    for (const LayerRef& layer : model.layers()) n += model.params().value(layer.weight).numel();
    return n;
}

std::size_t PruneMask::masked_count(const BeamClassifier& model) const {
    std::size_t n = 0;
    for (const LayerRef& layer : model.layers()) {
        auto it = masks.find(layer.weight);
        if (it == masks.end()) continue;
        for (std::uint8_t keep : it->second) n += keep ? 0 : 1;
    }
    return n;
}

double PruneMask::achieved_ratio(const BeamClassifier& model) const {
    return static_cast<double>(masked_count(model)) / static_cast<double>(weight_count(model));
}

PruneMask prune_unstructured(const BeamClassifier& model, const PruneMask* previous,
                             double ratio) {
    if (ratio < 0.0 || ratio >= 1.0) throw ConfigError("prune: ratio must be in [0,1)");
    PruneMask mask = previous ? *previous : full_mask(model, PruneFlavor::Unstructured);
    mask.flavor = PruneFlavor::Unstructured;
    if (ratio == 0.0) return mask;

    // Global magnitude ranking over the still-unmasked weight entries.
    struct Candidate {
        double mag;
        int layer;
        std::size_t idx;
    };
    std::vector<Candidate> candidates;
    const auto layers = model.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const Tensor& w = model.params().value(layers[l].weight);
        const auto& keep = mask.masks.at(layers[l].weight);
        for (std::size_t i = 0; i < w.numel(); ++i) {
            if (keep[i]) candidates.push_back({std::abs(w.data[i]), static_cast<int>(l), i});
        }
    }
    const std::size_t n_drop =
        static_cast<std::size_t>(std::llround(ratio * static_cast<double>(candidates.size())));
    std::sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        if (a.mag != b.mag) return a.mag < b.mag;
        if (a.layer != b.layer) return a.layer < b.layer;
        return a.idx < b.idx;
    });
    for (std::size_t k = 0; k < n_drop && k < candidates.size(); ++k) {
        mask.masks.at(layers[candidates[k].layer].weight)[candidates[k].idx] = 0;
    }
    return mask;
}

PruneMask prune_structured(const BeamClassifier& model, const PruneMask* previous, double ratio) {
    if (ratio < 0.0 || ratio >= 1.0) throw ConfigError("prune: ratio must be in [0,1)");
    PruneMask mask = previous ? *previous : full_mask(model, PruneFlavor::Structured);
    mask.flavor = PruneFlavor::Structured;
    if (ratio == 0.0) return mask;

    const auto layers = model.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const LayerRef& layer = layers[l];
        if (!layer.structured_prunable) continue;
        const Tensor& w = model.params().value(layer.weight);
        auto& wkeep = mask.masks.at(layer.weight);
        auto& bkeep = mask.masks.at(layer.bias);
        const int per_unit = layer.weights_per_unit;

        // A unit is active while its bias slot is unmasked.
        std::vector<int> active;
        for (int u = 0; u < layer.out_units; ++u) {
            if (bkeep[u]) active.push_back(u);
        }
        int n_drop = static_cast<int>(std::llround(ratio * static_cast<double>(active.size())));
        n_drop = std::min(n_drop, static_cast<int>(active.size()) - 1);  // keep one unit alive
        if (n_drop <= 0) continue;

        std::vector<std::pair<double, int>> ranked;  // (mean |w|, unit)
        for (int u : active) {
            double sum = 0.0;
            for (int i = 0; i < per_unit; ++i)
                sum += std::abs(w.data[static_cast<std::size_t>(u) * per_unit + i]);
            ranked.push_back({sum / per_unit, u});
        }
        std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first < b.first;
            return a.second < b.second;
        });

        for (int k = 0; k < n_drop; ++k) {
            const int u = ranked[k].second;
            for (int i = 0; i < per_unit; ++i)
                wkeep[static_cast<std::size_t>(u) * per_unit + i] = 0;
            bkeep[u] = 0;

            // Consumer weight columns fed only by this unit are dead and
            // count toward the removable mass.
            if (layer.consumer >= 0) {
                const LayerRef& consumer = layers[layer.consumer];
                const Tensor& cw = model.params().value(consumer.weight);
                auto& ckeep = mask.masks.at(consumer.weight);
                const int row_len = consumer.weights_per_unit;
                const int group = (layer.consumer_group_offset + u) * layer.consumer_group_size;
                for (int row = 0; row < consumer.out_units; ++row) {
                    const std::size_t base = static_cast<std::size_t>(row) * row_len + group;
                    for (int i = 0; i < layer.consumer_group_size; ++i) ckeep[base + i] = 0;
                }
                (void)cw;
            }
        }
    }
    return mask;
}

void apply_mask(BeamClassifier& model, const PruneMask& mask) {
    for (const auto& [name, keep] : mask.masks) {
        Tensor& value = model.params().value(name);
        if (value.numel() != keep.size())
            throw ShapeError("apply_mask: mask for " + name + " has the wrong length");
        for (std::size_t i = 0; i < keep.size(); ++i) {
            if (!keep[i]) value.data[i] = 0.0;
        }
    }
}

namespace {

std::vector<std::pair<std::string, std::size_t>> remaining_per_layer(const BeamClassifier& model,
                                                                     const PruneMask& mask) {
    std::vector<std::pair<std::string, std::size_t>> out;
    for (const LayerRef& layer : model.layers()) {
        std::size_t kept = 0;
        const auto& keep = mask.masks.at(layer.weight);
        for (std::uint8_t k : keep) kept += k ? 1 : 0;
        out.push_back({layer.weight, kept});
    }
    return out;
}

}  // namespace

std::vector<SparsityReport> iterative_prune_finetune(
    const BeamClassifier& pretrained, PruneFlavor flavor,
    const std::vector<PruneScheduleStep>& schedule, const TrainConfig& finetune,
    const std::vector<DatasetRecord>& train_set, const std::vector<DatasetRecord>& test_set) {
    const std::vector<Grid> test_grids = preprocess_records(test_set, finetune.grid);
    const std::vector<int> ks = {1, 5, 10};

    std::vector<SparsityReport> reports;
    BeamClassifier model = pretrained;
    PruneMask mask = full_mask(model, flavor);

    {
        SparsityReport base;
        base.ratio = 0.0;
        base.flavor = flavor;
        base.remaining_per_layer = remaining_per_layer(model, mask);
        base.metrics = evaluate(model, test_set, test_grids, finetune.area_x, finetune.area_y, ks);
        reports.push_back(std::move(base));
    }

    for (const PruneScheduleStep& step : schedule) {
        mask = flavor == PruneFlavor::Unstructured
                   ? prune_unstructured(model, &mask, step.ratio)
                   : prune_structured(model, &mask, step.ratio);
        apply_mask(model, mask);

        TrainOptions options;
        options.mask = &mask.masks;
        options.init_from = &model;
        TrainResult result = train_model(finetune, train_set, test_set, options);
        model = std::move(result.model);

        SparsityReport report;
        report.ratio = mask.achieved_ratio(model);
        report.flavor = flavor;
        report.remaining_per_layer = remaining_per_layer(model, mask);
        report.metrics = evaluate(model, test_set, test_grids, finetune.area_x, finetune.area_y, ks);
        reports.push_back(std::move(report));
    }
    return reports;
}

std::string sparsity_reports_to_csv(const std::vector<SparsityReport>& reports) {
    std::ostringstream os;
    os << "ratio,flavor,A1,A5,A10,T1,T5,T10\n";
    for (const SparsityReport& r : reports) {
        os << format_double(r.ratio) << "," << to_string(r.flavor) << ","
           << format_double(r.metrics.row_for(1).accuracy) << ","
           << format_double(r.metrics.row_for(5).accuracy) << ","
           << format_double(r.metrics.row_for(10).accuracy) << ","
           << format_double(r.metrics.row_for(1).throughput) << ","
           << format_double(r.metrics.row_for(5).throughput) << ","
           << format_double(r.metrics.row_for(10).throughput) << "\n";
    }
    return os.str();
}

}  // namespace beamsel
