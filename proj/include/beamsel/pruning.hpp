#pragma once

#include <string>
#include <vector>

#include "beamsel/model.hpp"
#include "beamsel/trainer.hpp"

namespace beamsel {

// Magnitude-based compression: unstructured (single weights, ranked
// globally) and structured (whole neurons/filters, ranked per layer by mean
// magnitude), plus the iterative prune-then-fine-tune loop.

enum class PruneFlavor { Unstructured, Structured };

std::string to_string(PruneFlavor f);
PruneFlavor prune_flavor_from_string(const std::string& s);

struct PruneMask {
    PruneFlavor flavor = PruneFlavor::Unstructured;
    WeightMask masks;  // keep=1 / drop=0 per weight tensor entry

    // Fraction of the model's weight-matrix entries masked out. Biases are
    // not counted.
    double achieved_ratio(const BeamClassifier& model) const;
    std::size_t masked_count(const BeamClassifier& model) const;
    std::size_t weight_count(const BeamClassifier& model) const;
};

// All-keep mask over every conv/linear weight tensor.
PruneMask full_mask(const BeamClassifier& model, PruneFlavor flavor);

// Masks the `ratio` fraction of the still-unmasked weights with the smallest
// magnitude, ranked globally over all weight tensors; biases are exempt.
// Ties break toward the lowest (tensor, flat index) position.
PruneMask prune_unstructured(const BeamClassifier& model, const PruneMask* previous, double ratio);

// Per layer, masks the `ratio` fraction of the still-active output units
// with the lowest mean weight magnitude. A masked unit's weight row and bias
// entry go to zero, along with the consumer weight columns that only that
// unit feeds. The beam-index output layer is exempt; each layer always keeps
// at least one active unit.
PruneMask prune_structured(const BeamClassifier& model, const PruneMask* previous, double ratio);

// Zeroes masked weights (and the bias entries covered by the mask) in place.
void apply_mask(BeamClassifier& model, const PruneMask& mask);

struct SparsityReport {
    double ratio = 0.0;  // cumulative fraction of original weights removed
    PruneFlavor flavor = PruneFlavor::Unstructured;
    std::vector<std::pair<std::string, std::size_t>> remaining_per_layer;
    MetricsReport metrics;
};

struct PruneScheduleStep {
    double ratio = 0.2;  // fraction of the remaining weights/units this step
};

// Pretrained model -> repeated (mask, fine-tune, evaluate). The mask is
// enforced through every optimizer step, so masked weights never regrow.
// An empty schedule yields the single report of the unpruned model.
std::vector<SparsityReport> iterative_prune_finetune(
    const BeamClassifier& pretrained, PruneFlavor flavor,
    const std::vector<PruneScheduleStep>& schedule, const TrainConfig& finetune,
    const std::vector<DatasetRecord>& train_set, const std::vector<DatasetRecord>& test_set);

// CSV: ratio,flavor,A1,A5,A10,T1,T5,T10.
std::string sparsity_reports_to_csv(const std::vector<SparsityReport>& reports);

}  // namespace beamsel
