#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "beamsel/scenario.hpp"

namespace beamsel {

// Per-epoch biased dataset construction: curriculum rejects NLOS samples
// early, anti-curriculum rejects LOS samples early, standard keeps all.

enum class CurriculumMode { Curriculum, AntiCurriculum, Standard };

std::string to_string(CurriculumMode m);
CurriculumMode curriculum_mode_from_string(const std::string& s);

struct CurriculumSchedule {
    CurriculumMode mode = CurriculumMode::Standard;
    int stage_len = 9;  // epochs per stage
    // Rejection probability 1 - lambda per stage. The default walks from
    // rejecting everything to the unbiased distribution in the final stage.
    std::vector<double> reject_stages = {1.0, 0.8, 0.6, 0.4, 0.0};

    int total_epochs() const { return stage_len * static_cast<int>(reject_stages.size()); }
    void validate() const;
};

// Acceptance probability for the rejected class at the given epoch.
double pacing_lambda(int epoch, const CurriculumSchedule& schedule);

struct EpochPlan {
    int epoch = 0;
    double lambda = 1.0;
    std::vector<int> admitted;  // indices into the dataset, in dataset order
};

// Independently drops each rejected-class record with probability 1-lambda.
// Draws are keyed by (seed, epoch, record id), so plans are reproducible and
// independent across epochs.
EpochPlan sample_epoch_dataset(const std::vector<DatasetRecord>& dataset, double lambda,
                               CurriculumMode mode, std::uint64_t seed, int epoch);

}  // namespace beamsel
