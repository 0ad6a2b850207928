#include "beamsel/curriculum.hpp"

#include "beamsel/errors.hpp"
#include "beamsel/rng.hpp"

namespace beamsel {

std::string to_string(CurriculumMode m) {
    switch (m) {
        case CurriculumMode::Curriculum: return "curriculum";
        case CurriculumMode::AntiCurriculum: return "anti-curriculum";
        case CurriculumMode::Standard: return "standard";
    }
    return "standard";
}

CurriculumMode curriculum_mode_from_string(const std::string& s) {
    if (s == "curriculum") return CurriculumMode::Curriculum;
    if (s == "anti-curriculum" || s == "anti") return CurriculumMode::AntiCurriculum;
    if (s == "standard") return CurriculumMode::Standard;
    throw ConfigError("unknown curriculum mode: " + s);
}

void CurriculumSchedule::validate() const {
    if (stage_len < 1) throw ConfigError("curriculum: stage length must be >= 1");
    if (reject_stages.empty()) throw ConfigError("curriculum: need at least one stage");
    for (double r : reject_stages) {
        if (r < 0.0 || r > 1.0)
            throw ConfigError("curriculum: rejection probabilities must be in [0,1]");
    }
}

double pacing_lambda(int epoch, const CurriculumSchedule& schedule) {
    schedule.validate();
    if (schedule.mode == CurriculumMode::Standard) return 1.0;
    if (epoch < 0 || epoch >= schedule.total_epochs())
        throw ConfigError("curriculum: epoch " + std::to_string(epoch) + " outside the schedule");
    const int stage = epoch / schedule.stage_len;
    return 1.0 - schedule.reject_stages[stage];
}

EpochPlan sample_epoch_dataset(const std::vector<DatasetRecord>& dataset, double lambda,
                               CurriculumMode mode, std::uint64_t seed, int epoch) {
    if (lambda < 0.0 || lambda > 1.0) throw ConfigError("curriculum: lambda must be in [0,1]");
    EpochPlan plan;
    plan.epoch = epoch;
    plan.lambda = lambda;
    plan.admitted.reserve(dataset.size());
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const DatasetRecord& rec = dataset[i];
        bool rejected_class = false;
        if (mode == CurriculumMode::Curriculum) rejected_class = !rec.los;
        else if (mode == CurriculumMode::AntiCurriculum) rejected_class = rec.los;
        if (rejected_class) {
            Rng rng(mix_seed(seed, static_cast<std::uint64_t>(epoch),
                             static_cast<std::uint64_t>(rec.id)));
            if (rng.next_double() >= lambda) continue;
        }
        plan.admitted.push_back(static_cast<int>(i));
    }
    return plan;
}

}  // namespace beamsel
