#pragma once

#include <string>
#include <vector>

#include "ldt/encoder.hpp"

namespace ldt {

// Tuned hyperparameters per training variant, shipped as the read-only
// "paper-defaults" profile so deviations stay diffable.
struct VariantDefaults {
  double learning_rate = 0.0;
  int steps = 0;
  int batch_size = 1;
};

// variant: ldt | mismatched | random | classifier | ldt20ng
VariantDefaults paper_default(const std::string& variant, ModelSize size);

// The five-point learning-rate grid used for tuning and the few-shot baseline.
const std::vector<double>& learning_rate_grid();

// Few-shot batch size by examples per label: 1 / 2 / 4 for 10 / 100 / 500.
int fewshot_batch_size(int k_per_label);

// Pattern selected on the tuning task, per variant and model.
std::string tuned_pattern_key(const std::string& variant, ModelSize size);

// Tuning protocol constants.
inline constexpr int kTuneMaxSteps = 3500;
inline constexpr int kTuneEvalEvery = 24;
inline constexpr double kPlateauTolerance = 0.005;  // 0.5 accuracy points
inline constexpr int kFewshotEpochs = 15;

// The complete profile as keyed text (what data/profiles/paper-defaults.profile
// contains).
std::string paper_defaults_profile_text();

}  // namespace ldt
