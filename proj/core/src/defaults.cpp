#include "ldt/defaults.hpp"

#include "ldt/util.hpp"

namespace ldt {

namespace {

struct Row {
  const char* variant;
  ModelSize size;
  double lr;
  int steps;
};

// Learning rate and step count selected on the tuning task.
constexpr Row kRows[] = {
    {"ldt", ModelSize::Base, 5e-7, 2160},
    {"ldt", ModelSize::Large, 5e-7, 1920},
    {"ldt20ng", ModelSize::Base, 5e-7, 2160},
    {"ldt20ng", ModelSize::Large, 5e-7, 1920},
    {"mismatched", ModelSize::Base, 5e-5, 2160},
    {"mismatched", ModelSize::Large, 5e-6, 3000},
    {"random", ModelSize::Base, 5e-5, 2160},
    {"random", ModelSize::Large, 5e-6, 3240},
    {"classifier", ModelSize::Base, 1e-5, 1920},
    {"classifier", ModelSize::Large, 1e-6, 2280},
};

struct PatternRow {
  const char* variant;
  ModelSize size;
  const char* pattern;
};

constexpr PatternRow kTunedPatterns[] = {
    {"ldt", ModelSize::Base, "prompt9"},
    {"ldt", ModelSize::Large, "prompt7"},
    {"mismatched", ModelSize::Base, "qa3"},
    {"mismatched", ModelSize::Large, "qa1"},
    {"random", ModelSize::Base, "qa3"},
    {"random", ModelSize::Large, "prompt6"},
};

std::string format_lr(double lr) {
  if (lr == 5e-7) return "5e-7";
  if (lr == 1e-6) return "1e-6";
  if (lr == 5e-6) return "5e-6";
  if (lr == 1e-5) return "1e-5";
  if (lr == 5e-5) return "5e-5";
  return msg(lr);
}

}  // namespace

VariantDefaults paper_default(const std::string& variant, ModelSize size) {
  for (const auto& row : kRows)
    if (variant == row.variant && size == row.size)
      return {row.lr, row.steps, 1};
  fail("no defaults for variant '", variant, "' with model size ", to_string(size));
}

const std::vector<double>& learning_rate_grid() {
  static const std::vector<double> grid = {5e-7, 1e-6, 5e-6, 1e-5, 5e-5};
  return grid;
}

int fewshot_batch_size(int k_per_label) {
  if (k_per_label <= 10) return 1;
  if (k_per_label <= 100) return 2;
  return 4;
}

std::string tuned_pattern_key(const std::string& variant, ModelSize size) {
  for (const auto& row : kTunedPatterns)
    if (variant == row.variant && size == row.size) return row.pattern;
  fail("no tuned pattern for variant '", variant, "' with model size ", to_string(size));
}

std::string paper_defaults_profile_text() {
  std::string out;
  out += "schema: ldt-profile/1\n";
  out += "profile: paper-defaults\n";
  out += "lr_grid: 5e-7 | 1e-6 | 5e-6 | 1e-5 | 5e-5\n";
  out += "freeze: lower_half\n";
  out += "seeds: 0 1 2\n";
  out += msg("tune_max_steps: ", kTuneMaxSteps, "\n");
  out += msg("tune_eval_every: ", kTuneEvalEvery, "\n");
  out += msg("plateau_tolerance: ", kPlateauTolerance, "\n");
  out += msg("fewshot_epochs: ", kFewshotEpochs, "\n");
  out += "fewshot_batch: 10=1 100=2 500=4\n";
  for (const auto& row : kRows) {
    out += msg("\n[", row.variant, " ", to_string(row.size), "]\n");
    out += "learning_rate: " + format_lr(row.lr) + "\n";
    out += msg("steps: ", row.steps, "\n");
    out += "batch_size: 1\n";
    for (const auto& pr : kTunedPatterns)
      if (std::string(pr.variant) == row.variant && pr.size == row.size)
        out += msg("tuned_pattern: ", pr.pattern, "\n");
  }
  return out;
}

}  // namespace ldt
