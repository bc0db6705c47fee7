#pragma once

// Experiment plans for the `synth` command: preset + JSON config + flag
// overrides resolved into one plan, and the runner that writes CSV curves,
// checkpoints and the manifest.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "srtrl/train.hpp"

namespace srtrl {

struct ExperimentPlan {
  SyntheticSpec data;
  TrainConfig train;
  std::vector<double> thetas{1.0, 0.7, 0.4, 0.1};
  std::vector<Objective> objectives{Objective::stochastic, Objective::deterministic};
  std::uint64_t seed = 0;
};

/// Flag values that override the config file.
struct PlanOverrides {
  std::optional<std::string> preset;
  std::optional<std::uint64_t> seed;
  std::optional<double> theta;
  std::optional<std::string> objective;  // stochastic | deterministic | both
};

ExperimentPlan preset_plan(const std::string& name);

/// Strict: unknown keys and ill-typed values raise ConfigError.
ExperimentPlan resolve_plan(const std::optional<nlohmann::json>& file, const PlanOverrides& overrides);

nlohmann::json plan_to_json(const ExperimentPlan& plan);

/// File stem of one (theta, objective) cell, e.g. "theta_0.7_stochastic".
std::string run_name(double theta, Objective objective);

struct RunSummary {
  double theta = 0;
  Objective objective = Objective::stochastic;
  std::string csv;
  std::string checkpoint;
  double final_objective = 0;
  double final_train_loss = 0;
  double final_test_mse = 0;
};

/// Runs every (theta, objective) cell of the plan into out_dir. Writes
/// config.resolved.json before training and manifest.json at the end.
/// DivergedError propagates after the manifest records the failure.
std::vector<RunSummary> run_plan(const ExperimentPlan& plan, const std::filesystem::path& out_dir, bool timing = true,
                                 bool dump_data = false);

}  // namespace srtrl
