#pragma once

// Synthetic low-rank regression data, SGD with a step-decay schedule, and the
// stochastic-vs-deterministic training loops.

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "srtrl/decomp.hpp"
#include "srtrl/trl.hpp"

namespace srtrl {

struct SyntheticSpec {
  Shape weight_shape{25, 25, 25};
  Index output_dim = 1;
  Index true_rank = 15;
  Index n_train = 10000;
  Index n_test = 1000;
  std::uint64_t seed = 0;

  /// 25x25x25 Kruskal weight with 15 components, 10000 train / 1000 test.
  static SyntheticSpec paper();
  /// 10x10x10, rank 5, 2000 train / 500 test.
  static SyntheticSpec desk();

  void validate() const;
};

struct Dataset {
  TensorXd x;   // (n, I_0, ..., I_{N-1})
  MatrixXd y;   // n x O

  Index size() const { return x.dim(0); }
};

struct SyntheticData {
  Dataset train;
  Dataset test;
  KruskalXd true_weight;
};

/// Gaussian(0,1) Kruskal weight and standard-normal activations; labels are
/// y_i = <X_i, W>. Weight, train and test come from independent substreams.
SyntheticData generate_synthetic(const SyntheticSpec& spec);

enum class Objective { stochastic, deterministic };

std::string to_string(Objective o);
Objective parse_objective(const std::string& s);

/// How many samples share one sketch draw in the stochastic objective.
enum class MaskGranularity { batch, sample };

std::string to_string(MaskGranularity g);
MaskGranularity parse_mask_granularity(const std::string& s);

struct TrainConfig {
  int epochs = 500;
  Index batch_size = 200;
  double lr_initial = 1e-4;
  double lr_decay_factor = 0.1;
  std::vector<int> lr_decay_epochs{200, 400};
  double theta = 1.0;
  SketchScheme scheme = SketchScheme::bernoulli;
  ScaleMode scale_mode = ScaleMode::inverted;
  Objective objective = Objective::stochastic;
  MaskGranularity masks = MaskGranularity::batch;
  /// CP rank of the trained model; 0 means "same as the data's true rank".
  Index model_rank = 0;
  std::uint64_t seed = 0;

  static TrainConfig paper();
  static TrainConfig desk();

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double objective = 0;   // sample-weighted mean of the batch training objectives
  double train_loss = 0;  // evaluation-mode MSE on the full training set after the epoch
  double test_mse = 0;
  double seconds = 0;     // cumulative wall clock since the run started
};

struct LossCurve {
  std::vector<EpochRecord> records;
};

/// Header `epoch,objective,train_loss,test_mse,seconds`, 17 significant
/// digits. With timing disabled the seconds column is written as 0 so output
/// is byte-reproducible.
void write_csv(std::ostream& os, const LossCurve& curve, bool timing = true);

/// lr_initial * decay_factor^(number of decay epochs <= epoch).
double lr_at(const TrainConfig& config, int epoch);

/// p <- p - lr * grad(p) for every trainable parameter.
void sgd_step(TrlModelXd& model, const Gradients<double>& grads, double lr);

/// Seeded permutation of [0, n) used as one epoch's visiting order.
std::vector<Index> epoch_order(Index n, Rng& rng);

/// Loss above which training is considered diverged.
inline constexpr double kDivergenceThreshold = 1e12;

struct ExperimentResult {
  LossCurve curve;
  TrlModelXd model;
};

/// Stochastic objective: each batch draws a fresh mask shared by its samples
/// (or one mask per sample with MaskGranularity::sample).
/// Deterministic objective: mse + CP dropout regularizer, no masks.
/// Initialization, shuffling and masks come from named substreams of
/// config.seed, so switching the objective leaves data and init untouched.
ExperimentResult run_experiment(const SyntheticData& data, const TrainConfig& config);
ExperimentResult run_experiment(const SyntheticSpec& spec, const TrainConfig& config);

}  // namespace srtrl
