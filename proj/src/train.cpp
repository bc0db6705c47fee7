#include "srtrl/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace srtrl {

SyntheticSpec SyntheticSpec::paper() { return SyntheticSpec{}; }

SyntheticSpec SyntheticSpec::desk() {
  SyntheticSpec s;
  s.weight_shape = {10, 10, 10};
  s.true_rank = 5;
  s.n_train = 2000;
  s.n_test = 500;
  return s;
}

void SyntheticSpec::validate() const {
  if (weight_shape.empty()) throw ConfigError("weight_shape must have at least one mode");
  for (Index d : weight_shape)
    if (d <= 0) throw ConfigError("weight_shape entries must be positive");
  if (output_dim <= 0 || true_rank <= 0 || n_train <= 0 || n_test <= 0)
    throw ConfigError("output_dim, true_rank, n_train and n_test must be positive");
}

namespace {

Dataset make_split(const KruskalXd& weight, const DenseTensor<double>& full, Index n, Rng rng) {
  Shape in = weight.full_shape();
  in.pop_back();
  Shape xs{n};
  xs.insert(xs.end(), in.begin(), in.end());
  TensorXd x(xs);
  for (Index j = 0; j < x.size(); ++j) x.data()(j) = rng.normal();
  const TensorXd y = inner_contract(x, full, static_cast<Index>(in.size()));
  return Dataset{std::move(x), as_matrix(y)};
}

}  // namespace

SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const Rng root(spec.seed);
  Rng weight_rng = root.split("weight");
  std::vector<MatrixXd> factors;
  Shape dims = spec.weight_shape;
  dims.push_back(spec.output_dim);
  for (Index d : dims) {
    MatrixXd f(d, spec.true_rank);
    for (Index i = 0; i < d; ++i)
      for (Index r = 0; r < spec.true_rank; ++r) f(i, r) = weight_rng.normal();
    factors.push_back(std::move(f));
  }
  KruskalXd weight(std::move(factors));
  const TensorXd full = kruskal_to_full(weight);
  Dataset train = make_split(weight, full, spec.n_train, root.split("train"));
  Dataset test = make_split(weight, full, spec.n_test, root.split("test"));
  return SyntheticData{std::move(train), std::move(test), std::move(weight)};
}

std::string to_string(Objective o) { return o == Objective::stochastic ? "stochastic" : "deterministic"; }

Objective parse_objective(const std::string& s) {
  if (s == "stochastic") return Objective::stochastic;
  if (s == "deterministic") return Objective::deterministic;
  throw ConfigError("unknown objective '" + s + "'");
}

std::string to_string(MaskGranularity g) { return g == MaskGranularity::batch ? "batch" : "sample"; }

MaskGranularity parse_mask_granularity(const std::string& s) {
  if (s == "batch") return MaskGranularity::batch;
  if (s == "sample") return MaskGranularity::sample;
  throw ConfigError("unknown mask granularity '" + s + "' (expected batch or sample)");
}

TrainConfig TrainConfig::paper() { return TrainConfig{}; }

TrainConfig TrainConfig::desk() {
  TrainConfig c;
  c.epochs = 150;
  c.batch_size = 100;
  c.lr_initial = 1e-3;
  c.lr_decay_factor = 0.1;
  c.lr_decay_epochs = {100};
  return c;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr_initial > 0.0)) throw ConfigError("lr_initial must be > 0");
  if (!(lr_decay_factor > 0.0)) throw ConfigError("lr_decay_factor must be > 0");
  if (model_rank < 0) throw ConfigError("model_rank must be >= 0");
  SketchSpec{scheme, theta, true}.validate();
}

double lr_at(const TrainConfig& config, int epoch) {
  if (epoch < 0 || epoch >= config.epochs)
    throw ConfigError("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(config.epochs) + ")");
  const auto decays = std::count_if(config.lr_decay_epochs.begin(), config.lr_decay_epochs.end(),
                                    [epoch](int e) { return e <= epoch; });
  return config.lr_initial * std::pow(config.lr_decay_factor, static_cast<double>(decays));
}

void sgd_step(TrlModelXd& model, const Gradients<double>& grads, double lr) {
  if (lr < 0.0) throw ConfigError("learning rate must be non-negative");
  apply_gradients(model, grads, -lr);
}

std::vector<Index> epoch_order(Index n, Rng& rng) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng.engine());
  return order;
}

void write_csv(std::ostream& os, const LossCurve& curve, bool timing) {
  std::ostringstream out;
  out << "epoch,objective,train_loss,test_mse,seconds\n" << std::setprecision(17);
  for (const auto& r : curve.records)
    out << r.epoch << ',' << r.objective << ',' << r.train_loss << ',' << r.test_mse << ','
        << (timing ? r.seconds : 0.0) << '\n';
  os << out.str();
}

namespace {

TensorXd gather_batch(const TensorXd& x, const std::vector<Index>& order, Index begin, Index end) {
  const Index row = x.size() / x.dim(0);
  Shape s = x.shape();
  s[0] = end - begin;
  TensorXd b(s);
  for (Index i = begin; i < end; ++i)
    b.data().segment((i - begin) * row, row) = x.data().segment(order[static_cast<std::size_t>(i)] * row, row);
  return b;
}

MatrixXd gather_rows(const MatrixXd& y, const std::vector<Index>& order, Index begin, Index end) {
  MatrixXd b(end - begin, y.cols());
  for (Index i = begin; i < end; ++i) b.row(i - begin) = y.row(order[static_cast<std::size_t>(i)]);
  return b;
}

}  // namespace

ExperimentResult run_experiment(const SyntheticData& data, const TrainConfig& config) {
  config.validate();
  const Rng root(config.seed);
  Rng init_rng = root.split("init");
  Rng shuffle_rng = root.split("shuffle");
  Rng mask_rng = root.split("masks");

  Shape in = data.true_weight.full_shape();
  const Index out_dim = in.back();
  in.pop_back();
  const Index rank = config.model_rank > 0 ? config.model_rank : data.true_weight.rank();
  const SketchSpec sketch{config.scheme, config.theta, true};
  TrlModelXd model = init_kruskal_model<double>(in, out_dim, rank, sketch, init_rng, config.scale_mode);

  const Index n = data.train.size();
  LossCurve curve;
  const auto start = std::chrono::steady_clock::now();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = lr_at(config, epoch);
    const std::vector<Index> order = epoch_order(n, shuffle_rng);
    double weighted = 0.0;
    for (Index begin = 0; begin < n; begin += config.batch_size) {
      const Index end = std::min(n, begin + config.batch_size);
      const TensorXd xb = gather_batch(data.train.x, order, begin, end);
      const MatrixXd yb = gather_rows(data.train.y, order, begin, end);
      Gradients<double> g;
      if (config.objective == Objective::stochastic) {
        if (config.masks == MaskGranularity::batch) {
          const SketchDraw draw = draw_sketch(sketch, model.sketch_ranks(), mask_rng);
          g = backward(model, xb, yb, &draw);
        } else {
          std::vector<SketchDraw> draws;
          for (Index i = begin; i < end; ++i) draws.push_back(draw_sketch(sketch, model.sketch_ranks(), mask_rng));
          g = backward_per_sample(model, xb, yb, draws);
        }
      } else {
        g = backward<double>(model, xb, yb, nullptr);
      }
      if (!std::isfinite(g.value) || g.value > kDivergenceThreshold) throw DivergedError(epoch, g.value);
      weighted += g.value * static_cast<double>(end - begin);
      sgd_step(model, g, lr);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.objective = weighted / static_cast<double>(n);
    rec.train_loss = mse_loss(forward(model, data.train.x), data.train.y);
    rec.test_mse = mse_loss(forward(model, data.test.x), data.test.y);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.test_mse)) throw DivergedError(epoch, rec.train_loss);
    curve.records.push_back(rec);
  }
  return ExperimentResult{std::move(curve), std::move(model)};
}

ExperimentResult run_experiment(const SyntheticSpec& spec, const TrainConfig& config) {
  return run_experiment(generate_synthetic(spec), config);
}

}  // namespace srtrl
