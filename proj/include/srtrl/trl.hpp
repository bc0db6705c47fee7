#pragma once

// Tensor regression layer y = <X, W>_N + b with W held in CP or Tucker form,
// its stochastic rank-regularized training forward, analytic gradients, and
// the deterministic regularizer equivalent to Bernoulli CP sketching.
//
// Activations come batched as a tensor of shape (B, I_0, ..., I_{N-1}); the
// weight has shape (I_0, ..., I_{N-1}, O) with the output mode last.

#include <cmath>
#include <optional>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "srtrl/decomp.hpp"
#include "srtrl/errors.hpp"
#include "srtrl/rng.hpp"
#include "srtrl/tensor.hpp"

namespace srtrl {

/// inverted: sketched output multiplied by 1/theta at train time, evaluation
/// uses the unsketched weight unscaled.
enum class ScaleMode { inverted, none };

inline std::string to_string(ScaleMode m) { return m == ScaleMode::inverted ? "inverted" : "none"; }

inline ScaleMode parse_scale_mode(const std::string& s) {
  if (s == "inverted") return ScaleMode::inverted;
  if (s == "none") return ScaleMode::none;
  throw ConfigError("unknown scale mode '" + s + "'");
}

template <typename Scalar>
using Weight = std::variant<KruskalTensor<Scalar>, TuckerTensor<Scalar>>;

template <typename Scalar>
Shape full_shape(const Weight<Scalar>& w) {
  return std::visit([](const auto& t) { return t.full_shape(); }, w);
}

template <typename Scalar>
DenseTensor<Scalar> to_full(const Weight<Scalar>& w) {
  return std::visit(
      [](const auto& t) {
        if constexpr (std::is_same_v<std::decay_t<decltype(t)>, KruskalTensor<Scalar>>)
          return kruskal_to_full(t);
        else
          return tucker_to_full(t);
      },
      w);
}

template <typename Scalar>
struct TrlModel {
  Weight<Scalar> weight;
  Vector<Scalar> bias;
  SketchSpec sketch;
  ScaleMode scale_mode = ScaleMode::inverted;
  /// Whether the Kruskal weights lambda receive SGD updates. Off by default:
  /// only the factors are optimized.
  bool train_lambda = false;

  bool is_kruskal() const { return std::holds_alternative<KruskalTensor<Scalar>>(weight); }
  const KruskalTensor<Scalar>& kruskal() const { return std::get<KruskalTensor<Scalar>>(weight); }
  KruskalTensor<Scalar>& kruskal() { return std::get<KruskalTensor<Scalar>>(weight); }
  const TuckerTensor<Scalar>& tucker() const { return std::get<TuckerTensor<Scalar>>(weight); }
  TuckerTensor<Scalar>& tucker() { return std::get<TuckerTensor<Scalar>>(weight); }

  Shape input_shape() const {
    Shape s = full_shape(weight);
    s.pop_back();
    return s;
  }
  Index output_dim() const { return full_shape(weight).back(); }

  /// Factor ranks passed to draw_sketch: a single R for CP, R_0..R_N for Tucker.
  std::vector<Index> sketch_ranks() const {
    if (is_kruskal()) return {kruskal().rank()};
    return tucker().ranks();
  }

  void validate() const {
    sketch.validate();
    const Shape s = full_shape(weight);
    if (s.size() < 2) throw ShapeError("TRL weight needs at least one activation mode and the output mode");
    if (bias.size() != s.back())
      throw ShapeError("bias length " + std::to_string(bias.size()) + " does not match output dim " +
                       std::to_string(s.back()));
  }
};

using TrlModelXd = TrlModel<double>;

/// Gradients, shape-congruent with the model parameters.
template <typename Scalar>
struct Gradients {
  std::vector<Matrix<Scalar>> factors;
  std::optional<DenseTensor<Scalar>> core;     // Tucker
  std::optional<Vector<Scalar>> weights;       // Kruskal lambda
  Vector<Scalar> bias;
  /// Objective value at the point the gradients were taken.
  Scalar value = Scalar(0);
};

/// i.i.d. Gaussian factors scaled so the reconstructed weight entries have
/// variance 1 / prod(I_k), giving unit-order outputs on whitened inputs.
template <typename Scalar>
TrlModel<Scalar> init_kruskal_model(const Shape& input_shape, Index output_dim, Index rank,
                                    SketchSpec sketch, Rng& rng,
                                    ScaleMode scale_mode = ScaleMode::inverted) {
  const double n_factors = static_cast<double>(input_shape.size() + 1);
  const double stddev =
      std::pow(static_cast<double>(rank) * static_cast<double>(shape_size(input_shape)), -0.5 / n_factors);
  std::vector<Matrix<Scalar>> factors;
  Shape dims = input_shape;
  dims.push_back(output_dim);
  for (Index d : dims) {
    Matrix<Scalar> f(d, rank);
    for (Index i = 0; i < d; ++i)
      for (Index r = 0; r < rank; ++r) f(i, r) = static_cast<Scalar>(rng.normal(0.0, stddev));
    factors.push_back(std::move(f));
  }
  TrlModel<Scalar> m{KruskalTensor<Scalar>(std::move(factors)), Vector<Scalar>::Zero(output_dim), sketch,
                     scale_mode};
  m.validate();
  return m;
}

template <typename Scalar>
TrlModel<Scalar> init_tucker_model(const Shape& input_shape, Index output_dim, const Shape& ranks,
                                   SketchSpec sketch, Rng& rng,
                                   ScaleMode scale_mode = ScaleMode::inverted) {
  Shape dims = input_shape;
  dims.push_back(output_dim);
  if (ranks.size() != dims.size()) throw ShapeError("Tucker ranks must cover every weight mode");
  const double n_factors = static_cast<double>(dims.size());
  const double stddev = std::pow(static_cast<double>(shape_size(ranks)) *
                                     static_cast<double>(shape_size(input_shape)),
                                 -0.5 / n_factors);
  DenseTensor<Scalar> core(ranks);
  for (Index j = 0; j < core.size(); ++j) core.data()(j) = static_cast<Scalar>(rng.normal());
  std::vector<Matrix<Scalar>> factors;
  for (std::size_t k = 0; k < dims.size(); ++k) {
    Matrix<Scalar> f(dims[k], ranks[k]);
    for (Index i = 0; i < f.rows(); ++i)
      for (Index r = 0; r < f.cols(); ++r) f(i, r) = static_cast<Scalar>(rng.normal(0.0, stddev));
    factors.push_back(std::move(f));
  }
  TrlModel<Scalar> m{TuckerTensor<Scalar>(std::move(core), std::move(factors)),
                     Vector<Scalar>::Zero(output_dim), sketch, scale_mode};
  m.validate();
  return m;
}

namespace detail {

/// Batch activations as a B x prod(I) row-major matrix.
template <typename Scalar>
Eigen::Map<const Matrix<Scalar>> batch_rows(const DenseTensor<Scalar>& x, const Shape& input_shape) {
  if (x.order() != static_cast<Index>(input_shape.size()) + 1 ||
      !std::equal(input_shape.begin(), input_shape.end(), x.shape().begin() + 1))
    throw ShapeError("activation batch " + shape_string(x.shape()) + " does not match weight input shape " +
                     shape_string(input_shape));
  return Eigen::Map<const Matrix<Scalar>>(x.data().data(), x.dim(0), shape_size(input_shape));
}

template <typename Scalar>
std::vector<Matrix<Scalar>> leading_factors(const std::vector<Matrix<Scalar>>& factors) {
  return {factors.begin(), factors.end() - 1};
}

/// Z = X * khatri_rao(U^(0..N-1)): the activations projected on every
/// rank-one input component, B x R.
template <typename Scalar>
Matrix<Scalar> kruskal_projection(const KruskalTensor<Scalar>& k, const DenseTensor<Scalar>& x) {
  Shape in = k.full_shape();
  in.pop_back();
  return batch_rows(x, in) * khatri_rao(leading_factors(k.factors()));
}

/// Batch activations projected on every input factor of a Tucker weight,
/// shape (B, R_0, ..., R_{N-1}), optionally skipping one mode.
template <typename Scalar>
DenseTensor<Scalar> tucker_projection(const TuckerTensor<Scalar>& t, const DenseTensor<Scalar>& x,
                                      Index skip_mode = -1) {
  DenseTensor<Scalar> p = x;
  for (Index k = 0; k + 1 < t.order(); ++k)
    if (k != skip_mode) p = mode_dot(p, Matrix<Scalar>(t.factor(k).transpose()), k + 1);
  return p;
}

/// <x_s, W> for every sample, with the core scaled by the outer product of
/// per-mode multiplicities (Tucker) or lambda scaled by them (CP).
template <typename Scalar>
Matrix<Scalar> weight_response(const Weight<Scalar>& w, const DenseTensor<Scalar>& x) {
  if (const auto* k = std::get_if<KruskalTensor<Scalar>>(&w)) {
    const Matrix<Scalar> z = kruskal_projection(*k, x);
    return z * k->effective_weights().asDiagonal() * k->factors().back().transpose();
  }
  const auto& t = std::get<TuckerTensor<Scalar>>(w);
  const DenseTensor<Scalar> p = tucker_projection(t, x);
  const Index n = t.order() - 1;
  Eigen::Map<const Matrix<Scalar>> pm(p.data().data(), p.dim(0), p.size() / p.dim(0));
  const Matrix<Scalar> h = pm * unfold(t.core(), n).transpose();
  return h * t.factor(n).transpose();
}

template <typename Scalar>
Scalar train_scale(const TrlModel<Scalar>& model) {
  if (model.scale_mode == ScaleMode::none || model.sketch.scheme == SketchScheme::none) return Scalar(1);
  return Scalar(1) / static_cast<Scalar>(model.sketch.theta);
}

}  // namespace detail

/// Evaluation forward with the unsketched weight: B x O.
template <typename Scalar>
Matrix<Scalar> forward(const TrlModel<Scalar>& model, const DenseTensor<Scalar>& x) {
  Matrix<Scalar> y = detail::weight_response(model.weight, x);
  y.rowwise() += model.bias.transpose();
  return y;
}

/// Training forward: the weight is sketched by the given draw and the
/// response scaled by 1/theta under inverted scaling; the bias is untouched.
template <typename Scalar>
Matrix<Scalar> forward_srr(const TrlModel<Scalar>& model, const DenseTensor<Scalar>& x, const SketchDraw& draw) {
  Weight<Scalar> sketched = std::visit(
      [&](const auto& t) -> Weight<Scalar> {
        if constexpr (std::is_same_v<std::decay_t<decltype(t)>, KruskalTensor<Scalar>>)
          return apply_sketch_kruskal(t, draw);
        else
          return apply_sketch_tucker(t, draw);
      },
      model.weight);
  Matrix<Scalar> y = detail::train_scale(model) * detail::weight_response(sketched, x);
  y.rowwise() += model.bias.transpose();
  return y;
}

/// Sum of squared residuals divided by the batch size.
template <typename Scalar>
Scalar mse_loss(const Matrix<Scalar>& y_pred, const Matrix<Scalar>& y_true) {
  if (y_pred.rows() != y_true.rows() || y_pred.cols() != y_true.cols())
    throw ShapeError("mse_loss: prediction and target shapes differ");
  if (y_pred.rows() == 0) return Scalar(0);
  return (y_pred - y_true).squaredNorm() / static_cast<Scalar>(y_pred.rows());
}

/// ((1 - theta) / theta) * sum_r lambda_r^2 prod_i ||U^(i)_{:,r}||^2
/// (lambda is all ones unless set explicitly).
template <typename Scalar>
Scalar cp_dropout_regularizer(const TrlModel<Scalar>& model, double theta) {
  if (!model.is_kruskal())
    throw UnsupportedDecompositionError("the deterministic dropout regularizer is defined for CP weights only");
  if (!(theta > 0.0 && theta <= 1.0)) throw ConfigError("theta must lie in (0, 1]");
  if (theta == 1.0) return Scalar(0);
  const auto& k = model.kruskal();
  Vector<Scalar> prod = k.effective_weights().array().square();
  for (const auto& f : k.factors()) prod = prod.cwiseProduct(f.colwise().squaredNorm().transpose());
  return static_cast<Scalar>((1.0 - theta) / theta) * prod.sum();
}

/// Largest CP rank accepted by the mask enumeration.
inline constexpr Index kMaxEnumerationRank = 20;

/// Per-sample E_lambda ||y_s - b - (1/theta) U^(N) diag(lambda*mask) z_s||^2
/// by weighted enumeration of all 2^R Bernoulli(theta) masks.
template <typename Scalar>
Vector<Scalar> expected_stochastic_loss_enumerated(const TrlModel<Scalar>& model, const DenseTensor<Scalar>& x,
                                                   const Matrix<Scalar>& y, double theta) {
  if (!model.is_kruskal())
    throw UnsupportedDecompositionError("mask enumeration is defined for CP weights only");
  if (!(theta > 0.0 && theta <= 1.0)) throw ConfigError("theta must lie in (0, 1]");
  const auto& k = model.kruskal();
  const Index rank = k.rank();
  if (rank > kMaxEnumerationRank)
    throw EnumerationLimitError("rank " + std::to_string(rank) + " exceeds the enumeration limit of " +
                                std::to_string(kMaxEnumerationRank));
  const Matrix<Scalar> z = detail::kruskal_projection(k, x);
  if (y.rows() != z.rows() || y.cols() != model.output_dim())
    throw ShapeError("targets do not match the batch");
  const Matrix<Scalar>& out = k.factors().back();
  const Vector<Scalar> lambda = k.effective_weights();
  Matrix<Scalar> target = y;
  target.rowwise() -= model.bias.transpose();
  Vector<Scalar> acc = Vector<Scalar>::Zero(z.rows());
  const Scalar inv_theta = static_cast<Scalar>(1.0 / theta);
  Vector<Scalar> w(rank);
  for (unsigned long long mask = 0; mask < (1ULL << rank); ++mask) {
    double p = 1.0;
    for (Index r = 0; r < rank; ++r) {
      const bool on = (mask >> r) & 1ULL;
      p *= on ? theta : 1.0 - theta;
      w(r) = on ? inv_theta * lambda(r) : Scalar(0);
    }
    if (p == 0.0) continue;
    const Matrix<Scalar> resid = target - z * w.asDiagonal() * out.transpose();
    acc += static_cast<Scalar>(p) * resid.rowwise().squaredNorm();
  }
  return acc;
}

/// Same quantity in closed form: ||y_s - yhat_s||^2 plus
/// ((1 - theta) / theta) sum_r lambda_r^2 z_{s,r}^2 ||U^(N)_{:,r}||^2.
template <typename Scalar>
Vector<Scalar> expected_stochastic_loss_closed_form(const TrlModel<Scalar>& model, const DenseTensor<Scalar>& x,
                                                    const Matrix<Scalar>& y, double theta) {
  if (!model.is_kruskal())
    throw UnsupportedDecompositionError("the closed-form expectation is defined for CP weights only");
  if (!(theta > 0.0 && theta <= 1.0)) throw ConfigError("theta must lie in (0, 1]");
  const auto& k = model.kruskal();
  const Matrix<Scalar> z = detail::kruskal_projection(k, x);
  const Vector<Scalar> lambda = k.effective_weights();
  const Matrix<Scalar>& out = k.factors().back();
  Matrix<Scalar> pred = z * lambda.asDiagonal() * out.transpose();
  pred.rowwise() += model.bias.transpose();
  if (y.rows() != pred.rows() || y.cols() != pred.cols()) throw ShapeError("targets do not match the batch");
  const Vector<Scalar> col_weight =
      lambda.array().square() * out.colwise().squaredNorm().transpose().array();
  const Vector<Scalar> variance = z.array().square().matrix() * col_weight;
  return (y - pred).rowwise().squaredNorm() + static_cast<Scalar>((1.0 - theta) / theta) * variance;
}

/// Exact expectation over Bernoulli(theta) masks of the inverted-scaled
/// stochastic loss, by enumeration of all 2^R masks.
template <typename Scalar>
Scalar expected_stochastic_loss(const TrlModel<Scalar>& model, const DenseTensor<Scalar>& x,
                                const Matrix<Scalar>& y, double theta) {
  const Vector<Scalar> per_sample = expected_stochastic_loss_enumerated(model, x, y, theta);
  return per_sample.size() ? per_sample.mean() : Scalar(0);
}

// ---------------------------------------------------------------------------
// Objectives and gradients

/// Stochastic objective with a fixed draw when one is given, otherwise the
/// deterministic objective mse + cp_dropout_regularizer(theta of the model).
template <typename Scalar>
Scalar objective(const TrlModel<Scalar>& model, const DenseTensor<Scalar>& x, const Matrix<Scalar>& y,
                 const SketchDraw* draw) {
  if (draw) return mse_loss(forward_srr(model, x, *draw), y);
  const Scalar fit = mse_loss(forward(model, x), y);
  if (model.sketch.scheme == SketchScheme::none || model.sketch.theta == 1.0) return fit;
  return fit + cp_dropout_regularizer(model, model.sketch.theta);
}

namespace detail {

/// dU^(k) for a CP input factor given dKR = X^T dZ laid out as a tensor
/// (I_0, ..., I_{N-1}, R): contraction with the other input factors' columns.
template <typename Scalar>
Matrix<Scalar> kruskal_factor_grad(const Matrix<Scalar>& d_kr, const std::vector<Matrix<Scalar>>& inputs,
                                   Index mode) {
  const Index rank = d_kr.cols();
  Shape s;
  for (const auto& f : inputs) s.push_back(f.rows());
  s.push_back(rank);
  const DenseTensor<Scalar> t(s, Eigen::Map<const Vector<Scalar>>(d_kr.data(), d_kr.size()));
  const Matrix<Scalar> unf = unfold(t, mode);  // I_k x (prod_{j != k} I_j * R), r fastest
  std::vector<Matrix<Scalar>> others;
  for (Index j = 0; j < static_cast<Index>(inputs.size()); ++j)
    if (j != mode) others.push_back(inputs[static_cast<std::size_t>(j)]);
  if (others.empty()) return unf;
  Matrix<Scalar> grad = Matrix<Scalar>::Zero(unf.rows(), rank);
  const Matrix<Scalar> kr = khatri_rao(others);
  for (Index o = 0; o < kr.rows(); ++o)
    for (Index r = 0; r < rank; ++r) grad.col(r) += kr(o, r) * unf.col(o * rank + r);
  return grad;
}

/// `multiplicity` is B x R: row s holds the sketch multiplicities applied to
/// sample s (identical rows when one draw is shared by the batch).
template <typename Scalar>
Gradients<Scalar> kruskal_backward(const TrlModel<Scalar>& model, const DenseTensor<Scalar>& x,
                                   const Matrix<Scalar>& y, const Matrix<Scalar>& multiplicity, Scalar scale,
                                   double reg_theta) {
  const auto& k = model.kruskal();
  const Index n = k.order() - 1;
  const Index batch = x.dim(0);
  const Vector<Scalar> lambda = k.effective_weights();
  const Matrix<Scalar> w = scale * multiplicity * lambda.asDiagonal();  // B x R
  const Matrix<Scalar>& out = k.factors().back();

  const auto xm = batch_rows(x, model.input_shape());
  const auto inputs = leading_factors(k.factors());
  const Matrix<Scalar> z = xm * khatri_rao(inputs);
  const Matrix<Scalar> zw = z.cwiseProduct(w);
  Matrix<Scalar> pred = zw * out.transpose();
  pred.rowwise() += model.bias.transpose();
  if (y.rows() != pred.rows() || y.cols() != pred.cols()) throw ShapeError("targets do not match the batch");
  const Matrix<Scalar> d_pred = (Scalar(2) / static_cast<Scalar>(batch)) * (pred - y);

  Gradients<Scalar> g;
  g.value = mse_loss(pred, y);
  g.bias = d_pred.colwise().sum().transpose();
  const Matrix<Scalar> d_pred_out = d_pred * out;  // B x R
  const Matrix<Scalar> d_z = d_pred_out.cwiseProduct(w);
  const Matrix<Scalar> d_kr = xm.transpose() * d_z;
  for (Index m = 0; m < n; ++m) g.factors.push_back(kruskal_factor_grad(d_kr, inputs, m));
  g.factors.push_back(d_pred.transpose() * zw);
  g.weights = scale * z.cwiseProduct(multiplicity).cwiseProduct(d_pred_out).colwise().sum().transpose();

  if (reg_theta < 1.0) {
    const Scalar alpha = static_cast<Scalar>((1.0 - reg_theta) / reg_theta);
    std::vector<Vector<Scalar>> norms;
    for (const auto& f : k.factors()) norms.push_back(f.colwise().squaredNorm().transpose());
    Vector<Scalar> all_norms = Vector<Scalar>::Ones(lambda.size());
    for (const auto& v : norms) all_norms = all_norms.cwiseProduct(v);
    for (Index i = 0; i <= n; ++i) {
      Vector<Scalar> coeff = lambda.array().square();
      for (Index j = 0; j <= n; ++j)
        if (j != i) coeff = coeff.cwiseProduct(norms[static_cast<std::size_t>(j)]);
      g.factors[static_cast<std::size_t>(i)] += Scalar(2) * alpha * k.factor(i) * coeff.asDiagonal();
    }
    *g.weights += Scalar(2) * alpha * lambda.cwiseProduct(all_norms);
    g.value += alpha * lambda.array().square().matrix().dot(all_norms);
  }
  return g;
}

template <typename Scalar>
Gradients<Scalar> tucker_backward(const TrlModel<Scalar>& model, const DenseTensor<Scalar>& x,
                                  const Matrix<Scalar>& y, const std::vector<Vector<Scalar>>& multiplicity,
                                  Scalar scale) {
  const auto& t = model.tucker();
  const Index n = t.order() - 1;
  const Index batch = x.dim(0);

  // Effective core scale*(G .* (c_0 o ... o c_N)), mask applied slice-wise.
  DenseTensor<Scalar> mask = DenseTensor<Scalar>::constant(Shape{}, scale);
  for (const auto& c : multiplicity) mask = outer(mask, DenseTensor<Scalar>({c.size()}, c));
  const DenseTensor<Scalar> core_eff(t.core().shape(), t.core().data().cwiseProduct(mask.data()));

  const DenseTensor<Scalar> p = tucker_projection(t, x);
  const Index core_in = p.size() / batch;
  Eigen::Map<const Matrix<Scalar>> pm(p.data().data(), batch, core_in);
  Eigen::Map<const Matrix<Scalar>> gm(core_eff.data().data(), core_in, t.core().dim(n));
  const Matrix<Scalar> h = pm * gm;
  const Matrix<Scalar>& out = t.factor(n);
  Matrix<Scalar> pred = h * out.transpose();
  pred.rowwise() += model.bias.transpose();
  if (y.rows() != pred.rows() || y.cols() != pred.cols()) throw ShapeError("targets do not match the batch");
  const Matrix<Scalar> d_pred = (Scalar(2) / static_cast<Scalar>(batch)) * (pred - y);

  Gradients<Scalar> g;
  g.value = mse_loss(pred, y);
  g.bias = d_pred.colwise().sum().transpose();
  const Matrix<Scalar> d_h = d_pred * out;
  const Matrix<Scalar> d_gm = pm.transpose() * d_h;
  g.core = DenseTensor<Scalar>(t.core().shape(),
                               Eigen::Map<const Vector<Scalar>>(d_gm.data(), d_gm.size()).cwiseProduct(mask.data()));
  const Matrix<Scalar> d_pm = d_h * gm.transpose();
  Shape p_shape = p.shape();
  const DenseTensor<Scalar> d_p(p_shape, Eigen::Map<const Vector<Scalar>>(d_pm.data(), d_pm.size()));
  for (Index m = 0; m < n; ++m) {
    const DenseTensor<Scalar> partial = tucker_projection(t, x, m);
    g.factors.push_back(unfold(partial, m + 1) * unfold(d_p, m + 1).transpose());
  }
  g.factors.push_back(d_pred.transpose() * h);
  return g;
}

}  // namespace detail

/// Exact gradients of `objective`: the stochastic loss under a fixed draw
/// (treated as constant), or mse + CP dropout regularizer when draw is null.
template <typename Scalar>
Gradients<Scalar> backward(const TrlModel<Scalar>& model, const DenseTensor<Scalar>& x, const Matrix<Scalar>& y,
                           const SketchDraw* draw) {
  const bool regularized = !draw && model.sketch.scheme != SketchScheme::none && model.sketch.theta < 1.0;
  const Scalar scale = draw ? detail::train_scale(model) : Scalar(1);
  if (model.is_kruskal()) {
    const Index rank = model.kruskal().rank();
    if (draw && !draw->tied && draw->entries.size() > 1)
      throw ContractViolation("CP sketching requires a single draw shared by every mode");
    const Vector<Scalar> c = draw ? sketch_multiplicity<Scalar>(*draw, 0, rank) : Vector<Scalar>::Ones(rank);
    const Matrix<Scalar> per_sample = Vector<Scalar>::Ones(x.dim(0)) * c.transpose();
    return detail::kruskal_backward(model, x, y, per_sample, scale, regularized ? model.sketch.theta : 1.0);
  }
  if (regularized)
    throw UnsupportedDecompositionError("no deterministic regularizer is defined for Tucker weights");
  const auto& ranks = model.tucker().ranks();
  std::vector<Vector<Scalar>> c;
  for (Index k = 0; k < static_cast<Index>(ranks.size()); ++k)
    c.push_back(draw ? sketch_multiplicity<Scalar>(*draw, k, ranks[static_cast<std::size_t>(k)])
                     : Vector<Scalar>::Ones(ranks[static_cast<std::size_t>(k)]));
  return detail::tucker_backward(model, x, y, c, scale);
}

/// CP only: gradients of the stochastic loss when sample s uses draws[s].
template <typename Scalar>
Gradients<Scalar> backward_per_sample(const TrlModel<Scalar>& model, const DenseTensor<Scalar>& x,
                                      const Matrix<Scalar>& y, const std::vector<SketchDraw>& draws) {
  if (!model.is_kruskal()) throw UnsupportedDecompositionError("per-sample sketches are implemented for CP weights only");
  const Index rank = model.kruskal().rank();
  if (static_cast<Index>(draws.size()) != x.dim(0)) throw ShapeError("need one draw per sample");
  Matrix<Scalar> c(x.dim(0), rank);
  for (Index s = 0; s < x.dim(0); ++s) {
    const SketchDraw& d = draws[static_cast<std::size_t>(s)];
    if (!d.tied && d.entries.size() > 1)
      throw ContractViolation("CP sketching requires a single draw shared by every mode");
    c.row(s) = sketch_multiplicity<Scalar>(d, 0, rank).transpose();
  }
  return detail::kruskal_backward(model, x, y, c, detail::train_scale(model), 1.0);
}

/// p <- p + step * grad(p) for every trainable parameter.
template <typename Scalar>
void apply_gradients(TrlModel<Scalar>& model, const Gradients<Scalar>& g, Scalar step) {
  std::visit([&](auto& w) {
    for (std::size_t k = 0; k < w.factors().size(); ++k) w.factors()[k] += step * g.factors.at(k);
  }, model.weight);
  if (!model.is_kruskal() && g.core) model.tucker().core().data() += step * g.core->data();
  if (model.is_kruskal() && model.train_lambda && g.weights) {
    auto& k = model.kruskal();
    k = KruskalTensor<Scalar>(k.factors(), Vector<Scalar>(k.effective_weights() + step * *g.weights));
  }
  model.bias += step * g.bias;
}

}  // namespace srtrl
