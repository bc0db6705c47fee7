#pragma once

// CP (Kruskal) and Tucker factorized tensors, their reconstruction, and the
// two rank-sketching schemes: diagonal Bernoulli masks and uniform selection
// with replacement. Sketch matrices are never formed; sketching is column and
// core-slice masking or gathering.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "srtrl/errors.hpp"
#include "srtrl/rng.hpp"
#include "srtrl/tensor.hpp"

namespace srtrl {

/// sum_r lambda_r u_r^(0) o ... o u_r^(N). Without weights lambda is all ones.
template <typename Scalar>
class KruskalTensor {
 public:
  KruskalTensor() = default;

  explicit KruskalTensor(std::vector<Matrix<Scalar>> factors,
                         std::optional<Vector<Scalar>> weights = std::nullopt)
      : weights_(std::move(weights)), factors_(std::move(factors)) {
    if (factors_.empty()) throw ShapeError("Kruskal tensor needs at least one factor");
    const Index r = factors_.front().cols();
    if (r < 1) throw ShapeError("Kruskal rank must be >= 1");
    for (const auto& f : factors_)
      if (f.cols() != r || f.rows() < 1) throw ShapeError("Kruskal factors must share the column count R");
    if (weights_ && weights_->size() != r)
      throw ShapeError("Kruskal weights have length " + std::to_string(weights_->size()) +
                       ", rank is " + std::to_string(r));
  }

  Index rank() const { return factors_.front().cols(); }
  Index order() const { return static_cast<Index>(factors_.size()); }

  Shape full_shape() const {
    Shape s;
    for (const auto& f : factors_) s.push_back(f.rows());
    return s;
  }

  const std::optional<Vector<Scalar>>& weights() const noexcept { return weights_; }
  Vector<Scalar> effective_weights() const {
    return weights_ ? *weights_ : Vector<Scalar>::Ones(rank());
  }

  const std::vector<Matrix<Scalar>>& factors() const noexcept { return factors_; }
  std::vector<Matrix<Scalar>>& factors() noexcept { return factors_; }
  const Matrix<Scalar>& factor(Index k) const { return factors_.at(static_cast<std::size_t>(k)); }
  Matrix<Scalar>& factor(Index k) { return factors_.at(static_cast<std::size_t>(k)); }

 private:
  std::optional<Vector<Scalar>> weights_;
  std::vector<Matrix<Scalar>> factors_;
};

/// G x_0 U^(0) x_1 ... x_N U^(N).
template <typename Scalar>
class TuckerTensor {
 public:
  TuckerTensor() = default;

  TuckerTensor(DenseTensor<Scalar> core, std::vector<Matrix<Scalar>> factors)
      : core_(std::move(core)), factors_(std::move(factors)) {
    if (static_cast<Index>(factors_.size()) != core_.order())
      throw ShapeError("Tucker core of order " + std::to_string(core_.order()) + " with " +
                       std::to_string(factors_.size()) + " factors");
    for (std::size_t k = 0; k < factors_.size(); ++k)
      if (factors_[k].cols() != core_.shape()[k] || factors_[k].rows() < 1)
        throw ShapeError("Tucker factor " + std::to_string(k) + " has " +
                         std::to_string(factors_[k].cols()) + " columns, core mode size is " +
                         std::to_string(core_.shape()[k]));
  }

  Index order() const { return core_.order(); }
  const Shape& ranks() const { return core_.shape(); }
  Shape full_shape() const {
    Shape s;
    for (const auto& f : factors_) s.push_back(f.rows());
    return s;
  }

  const DenseTensor<Scalar>& core() const noexcept { return core_; }
  DenseTensor<Scalar>& core() noexcept { return core_; }
  const std::vector<Matrix<Scalar>>& factors() const noexcept { return factors_; }
  std::vector<Matrix<Scalar>>& factors() noexcept { return factors_; }
  const Matrix<Scalar>& factor(Index k) const { return factors_.at(static_cast<std::size_t>(k)); }
  Matrix<Scalar>& factor(Index k) { return factors_.at(static_cast<std::size_t>(k)); }

 private:
  DenseTensor<Scalar> core_;
  std::vector<Matrix<Scalar>> factors_;
};

using KruskalXd = KruskalTensor<double>;
using TuckerXd = TuckerTensor<double>;

template <typename Scalar>
DenseTensor<Scalar> kruskal_to_full(const KruskalTensor<Scalar>& k) {
  const Vector<Scalar> v = khatri_rao(k.factors()) * k.effective_weights();
  return DenseTensor<Scalar>(k.full_shape(), v);
}

template <typename Scalar>
DenseTensor<Scalar> tucker_to_full(const TuckerTensor<Scalar>& t) {
  DenseTensor<Scalar> full = t.core();
  for (Index k = 0; k < t.order(); ++k) full = mode_dot(full, t.factor(k), k);
  return full;
}

/// Shape (R, ..., R) with lambda_r on the super-diagonal; as a Tucker core it
/// turns the Tucker form into the Kruskal form with the same factors.
template <typename Scalar>
DenseTensor<Scalar> super_diagonal_core(const Vector<Scalar>& lambda, Index n_modes) {
  const Index r = lambda.size();
  if (r < 1) throw ShapeError("super-diagonal core needs R >= 1");
  if (n_modes < 1) throw ShapeError("super-diagonal core needs at least one mode");
  DenseTensor<Scalar> g(Shape(static_cast<std::size_t>(n_modes), r));
  // offset of (r,...,r) is r * (1 + R + R^2 + ...)
  Index stride = 0;
  for (Index k = 0, p = 1; k < n_modes; ++k, p *= r) stride += p;
  for (Index i = 0; i < r; ++i) g.data()(i * stride) = lambda(i);
  return g;
}

// ---------------------------------------------------------------------------
// Sketching

enum class SketchScheme { none, bernoulli, replacement };

inline std::string to_string(SketchScheme s) {
  switch (s) {
    case SketchScheme::none: return "none";
    case SketchScheme::bernoulli: return "bernoulli";
    case SketchScheme::replacement: return "replacement";
  }
  return "?";
}

inline SketchScheme parse_scheme(const std::string& s) {
  if (s == "none") return SketchScheme::none;
  if (s == "bernoulli") return SketchScheme::bernoulli;
  if (s == "replacement") return SketchScheme::replacement;
  throw ConfigError("unknown sketch scheme '" + s + "'");
}

/// theta is the Bernoulli keep probability, or the keep-rate of the
/// replacement scheme. tie_modes draws one mask shared by every mode (CP).
struct SketchSpec {
  SketchScheme scheme = SketchScheme::none;
  double theta = 1.0;
  bool tie_modes = true;

  void validate() const {
    if (!(theta > 0.0 && theta <= 1.0))
      throw ConfigError("keep-rate theta must lie in (0, 1], got " + std::to_string(theta));
  }
};

/// One realization of a sketch. For bernoulli each entry list is a 0/1 mask
/// of length R_n; for replacement it is a list of K_n selected indices in
/// [0, R_n). A tied draw stores a single list used by every mode.
struct SketchDraw {
  SketchScheme scheme = SketchScheme::none;
  bool tied = true;
  std::vector<std::vector<Index>> entries;

  const std::vector<Index>& mode(Index k) const {
    if (tied) return entries.at(0);
    return entries.at(static_cast<std::size_t>(k));
  }

  static SketchDraw bernoulli_mask(std::vector<Index> mask) {
    return SketchDraw{SketchScheme::bernoulli, true, {std::move(mask)}};
  }
};

/// Number of retained samples for the replacement scheme: max(1, round(theta R)).
inline Index replacement_count(double theta, Index rank) {
  return std::max<Index>(1, static_cast<Index>(std::llround(theta * static_cast<double>(rank))));
}

/// Draws one sketch for the given per-mode ranks (a single rank when tied).
inline SketchDraw draw_sketch(const SketchSpec& spec, const std::vector<Index>& ranks, Rng& rng) {
  spec.validate();
  if (ranks.empty()) throw ShapeError("draw_sketch needs at least one rank");
  if (spec.tie_modes && std::adjacent_find(ranks.begin(), ranks.end(), std::not_equal_to<>()) != ranks.end())
    throw ShapeError("tied sketch requires equal ranks on every mode");
  SketchDraw d;
  d.scheme = spec.scheme;
  d.tied = spec.tie_modes;
  const std::size_t n_draws = spec.tie_modes ? 1 : ranks.size();
  for (std::size_t k = 0; k < n_draws; ++k) {
    const Index r = ranks[k];
    std::vector<Index> e;
    switch (spec.scheme) {
      case SketchScheme::none:
        e.assign(static_cast<std::size_t>(r), 1);
        break;
      case SketchScheme::bernoulli:
        e.reserve(static_cast<std::size_t>(r));
        for (Index i = 0; i < r; ++i) e.push_back(rng.bernoulli(spec.theta) ? 1 : 0);
        break;
      case SketchScheme::replacement: {
        const Index count = replacement_count(spec.theta, r);
        e.reserve(static_cast<std::size_t>(count));
        for (Index i = 0; i < count; ++i) e.push_back(rng.uniform_index(r));
        break;
      }
    }
    d.entries.push_back(std::move(e));
  }
  return d;
}

/// Per-component multiplicity of a draw on one mode: the mask itself for
/// bernoulli, selection counts for replacement, ones for none. For a 0/1 mask
/// M^T M = diag(mask); for a selection matrix M^T M = diag(counts).
template <typename Scalar = double>
Vector<Scalar> sketch_multiplicity(const SketchDraw& d, Index mode, Index rank) {
  const auto& e = d.mode(mode);
  Vector<Scalar> c = Vector<Scalar>::Zero(rank);
  switch (d.scheme) {
    case SketchScheme::none:
    case SketchScheme::bernoulli:
      if (static_cast<Index>(e.size()) != rank)
        throw ShapeError("mask length " + std::to_string(e.size()) + " does not match rank " +
                         std::to_string(rank));
      for (Index i = 0; i < rank; ++i) c(i) = static_cast<Scalar>(e[static_cast<std::size_t>(i)]);
      break;
    case SketchScheme::replacement:
      for (Index j : e) {
        if (j < 0 || j >= rank) throw ShapeError("selected index out of range");
        c(j) += Scalar(1);
      }
      break;
  }
  return c;
}

namespace detail {

template <typename Scalar>
Matrix<Scalar> gather_columns(const Matrix<Scalar>& m, const std::vector<Index>& idx) {
  Matrix<Scalar> out(m.rows(), static_cast<Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) {
    if (idx[j] < 0 || idx[j] >= m.cols()) throw ShapeError("selected index out of range");
    out.col(static_cast<Index>(j)) = m.col(idx[j]);
  }
  return out;
}

template <typename Scalar>
void check_mask(const std::vector<Index>& mask, Index rank) {
  if (static_cast<Index>(mask.size()) != rank)
    throw ShapeError("mask length " + std::to_string(mask.size()) + " does not match rank " +
                     std::to_string(rank));
}

}  // namespace detail

template <typename Scalar>
TuckerTensor<Scalar> apply_sketch_tucker(const TuckerTensor<Scalar>& t, const SketchDraw& d) {
  if (d.scheme == SketchScheme::none) return t;
  if (!d.tied && static_cast<Index>(d.entries.size()) != t.order())
    throw ShapeError("draw has " + std::to_string(d.entries.size()) + " modes, Tucker tensor has " +
                     std::to_string(t.order()));
  DenseTensor<Scalar> core = t.core();
  std::vector<Matrix<Scalar>> factors = t.factors();
  for (Index k = 0; k < t.order(); ++k) {
    const auto& e = d.mode(k);
    const Index r = core.dim(k);
    Matrix<Scalar> slices = unfold(core, k);
    if (d.scheme == SketchScheme::bernoulli) {
      detail::check_mask<Scalar>(e, r);
      auto& f = factors[static_cast<std::size_t>(k)];
      for (Index i = 0; i < r; ++i)
        if (e[static_cast<std::size_t>(i)] == 0) {
          f.col(i).setZero();
          slices.row(i).setZero();
        }
      core = fold(slices, k, core.shape());
    } else {
      Matrix<Scalar> picked(static_cast<Index>(e.size()), slices.cols());
      for (std::size_t j = 0; j < e.size(); ++j) {
        if (e[j] < 0 || e[j] >= r) throw ShapeError("selected index out of range");
        picked.row(static_cast<Index>(j)) = slices.row(e[j]);
      }
      Shape s = core.shape();
      s[static_cast<std::size_t>(k)] = static_cast<Index>(e.size());
      core = fold(picked, k, s);
      factors[static_cast<std::size_t>(k)] = detail::gather_columns(factors[static_cast<std::size_t>(k)], e);
    }
  }
  return TuckerTensor<Scalar>(std::move(core), std::move(factors));
}

/// Bernoulli: lambda <- lambda * mask. Replacement: every factor (and lambda)
/// restricted to the selected columns, duplicates kept, so the rank becomes K.
template <typename Scalar>
KruskalTensor<Scalar> apply_sketch_kruskal(const KruskalTensor<Scalar>& k, const SketchDraw& d) {
  if (!d.tied && d.entries.size() > 1)
    throw ContractViolation("CP sketching requires a single draw shared by every mode");
  if (d.scheme == SketchScheme::none) return k;
  const auto& e = d.mode(0);
  if (d.scheme == SketchScheme::bernoulli) {
    detail::check_mask<Scalar>(e, k.rank());
    Vector<Scalar> lambda = k.effective_weights();
    for (Index r = 0; r < k.rank(); ++r)
      if (e[static_cast<std::size_t>(r)] == 0) lambda(r) = Scalar(0);
    return KruskalTensor<Scalar>(k.factors(), std::move(lambda));
  }
  if (e.empty()) throw ShapeError("replacement draw selects no component");
  std::vector<Matrix<Scalar>> factors;
  for (const auto& f : k.factors()) factors.push_back(detail::gather_columns(f, e));
  std::optional<Vector<Scalar>> lambda;
  if (k.weights()) {
    lambda = Vector<Scalar>(static_cast<Index>(e.size()));
    for (std::size_t j = 0; j < e.size(); ++j) (*lambda)(static_cast<Index>(j)) = (*k.weights())(e[j]);
  }
  return KruskalTensor<Scalar>(std::move(factors), std::move(lambda));
}

}  // namespace srtrl
