#pragma once

// Brute-force reference computations used by the verification suites and the
// tests. Each routine works from explicit index formulas or explicit sketch
// matrices and shares no code path with the implementation it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "srtrl/decomp.hpp"
#include "srtrl/tensor.hpp"
#include "srtrl/trl.hpp"

namespace srtrl::oracle {

/// Calls fn(idx) for every multi-index of shape, last index fastest.
inline void for_each_index(const Shape& shape, const std::function<void(const std::vector<Index>&)>& fn) {
  std::vector<Index> idx(shape.size(), 0);
  if (shape_size(shape) == 0) return;
  while (true) {
    fn(idx);
    std::size_t k = shape.size();
    while (k > 0) {
      --k;
      if (++idx[k] < shape[k]) break;
      idx[k] = 0;
      if (k == 0) return;
    }
    if (shape.empty()) return;
  }
}

/// sum_k i_k prod_{m>k} I_m, evaluated literally.
inline Index vec_position(const std::vector<Index>& idx, const Shape& shape) {
  Index j = 0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    Index stride = 1;
    for (std::size_t m = k + 1; m < shape.size(); ++m) stride *= shape[m];
    j += idx[k] * stride;
  }
  return j;
}

/// Column of (i_0..i_{N-1}) in the mode-n unfolding:
/// sum_{k != n} i_k prod_{m>k, m != n} I_m.
inline Index unfold_column(const std::vector<Index>& idx, const Shape& shape, Index mode) {
  Index j = 0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (static_cast<Index>(k) == mode) continue;
    Index stride = 1;
    for (std::size_t m = k + 1; m < shape.size(); ++m)
      if (static_cast<Index>(m) != mode) stride *= shape[m];
    j += idx[k] * stride;
  }
  return j;
}

inline MatrixXd unfold(const TensorXd& t, Index mode) {
  const Index rows = t.shape()[static_cast<std::size_t>(mode)];
  MatrixXd m(rows, t.size() / rows);
  for_each_index(t.shape(), [&](const std::vector<Index>& idx) {
    m(idx[static_cast<std::size_t>(mode)], unfold_column(idx, t.shape(), mode)) =
        t.data()(vec_position(idx, t.shape()));
  });
  return m;
}

/// (t x_mode m)(.., r, ..) = sum_i m(r, i) t(.., i, ..).
inline TensorXd mode_dot(const TensorXd& t, const MatrixXd& m, Index mode) {
  Shape out_shape = t.shape();
  out_shape[static_cast<std::size_t>(mode)] = m.rows();
  TensorXd out(out_shape);
  for_each_index(out_shape, [&](const std::vector<Index>& idx) {
    std::vector<Index> src = idx;
    double acc = 0.0;
    for (Index i = 0; i < m.cols(); ++i) {
      src[static_cast<std::size_t>(mode)] = i;
      acc += m(idx[static_cast<std::size_t>(mode)], i) * t.data()(vec_position(src, t.shape()));
    }
    out.data()(vec_position(idx, out_shape)) = acc;
  });
  return out;
}

/// Explicit sum over shared indices.
inline TensorXd inner_contract(const TensorXd& x, const TensorXd& w, Index n_modes) {
  const Index lead = x.order() - n_modes;
  Shape lead_shape(x.shape().begin(), x.shape().begin() + lead);
  Shape shared(w.shape().begin(), w.shape().begin() + n_modes);
  Shape trail(w.shape().begin() + n_modes, w.shape().end());
  Shape out_shape = lead_shape;
  out_shape.insert(out_shape.end(), trail.begin(), trail.end());
  TensorXd out(out_shape);
  for_each_index(lead_shape, [&](const std::vector<Index>& a) {
    for_each_index(trail, [&](const std::vector<Index>& c) {
      double acc = 0.0;
      for_each_index(shared, [&](const std::vector<Index>& b) {
        std::vector<Index> xi = a, wi = b;
        xi.insert(xi.end(), b.begin(), b.end());
        wi.insert(wi.end(), c.begin(), c.end());
        acc += x.data()(vec_position(xi, x.shape())) * w.data()(vec_position(wi, w.shape()));
      });
      std::vector<Index> oi = a;
      oi.insert(oi.end(), c.begin(), c.end());
      out.data()(vec_position(oi, out_shape)) = acc;
    });
  });
  return out;
}

/// sum_r lambda_r prod_k U^(k)(i_k, r) for every element.
inline TensorXd kruskal_full(const std::vector<MatrixXd>& factors, const VectorXd& lambda) {
  Shape s;
  for (const auto& f : factors) s.push_back(f.rows());
  TensorXd out(s);
  for_each_index(s, [&](const std::vector<Index>& idx) {
    double acc = 0.0;
    for (Index r = 0; r < lambda.size(); ++r) {
      double term = lambda(r);
      for (std::size_t k = 0; k < factors.size(); ++k) term *= factors[k](idx[k], r);
      acc += term;
    }
    out.data()(vec_position(idx, s)) = acc;
  });
  return out;
}

inline TensorXd kruskal_full(const KruskalXd& k) { return kruskal_full(k.factors(), k.effective_weights()); }

/// sum over core indices of G(r_0..r_N) prod_k U^(k)(i_k, r_k).
inline TensorXd tucker_full(const TensorXd& core, const std::vector<MatrixXd>& factors) {
  Shape s;
  for (const auto& f : factors) s.push_back(f.rows());
  TensorXd out(s);
  for_each_index(s, [&](const std::vector<Index>& idx) {
    double acc = 0.0;
    for_each_index(core.shape(), [&](const std::vector<Index>& r) {
      double term = core.data()(vec_position(r, core.shape()));
      for (std::size_t k = 0; k < factors.size(); ++k) term *= factors[k](idx[k], r[k]);
      acc += term;
    });
    out.data()(vec_position(idx, s)) = acc;
  });
  return out;
}

/// The sketch matrix M^(mode): diag(mask) for bernoulli, the K x R selection
/// matrix with rows Id(sel_j, :) for replacement.
inline MatrixXd sketch_matrix(const SketchDraw& d, Index mode, Index rank) {
  const auto& e = d.mode(mode);
  if (d.scheme == SketchScheme::replacement) {
    MatrixXd m = MatrixXd::Zero(static_cast<Index>(e.size()), rank);
    for (std::size_t j = 0; j < e.size(); ++j) m(static_cast<Index>(j), e[j]) = 1.0;
    return m;
  }
  MatrixXd m = MatrixXd::Zero(rank, rank);
  for (Index r = 0; r < rank; ++r) m(r, r) = d.scheme == SketchScheme::none ? 1.0 : static_cast<double>(e[static_cast<std::size_t>(r)]);
  return m;
}

/// Full sketched CP tensor with every factor multiplied by M^T.
inline TensorXd sketched_kruskal_full(const KruskalXd& k, const SketchDraw& d) {
  const MatrixXd m = sketch_matrix(d, 0, k.rank());
  std::vector<MatrixXd> factors;
  for (const auto& f : k.factors()) factors.push_back(f * m.transpose());
  VectorXd lambda = k.effective_weights();
  if (d.scheme == SketchScheme::replacement) lambda = m * lambda;
  return kruskal_full(factors, lambda);
}

/// Full sketched Tucker tensor: core multiplied by every M^(k), factors by M^(k)^T.
inline TensorXd sketched_tucker_full(const TuckerXd& t, const SketchDraw& d) {
  TensorXd core = t.core();
  std::vector<MatrixXd> factors;
  for (Index k = 0; k < t.order(); ++k) {
    const MatrixXd m = sketch_matrix(d, k, t.core().dim(k));
    core = mode_dot(core, m, k);
    factors.push_back(t.factor(k) * m.transpose());
  }
  return tucker_full(core, factors);
}

/// Central finite differences of `objective` for every trainable parameter.
inline Gradients<double> finite_difference_gradients(const TrlModelXd& model, const TensorXd& x, const MatrixXd& y,
                                                     const SketchDraw* draw, double h = 1e-5) {
  auto probe = [&](auto&& get_ref) {
    TrlModelXd plus = model, minus = model;
    get_ref(plus) += h;
    get_ref(minus) -= h;
    return (objective(plus, x, y, draw) - objective(minus, x, y, draw)) / (2.0 * h);
  };
  Gradients<double> g;
  const auto& factors = std::visit([](const auto& w) -> const std::vector<MatrixXd>& { return w.factors(); },
                                   model.weight);
  for (std::size_t k = 0; k < factors.size(); ++k) {
    MatrixXd d(factors[k].rows(), factors[k].cols());
    for (Index i = 0; i < d.rows(); ++i)
      for (Index r = 0; r < d.cols(); ++r)
        d(i, r) = probe([&](TrlModelXd& m) -> double& {
          return std::visit([&](auto& w) -> double& { return w.factors()[k](i, r); }, m.weight);
        });
    g.factors.push_back(std::move(d));
  }
  if (!model.is_kruskal()) {
    TensorXd d(model.tucker().core().shape());
    for (Index j = 0; j < d.size(); ++j)
      d.data()(j) = probe([&](TrlModelXd& m) -> double& { return m.tucker().core().data()(j); });
    g.core = std::move(d);
  } else {
    // lambda perturbed through an explicit weight vector
    const Index rank = model.kruskal().rank();
    VectorXd d(rank);
    for (Index r = 0; r < rank; ++r) {
      auto with_lambda = [&](double delta) {
        TrlModelXd m = model;
        VectorXd lam = m.kruskal().effective_weights();
        lam(r) += delta;
        m.kruskal() = KruskalXd(m.kruskal().factors(), lam);
        return objective(m, x, y, draw);
      };
      d(r) = (with_lambda(h) - with_lambda(-h)) / (2.0 * h);
    }
    g.weights = std::move(d);
  }
  VectorXd db(model.bias.size());
  for (Index o = 0; o < db.size(); ++o) db(o) = probe([&](TrlModelXd& m) -> double& { return m.bias(o); });
  g.bias = std::move(db);
  return g;
}

/// Largest entrywise |a - n| / max(|a|, |n|, floor) over two arrays.
template <typename A, typename B>
double max_relative_error(const A& analytic, const B& numeric, double floor) {
  double worst = 0.0;
  for (Index j = 0; j < analytic.size(); ++j) {
    const double a = analytic.data()[j], n = numeric.data()[j];
    worst = std::max(worst, std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor}));
  }
  return worst;
}

}  // namespace srtrl::oracle
