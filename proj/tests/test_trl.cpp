#include <gtest/gtest.h>

#include <cmath>

#include "srtrl/oracles.hpp"
#include "srtrl/trl.hpp"

using namespace srtrl;

namespace {

MatrixXd random_matrix(Index r, Index c, Rng& rng) {
  MatrixXd m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

TensorXd random_tensor(const Shape& s, Rng& rng) {
  TensorXd t(s);
  for (Index j = 0; j < t.size(); ++j) t.data()(j) = rng.normal();
  return t;
}

TrlModelXd random_cp(const Shape& in, Index out, Index rank, double theta, Rng& rng,
                     SketchScheme scheme = SketchScheme::bernoulli) {
  std::vector<MatrixXd> f;
  for (Index d : in) f.push_back(random_matrix(d, rank, rng));
  f.push_back(random_matrix(out, rank, rng));
  VectorXd lambda(rank);
  for (Index r = 0; r < rank; ++r) lambda(r) = rng.normal();
  TrlModelXd m{KruskalXd(f, lambda), random_matrix(out, 1, rng).col(0), {scheme, theta, true}};
  m.validate();
  return m;
}

TensorXd batch_of(const Shape& in, Index b, Rng& rng) {
  Shape s{b};
  s.insert(s.end(), in.begin(), in.end());
  return random_tensor(s, rng);
}

MatrixXd materialized_forward(const TrlModelXd& m, const TensorXd& x) {
  const TensorXd w = to_full(m.weight);
  const Index n = static_cast<Index>(m.input_shape().size());
  MatrixXd y = as_matrix(inner_contract(x, w, n));
  y.rowwise() += m.bias.transpose();
  return y;
}

std::vector<Index> mask_bits(unsigned bits, Index rank) {
  std::vector<Index> m;
  for (Index r = 0; r < rank; ++r) m.push_back((bits >> r) & 1u);
  return m;
}

}  // namespace

TEST(Forward, ZeroWeightGivesBias) {
  Rng rng(1);
  TrlModelXd m = random_cp({3, 2}, 2, 2, 1.0, rng);
  m.kruskal() = KruskalXd(m.kruskal().factors(), VectorXd::Zero(2));
  const MatrixXd y = forward(m, batch_of({3, 2}, 4, rng));
  for (Index s = 0; s < 4; ++s) EXPECT_EQ(VectorXd(y.row(s).transpose()), m.bias);
}

TEST(Forward, RankOneClosedForm) {
  VectorXd a(3), b(2), c(2), bias(2);
  a << 1, 2, -1;
  b << 0.5, 3;
  c << 2, -1;
  bias << 0.25, -4;
  const TrlModelXd m{KruskalXd({a, b, c}), bias, {}};
  TensorXd x({1, 3, 2});
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 2; ++j) x({0, i, j}) = a(i) * b(j);
  const VectorXd expected = a.squaredNorm() * b.squaredNorm() * c + bias;
  EXPECT_LE((VectorXd(forward(m, x).row(0).transpose()) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Forward, FactoredMatchesMaterialized) {
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    const TrlModelXd m = random_cp({3, 2}, 2, 2, 1.0, rng);
    const TensorXd x = batch_of({3, 2}, 5, rng);
    EXPECT_LE((forward(m, x) - materialized_forward(m, x)).cwiseAbs().maxCoeff(), 1e-10);
  }
  const TrlModelXd t = init_tucker_model<double>({3, 4}, 2, {2, 3, 2}, {}, rng);
  const TensorXd x = batch_of({3, 4}, 3, rng);
  EXPECT_LE((forward(t, x) - materialized_forward(t, x)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Forward, ShapeMismatch) {
  Rng rng(3);
  const TrlModelXd m = random_cp({3, 2}, 2, 2, 1.0, rng);
  EXPECT_THROW(forward(m, batch_of({2, 3}, 4, rng)), ShapeError);
}

TEST(ForwardSrr, AllOnesAtThetaOneIsForward) {
  Rng rng(4);
  const TrlModelXd m = random_cp({3, 2}, 2, 3, 1.0, rng);
  const TensorXd x = batch_of({3, 2}, 4, rng);
  EXPECT_EQ(forward_srr(m, x, SketchDraw::bernoulli_mask({1, 1, 1})), forward(m, x));
}

TEST(ForwardSrr, ZeroMaskGivesBiasExactly) {
  Rng rng(5);
  const TrlModelXd m = random_cp({3, 2}, 2, 3, 0.4, rng);
  const MatrixXd y = forward_srr(m, batch_of({3, 2}, 4, rng), SketchDraw::bernoulli_mask({0, 0, 0}));
  for (Index s = 0; s < 4; ++s) EXPECT_EQ(VectorXd(y.row(s).transpose()), m.bias);
}

TEST(ForwardSrr, MaskReducedModelScaled) {
  Rng rng(6);
  const TrlModelXd m = random_cp({3, 2}, 2, 3, 0.7, rng);
  const TensorXd x = batch_of({3, 2}, 4, rng);
  const MatrixXd y = forward_srr(m, x, SketchDraw::bernoulli_mask({1, 0, 1}));

  std::vector<MatrixXd> kept;
  for (const auto& f : m.kruskal().factors()) {
    MatrixXd g(f.rows(), 2);
    g << f.col(0), f.col(2);
    kept.push_back(g);
  }
  VectorXd lambda(2);
  lambda << m.kruskal().effective_weights()(0), m.kruskal().effective_weights()(2);
  TrlModelXd reduced{KruskalXd(kept, lambda), VectorXd::Zero(2), {}};
  MatrixXd expected = forward(reduced, x) / 0.7;
  expected.rowwise() += m.bias.transpose();
  EXPECT_LE((y - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(ForwardSrr, UnfoldedFormForEveryMask) {
  Rng rng(7);
  const TrlModelXd m = random_cp({2, 3}, 2, 4, 0.6, rng);
  const TensorXd x = batch_of({2, 3}, 3, rng);
  const auto& f = m.kruskal().factors();
  const MatrixXd kr = khatri_rao<double>({f[0], f[1]});
  for (unsigned bits = 0; bits < 16; ++bits) {
    const auto mask = mask_bits(bits, 4);
    VectorXd d = m.kruskal().effective_weights();
    for (Index r = 0; r < 4; ++r) d(r) *= static_cast<double>(mask[static_cast<std::size_t>(r)]);
    for (Index s = 0; s < 3; ++s) {
      VectorXd vx(6);
      for (Index j = 0; j < 6; ++j) vx(j) = x.data()(s * 6 + j);
      const VectorXd expected = (1.0 / 0.6) * f[2] * d.asDiagonal() * kr.transpose() * vx + m.bias;
      const VectorXd got = forward_srr(m, x, SketchDraw::bernoulli_mask(mask)).row(s).transpose();
      EXPECT_LE((got - expected).cwiseAbs().maxCoeff(), 1e-10 * std::max(1.0, expected.cwiseAbs().maxCoeff()));
    }
  }
}

TEST(ForwardSrr, ScaleModeNone) {
  Rng rng(8);
  TrlModelXd m = random_cp({3, 2}, 1, 3, 0.5, rng);
  m.scale_mode = ScaleMode::none;
  const TensorXd x = batch_of({3, 2}, 2, rng);
  const SketchDraw d = SketchDraw::bernoulli_mask({1, 1, 1});
  EXPECT_LE((forward_srr(m, x, d) - forward(m, x)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Mse, Examples) {
  Rng rng(9);
  const MatrixXd a = random_matrix(4, 2, rng);
  EXPECT_EQ(mse_loss(a, a), 0.0);
  EXPECT_EQ(mse_loss(MatrixXd(MatrixXd::Ones(4, 1)), MatrixXd(MatrixXd::Zero(4, 1))), 1.0);
  const MatrixXd b = random_matrix(4, 2, rng);
  double acc = 0;
  for (Index s = 0; s < 4; ++s)
    for (Index o = 0; o < 2; ++o) acc += (a(s, o) - b(s, o)) * (a(s, o) - b(s, o));
  EXPECT_NEAR(mse_loss(a, b), acc / 4.0, 1e-12);
  EXPECT_THROW(mse_loss(a, MatrixXd(MatrixXd::Zero(4, 3))), ShapeError);
}

TEST(Regularizer, Examples) {
  Rng rng(10);
  TrlModelXd m = random_cp({3, 2}, 2, 3, 0.5, rng);
  EXPECT_EQ(cp_dropout_regularizer(m, 1.0), 0.0);

  VectorXd a(3), b(2), c(2);
  a << 1, 0, 0;
  b << 0.6, 0.8;
  c << 0, 1;
  const TrlModelXd unit{KruskalXd({a, b, c}), VectorXd::Zero(2), {SketchScheme::bernoulli, 0.5, true}};
  EXPECT_NEAR(cp_dropout_regularizer(unit, 0.5), 1.0, 1e-15);

  m.kruskal() = KruskalXd(m.kruskal().factors());  // unit weights
  double acc = 0;
  for (Index r = 0; r < 3; ++r) {
    double p = 1;
    for (const auto& f : m.kruskal().factors()) {
      double col = 0;
      for (Index i = 0; i < f.rows(); ++i) col += f(i, r) * f(i, r);
      p *= col;
    }
    acc += p;
  }
  EXPECT_NEAR(cp_dropout_regularizer(m, 0.3), (0.7 / 0.3) * acc, 1e-10 * acc);
}

TEST(Regularizer, TuckerUnsupported) {
  Rng rng(11);
  const TrlModelXd t = init_tucker_model<double>({3}, 2, {2, 2}, {SketchScheme::bernoulli, 0.5, false}, rng);
  EXPECT_THROW(cp_dropout_regularizer(t, 0.5), UnsupportedDecompositionError);
  EXPECT_THROW(expected_stochastic_loss(t, batch_of({3}, 2, rng), MatrixXd(MatrixXd::Zero(2, 2)), 0.5),
               UnsupportedDecompositionError);
}

TEST(ExpectedLoss, ThetaOneIsMse) {
  Rng rng(12);
  const TrlModelXd m = random_cp({3, 2}, 2, 4, 1.0, rng);
  const TensorXd x = batch_of({3, 2}, 5, rng);
  const MatrixXd y = random_matrix(5, 2, rng);
  EXPECT_EQ(expected_stochastic_loss(m, x, y, 1.0), mse_loss(forward(m, x), y));
}

TEST(ExpectedLoss, RankOneHandEnumeration) {
  Rng rng(13);
  const TrlModelXd m = random_cp({3, 2}, 2, 1, 0.3, rng);
  const TensorXd x = batch_of({3, 2}, 4, rng);
  const MatrixXd y = random_matrix(4, 2, rng);
  const double on = mse_loss(forward_srr(m, x, SketchDraw::bernoulli_mask({1})), y);
  const double off = mse_loss(forward_srr(m, x, SketchDraw::bernoulli_mask({0})), y);
  EXPECT_NEAR(expected_stochastic_loss(m, x, y, 0.3), 0.3 * on + 0.7 * off, 1e-12 * (on + off));
}

TEST(ExpectedLoss, EnumerationMatchesClosedForm) {
  Rng rng(14);
  const TrlModelXd m = random_cp({3, 2}, 2, 4, 0.4, rng);
  const TensorXd x = batch_of({3, 2}, 6, rng);
  const MatrixXd y = random_matrix(6, 2, rng);
  const VectorXd e = expected_stochastic_loss_enumerated(m, x, y, 0.4);
  const VectorXd c = expected_stochastic_loss_closed_form(m, x, y, 0.4);
  EXPECT_LE((e - c).cwiseAbs().maxCoeff(), 1e-10 * c.cwiseAbs().maxCoeff());
}

TEST(ExpectedLoss, EnumerationMatchesMaskAverageOfSrr) {
  Rng rng(15);
  const double theta = 0.6;
  const TrlModelXd m = random_cp({2, 2}, 1, 3, theta, rng);
  const TensorXd x = batch_of({2, 2}, 3, rng);
  const MatrixXd y = random_matrix(3, 1, rng);
  double acc = 0;
  for (unsigned bits = 0; bits < 8; ++bits) {
    const auto mask = mask_bits(bits, 3);
    double p = 1;
    for (Index v : mask) p *= v ? theta : 1 - theta;
    acc += p * mse_loss(forward_srr(m, x, SketchDraw::bernoulli_mask(mask)), y);
  }
  EXPECT_NEAR(expected_stochastic_loss(m, x, y, theta), acc, 1e-12 * acc);
}

TEST(ExpectedLoss, RankGuard) {
  Rng rng(16);
  const TrlModelXd m = random_cp({2}, 1, kMaxEnumerationRank + 1, 0.5, rng);
  EXPECT_THROW(expected_stochastic_loss(m, batch_of({2}, 1, rng), MatrixXd(MatrixXd::Zero(1, 1)), 0.5),
               EnumerationLimitError);
}

TEST(Backward, ZeroResidualAtThetaOne) {
  Rng rng(17);
  TrlModelXd m = random_cp({3, 2}, 2, 2, 1.0, rng);
  const TensorXd x = batch_of({3, 2}, 4, rng);
  const MatrixXd y = forward(m, x);
  const Gradients<double> g = backward<double>(m, x, y, nullptr);
  for (const auto& f : g.factors) EXPECT_LE(f.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE(g.bias.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE(g.weights->cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Backward, BiasGradientIsResidualColumnSums) {
  Rng rng(18);
  const TrlModelXd m = random_cp({3, 2}, 3, 2, 0.5, rng);
  const TensorXd x = batch_of({3, 2}, 5, rng);
  const MatrixXd y = random_matrix(5, 3, rng);
  const Gradients<double> g = backward<double>(m, x, y, nullptr);
  const VectorXd expected = (2.0 / 5.0) * (forward(m, x) - y).colwise().sum().transpose();
  EXPECT_LE((g.bias - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Backward, MatchesFiniteDifferences) {
  Rng rng(19);
  for (int trial = 0; trial < 4; ++trial) {
    const TrlModelXd m = random_cp({3, 2}, 2, 3, 0.6, rng);
    const TensorXd x = batch_of({3, 2}, 4, rng);
    const MatrixXd y = random_matrix(4, 2, rng);
    const SketchDraw d = draw_sketch(m.sketch, m.sketch_ranks(), rng);
    for (const SketchDraw* draw : {static_cast<const SketchDraw*>(nullptr), &d}) {
      const Gradients<double> a = backward(m, x, y, draw);
      const Gradients<double> n = oracle::finite_difference_gradients(m, x, y, draw);
      for (std::size_t k = 0; k < a.factors.size(); ++k)
        EXPECT_LT(oracle::max_relative_error(a.factors[k], n.factors[k], 1e-3), 1e-5);
      EXPECT_LT(oracle::max_relative_error(*a.weights, *n.weights, 1e-3), 1e-5);
      EXPECT_LT(oracle::max_relative_error(a.bias, n.bias, 1e-3), 1e-5);
      EXPECT_NEAR(a.value, objective(m, x, y, draw), 1e-12 * std::abs(a.value));
    }
  }
}

TEST(Backward, TuckerMatchesFiniteDifferences) {
  Rng rng(20);
  const TrlModelXd m = init_tucker_model<double>({3, 2}, 2, {2, 2, 2}, {SketchScheme::replacement, 0.5, false}, rng);
  const TensorXd x = batch_of({3, 2}, 4, rng);
  const MatrixXd y = random_matrix(4, 2, rng);
  const SketchDraw d = draw_sketch(m.sketch, m.sketch_ranks(), rng);
  const Gradients<double> a = backward(m, x, y, &d);
  const Gradients<double> n = oracle::finite_difference_gradients(m, x, y, &d);
  for (std::size_t k = 0; k < a.factors.size(); ++k)
    EXPECT_LT(oracle::max_relative_error(a.factors[k], n.factors[k], 1e-3), 1e-5);
  EXPECT_LT(oracle::max_relative_error(a.core->data(), n.core->data(), 1e-3), 1e-5);
  EXPECT_LT(oracle::max_relative_error(a.bias, n.bias, 1e-3), 1e-5);
  EXPECT_THROW(backward<double>(m, x, y, nullptr), UnsupportedDecompositionError);
}

TEST(Backward, PerSampleDrawsAverageSingleSampleGradients) {
  Rng rng(21);
  const TrlModelXd m = random_cp({3, 2}, 2, 4, 0.5, rng);
  const Index b = 5;
  const TensorXd x = batch_of({3, 2}, b, rng);
  const MatrixXd y = random_matrix(b, 2, rng);
  std::vector<SketchDraw> draws;
  for (Index s = 0; s < b; ++s) draws.push_back(draw_sketch(m.sketch, m.sketch_ranks(), rng));
  const Gradients<double> g = backward_per_sample(m, x, y, draws);

  Gradients<double> mean;
  for (Index s = 0; s < b; ++s) {
    TensorXd xs({1, 3, 2}, x.data().segment(s * 6, 6));
    const Gradients<double> gs = backward(m, xs, MatrixXd(y.row(s)), &draws[static_cast<std::size_t>(s)]);
    if (s == 0) {
      mean = gs;
    } else {
      for (std::size_t k = 0; k < gs.factors.size(); ++k) mean.factors[k] += gs.factors[k];
      *mean.weights += *gs.weights;
      mean.bias += gs.bias;
      mean.value += gs.value;
    }
  }
  for (std::size_t k = 0; k < g.factors.size(); ++k)
    EXPECT_LE((g.factors[k] - mean.factors[k] / b).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((*g.weights - *mean.weights / b).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LE((g.bias - mean.bias / b).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(g.value, mean.value / b, 1e-12 * std::abs(g.value));
}

TEST(Backward, UntiedCpDrawRejected) {
  Rng rng(22);
  const TrlModelXd m = random_cp({3}, 1, 2, 0.5, rng);
  const SketchDraw d{SketchScheme::bernoulli, false, {{1, 0}, {0, 1}}};
  EXPECT_THROW(backward(m, batch_of({3}, 2, rng), MatrixXd(MatrixXd::Zero(2, 1)), &d), ContractViolation);
}

TEST(ApplyGradients, LambdaFrozenByDefault) {
  Rng rng(23);
  TrlModelXd m = random_cp({3, 2}, 2, 2, 0.5, rng);
  const VectorXd before = m.kruskal().effective_weights();
  const TensorXd x = batch_of({3, 2}, 3, rng);
  const Gradients<double> g = backward<double>(m, x, random_matrix(3, 2, rng), nullptr);
  apply_gradients(m, g, -0.1);
  EXPECT_EQ(m.kruskal().effective_weights(), before);
  m.train_lambda = true;
  apply_gradients(m, g, -0.1);
  EXPECT_EQ(m.kruskal().effective_weights(), VectorXd(before - 0.1 * *g.weights));
}
