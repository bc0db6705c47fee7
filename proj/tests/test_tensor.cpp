#include <gtest/gtest.h>

#include <sstream>

#include "srtrl/oracles.hpp"
#include "srtrl/rng.hpp"
#include "srtrl/tensor.hpp"

using namespace srtrl;

namespace {

TensorXd iota_tensor(const Shape& s) {
  TensorXd t(s);
  for (Index j = 0; j < t.size(); ++j) t.data()(j) = static_cast<double>(j);
  return t;
}

TensorXd random_tensor(const Shape& s, Rng& rng) {
  TensorXd t(s);
  for (Index j = 0; j < t.size(); ++j) t.data()(j) = rng.normal();
  return t;
}

MatrixXd random_matrix(Index r, Index c, Rng& rng) {
  MatrixXd m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

}  // namespace

TEST(DenseTensor, LayoutIsRowMajor) {
  const TensorXd t = iota_tensor({2, 3, 4});
  EXPECT_EQ(t({1, 2, 3}), 23.0);
  EXPECT_EQ(t({0, 1, 0}), 4.0);
  EXPECT_EQ(t.offset({1, 0, 2}), 14);
}

TEST(DenseTensor, RejectsBadShapes) {
  EXPECT_THROW(TensorXd(Shape{2, 0}), ShapeError);
  EXPECT_THROW(TensorXd({2, 3}, VectorXd::Zero(5)), ShapeError);
  EXPECT_THROW(iota_tensor({2, 2})({2, 0}), ShapeError);
}

TEST(DenseTensor, ScalarHasEmptyShape) {
  const TensorXd s = TensorXd::scalar(3.5);
  EXPECT_EQ(s.order(), 0);
  EXPECT_EQ(s.size(), 1);
  EXPECT_EQ(s.data()(0), 3.5);
}

TEST(Unfold, Order2Mode0IsIdentity) {
  const TensorXd t = iota_tensor({2, 2});
  EXPECT_EQ(unfold(t, 0), as_matrix(t));
}

TEST(Unfold, Mode0IsReshape) {
  const MatrixXd m = unfold(iota_tensor({2, 3, 4}), 0);
  ASSERT_EQ(m.rows(), 2);
  ASSERT_EQ(m.cols(), 12);
  for (Index j = 0; j < 12; ++j) {
    EXPECT_EQ(m(0, j), static_cast<double>(j));
    EXPECT_EQ(m(1, j), static_cast<double>(12 + j));
  }
}

TEST(Unfold, Mode1MatchesIndexMap) {
  const TensorXd t = iota_tensor({2, 3, 4});
  const MatrixXd m = unfold(t, 1);
  ASSERT_EQ(m.rows(), 3);
  ASSERT_EQ(m.cols(), 8);
  // j = i_0 * I_2 + i_2 for mode 1
  for (Index i0 = 0; i0 < 2; ++i0)
    for (Index i1 = 0; i1 < 3; ++i1)
      for (Index i2 = 0; i2 < 4; ++i2) EXPECT_EQ(m(i1, i0 * 4 + i2), t({i0, i1, i2}));
  EXPECT_EQ(m, oracle::unfold(t, 1));
}

TEST(Unfold, InvalidMode) {
  const TensorXd t = iota_tensor({2, 3});
  EXPECT_THROW(unfold(t, 2), InvalidModeError);
  EXPECT_THROW(unfold(t, -1), InvalidModeError);
}

TEST(Fold, RoundtripsEveryMode) {
  Rng rng(7);
  for (const Shape& s : {Shape{2, 3, 4}, Shape{3, 2, 5}, Shape{1, 4, 1, 2}, Shape{5}}) {
    const TensorXd t = random_tensor(s, rng);
    for (Index n = 0; n < t.order(); ++n) EXPECT_EQ(fold(unfold(t, n), n, s), t) << shape_string(s) << " mode " << n;
  }
}

TEST(Fold, Mode0IsReshapeAndChecksDims) {
  const MatrixXd m = unfold(iota_tensor({2, 3, 4}), 0);
  EXPECT_EQ(fold(m, 0, {2, 3, 4}), iota_tensor({2, 3, 4}));
  EXPECT_THROW(fold(m, 0, {2, 3, 5}), ShapeError);
  EXPECT_THROW(fold(m, 1, {2, 3, 4}), ShapeError);
}

TEST(Vectorize, IdentityOnRowMajorData) {
  const TensorXd t = iota_tensor({2, 3, 4});
  const VectorXd v = vectorize(t);
  for (Index j = 0; j < 24; ++j) EXPECT_EQ(v(j), static_cast<double>(j));
  const TensorXd line = iota_tensor({5});
  EXPECT_EQ(vectorize(line), line.data());
}

TEST(Vectorize, MatchesPositionFormula) {
  Rng rng(3);
  const TensorXd t = random_tensor({3, 3, 3}, rng);
  const VectorXd v = vectorize(t);
  oracle::for_each_index(t.shape(), [&](const std::vector<Index>& idx) {
    EXPECT_EQ(v(oracle::vec_position(idx, t.shape())), t(idx));
  });
}

TEST(ModeDot, IdentityLaw) {
  Rng rng(11);
  const TensorXd t = random_tensor({3, 4, 2}, rng);
  for (Index n = 0; n < 3; ++n) EXPECT_EQ(mode_dot(t, MatrixXd(MatrixXd::Identity(t.dim(n), t.dim(n))), n), t);
}

TEST(ModeDot, DiagonalScaling) {
  const TensorXd ones = TensorXd::constant({2, 2, 2}, 1.0);
  MatrixXd m(2, 2);
  m << 2, 0, 0, 2;
  EXPECT_EQ(mode_dot(ones, m, 0), TensorXd::constant({2, 2, 2}, 2.0));
}

TEST(ModeDot, MatchesTripleSum) {
  Rng rng(5);
  const TensorXd t = random_tensor({3, 4, 2}, rng);
  const MatrixXd m = random_matrix(5, 4, rng);
  const TensorXd r = mode_dot(t, m, 1);
  ASSERT_EQ(r.shape(), (Shape{3, 5, 2}));
  for (Index i0 = 0; i0 < 3; ++i0)
    for (Index q = 0; q < 5; ++q)
      for (Index i2 = 0; i2 < 2; ++i2) {
        double acc = 0;
        for (Index i1 = 0; i1 < 4; ++i1) acc += m(q, i1) * t({i0, i1, i2});
        EXPECT_NEAR(r({i0, q, i2}), acc, 1e-12);
      }
}

TEST(ModeDot, ShapeMismatch) {
  const TensorXd t = iota_tensor({2, 3});
  EXPECT_THROW(mode_dot(t, MatrixXd(MatrixXd::Zero(2, 2)), 1), ShapeError);
}

TEST(ModeDot, DistinctModesCommute) {
  Rng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    const TensorXd t = random_tensor({3, 4, 2}, rng);
    const MatrixXd a = random_matrix(2, 3, rng), b = random_matrix(5, 4, rng);
    const TensorXd ab = mode_dot(mode_dot(t, a, 0), b, 1);
    const TensorXd ba = mode_dot(mode_dot(t, b, 1), a, 0);
    EXPECT_LE((ab.data() - ba.data()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(InnerContract, FullContractionOfOnes) {
  const TensorXd ones = TensorXd::constant({2, 3}, 1.0);
  const TensorXd r = inner_contract(ones, ones, 2);
  EXPECT_EQ(r.order(), 0);
  EXPECT_EQ(r.data()(0), 6.0);
}

TEST(InnerContract, PartialMatchesBruteForce) {
  Rng rng(23);
  const TensorXd x = random_tensor({4, 2, 3}, rng), w = random_tensor({2, 3, 5}, rng);
  const TensorXd r = inner_contract(x, w, 2);
  ASSERT_EQ(r.shape(), (Shape{4, 5}));
  for (Index a = 0; a < 4; ++a)
    for (Index c = 0; c < 5; ++c) {
      double acc = 0;
      for (Index i = 0; i < 2; ++i)
        for (Index j = 0; j < 3; ++j) acc += x({a, i, j}) * w({i, j, c});
      EXPECT_NEAR(r({a, c}), acc, 1e-12);
    }
}

TEST(InnerContract, BatchedShapeAndMismatch) {
  Rng rng(1);
  const TensorXd x = random_tensor({6, 2, 3, 4}, rng), w = random_tensor({2, 3, 4, 2}, rng);
  EXPECT_EQ(inner_contract(x, w, 3).shape(), (Shape{6, 2}));
  EXPECT_THROW(inner_contract(x, random_tensor({2, 4, 3, 2}, rng), 3), ShapeError);
}

TEST(InnerContract, FullEqualsDotOfVectorizations) {
  Rng rng(29);
  for (int trial = 0; trial < 5; ++trial) {
    const TensorXd x = random_tensor({3, 2, 4}, rng), w = random_tensor({3, 2, 4}, rng);
    EXPECT_NEAR(inner_contract(x, w, 3).data()(0), vectorize(x).dot(vectorize(w)), 1e-12);
  }
}

TEST(KhatriRao, SingleFactorIsItself) {
  Rng rng(2);
  const MatrixXd a = random_matrix(4, 3, rng);
  EXPECT_EQ(khatri_rao<double>({a}), a);
}

TEST(KhatriRao, RankOneIsKronecker) {
  MatrixXd a(2, 1), b(3, 1);
  a << 1, 2;
  b << 3, 4, 5;
  VectorXd expected(6);
  expected << 3, 4, 5, 6, 8, 10;
  EXPECT_EQ(VectorXd(khatri_rao<double>({a, b}).col(0)), expected);
}

TEST(KhatriRao, MismatchedColumns) {
  EXPECT_THROW(khatri_rao<double>({MatrixXd::Zero(2, 2), MatrixXd::Zero(2, 3)}), ShapeError);
}

TEST(Helpers, BlasLike) {
  Rng rng(4);
  const MatrixXd m = random_matrix(3, 4, rng);
  EXPECT_EQ(matmul(MatrixXd(MatrixXd::Identity(3, 3)), m), m);
  EXPECT_EQ(transpose(transpose(m)), m);
  EXPECT_THROW(matmul(m, m), ShapeError);
  EXPECT_EQ(frobenius_norm_sq(TensorXd::constant({2, 3}, 1.0)), 6.0);
  const TensorXd a = iota_tensor({2}), b = iota_tensor({3});
  const TensorXd o = outer(a, b);
  EXPECT_EQ(o.shape(), (Shape{2, 3}));
  EXPECT_EQ(o({1, 2}), 2.0);
  EXPECT_EQ(axpy(2.0, a, a), TensorXd({2}, VectorXd::LinSpaced(2, 0, 3)));
  EXPECT_THROW(axpy(1.0, a, b), ShapeError);
}

TEST(TensorText, RoundtripsAtFullPrecision) {
  Rng rng(8);
  const TensorXd t = random_tensor({2, 3}, rng);
  std::stringstream ss;
  write_tensor(ss, t);
  std::string first;
  std::getline(ss, first);
  EXPECT_EQ(first, "2 3");
  ss.seekg(0);
  EXPECT_EQ(read_tensor(ss), t);

  std::stringstream scalar;
  write_tensor(scalar, TensorXd::scalar(0.1));
  EXPECT_EQ(scalar.str(), "\n0.10000000000000001\n");
  EXPECT_EQ(read_tensor(scalar), TensorXd::scalar(0.1));
}

TEST(TensorText, RejectsMalformedRecords) {
  std::stringstream short_data("2 2\n1 2 3\n");
  EXPECT_THROW(read_tensor(short_data), ParseError);
  std::stringstream junk("2 x\n1 2\n");
  EXPECT_THROW(read_tensor(junk), ParseError);
  std::stringstream truncated("3\n");
  EXPECT_THROW(read_tensor(truncated), ParseError);
}
