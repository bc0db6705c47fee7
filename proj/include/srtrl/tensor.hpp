#pragma once

// Dense N-order tensors stored row-major (last index fastest) and the
// multilinear operator set built on top of them: unfolding, folding,
// vectorization, mode-n products, generalized inner products and the
// column-wise Khatri-Rao product.

#include <Eigen/Dense>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <istream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "srtrl/errors.hpp"

namespace srtrl {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXd = Matrix<double>;
using VectorXd = Vector<double>;

inline Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t k = 0; k < shape.size(); ++k) {
    if (k) s += ",";
    s += std::to_string(shape[k]);
  }
  return s + ")";
}

/// N-order dense array of scalars. Element (i_0, ..., i_{N-1}) lives at flat
/// offset sum_k i_k * prod_{m>k} I_m. Order 0 (shape ()) holds one scalar.
template <typename Scalar>
class DenseTensor {
 public:
  DenseTensor() : data_(Vector<Scalar>::Zero(1)) {}

  explicit DenseTensor(Shape shape) : shape_(std::move(shape)) {
    check_shape(shape_);
    data_ = Vector<Scalar>::Zero(shape_size(shape_));
  }

  DenseTensor(Shape shape, Vector<Scalar> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape(shape_);
    if (data_.size() != shape_size(shape_))
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(shape_));
  }

  static DenseTensor zeros(Shape shape) { return DenseTensor(std::move(shape)); }

  static DenseTensor constant(Shape shape, Scalar value) {
    DenseTensor t(std::move(shape));
    t.data_.setConstant(value);
    return t;
  }

  static DenseTensor scalar(Scalar value) {
    DenseTensor t;
    t.data_(0) = value;
    return t;
  }

  const Shape& shape() const noexcept { return shape_; }
  Index order() const noexcept { return static_cast<Index>(shape_.size()); }
  Index size() const noexcept { return data_.size(); }
  Index dim(Index mode) const { return shape_.at(static_cast<std::size_t>(mode)); }

  const Vector<Scalar>& data() const noexcept { return data_; }
  Vector<Scalar>& data() noexcept { return data_; }

  Index offset(std::initializer_list<Index> idx) const {
    return offset(std::vector<Index>(idx));
  }

  Index offset(const std::vector<Index>& idx) const {
    if (idx.size() != shape_.size())
      throw ShapeError("index of order " + std::to_string(idx.size()) + " for tensor of order " +
                       std::to_string(shape_.size()));
    Index j = 0;
    for (std::size_t k = 0; k < shape_.size(); ++k) {
      if (idx[k] < 0 || idx[k] >= shape_[k]) throw ShapeError("index out of range");
      j = j * shape_[k] + idx[k];
    }
    return j;
  }

  Scalar& operator()(const std::vector<Index>& idx) { return data_(offset(idx)); }
  Scalar operator()(const std::vector<Index>& idx) const { return data_(offset(idx)); }
  Scalar& operator()(std::initializer_list<Index> idx) { return data_(offset(idx)); }
  Scalar operator()(std::initializer_list<Index> idx) const { return data_(offset(idx)); }

  /// Same data under a new shape of equal size.
  DenseTensor reshaped(Shape shape) const { return DenseTensor(std::move(shape), data_); }

  bool operator==(const DenseTensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  static void check_shape(const Shape& shape) {
    for (Index d : shape)
      if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
  }

  Shape shape_;
  Vector<Scalar> data_;
};

using TensorXd = DenseTensor<double>;

/// Order-2 tensor view of a matrix (row-major, so the data is shared layout).
template <typename Scalar>
DenseTensor<Scalar> as_tensor(const Matrix<Scalar>& m) {
  return DenseTensor<Scalar>({m.rows(), m.cols()},
                             Eigen::Map<const Vector<Scalar>>(m.data(), m.size()));
}

template <typename Scalar>
Matrix<Scalar> as_matrix(const DenseTensor<Scalar>& t) {
  if (t.order() != 2) throw ShapeError("expected an order-2 tensor, got " + shape_string(t.shape()));
  return Eigen::Map<const Matrix<Scalar>>(t.data().data(), t.dim(0), t.dim(1));
}

namespace detail {

inline void check_mode(Index order, Index mode) {
  if (mode < 0 || mode >= order)
    throw InvalidModeError("mode " + std::to_string(mode) + " out of range for order " +
                           std::to_string(order));
}

inline Index prod_range(const Shape& shape, Index first, Index last) {
  Index p = 1;
  for (Index k = first; k < last; ++k) p *= shape[static_cast<std::size_t>(k)];
  return p;
}

}  // namespace detail

/// Mode-n unfolding: I_mode rows, prod_{k != mode} I_k columns. Column index
/// of (i_0..i_{N-1}) is sum_{k != mode} i_k prod_{m>k, m != mode} I_m.
template <typename Scalar>
Matrix<Scalar> unfold(const DenseTensor<Scalar>& t, Index mode) {
  detail::check_mode(t.order(), mode);
  const Shape& s = t.shape();
  const Index n = s[static_cast<std::size_t>(mode)];
  const Index left = detail::prod_range(s, 0, mode);
  const Index right = detail::prod_range(s, mode + 1, t.order());
  Matrix<Scalar> m(n, left * right);
  const Scalar* src = t.data().data();
  for (Index l = 0; l < left; ++l)
    for (Index i = 0; i < n; ++i)
      for (Index r = 0; r < right; ++r) m(i, l * right + r) = src[(l * n + i) * right + r];
  return m;
}

/// Inverse of unfold for the given target shape.
template <typename Scalar>
DenseTensor<Scalar> fold(const Matrix<Scalar>& m, Index mode, const Shape& shape) {
  detail::check_mode(static_cast<Index>(shape.size()), mode);
  const Index n = shape[static_cast<std::size_t>(mode)];
  const Index left = detail::prod_range(shape, 0, mode);
  const Index right = detail::prod_range(shape, mode + 1, static_cast<Index>(shape.size()));
  if (m.rows() != n || m.cols() != left * right)
    throw ShapeError("cannot fold " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                     " matrix along mode " + std::to_string(mode) + " into " + shape_string(shape));
  DenseTensor<Scalar> t(shape);
  Scalar* dst = t.data().data();
  for (Index l = 0; l < left; ++l)
    for (Index i = 0; i < n; ++i)
      for (Index r = 0; r < right; ++r) dst[(l * n + i) * right + r] = m(i, l * right + r);
  return t;
}

/// Row-major storage makes vectorization the identity on the flat data.
template <typename Scalar>
Vector<Scalar> vectorize(const DenseTensor<Scalar>& t) {
  return t.data();
}

/// t x_mode m, i.e. (t x_n M)_[n] = M t_[n].
template <typename Scalar>
DenseTensor<Scalar> mode_dot(const DenseTensor<Scalar>& t, const Matrix<Scalar>& m, Index mode) {
  detail::check_mode(t.order(), mode);
  if (m.cols() != t.dim(mode))
    throw ShapeError("mode_dot: matrix has " + std::to_string(m.cols()) + " columns, mode " +
                     std::to_string(mode) + " of " + shape_string(t.shape()) + " has size " +
                     std::to_string(t.dim(mode)));
  Shape out_shape = t.shape();
  out_shape[static_cast<std::size_t>(mode)] = m.rows();
  Matrix<Scalar> prod = m * unfold(t, mode);
  return fold(prod, mode, out_shape);
}

/// Contraction of the last n_modes modes of x with the first n_modes modes of w.
/// Both tensors fully contracted gives an order-0 result.
template <typename Scalar>
DenseTensor<Scalar> inner_contract(const DenseTensor<Scalar>& x, const DenseTensor<Scalar>& w,
                                   Index n_modes) {
  if (n_modes < 0 || n_modes > x.order() || n_modes > w.order())
    throw ShapeError("inner_contract: cannot contract " + std::to_string(n_modes) + " modes of " +
                     shape_string(x.shape()) + " and " + shape_string(w.shape()));
  const Index lead_order = x.order() - n_modes;
  for (Index k = 0; k < n_modes; ++k)
    if (x.dim(lead_order + k) != w.dim(k))
      throw ShapeError("inner_contract: shared dims differ between " + shape_string(x.shape()) +
                       " and " + shape_string(w.shape()));
  Shape out_shape(x.shape().begin(), x.shape().begin() + lead_order);
  out_shape.insert(out_shape.end(), w.shape().begin() + n_modes, w.shape().end());
  const Index lead = detail::prod_range(x.shape(), 0, lead_order);
  const Index shared = detail::prod_range(w.shape(), 0, n_modes);
  const Index trail = detail::prod_range(w.shape(), n_modes, w.order());
  Eigen::Map<const Matrix<Scalar>> xm(x.data().data(), lead, shared);
  Eigen::Map<const Matrix<Scalar>> wm(w.data().data(), shared, trail);
  Matrix<Scalar> r = xm * wm;
  return DenseTensor<Scalar>(std::move(out_shape), Eigen::Map<const Vector<Scalar>>(r.data(), r.size()));
}

/// Column-wise Khatri-Rao product. Column r is the Kronecker product of the
/// r-th columns in the given order, so the first factor's index varies slowest
/// (consistent with vectorize).
template <typename Scalar>
Matrix<Scalar> khatri_rao(const std::vector<Matrix<Scalar>>& factors) {
  if (factors.empty()) throw ShapeError("khatri_rao of an empty factor list");
  const Index rank = factors.front().cols();
  for (const auto& f : factors)
    if (f.cols() != rank) throw ShapeError("khatri_rao: factors have different column counts");
  Matrix<Scalar> acc = factors.front();
  for (std::size_t k = 1; k < factors.size(); ++k) {
    const auto& f = factors[k];
    Matrix<Scalar> next(acc.rows() * f.rows(), rank);
    for (Index i = 0; i < acc.rows(); ++i)
      next.middleRows(i * f.rows(), f.rows()) = f.array().rowwise() * acc.row(i).array();
    acc = std::move(next);
  }
  return acc;
}

template <typename Scalar>
Matrix<Scalar> matmul(const Matrix<Scalar>& a, const Matrix<Scalar>& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                     " times " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  return a * b;
}

template <typename Scalar>
Matrix<Scalar> transpose(const Matrix<Scalar>& m) {
  return m.transpose();
}

/// Outer product; the result has shape a.shape ++ b.shape.
template <typename Scalar>
DenseTensor<Scalar> outer(const DenseTensor<Scalar>& a, const DenseTensor<Scalar>& b) {
  Shape s = a.shape();
  s.insert(s.end(), b.shape().begin(), b.shape().end());
  Matrix<Scalar> m = a.data() * b.data().transpose();
  return DenseTensor<Scalar>(std::move(s), Eigen::Map<const Vector<Scalar>>(m.data(), m.size()));
}

/// alpha * x + y.
template <typename Scalar>
DenseTensor<Scalar> axpy(Scalar alpha, const DenseTensor<Scalar>& x, const DenseTensor<Scalar>& y) {
  if (x.shape() != y.shape())
    throw ShapeError("axpy: " + shape_string(x.shape()) + " vs " + shape_string(y.shape()));
  return DenseTensor<Scalar>(y.shape(), alpha * x.data() + y.data());
}

template <typename Scalar>
Scalar frobenius_norm_sq(const DenseTensor<Scalar>& t) {
  return t.data().squaredNorm();
}

// Plain-text serialization: shape on the first line, row-major data on the
// second, both space separated, values with 17 significant digits.

template <typename Scalar>
void write_tensor(std::ostream& os, const DenseTensor<Scalar>& t) {
  for (std::size_t k = 0; k < t.shape().size(); ++k) os << (k ? " " : "") << t.shape()[k];
  os << '\n';
  std::ostringstream line;
  line << std::setprecision(17);
  for (Index j = 0; j < t.size(); ++j) line << (j ? " " : "") << static_cast<double>(t.data()(j));
  os << line.str() << '\n';
}

template <typename Scalar>
void write_matrix(std::ostream& os, const Matrix<Scalar>& m) {
  write_tensor(os, as_tensor(m));
}

template <typename Scalar = double>
DenseTensor<Scalar> read_tensor(std::istream& is) {
  std::string shape_line, data_line;
  if (!std::getline(is, shape_line) || !std::getline(is, data_line))
    throw ParseError("truncated tensor record");
  Shape shape;
  {
    std::istringstream ss(shape_line);
    long long d;
    while (ss >> d) shape.push_back(static_cast<Index>(d));
    if (!ss.eof()) throw ParseError("malformed shape line: '" + shape_line + "'");
  }
  for (Index d : shape)
    if (d <= 0) throw ParseError("non-positive dimension in '" + shape_line + "'");
  std::vector<double> values;
  {
    std::istringstream ss(data_line);
    double v;
    while (ss >> v) values.push_back(v);
    if (!ss.eof()) throw ParseError("malformed data line");
  }
  if (static_cast<Index>(values.size()) != shape_size(shape))
    throw ParseError("tensor record has " + std::to_string(values.size()) + " values for shape " +
                     shape_string(shape));
  Vector<Scalar> data(static_cast<Index>(values.size()));
  for (std::size_t j = 0; j < values.size(); ++j) data(static_cast<Index>(j)) = static_cast<Scalar>(values[j]);
  return DenseTensor<Scalar>(std::move(shape), std::move(data));
}

template <typename Scalar = double>
Matrix<Scalar> read_matrix(std::istream& is) {
  auto t = read_tensor<Scalar>(is);
  if (t.order() != 2) throw ParseError("expected a matrix record, got shape " + shape_string(t.shape()));
  return as_matrix(t);
}

}  // namespace srtrl
