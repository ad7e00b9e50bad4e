#pragma once

#include <vector>

#include <Eigen/Dense>

#include "mafm/error.hpp"

namespace mafm {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Time-ordered sequence of n matrices of equal shape d1 x d2.
///
/// Slices are stored side by side in one column-major buffer, [X_1 X_2 ... X_n],
/// so that modewise Gram sums can be formed with a single matrix product.
class MatrixSeries {
 public:
  MatrixSeries() = default;

  MatrixSeries(Index d1, Index d2, Index n)
      : d1_(d1), d2_(d2), n_(n), data_(Matrix::Zero(d1, n * d2)) {
    require(d1 >= 0 && d2 >= 0 && n >= 0, ErrorKind::invalid_argument,
            "MatrixSeries: negative dimension");
  }

  static MatrixSeries from_slices(const std::vector<Matrix>& slices) {
    require(!slices.empty(), ErrorKind::invalid_argument,
            "MatrixSeries: need at least one slice");
    MatrixSeries out(slices.front().rows(), slices.front().cols(),
                     static_cast<Index>(slices.size()));
    for (Index t = 0; t < out.size(); ++t) {
      const Matrix& s = slices[static_cast<std::size_t>(t)];
      require(s.rows() == out.rows() && s.cols() == out.cols(),
              ErrorKind::invalid_argument, "MatrixSeries: slice shapes differ");
      out[t] = s;
    }
    return out;
  }

  Index rows() const noexcept { return d1_; }
  Index cols() const noexcept { return d2_; }
  Index size() const noexcept { return n_; }
  bool empty() const noexcept { return n_ == 0; }

  using Slice = Eigen::Block<Matrix, Eigen::Dynamic, Eigen::Dynamic, true>;
  using ConstSlice = Eigen::Block<const Matrix, Eigen::Dynamic, Eigen::Dynamic, true>;

  Slice operator[](Index t) { return data_.middleCols(t * d2_, d2_); }
  ConstSlice operator[](Index t) const { return data_.middleCols(t * d2_, d2_); }

  /// d1 x (n*d2) buffer [X_1 ... X_n].
  const Matrix& stacked() const noexcept { return data_; }
  Matrix& stacked() noexcept { return data_; }

  /// (n*d1) x d2 matrix [X_1; ...; X_n].
  Matrix stacked_rows() const {
    Matrix out(n_ * d1_, d2_);
    for (Index t = 0; t < n_; ++t) out.middleRows(t * d1_, d1_) = (*this)[t];
    return out;
  }

  /// Copy of the first w slices.
  MatrixSeries head(Index w) const {
    require(w >= 0 && w <= n_, ErrorKind::invalid_argument,
            "MatrixSeries::head: window out of range");
    MatrixSeries out(d1_, d2_, w);
    out.data_ = data_.leftCols(w * d2_);
    return out;
  }

  bool all_finite() const { return data_.allFinite(); }

  friend bool operator==(const MatrixSeries& a, const MatrixSeries& b) {
    return a.d1_ == b.d1_ && a.d2_ == b.d2_ && a.n_ == b.n_ && a.data_ == b.data_;
  }

 private:
  Index d1_ = 0;
  Index d2_ = 0;
  Index n_ = 0;
  Matrix data_;
};

}  // namespace mafm
