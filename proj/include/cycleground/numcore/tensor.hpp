#pragma once

#include <Eigen/Dense>
#include <string>

namespace cycleground::numcore {

/// Dense row-major float64 storage used for every value and gradient.
/// Vectors are 1 x n rows; a batch of vectors stacks them as B x n.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

struct Shape {
  Index rows = 1;
  Index cols = 1;

  /// Throws DimensionError unless both extents are at least 1.
  static Shape of(Index rows, Index cols);
  static Shape of(const Matrix& m) { return of(m.rows(), m.cols()); }

  Index size() const { return rows * cols; }
  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;
};

Matrix row_vector(std::initializer_list<double> values);
Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

bool all_finite(const Matrix& m);

}  // namespace cycleground::numcore
