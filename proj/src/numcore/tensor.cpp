#include "cycleground/numcore/tensor.hpp"

#include <cmath>

#include "cycleground/errors.hpp"

namespace cycleground::numcore {

Shape Shape::of(Index rows, Index cols) {
  if (rows < 1 || cols < 1) {
    throw DimensionError("invalid shape [" + std::to_string(rows) + "x" +
                         std::to_string(cols) + "]: extents must be >= 1");
  }
  return Shape{rows, cols};
}

std::string Shape::str() const {
  return "[" + std::to_string(rows) + "x" + std::to_string(cols) + "]";
}

Matrix row_vector(std::initializer_list<double> values) {
  Matrix m(1, static_cast<Index>(values.size()));
  Index j = 0;
  for (double v : values) m(0, j++) = v;
  return m;
}

Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  const auto r = static_cast<Index>(rows.size());
  const auto c = r == 0 ? Index{0} : static_cast<Index>(rows.begin()->size());
  Matrix m(r, c);
  Index i = 0;
  for (const auto& row : rows) {
    if (static_cast<Index>(row.size()) != c) {
      throw DimensionError("from_rows: ragged initializer");
    }
    Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

bool all_finite(const Matrix& m) {
  for (Index i = 0; i < m.size(); ++i) {
    if (!std::isfinite(m.data()[i])) return false;
  }
  return true;
}

}  // namespace cycleground::numcore
