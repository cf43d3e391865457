#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cycleground/numcore/tensor.hpp"

namespace cycleground::numcore {

/// Named matrices in insertion order. Order is significant: it fixes the
/// iteration order of optimizers, gradient reductions and checkpoints.
class ParameterSet {
 public:
  using Entry = std::pair<std::string, Matrix>;

  Matrix& add(std::string name, Matrix value);
  bool contains(std::string_view name) const;
  Matrix& at(std::string_view name);
  const Matrix& at(std::string_view name) const;

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t element_count() const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  /// Same names and shapes, all zeros.
  ParameterSet zeros_like() const;

  /// Bitwise equality of names, shapes and every value.
  bool identical(const ParameterSet& other) const;

 private:
  std::vector<Entry> entries_;
};

}  // namespace cycleground::numcore
