#include "cycleground/numcore/parameters.hpp"

#include <cstring>

#include "cycleground/errors.hpp"

namespace cycleground::numcore {

Matrix& ParameterSet::add(std::string name, Matrix value) {
  if (contains(name)) {
    throw UsageError("ParameterSet: duplicate parameter '" + name + "'");
  }
  Shape::of(value);
  entries_.emplace_back(std::move(name), std::move(value));
  return entries_.back().second;
}

bool ParameterSet::contains(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.first == name) return true;
  }
  return false;
}

Matrix& ParameterSet::at(std::string_view name) {
  for (auto& e : entries_) {
    if (e.first == name) return e.second;
  }
  throw UsageError("ParameterSet: no parameter named '" + std::string(name) + "'");
}

const Matrix& ParameterSet::at(std::string_view name) const {
  return const_cast<ParameterSet*>(this)->at(name);
}

std::size_t ParameterSet::element_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::size_t>(e.second.size());
  return n;
}

ParameterSet ParameterSet::zeros_like() const {
  ParameterSet out;
  for (const auto& [name, m] : entries_) {
    out.add(name, Matrix::Zero(m.rows(), m.cols()));
  }
  return out;
}

bool ParameterSet::identical(const ParameterSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& [na, a] = entries_[i];
    const auto& [nb, b] = other.entries_[i];
    if (na != nb || a.rows() != b.rows() || a.cols() != b.cols()) return false;
    if (std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) != 0) {
      return false;
    }
  }
  return true;
}

}  // namespace cycleground::numcore
