#pragma once

#include <cstddef>
#include <vector>

#include "lpca/errors.hpp"

namespace lpca {

/// Equispaced multipliers on [-lambda_max, lambda_max], ascending and
/// exactly symmetric about zero.
class LambdaGrid {
 public:
  static constexpr std::size_t kDefaultPoints = 1000;

  LambdaGrid() : LambdaGrid(5.0) {}
  explicit LambdaGrid(double lambda_max, std::size_t points = kDefaultPoints) : lambda_max_(lambda_max) {
    if (!(lambda_max > 0.0)) throw DomainError("lambda_max must be positive");
    if (points < 2) throw DomainError("lambda grid needs at least two points");
    values_.resize(points);
    const double span = static_cast<double>(points - 1);
    for (std::size_t i = 0; i < points; ++i) {
      // (2i - (n-1)) is odd-symmetric in i, so points[i] == -points[n-1-i] exactly.
      const double numer = 2.0 * static_cast<double>(i) - span;
      values_[i] = lambda_max * numer / span;
    }
  }

  double lambda_max() const { return lambda_max_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }
  const std::vector<double>& values() const { return values_; }
  double step() const { return 2.0 * lambda_max_ / static_cast<double>(values_.size() - 1); }

 private:
  double lambda_max_ = 5.0;
  std::vector<double> values_;
};

}  // namespace lpca
