#pragma once

#include <cstdint>
#include <string>

namespace finematch {

/// Exact nonnegative rational, kept normalized.
///
/// Matched-group sizes hinge on floor(kappa * n_b). Evaluating that product in
/// floating point can land on the wrong side of an integer boundary (e.g. when
/// kappa is exactly N_b / n_b for the binding level), so kappa is carried as a
/// rational from parsing through quota computation.
class Ratio {
 public:
  Ratio() = default;
  Ratio(std::int64_t numerator, std::int64_t denominator);

  /// Parses a nonnegative decimal literal ("1", "0.9", "1.25") exactly.
  static Ratio from_decimal(const std::string& text);

  std::int64_t num() const { return num_; }
  std::int64_t den() const { return den_; }
  double value() const { return static_cast<double>(num_) / static_cast<double>(den_); }

  /// floor(*this * n) in exact integer arithmetic; n must be >= 0.
  std::int64_t floor_times(std::int64_t n) const;

  Ratio operator*(const Ratio& other) const;

  bool operator==(const Ratio& other) const;
  bool operator!=(const Ratio& other) const { return !(*this == other); }
  bool operator<(const Ratio& other) const;
  bool operator<=(const Ratio& other) const;
  bool operator>(const Ratio& other) const { return other < *this; }
  bool operator>=(const Ratio& other) const { return other <= *this; }

  std::string str() const;

 private:
  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

}  // namespace finematch
