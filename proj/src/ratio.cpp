#include "finematch/ratio.hpp"

#include <numeric>
#include <stdexcept>

namespace finematch {

namespace {

using int128 = __int128;

}  // namespace

Ratio::Ratio(std::int64_t numerator, std::int64_t denominator) {
  if (denominator <= 0) {
    throw std::invalid_argument("Ratio: denominator must be positive");
  }
  if (numerator < 0) {
    throw std::invalid_argument("Ratio: numerator must be nonnegative");
  }
  const std::int64_t g = std::gcd(numerator, denominator);
  num_ = numerator / (g == 0 ? 1 : g);
  den_ = denominator / (g == 0 ? 1 : g);
}

Ratio Ratio::from_decimal(const std::string& text) {
  if (text.empty()) {
    throw std::invalid_argument("Ratio: empty decimal literal");
  }
  std::int64_t num = 0;
  std::int64_t den = 1;
  bool seen_digit = false;
  bool seen_dot = false;
  for (char ch : text) {
    if (ch == '.') {
      if (seen_dot) throw std::invalid_argument("Ratio: malformed decimal '" + text + "'");
      seen_dot = true;
      continue;
    }
    if (ch < '0' || ch > '9') {
      throw std::invalid_argument("Ratio: malformed decimal '" + text + "'");
    }
    seen_digit = true;
    if (num > (INT64_MAX - 9) / 10 || (seen_dot && den > INT64_MAX / 10)) {
      throw std::invalid_argument("Ratio: decimal literal out of range '" + text + "'");
    }
    num = num * 10 + (ch - '0');
    if (seen_dot) den *= 10;
  }
  if (!seen_digit) {
    throw std::invalid_argument("Ratio: malformed decimal '" + text + "'");
  }
  return Ratio(num, den);
}

std::int64_t Ratio::floor_times(std::int64_t n) const {
  if (n < 0) {
    throw std::invalid_argument("Ratio::floor_times: n must be nonnegative");
  }
  const int128 product = static_cast<int128>(num_) * n;
  return static_cast<std::int64_t>(product / den_);
}

Ratio Ratio::operator*(const Ratio& other) const {
  // Cross-reduce before multiplying to keep the factors small.
  const std::int64_t g1 = std::gcd(num_, other.den_);
  const std::int64_t g2 = std::gcd(other.num_, den_);
  const std::int64_t a = num_ / (g1 == 0 ? 1 : g1);
  const std::int64_t b = den_ / (g2 == 0 ? 1 : g2);
  const std::int64_t c = other.num_ / (g2 == 0 ? 1 : g2);
  const std::int64_t d = other.den_ / (g1 == 0 ? 1 : g1);
  const int128 num = static_cast<int128>(a) * c;
  const int128 den = static_cast<int128>(b) * d;
  if (num > INT64_MAX || den > INT64_MAX) {
    throw std::overflow_error("Ratio: product out of range");
  }
  return Ratio(static_cast<std::int64_t>(num), static_cast<std::int64_t>(den));
}

bool Ratio::operator==(const Ratio& other) const {
  return num_ == other.num_ && den_ == other.den_;
}

bool Ratio::operator<(const Ratio& other) const {
  return static_cast<int128>(num_) * other.den_ < static_cast<int128>(other.num_) * den_;
}

bool Ratio::operator<=(const Ratio& other) const {
  return static_cast<int128>(num_) * other.den_ <= static_cast<int128>(other.num_) * den_;
}

std::string Ratio::str() const {
  return std::to_string(num_) + "/" + std::to_string(den_);
}

}  // namespace finematch
