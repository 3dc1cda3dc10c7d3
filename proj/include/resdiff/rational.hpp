#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace resdiff {

/// Exact rational number over 128-bit integers. Arithmetic that would overflow
/// throws std::overflow_error so callers can fall back to floating point.
class Rational {
 public:
  using Int = __int128;

  Rational() = default;
  Rational(std::int64_t num) : num_(num) {}  // NOLINT(google-explicit-constructor)
  Rational(Int num, Int den);

  /// Best rational approximation of `value` with denominator at most
  /// `max_den`, provided it reproduces `value` within `tol`.
  static std::optional<Rational> approximate(double value, std::int64_t max_den = std::int64_t{1} << 24,
                                             double tol = 1e-13);

  Int num() const { return num_; }
  Int den() const { return den_; }
  double to_double() const;
  std::string to_string() const;

  friend Rational operator+(const Rational& a, const Rational& b);
  friend Rational operator-(const Rational& a, const Rational& b);
  friend Rational operator*(const Rational& a, const Rational& b);
  friend Rational operator/(const Rational& a, const Rational& b);
  friend bool operator==(const Rational& a, const Rational& b) { return a.num_ == b.num_ && a.den_ == b.den_; }

  Rational& operator+=(const Rational& o) { return *this = *this + o; }
  Rational& operator-=(const Rational& o) { return *this = *this - o; }
  Rational& operator*=(const Rational& o) { return *this = *this * o; }

 private:
  Int num_ = 0;
  Int den_ = 1;
};

}  // namespace resdiff
