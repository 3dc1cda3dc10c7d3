#include "resdiff/rational.hpp"

#include <cmath>
#include <stdexcept>

namespace resdiff {
namespace {

using Int = Rational::Int;

Int abs128(Int v) { return v < 0 ? -v : v; }

Int gcd128(Int a, Int b) {
  a = abs128(a);
  b = abs128(b);
  while (b != 0) {
    Int t = a % b;
    a = b;
    b = t;
  }
  return a;
}

Int checked_mul(Int a, Int b) {
  Int r;
  if (__builtin_mul_overflow(a, b, &r)) throw std::overflow_error("rational overflow");
  return r;
}

Int checked_add(Int a, Int b) {
  Int r;
  if (__builtin_add_overflow(a, b, &r)) throw std::overflow_error("rational overflow");
  return r;
}

std::string int_to_string(Int v) {
  if (v == 0) return "0";
  bool neg = v < 0;
  std::string s;
  while (v != 0) {
    int digit = static_cast<int>(v % 10);
    s.insert(s.begin(), static_cast<char>('0' + (digit < 0 ? -digit : digit)));
    v /= 10;
  }
  return neg ? "-" + s : s;
}

}  // namespace

Rational::Rational(Int num, Int den) {
  if (den == 0) throw std::domain_error("rational with zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  Int g = gcd128(num, den);
  if (g == 0) g = 1;
  num_ = num / g;
  den_ = den / g;
}

std::optional<Rational> Rational::approximate(double value, std::int64_t max_den, double tol) {
  if (!std::isfinite(value)) return std::nullopt;
  // Continued-fraction convergents.
  Int h_prev = 1, h = static_cast<Int>(std::floor(value));
  Int k_prev = 0, k = 1;
  double rem = value - std::floor(value);
  for (int iter = 0; iter < 64; ++iter) {
    double approx = static_cast<double>(h) / static_cast<double>(k);
    if (std::abs(approx - value) <= tol * std::max(1.0, std::abs(value))) return Rational(h, k);
    if (rem < 1e-300) break;
    double inv = 1.0 / rem;
    double a = std::floor(inv);
    rem = inv - a;
    Int ai = static_cast<Int>(a);
    Int h_next = ai * h + h_prev;
    Int k_next = ai * k + k_prev;
    if (k_next > max_den) break;
    h_prev = h;
    h = h_next;
    k_prev = k;
    k = k_next;
  }
  double approx = static_cast<double>(h) / static_cast<double>(k);
  if (std::abs(approx - value) <= tol * std::max(1.0, std::abs(value))) return Rational(h, k);
  return std::nullopt;
}

double Rational::to_double() const {
  return static_cast<double>(static_cast<long double>(num_) / static_cast<long double>(den_));
}

std::string Rational::to_string() const {
  if (den_ == 1) return int_to_string(num_);
  return int_to_string(num_) + "/" + int_to_string(den_);
}

Rational operator+(const Rational& a, const Rational& b) {
  Int g = gcd128(a.den_, b.den_);
  Int den = checked_mul(a.den_ / g, b.den_);
  Int num = checked_add(checked_mul(a.num_, b.den_ / g), checked_mul(b.num_, a.den_ / g));
  return {num, den};
}

Rational operator-(const Rational& a, const Rational& b) { return a + Rational(-b.num_, b.den_); }

Rational operator*(const Rational& a, const Rational& b) {
  Int g1 = gcd128(a.num_, b.den_);
  Int g2 = gcd128(b.num_, a.den_);
  if (g1 == 0) g1 = 1;
  if (g2 == 0) g2 = 1;
  return {checked_mul(a.num_ / g1, b.num_ / g2), checked_mul(a.den_ / g2, b.den_ / g1)};
}

Rational operator/(const Rational& a, const Rational& b) {
  if (b.num_ == 0) throw std::domain_error("rational division by zero");
  return a * Rational(b.den_, b.num_);
}

}  // namespace resdiff
