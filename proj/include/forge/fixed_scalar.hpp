#pragma once

// Exact dyadic rationals m * 2^-tau with arbitrary-precision mantissas.

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>

#include "forge/error.hpp"

namespace forge {

using BigInt = boost::multiprecision::cpp_int;

class FixedScalar {
 public:
  FixedScalar() = default;
  FixedScalar(long long value) : mantissa_(value) {}  // NOLINT: implicit from integers

  static FixedScalar from_mantissa(BigInt mantissa, unsigned tau) {
    FixedScalar out;
    out.mantissa_ = std::move(mantissa);
    out.tau_ = tau;
    out.canonicalize();
    return out;
  }

  // 2^exponent, exponent may be negative.
  static FixedScalar pow2(int exponent) {
    if (exponent >= 0) return from_mantissa(BigInt(1) << exponent, 0);
    return from_mantissa(BigInt(1), static_cast<unsigned>(-exponent));
  }

  // Every finite double is a dyadic rational, so this conversion is exact.
  static FixedScalar from_double(double value) {
    if (!std::isfinite(value)) throw ValidationError("non-finite value cannot be made exact");
    if (value == 0.0) return {};
    int exponent = 0;
    const double frac = std::frexp(value, &exponent);
    const auto scaled = static_cast<std::int64_t>(std::ldexp(frac, 53));
    const int shift = exponent - 53;
    if (shift >= 0) return from_mantissa(BigInt(scaled) << shift, 0);
    return from_mantissa(BigInt(scaled), static_cast<unsigned>(-shift));
  }

  const BigInt& mantissa() const { return mantissa_; }
  unsigned tau() const { return tau_; }

  bool is_zero() const { return mantissa_.is_zero(); }
  int sign() const { return mantissa_.sign(); }

  double to_double() const {
    if (mantissa_.is_zero()) return 0.0;
    // convert_to<double> rounds correctly; the ldexp is exact unless subnormal.
    return std::ldexp(mantissa_.convert_to<double>(), -static_cast<int>(tau_));
  }

  // Number of significant bits in the canonical mantissa.
  std::size_t mantissa_bits() const {
    if (mantissa_.is_zero()) return 0;
    return boost::multiprecision::msb(boost::multiprecision::abs(mantissa_)) + 1;
  }

  // Smallest tau such that the value lies in R_tau: a multiple of 2^-tau with |value| <= 2^tau.
  unsigned bit_complexity() const {
    if (mantissa_.is_zero()) return 0;
    // |value| = |m| 2^-tau <= 2^t  <=>  msb-ish bound; compute ceil(log2 |value|).
    const long long top = static_cast<long long>(mantissa_bits()) - static_cast<long long>(tau_);
    // |value| < 2^top, and |value| <= 2^(top-1) only if |m| is a power of two.
    long long magnitude_bits = top;
    if (is_power_of_two_magnitude()) magnitude_bits = top - 1;
    const long long needed = std::max<long long>(magnitude_bits, 0);
    return static_cast<unsigned>(std::max<long long>(needed, tau_));
  }

  bool in_grid(unsigned tau) const { return bit_complexity() <= tau; }

  FixedScalar operator-() const {
    FixedScalar out = *this;
    out.mantissa_ = -out.mantissa_;
    return out;
  }

  FixedScalar& operator+=(const FixedScalar& rhs) {
    if (rhs.mantissa_.is_zero()) return *this;
    if (tau_ == rhs.tau_) {
      mantissa_ += rhs.mantissa_;
    } else if (tau_ > rhs.tau_) {
      mantissa_ += rhs.mantissa_ << (tau_ - rhs.tau_);
    } else {
      mantissa_ <<= (rhs.tau_ - tau_);
      mantissa_ += rhs.mantissa_;
      tau_ = rhs.tau_;
    }
    canonicalize();
    return *this;
  }
  FixedScalar& operator-=(const FixedScalar& rhs) { return *this += -rhs; }
  FixedScalar& operator*=(const FixedScalar& rhs) {
    mantissa_ *= rhs.mantissa_;
    tau_ += rhs.tau_;
    canonicalize();
    return *this;
  }

  // Multiply-accumulate without intermediate canonicalization of the product.
  void add_product(const FixedScalar& a, const FixedScalar& b) {
    if (a.mantissa_.is_zero() || b.mantissa_.is_zero()) return;
    BigInt product = a.mantissa_ * b.mantissa_;
    const unsigned product_tau = a.tau_ + b.tau_;
    if (tau_ == product_tau) {
      mantissa_ += product;
    } else if (tau_ > product_tau) {
      mantissa_ += product << (tau_ - product_tau);
    } else {
      mantissa_ <<= (product_tau - tau_);
      mantissa_ += product;
      tau_ = product_tau;
    }
  }

  void canonicalize() {
    if (mantissa_.is_zero()) {
      tau_ = 0;
      return;
    }
    if (tau_ == 0) return;
    const unsigned zeros = static_cast<unsigned>(boost::multiprecision::lsb(boost::multiprecision::abs(mantissa_)));
    const unsigned shift = std::min(zeros, tau_);
    if (shift > 0) {
      mantissa_ >>= shift;
      tau_ -= shift;
    }
  }

  friend FixedScalar operator+(FixedScalar a, const FixedScalar& b) { return a += b; }
  friend FixedScalar operator-(FixedScalar a, const FixedScalar& b) { return a -= b; }
  friend FixedScalar operator*(FixedScalar a, const FixedScalar& b) { return a *= b; }

  friend bool operator==(const FixedScalar& a, const FixedScalar& b) {
    return a.tau_ == b.tau_ && a.mantissa_ == b.mantissa_;
  }
  friend std::strong_ordering operator<=>(const FixedScalar& a, const FixedScalar& b) {
    const unsigned tau = std::max(a.tau_, b.tau_);
    const BigInt lhs = a.mantissa_ << (tau - a.tau_);
    const BigInt rhs = b.mantissa_ << (tau - b.tau_);
    if (lhs < rhs) return std::strong_ordering::less;
    if (lhs > rhs) return std::strong_ordering::greater;
    return std::strong_ordering::equal;
  }

  std::string to_string() const {
    if (tau_ == 0) return mantissa_.str();
    return mantissa_.str() + "/2^" + std::to_string(tau_);
  }

  friend std::ostream& operator<<(std::ostream& os, const FixedScalar& v) { return os << v.to_string(); }

 private:
  bool is_power_of_two_magnitude() const {
    const BigInt magnitude = boost::multiprecision::abs(mantissa_);
    return boost::multiprecision::lsb(magnitude) == boost::multiprecision::msb(magnitude);
  }

  BigInt mantissa_ = 0;
  unsigned tau_ = 0;
};

inline FixedScalar relu(const FixedScalar& x) { return x.sign() > 0 ? x : FixedScalar{}; }
inline FixedScalar abs(const FixedScalar& x) { return x.sign() < 0 ? -x : x; }

// Smallest power of two >= value (value > 0), as an exponent.
inline int ceil_log2(const FixedScalar& value) {
  detail::require(value.sign() > 0, "ceil_log2 needs a positive value");
  const long long bits = static_cast<long long>(value.mantissa_bits());
  const BigInt magnitude = value.mantissa();
  const bool pow2 = boost::multiprecision::lsb(magnitude) == boost::multiprecision::msb(magnitude);
  const long long exponent = bits - 1 - static_cast<long long>(value.tau());
  return static_cast<int>(pow2 ? exponent : exponent + 1);
}

}  // namespace forge
