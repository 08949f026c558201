#pragma once

// Exact scalar arithmetic for laminate constructions: arbitrary-precision
// rationals and quadratic extensions q0 + q1*sqrt(d) with integer radicand.

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>

namespace lamlab {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

inline double to_double(const Rational& r) { return r.convert_to<double>(); }

inline int sign_of(const Rational& r) {
  if (r < 0) return -1;
  if (r > 0) return 1;
  return 0;
}

// Largest integer s with s*s <= n (n >= 0).
inline BigInt isqrt_floor(const BigInt& n) {
  if (n < 0) throw std::domain_error("isqrt_floor: negative argument");
  return boost::multiprecision::sqrt(n);
}

inline bool is_perfect_square(const BigInt& n, BigInt* root = nullptr) {
  if (n < 0) return false;
  BigInt s = isqrt_floor(n);
  if (s * s == n) {
    if (root) *root = s;
    return true;
  }
  return false;
}

// n = kernel * square^2 with kernel squarefree. Trial division; intended for
// the small bases that drive geometric sequences, so bail out past 10^12.
inline std::optional<BigInt> squarefree_kernel(BigInt n) {
  if (n <= 0) return std::nullopt;
  if (n > BigInt(1000000000000LL)) return std::nullopt;
  BigInt kernel = 1;
  for (BigInt p = 2; p * p <= n; ++p) {
    int e = 0;
    while (n % p == 0) {
      n /= p;
      ++e;
    }
    if (e % 2 == 1) kernel *= p;
  }
  kernel *= n;  // leftover prime
  return kernel;
}

/// Number q0 + q1*sqrt(d) with rational coefficients and integer radicand
/// d >= 2 (not a perfect square). A value with q1 == 0 is a plain rational
/// and combines with any radicand; mixing two distinct live radicands throws.
class QuadExt {
 public:
  QuadExt() : q0_(0), q1_(0), d_(0) {}
  QuadExt(int v) : q0_(v), q1_(0), d_(0) {}             // NOLINT(runtime/explicit)
  QuadExt(long long v) : q0_(v), q1_(0), d_(0) {}       // NOLINT(runtime/explicit)
  QuadExt(const Rational& v) : q0_(v), q1_(0), d_(0) {} // NOLINT(runtime/explicit)
  QuadExt(Rational a, Rational b, long long d) : q0_(std::move(a)), q1_(std::move(b)), d_(d) {
    if (q1_ == 0) {
      d_ = 0;
    } else {
      if (d < 2) throw std::domain_error("QuadExt: radicand must be >= 2");
      BigInt r;
      if (is_perfect_square(BigInt(d), &r))
        throw std::domain_error("QuadExt: radicand is a perfect square; fold it into q0");
    }
  }

  const Rational& rational_part() const { return q0_; }
  const Rational& radical_part() const { return q1_; }
  long long radicand() const { return d_; }
  bool is_rational() const { return q1_ == 0; }

  // sqrt(r) for rational r >= 0 when representable as m or m*sqrt(d) exactly.
  static std::optional<QuadExt> sqrt_rational(const Rational& r) {
    if (r < 0) return std::nullopt;
    if (r == 0) return QuadExt(0);
    const BigInt num = boost::multiprecision::numerator(r);
    const BigInt den = boost::multiprecision::denominator(r);
    // sqrt(num/den) = sqrt(num*den)/den
    const BigInt m = num * den;
    auto kernel = squarefree_kernel(m);
    if (!kernel) return std::nullopt;
    BigInt sq;
    if (!is_perfect_square(m / *kernel, &sq)) return std::nullopt;
    if (*kernel == 1) return QuadExt(Rational(sq, den));
    if (*kernel > BigInt(std::numeric_limits<long long>::max())) return std::nullopt;
    return QuadExt(Rational(0), Rational(sq, den), kernel->convert_to<long long>());
  }

  int sign() const {
    if (q1_ == 0) return sign_of(q0_);
    if (q0_ == 0) return sign_of(q1_);
    const int s0 = sign_of(q0_), s1 = sign_of(q1_);
    if (s0 == s1) return s0;
    // opposite signs: compare q0^2 against q1^2 d
    const Rational lhs = q0_ * q0_, rhs = q1_ * q1_ * d_;
    if (lhs == rhs) return 0;
    return lhs > rhs ? s0 : s1;
  }

  double to_double() const {
    double v = q0_.convert_to<double>();
    if (q1_ != 0) v += q1_.convert_to<double>() * std::sqrt(static_cast<double>(d_));
    return v;
  }

  QuadExt operator-() const { return QuadExt(-q0_, -q1_, d_, unchecked_tag{}); }

  QuadExt& operator+=(const QuadExt& o) {
    const long long d = merged_radicand(*this, o);
    q0_ += o.q0_;
    q1_ += o.q1_;
    d_ = (q1_ == 0) ? 0 : d;
    return *this;
  }
  QuadExt& operator-=(const QuadExt& o) { return *this += -o; }
  QuadExt& operator*=(const QuadExt& o) {
    const long long d = merged_radicand(*this, o);
    const Rational a = q0_ * o.q0_ + q1_ * o.q1_ * d;
    const Rational b = q0_ * o.q1_ + q1_ * o.q0_;
    q0_ = a;
    q1_ = b;
    d_ = (q1_ == 0) ? 0 : d;
    return *this;
  }
  QuadExt& operator/=(const QuadExt& o) {
    const long long d = merged_radicand(*this, o);
    const Rational norm = o.q0_ * o.q0_ - o.q1_ * o.q1_ * d;
    if (norm == 0) {
      if (o.q0_ == 0 && o.q1_ == 0) throw std::domain_error("QuadExt: division by zero");
      throw std::domain_error("QuadExt: divisor has zero field norm");
    }
    // (a+b sqrt d)(c-e sqrt d)/norm
    const Rational a = (q0_ * o.q0_ - q1_ * o.q1_ * d) / norm;
    const Rational b = (q1_ * o.q0_ - q0_ * o.q1_) / norm;
    q0_ = a;
    q1_ = b;
    d_ = (q1_ == 0) ? 0 : d;
    return *this;
  }

  friend QuadExt operator+(QuadExt a, const QuadExt& b) { return a += b; }
  friend QuadExt operator-(QuadExt a, const QuadExt& b) { return a -= b; }
  friend QuadExt operator*(QuadExt a, const QuadExt& b) { return a *= b; }
  friend QuadExt operator/(QuadExt a, const QuadExt& b) { return a /= b; }

  friend bool operator==(const QuadExt& a, const QuadExt& b) {
    if (a.q1_ != 0 && b.q1_ != 0 && a.d_ != b.d_) return false;
    return a.q0_ == b.q0_ && a.q1_ == b.q1_;
  }
  friend bool operator!=(const QuadExt& a, const QuadExt& b) { return !(a == b); }
  friend bool operator<(const QuadExt& a, const QuadExt& b) { return (a - b).sign() < 0; }
  friend bool operator>(const QuadExt& a, const QuadExt& b) { return (a - b).sign() > 0; }
  friend bool operator<=(const QuadExt& a, const QuadExt& b) { return (a - b).sign() <= 0; }
  friend bool operator>=(const QuadExt& a, const QuadExt& b) { return (a - b).sign() >= 0; }

  friend std::ostream& operator<<(std::ostream& os, const QuadExt& x) {
    os << x.q0_.str();
    if (x.q1_ != 0) os << " + (" << x.q1_.str() << ")*sqrt(" << x.d_ << ")";
    return os;
  }

 private:
  struct unchecked_tag {};
  QuadExt(Rational a, Rational b, long long d, unchecked_tag)
      : q0_(std::move(a)), q1_(std::move(b)), d_(q1_ == 0 ? 0 : d) {}

  static long long merged_radicand(const QuadExt& a, const QuadExt& b) {
    if (a.q1_ == 0) return b.d_;
    if (b.q1_ == 0) return a.d_;
    if (a.d_ != b.d_)
      throw std::domain_error("QuadExt: incompatible radicands " + std::to_string(a.d_) +
                              " and " + std::to_string(b.d_));
    return a.d_;
  }

  Rational q0_, q1_;
  long long d_;  // 0 when q1_ == 0
};

inline double to_double(const QuadExt& x) { return x.to_double(); }
inline double to_double(double x) { return x; }

inline QuadExt abs(const QuadExt& x) { return x.sign() < 0 ? -x : x; }
inline QuadExt abs2(const QuadExt& x) { return x * x; }

// Scalar adapters so templated code can take exact square roots of rationals
// when the scalar supports it and fall back to floating point otherwise.
template <class S>
struct ScalarOps;

template <>
struct ScalarOps<double> {
  static double from_rational(const Rational& r) { return to_double(r); }
  static double sqrt_rational(const Rational& r) { return std::sqrt(to_double(r)); }
};

template <>
struct ScalarOps<QuadExt> {
  static QuadExt from_rational(const Rational& r) { return QuadExt(r); }
  static QuadExt sqrt_rational(const Rational& r) {
    auto s = QuadExt::sqrt_rational(r);
    if (!s) throw std::domain_error("sqrt of rational is not in a single quadratic extension");
    return *s;
  }
};

}  // namespace lamlab

#include <Eigen/Core>

namespace Eigen {

template <>
struct NumTraits<lamlab::QuadExt> : GenericNumTraits<lamlab::QuadExt> {
  using Real = lamlab::QuadExt;
  using NonInteger = lamlab::QuadExt;
  using Nested = lamlab::QuadExt;
  using Literal = long long;
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 8,
    AddCost = 60,
    MulCost = 120,
  };
  static Real epsilon() { return Real(0); }
  static Real dummy_precision() { return Real(0); }
  static int digits10() { return 0; }
};

}  // namespace Eigen
