#ifndef HYBRED_DUAL_HPP
#define HYBRED_DUAL_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace hybred {

/// Forward-mode dual number with one derivative slot per differentiation
/// variable. A dual with an empty slot vector is a constant; binary operations
/// treat a missing slot vector as all zeros.
class Dual {
 public:
  Dual() = default;
  Dual(double value) : value_(value) {}  // NOLINT: constants lift implicitly
  Dual(double value, std::vector<double> derivatives)
      : value_(value), derivatives_(std::move(derivatives)) {}

  /// Seeds slot `index` of `slots` with derivative one.
  static Dual variable(double value, std::size_t index, std::size_t slots) {
    std::vector<double> d(slots, 0.0);
    d[index] = 1.0;
    return Dual(value, std::move(d));
  }

  double value() const { return value_; }
  const std::vector<double>& derivatives() const { return derivatives_; }

  double derivative(std::size_t i) const {
    return i < derivatives_.size() ? derivatives_[i] : 0.0;
  }

  bool is_constant() const {
    for (double d : derivatives_) {
      if (d != 0.0) return false;
    }
    return true;
  }

  /// Result of applying a scalar function with value `f` and slope `df`.
  Dual chain(double f, double df) const {
    std::vector<double> d(derivatives_.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = df * derivatives_[i];
    return Dual(f, std::move(d));
  }

  friend Dual operator-(const Dual& a) { return a.chain(-a.value_, -1.0); }

  friend Dual operator+(const Dual& a, const Dual& b) {
    return combine(a, b, a.value_ + b.value_, 1.0, 1.0);
  }
  friend Dual operator-(const Dual& a, const Dual& b) {
    return combine(a, b, a.value_ - b.value_, 1.0, -1.0);
  }
  friend Dual operator*(const Dual& a, const Dual& b) {
    return combine(a, b, a.value_ * b.value_, b.value_, a.value_);
  }
  // Caller checks b != 0.
  friend Dual operator/(const Dual& a, const Dual& b) {
    const double q = a.value_ / b.value_;
    return combine(a, b, q, 1.0 / b.value_, -q / b.value_);
  }

  /// value = f, derivative = wa * da + wb * db
  static Dual combine(const Dual& a, const Dual& b, double f, double wa, double wb) {
    const std::size_t n = std::max(a.derivatives_.size(), b.derivatives_.size());
    std::vector<double> d(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      if (i < a.derivatives_.size()) s += wa * a.derivatives_[i];
      if (i < b.derivatives_.size()) s += wb * b.derivatives_[i];
      d[i] = s;
    }
    return Dual(f, std::move(d));
  }

 private:
  double value_ = 0.0;
  std::vector<double> derivatives_;
};

inline Dual sin(const Dual& a) { return a.chain(std::sin(a.value()), std::cos(a.value())); }
inline Dual cos(const Dual& a) { return a.chain(std::cos(a.value()), -std::sin(a.value())); }
inline Dual exp(const Dual& a) {
  const double e = std::exp(a.value());
  return a.chain(e, e);
}
inline Dual abs(const Dual& a) {
  const double v = a.value();
  return a.chain(std::fabs(v), v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0));
}

}  // namespace hybred

#endif  // HYBRED_DUAL_HPP
