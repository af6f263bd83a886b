#pragma once

#include <span>
#include <stdexcept>
#include <vector>

namespace branchkit {

// Univariate power series truncated at a fixed order. Arithmetic is exact
// through the truncation order, which is all the moment recursion needs.
class TruncatedSeries {
 public:
  explicit TruncatedSeries(int order) : coeffs_(static_cast<std::size_t>(order) + 1, 0.0) {}

  static TruncatedSeries constant(double c, int order) {
    TruncatedSeries s(order);
    s.coeffs_[0] = c;
    return s;
  }

  int order() const { return static_cast<int>(coeffs_.size()) - 1; }

  double operator[](int n) const { return coeffs_[static_cast<std::size_t>(n)]; }
  double& operator[](int n) { return coeffs_[static_cast<std::size_t>(n)]; }

  TruncatedSeries& operator+=(const TruncatedSeries& rhs) {
    check_same_order(rhs);
    for (std::size_t n = 0; n < coeffs_.size(); ++n) coeffs_[n] += rhs.coeffs_[n];
    return *this;
  }

  TruncatedSeries& operator-=(const TruncatedSeries& rhs) {
    check_same_order(rhs);
    for (std::size_t n = 0; n < coeffs_.size(); ++n) coeffs_[n] -= rhs.coeffs_[n];
    return *this;
  }

  TruncatedSeries& operator*=(double c) {
    for (double& v : coeffs_) v *= c;
    return *this;
  }

  friend TruncatedSeries operator+(TruncatedSeries a, const TruncatedSeries& b) { return a += b; }
  friend TruncatedSeries operator-(TruncatedSeries a, const TruncatedSeries& b) { return a -= b; }
  friend TruncatedSeries operator*(TruncatedSeries a, double c) { return a *= c; }
  friend TruncatedSeries operator*(double c, TruncatedSeries a) { return a *= c; }

  friend TruncatedSeries operator*(const TruncatedSeries& a, const TruncatedSeries& b) {
    a.check_same_order(b);
    const int order = a.order();
    TruncatedSeries out(order);
    for (int n = 0; n <= order; ++n) {
      double acc = 0.0;
      for (int i = 0; i <= n; ++i) acc += a[i] * b[n - i];
      out[n] = acc;
    }
    return out;
  }

  // Integer power by repeated multiplication.
  TruncatedSeries pow(long long e) const {
    if (e < 0) throw std::invalid_argument("TruncatedSeries::pow: negative exponent");
    TruncatedSeries result = constant(1.0, order());
    TruncatedSeries base = *this;
    while (e > 0) {
      if (e & 1) result = result * base;
      base = base * base;
      e >>= 1;
    }
    return result;
  }

  // g(inner) where derivs[m] = g^(m)(center) and inner(0) == center.
  static TruncatedSeries compose_analytic(std::span<const double> derivs, double center,
                                          const TruncatedSeries& inner) {
    const int order = inner.order();
    if (static_cast<int>(derivs.size()) < order + 1)
      throw std::invalid_argument("compose_analytic: need derivatives through the series order");
    if (std::abs(inner[0] - center) > 1e-9)
      throw std::invalid_argument("compose_analytic: inner constant term must equal the center");
    TruncatedSeries shifted = inner;
    shifted[0] = 0.0;
    TruncatedSeries out = constant(derivs[0], order);
    TruncatedSeries power = constant(1.0, order);
    double factorial = 1.0;
    for (int m = 1; m <= order; ++m) {
      power = power * shifted;
      factorial *= static_cast<double>(m);
      out += power * (derivs[static_cast<std::size_t>(m)] / factorial);
    }
    return out;
  }

 private:
  void check_same_order(const TruncatedSeries& rhs) const {
    if (coeffs_.size() != rhs.coeffs_.size())
      throw std::invalid_argument("TruncatedSeries: truncation-order mismatch");
  }

  std::vector<double> coeffs_;
};

}  // namespace branchkit
