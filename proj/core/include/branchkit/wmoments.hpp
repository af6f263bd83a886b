#pragma once

#include <span>
#include <vector>

#include "branchkit/model.hpp"
#include "branchkit/series.hpp"

namespace branchkit {

// moments[i][n] = n-th moment of the rescaled-population limit started from
// a single type-i individual, for n = 0..max_order.
struct WMomentTable {
  int d = 0;
  int max_order = 0;
  std::vector<double> values;  // (max_order + 1) per type, type-major

  double moment(int type, int n) const {
    return values[static_cast<std::size_t>(type) * static_cast<std::size_t>(max_order + 1) +
                  static_cast<std::size_t>(n)];
  }
  double& moment(int type, int n) {
    return values[static_cast<std::size_t>(type) * static_cast<std::size_t>(max_order + 1) +
                  static_cast<std::size_t>(n)];
  }

  double variance_of_power(int type, int j) const {
    const double m = moment(type, j);
    return moment(type, 2 * j) - m * m;
  }
};

// Closed-form derivatives g(x), g'(x), ..., g^(order)(x) of a univariate pgf.
std::vector<double> univariate_pgf_derivatives(const UnivariateLaw& law, double x, int order);

// Series of f^parent(phi_1(s), ..., phi_d(s)) through the shared truncation
// order; every phi_j must have constant term 1.
TruncatedSeries compose_offspring_series(const ModelSpec& model, int parent,
                                         std::span<const TruncatedSeries> phi);

// Moments through max_order (which must be even and >= 2; 2k supports
// sample size k). Order n solves a d x d linear system whose matrix is
// lambda^n I minus the mean matrix, assembled by probing the composition.
WMomentTable w_moments(const ModelSpec& model, const SpectralData& spec, int max_order = 4);

}  // namespace branchkit
