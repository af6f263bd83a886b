#include "branchkit/wmoments.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace branchkit {

namespace {

double falling_factorial(double x, int m) {
  double p = 1.0;
  for (int j = 0; j < m; ++j) p *= x - static_cast<double>(j);
  return p;
}

// Gaussian elimination with partial pivoting for the small d x d systems
// (lambda^n I - M) a = r that arise per moment order.
std::vector<double> solve_linear(std::vector<double> a, std::vector<double> b) {
  const int n = static_cast<int>(b.size());
  auto at = [&](int i, int j) -> double& {
    return a[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) + static_cast<std::size_t>(j)];
  };
  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int row = col + 1; row < n; ++row)
      if (std::abs(at(row, col)) > std::abs(at(pivot, col))) pivot = row;
    if (std::abs(at(pivot, col)) < 1e-12)
      throw NumericError(
          "w_moments: singular moment system (is the process actually supercritical?)");
    if (pivot != col) {
      for (int j = 0; j < n; ++j) std::swap(at(pivot, j), at(col, j));
      std::swap(b[static_cast<std::size_t>(pivot)], b[static_cast<std::size_t>(col)]);
    }
    for (int row = col + 1; row < n; ++row) {
      const double f = at(row, col) / at(col, col);
      if (f == 0.0) continue;
      for (int j = col; j < n; ++j) at(row, j) -= f * at(col, j);
      b[static_cast<std::size_t>(row)] -= f * b[static_cast<std::size_t>(col)];
    }
  }
  std::vector<double> x(static_cast<std::size_t>(n), 0.0);
  for (int row = n - 1; row >= 0; --row) {
    double acc = b[static_cast<std::size_t>(row)];
    for (int j = row + 1; j < n; ++j) acc -= at(row, j) * x[static_cast<std::size_t>(j)];
    x[static_cast<std::size_t>(row)] = acc / at(row, row);
  }
  return x;
}

}  // namespace

std::vector<double> univariate_pgf_derivatives(const UnivariateLaw& law, double x, int order) {
  if (order < 0) throw std::invalid_argument("univariate_pgf_derivatives: negative order");
  std::vector<double> out(static_cast<std::size_t>(order) + 1, 0.0);
  std::visit(
      [&](const auto& l) {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, Poisson>) {
          const double base = std::exp(l.rate * (x - 1.0));
          double scale = 1.0;
          for (int m = 0; m <= order; ++m) {
            out[static_cast<std::size_t>(m)] = scale * base;
            scale *= l.rate;
          }
        } else if constexpr (std::is_same_v<T, Binomial>) {
          const double q = 1.0 - l.success + l.success * x;
          for (int m = 0; m <= order; ++m) {
            if (m > l.trials) break;
            out[static_cast<std::size_t>(m)] =
                falling_factorial(static_cast<double>(l.trials), m) *
                std::pow(l.success, m) * std::pow(q, static_cast<double>(l.trials - m));
          }
        } else if constexpr (std::is_same_v<T, Geometric>) {
          const double r = 1.0 - l.success;
          const double denom = 1.0 - r * x;
          double factorial = 1.0;
          double rpow = 1.0;
          for (int m = 0; m <= order; ++m) {
            out[static_cast<std::size_t>(m)] =
                l.success * factorial * rpow / std::pow(denom, m + 1);
            factorial *= static_cast<double>(m + 1);
            rpow *= r;
          }
        } else {
          for (int m = 0; m <= order; ++m) {
            if (m > l.value) break;
            const long long rest = l.value - m;
            const double xpow = (rest == 0) ? 1.0 : std::pow(x, static_cast<double>(rest));
            out[static_cast<std::size_t>(m)] =
                falling_factorial(static_cast<double>(l.value), m) * xpow;
          }
        }
      },
      law);
  return out;
}

TruncatedSeries compose_offspring_series(const ModelSpec& model, int parent,
                                         std::span<const TruncatedSeries> phi) {
  const int d = model.dimension();
  if (static_cast<int>(phi.size()) != d)
    throw std::invalid_argument("compose_offspring_series: need one series per type");
  const int order = phi[0].order();
  for (const auto& p : phi)
    if (p.order() != order)
      throw std::invalid_argument("compose_offspring_series: truncation-order mismatch");

  return std::visit(
      [&](const auto& law) -> TruncatedSeries {
        using T = std::decay_t<decltype(law)>;
        if constexpr (std::is_same_v<T, ProductForm>) {
          TruncatedSeries acc = TruncatedSeries::constant(1.0, order);
          for (int j = 0; j < d; ++j) {
            const auto derivs =
                univariate_pgf_derivatives(law.cells[static_cast<std::size_t>(j)], 1.0, order);
            acc = acc * TruncatedSeries::compose_analytic(derivs, 1.0,
                                                          phi[static_cast<std::size_t>(j)]);
          }
          return acc;
        } else {
          TruncatedSeries acc(order);
          for (const auto& row : law.rows) {
            TruncatedSeries term = TruncatedSeries::constant(row.prob, order);
            for (int j = 0; j < d; ++j) {
              const long long e = row.offspring[static_cast<std::size_t>(j)];
              if (e > 0) term = term * phi[static_cast<std::size_t>(j)].pow(e);
            }
            acc += term;
          }
          return acc;
        }
      },
      model.law(parent));
}

WMomentTable w_moments(const ModelSpec& model, const SpectralData& spec, int max_order) {
  if (max_order < 1) throw std::invalid_argument("w_moments: max_order must be >= 1");
  if (!(spec.lambda > 1.0))
    throw ModelError("w_moments: process must be supercritical (lambda > 1)");
  const int d = model.dimension();

  // phi_j(s) = sum_n a_{j,n} s^n with a_{j,n} = (-1)^n E(W_j^n) / n!.
  std::vector<TruncatedSeries> phi(static_cast<std::size_t>(d),
                                   TruncatedSeries::constant(1.0, max_order));
  for (int j = 0; j < d; ++j) phi[static_cast<std::size_t>(j)][1] = -spec.u[static_cast<std::size_t>(j)];

  WMomentTable table;
  table.d = d;
  table.max_order = max_order;
  table.values.assign(static_cast<std::size_t>(d) * static_cast<std::size_t>(max_order + 1), 0.0);
  for (int j = 0; j < d; ++j) {
    table.moment(j, 0) = 1.0;
    if (max_order >= 1) table.moment(j, 1) = spec.u[static_cast<std::size_t>(j)];
  }

  double factorial = 1.0;
  for (int n = 2; n <= max_order; ++n) {
    factorial *= static_cast<double>(n - 1);
    const double n_factorial = factorial * static_cast<double>(n);

    // The order-n output coefficient of f o phi is affine in the order-n
    // input coefficients: probe once with the unknown slot zeroed for the
    // offset, then with unit vectors for the columns of the linear part.
    std::vector<double> offset(static_cast<std::size_t>(d), 0.0);
    for (int j = 0; j < d; ++j)
      offset[static_cast<std::size_t>(j)] = compose_offspring_series(model, j, phi)[n];

    std::vector<double> linear(static_cast<std::size_t>(d) * static_cast<std::size_t>(d), 0.0);
    for (int col = 0; col < d; ++col) {
      phi[static_cast<std::size_t>(col)][n] = 1.0;
      for (int j = 0; j < d; ++j) {
        const double probed = compose_offspring_series(model, j, phi)[n];
        linear[static_cast<std::size_t>(j) * static_cast<std::size_t>(d) +
               static_cast<std::size_t>(col)] = probed - offset[static_cast<std::size_t>(j)];
      }
      phi[static_cast<std::size_t>(col)][n] = 0.0;
    }

    // Solve (lambda^n I - A) a_n = offset.
    const double scale = std::pow(spec.lambda, n);
    std::vector<double> system = linear;
    for (auto& v : system) v = -v;
    for (int j = 0; j < d; ++j)
      system[static_cast<std::size_t>(j) * static_cast<std::size_t>(d) +
             static_cast<std::size_t>(j)] += scale;
    const std::vector<double> a_n = solve_linear(std::move(system), offset);

    const double sign = (n % 2 == 0) ? 1.0 : -1.0;
    for (int j = 0; j < d; ++j) {
      phi[static_cast<std::size_t>(j)][n] = a_n[static_cast<std::size_t>(j)];
      const double moment = sign * n_factorial * a_n[static_cast<std::size_t>(j)];
      if (!(moment > 0.0) || !std::isfinite(moment))
        throw NumericError("w_moments: non-positive moment at order " + std::to_string(n));
      table.moment(j, n) = moment;
    }
  }
  return table;
}

}  // namespace branchkit
