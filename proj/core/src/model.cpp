#include "branchkit/model.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>

namespace branchkit {

namespace {

constexpr double kArgTol = 1e-12;      // slack on |s| <= 1
constexpr double kProbSumTol = 1e-12;  // JointTable probabilities vs 1

template <typename Scalar>
Scalar ipow(Scalar base, long long e) {
  Scalar result{1.0};
  while (e > 0) {
    if (e & 1) result *= base;
    base *= base;
    e >>= 1;
  }
  return result;
}

}  // namespace

void validate_law(const UnivariateLaw& law) {
  std::visit(
      [](const auto& l) {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, Poisson>) {
          if (!(l.rate >= 0.0) || !std::isfinite(l.rate))
            throw ModelError("poisson rate must be a finite nonnegative real");
        } else if constexpr (std::is_same_v<T, Binomial>) {
          if (l.trials < 0) throw ModelError("binomial trials must be nonnegative");
          if (!(l.success >= 0.0 && l.success <= 1.0))
            throw ModelError("binomial success must lie in [0, 1]");
        } else if constexpr (std::is_same_v<T, Geometric>) {
          if (!(l.success > 0.0 && l.success <= 1.0))
            throw ModelError("geometric success must lie in (0, 1]");
        } else {
          if (l.value < 0) throw ModelError("constant offspring count must be nonnegative");
        }
      },
      law);
}

double law_mean(const UnivariateLaw& law) {
  return std::visit(
      [](const auto& l) -> double {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, Poisson>) {
          return l.rate;
        } else if constexpr (std::is_same_v<T, Binomial>) {
          return static_cast<double>(l.trials) * l.success;
        } else if constexpr (std::is_same_v<T, Geometric>) {
          return (1.0 - l.success) / l.success;
        } else {
          return static_cast<double>(l.value);
        }
      },
      law);
}

template <typename Scalar>
Scalar law_pgf(const UnivariateLaw& law, Scalar s) {
  return std::visit(
      [&](const auto& l) -> Scalar {
        using T = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<T, Poisson>) {
          return std::exp(l.rate * (s - Scalar{1.0}));
        } else if constexpr (std::is_same_v<T, Binomial>) {
          return ipow(Scalar{1.0 - l.success} + Scalar{l.success} * s, l.trials);
        } else if constexpr (std::is_same_v<T, Geometric>) {
          return Scalar{l.success} / (Scalar{1.0} - Scalar{1.0 - l.success} * s);
        } else {
          return ipow(s, l.value);
        }
      },
      law);
}

template double law_pgf<double>(const UnivariateLaw&, double);
template std::complex<double> law_pgf<std::complex<double>>(const UnivariateLaw&,
                                                            std::complex<double>);

ModelSpec::ModelSpec(int d, std::vector<OffspringLaw> laws, int root_type)
    : d_(d), root_type_(root_type), laws_(std::move(laws)) {
  if (d_ < 1) throw ModelError("number of types must be at least 1");
  if (root_type_ < 0 || root_type_ >= d_) throw ModelError("root type out of range");
  if (static_cast<int>(laws_.size()) != d_)
    throw ModelError("need exactly one offspring law per parent type");
  joint_cdfs_.resize(laws_.size());
  for (std::size_t i = 0; i < laws_.size(); ++i) {
    std::visit(
        [&](const auto& law) {
          using T = std::decay_t<decltype(law)>;
          if constexpr (std::is_same_v<T, ProductForm>) {
            if (static_cast<int>(law.cells.size()) != d_)
              throw ModelError("product-form law must have exactly d cells");
            for (const auto& cell : law.cells) validate_law(cell);
          } else {
            if (law.rows.empty()) throw ModelError("joint table must have at least one row");
            double sum = 0.0;
            auto& cdf = joint_cdfs_[i];
            cdf.reserve(law.rows.size());
            for (const auto& row : law.rows) {
              if (static_cast<int>(row.offspring.size()) != d_)
                throw ModelError("joint-table offspring vector has wrong length");
              for (long long v : row.offspring)
                if (v < 0) throw ModelError("joint-table offspring counts must be nonnegative");
              if (row.prob < -kProbSumTol) throw ModelError("joint-table probability is negative");
              sum += row.prob;
              cdf.push_back(sum);
            }
            if (std::abs(sum - 1.0) > kProbSumTol)
              throw ModelError("joint-table probabilities must sum to 1 within 1e-12");
            cdf.back() = 1.0;
          }
        },
        laws_[i]);
  }
}

MeanMatrix mean_matrix(const ModelSpec& model) {
  const int d = model.dimension();
  MeanMatrix m;
  m.d = d;
  m.entries.assign(static_cast<std::size_t>(d) * static_cast<std::size_t>(d), 0.0);
  for (int i = 0; i < d; ++i) {
    std::visit(
        [&](const auto& law) {
          using T = std::decay_t<decltype(law)>;
          if constexpr (std::is_same_v<T, ProductForm>) {
            for (int j = 0; j < d; ++j) m(i, j) = law_mean(law.cells[static_cast<std::size_t>(j)]);
          } else {
            for (const auto& row : law.rows)
              for (int j = 0; j < d; ++j)
                m(i, j) += row.prob * static_cast<double>(row.offspring[static_cast<std::size_t>(j)]);
          }
        },
        model.law(i));
  }
  return m;
}

namespace {

template <typename Scalar>
Scalar pgf_eval_impl(const ModelSpec& model, int parent, std::span<const Scalar> s) {
  const int d = model.dimension();
  if (static_cast<int>(s.size()) != d)
    throw std::invalid_argument("pgf_eval: argument has wrong dimension");
  for (const Scalar& v : s) {
    if (std::abs(v) > 1.0 + kArgTol)
      throw std::domain_error("pgf_eval: argument magnitude exceeds 1");
  }
  return std::visit(
      [&](const auto& law) -> Scalar {
        using T = std::decay_t<decltype(law)>;
        if constexpr (std::is_same_v<T, ProductForm>) {
          Scalar prod{1.0};
          for (int j = 0; j < d; ++j)
            prod *= law_pgf(law.cells[static_cast<std::size_t>(j)], s[static_cast<std::size_t>(j)]);
          return prod;
        } else {
          Scalar acc{0.0};
          for (const auto& row : law.rows) {
            Scalar term{row.prob};
            for (int j = 0; j < d; ++j)
              term *= ipow(s[static_cast<std::size_t>(j)], row.offspring[static_cast<std::size_t>(j)]);
            acc += term;
          }
          return acc;
        }
      },
      model.law(parent));
}

}  // namespace

std::complex<double> pgf_eval(const ModelSpec& model, int parent,
                              std::span<const std::complex<double>> s) {
  return pgf_eval_impl(model, parent, s);
}

double pgf_eval(const ModelSpec& model, int parent, std::span<const double> s) {
  return pgf_eval_impl(model, parent, s);
}

bool is_irreducible(const MeanMatrix& m) {
  const int d = m.d;
  std::vector<char> reach(static_cast<std::size_t>(d) * static_cast<std::size_t>(d), 0);
  auto at = [&](int i, int j) -> char& {
    return reach[static_cast<std::size_t>(i) * static_cast<std::size_t>(d) +
                 static_cast<std::size_t>(j)];
  };
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) at(i, j) = m(i, j) > 0.0 ? 1 : 0;
  // Warshall closure over paths of length >= 1.
  for (int k = 0; k < d; ++k)
    for (int i = 0; i < d; ++i)
      if (at(i, k))
        for (int j = 0; j < d; ++j)
          if (at(k, j)) at(i, j) = 1;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      if (!at(i, j)) return false;
  return true;
}

namespace {

constexpr double kPowerTol = 1e-12;
constexpr long kPowerMaxIter = 100'000;

// Power iteration on (M + I), which is primitive whenever M is irreducible;
// the +1 shift moves the whole spectrum, so the dominant eigenvalue of M is
// recovered by subtracting 1 and the eigenvectors are unchanged.
bool power_iterate(const MeanMatrix& m, bool transpose, double* lambda_out,
                   std::vector<double>* vec_out) {
  const int d = m.d;
  std::vector<double> v(static_cast<std::size_t>(d), 1.0 / static_cast<double>(d));
  std::vector<double> w(static_cast<std::size_t>(d), 0.0);
  double lambda_prev = 0.0;
  for (long it = 0; it < kPowerMaxIter; ++it) {
    for (int i = 0; i < d; ++i) {
      double acc = v[static_cast<std::size_t>(i)];
      for (int j = 0; j < d; ++j)
        acc += (transpose ? m(j, i) : m(i, j)) * v[static_cast<std::size_t>(j)];
      w[static_cast<std::size_t>(i)] = acc;
    }
    const double norm = std::accumulate(w.begin(), w.end(), 0.0);
    if (!(norm > 0.0)) return false;
    double delta = 0.0;
    for (int i = 0; i < d; ++i) {
      const double next = w[static_cast<std::size_t>(i)] / norm;
      delta = std::max(delta, std::abs(next - v[static_cast<std::size_t>(i)]));
      v[static_cast<std::size_t>(i)] = next;
    }
    const double lambda = norm - 1.0;
    if (it > 0 && delta < kPowerTol &&
        std::abs(lambda - lambda_prev) <= kPowerTol * std::max(1.0, std::abs(lambda))) {
      *lambda_out = lambda;
      *vec_out = v;
      return true;
    }
    lambda_prev = lambda;
  }
  return false;
}

}  // namespace

double spectral_radius_estimate(const MeanMatrix& m) {
  double lambda = 0.0;
  std::vector<double> v;
  if (!power_iterate(m, false, &lambda, &v))
    throw NumericError("spectral radius estimate did not converge");
  return lambda;
}

SpectralData spectral(const MeanMatrix& m) {
  if (!is_irreducible(m)) throw ModelError("spectral: mean matrix is not irreducible");
  double lambda = 0.0;
  std::vector<double> u, nu;
  double lambda_left = 0.0;
  if (!power_iterate(m, false, &lambda, &u) || !power_iterate(m, true, &lambda_left, &nu))
    throw NumericError("spectral: power iteration did not converge within 1e5 iterations");

  const int d = m.d;
  // nu . 1 = 1, then u . nu = 1.
  const double nu_sum = std::accumulate(nu.begin(), nu.end(), 0.0);
  for (double& x : nu) x /= nu_sum;
  double dot = 0.0;
  for (int i = 0; i < d; ++i)
    dot += u[static_cast<std::size_t>(i)] * nu[static_cast<std::size_t>(i)];
  for (double& x : u) x /= dot;

  for (int i = 0; i < d; ++i) {
    if (!(u[static_cast<std::size_t>(i)] > 0.0) || !(nu[static_cast<std::size_t>(i)] > 0.0))
      throw ModelError("spectral: eigenvectors are not strictly positive (irreducibility violation)");
  }
  // Residual guard on both eigenpairs.
  double umax = 0.0, numax = 0.0, ru = 0.0, rnu = 0.0;
  for (int i = 0; i < d; ++i) {
    double mu = 0.0, mnu = 0.0;
    for (int j = 0; j < d; ++j) {
      mu += m(i, j) * u[static_cast<std::size_t>(j)];
      mnu += m(j, i) * nu[static_cast<std::size_t>(j)];
    }
    ru = std::max(ru, std::abs(mu - lambda * u[static_cast<std::size_t>(i)]));
    rnu = std::max(rnu, std::abs(mnu - lambda * nu[static_cast<std::size_t>(i)]));
    umax = std::max(umax, std::abs(u[static_cast<std::size_t>(i)]));
    numax = std::max(numax, std::abs(nu[static_cast<std::size_t>(i)]));
  }
  if (ru > 1e-9 * lambda * std::max(1.0, umax) || rnu > 1e-9 * lambda * std::max(1.0, numax))
    throw NumericError("spectral: eigenpair residual exceeds tolerance");

  SpectralData out;
  out.lambda = lambda;
  out.u = std::move(u);
  out.nu = std::move(nu);
  return out;
}

ExtinctionVector extinction(const ModelSpec& model, double tol, long max_iter) {
  const int d = model.dimension();
  std::vector<double> q(static_cast<std::size_t>(d), 0.0);
  std::vector<double> next(static_cast<std::size_t>(d), 0.0);
  for (long it = 0; it < max_iter; ++it) {
    double delta = 0.0;
    for (int i = 0; i < d; ++i)
      next[static_cast<std::size_t>(i)] = pgf_eval(model, i, std::span<const double>(q));
    for (int i = 0; i < d; ++i)
      delta = std::max(delta, std::abs(next[static_cast<std::size_t>(i)] - q[static_cast<std::size_t>(i)]));
    q.swap(next);
    if (delta < tol) {
      ExtinctionVector out;
      out.q = std::move(q);
      out.near_one = std::any_of(out.q.begin(), out.q.end(),
                                 [](double x) { return x >= 1.0 - 1e-9; });
      return out;
    }
  }
  throw NumericError("extinction: fixed-point iteration did not converge");
}

Classification classify(const ModelSpec& model) {
  Classification c;
  const MeanMatrix m = mean_matrix(model);
  c.irreducible = is_irreducible(m);
  c.supercritical = spectral_radius_estimate(m) > 1.0;
  c.moment_order_ok = true;
  return c;
}

}  // namespace branchkit
