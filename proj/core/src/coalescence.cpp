#include "branchkit/coalescence.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>

#include "branchkit/parallel.hpp"
#include "branchkit/simulate.hpp"

namespace branchkit {

std::vector<double> iterate_pgf(const ModelSpec& model, int t, std::span<const double> s) {
  if (t < 0) throw std::invalid_argument("iterate_pgf: negative iteration count");
  const int d = model.dimension();
  if (static_cast<int>(s.size()) != d)
    throw std::invalid_argument("iterate_pgf: argument has wrong dimension");
  std::vector<double> cur(s.begin(), s.end());
  std::vector<double> next(static_cast<std::size_t>(d), 0.0);
  for (int it = 0; it < t; ++it) {
    for (int i = 0; i < d; ++i)
      next[static_cast<std::size_t>(i)] = pgf_eval(model, i, std::span<const double>(cur));
    cur.swap(next);
  }
  return cur;
}

namespace {

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa,
                        double fm, double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  if (depth <= 0) {
    // Dyadic resolution is exhausted; at intervals this narrow the residual
    // is roundoff unless the integrand is genuinely pathological.
    if (std::abs(delta) > 1e5 * tol)
      throw NumericError("harmonic_moment_gamma: quadrature failed to converge");
    return left + right + delta / 15.0;
  }
  const double child_tol = tol * 0.70710678118654752;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, child_tol, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, child_tol, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson(f, a, b, fa, fm, fb, whole, tol, 48);
}

// The integrand near 0 is a bump whose width shrinks geometrically with the
// expected population size, so plain adaptive refinement of [0, 1] can step
// right over it. Splitting [0, 1] at dyadic points brackets every scale
// before refinement starts.
double integrate_unit_dyadic(const std::function<double(double)>& f, double tol) {
  constexpr int kScales = 48;
  const double seg_tol = tol / (kScales + 1);
  double acc = integrate(f, 0.0, std::pow(0.5, kScales), seg_tol);
  for (int j = kScales; j >= 1; --j)
    acc += integrate(f, std::pow(0.5, j), std::pow(0.5, j - 1), seg_tol);
  return acc;
}

}  // namespace

HarmonicMoment harmonic_moment_gamma(const ModelSpec& model, int t, int r, double rel_tol) {
  if (r < 1) throw std::invalid_argument("harmonic_moment_gamma: r must be at least 1");
  if (t < 1) throw std::invalid_argument("harmonic_moment_gamma: t must be at least 1");
  const int d = model.dimension();
  const int root = model.root_type();

  const std::vector<double> zeros(static_cast<std::size_t>(d), 0.0);
  const double ft0 = iterate_pgf(model, t, zeros)[static_cast<std::size_t>(root)];
  const double survive = 1.0 - ft0;
  if (!(survive > 0.0))
    throw NumericError("harmonic_moment_gamma: survival probability vanished");

  const auto integrand = [&](double u) -> double {
    const std::vector<double> s(static_cast<std::size_t>(d), std::exp(-u));
    const double ft = iterate_pgf(model, t, s)[static_cast<std::size_t>(root)];
    const double base = (ft - ft0) / survive;
    if (r == 1) return base;
    return std::pow(u, r - 1) * base;
  };

  // The integrand is bounded by u^(r-1) e^-u, so the tail beyond
  // 45 + 10 r is below any value the integral can take at double precision.
  const double upper = 45.0 + 10.0 * static_cast<double>(r);
  const auto run = [&](double abs_tol) {
    return integrate_unit_dyadic(integrand, 0.5 * abs_tol) +
           integrate(integrand, 1.0, upper, 0.5 * abs_tol);
  };
  // First pass pins the scale, second pass turns rel_tol into an absolute
  // budget for it (floored near machine precision).
  const double scale = std::max(std::abs(run(1e-10)), 1e-300);
  const double abs_tol = std::max(rel_tol, 1e-14) * scale;
  const double value = run(abs_tol) / std::tgamma(static_cast<double>(r));

  HarmonicMoment hm;
  hm.t = t;
  hm.r = r;
  hm.value = value;
  hm.conditioning = HarmonicMoment::Conditioning::at_t;
  return hm;
}

BoundPoint harmonic_bounds(const HarmonicMoment& hm_1, const HarmonicMoment& hm_km1,
                           const HarmonicMoment& hm_k, const BoundConstants& constants,
                           double sup_q) {
  if (hm_1.r != 1 || hm_km1.r != constants.k - 1 || hm_k.r != constants.k)
    throw std::invalid_argument("harmonic_bounds: moment orders do not match k");
  if (hm_1.t != hm_km1.t || hm_1.t != hm_k.t)
    throw std::invalid_argument("harmonic_bounds: moments must share t");
  const double keep = 1.0 - sup_q;
  // Conversions from conditioning at t to conditioning on survival forever:
  // each side uses the direction that preserves its validity.
  const double hm1_inf_upper = hm_1.value / keep;
  const double hmkm1_inf_lower = keep * hm_km1.value;
  const double hmk_inf_upper = hm_k.value / keep;
  BoundPoint out;
  out.lower = 1.0 - (constants.c1 + constants.c3) * hm1_inf_upper;
  out.upper = 1.0 - constants.c2 * (hmkm1_inf_lower - constants.c3 * hmk_inf_upper);
  return out;
}

BoundCurve harmonic_bound_curve(const ModelSpec& model, const BoundConstants& constants,
                                double sup_q, int t_min, int t_max, double rel_tol) {
  BoundCurve curve;
  for (int t = std::max(1, t_min); t <= t_max; ++t) {
    const HarmonicMoment hm1 = harmonic_moment_gamma(model, t, 1, rel_tol);
    const HarmonicMoment hmk = harmonic_moment_gamma(model, t, constants.k, rel_tol);
    const HarmonicMoment hmkm1 =
        constants.k - 1 == 1 ? hm1 : harmonic_moment_gamma(model, t, constants.k - 1, rel_tol);
    const BoundPoint p = harmonic_bounds(hm1, hmkm1, hmk, constants, sup_q);
    curve.t.push_back(t);
    curve.lower.push_back(p.lower);
    curve.upper.push_back(p.upper);
  }
  return curve;
}

namespace {

// Deterministic "repeat until n accepted" scheme: attempts are numbered and
// processed in fixed-size waves; the first n accepted attempts in attempt
// order make up the sample, so the result is independent of the worker
// count. Throws once more than 99.9% of a large attempt pool is discarded.
template <typename AttemptFn>
std::pair<std::vector<double>, long long> collect_accepted(long long n, int threads,
                                                           const AttemptFn& attempt) {
  std::vector<double> accepted;
  accepted.reserve(static_cast<std::size_t>(n));
  long long attempts_done = 0;
  long long discarded = 0;
  const long long wave = std::max<long long>(512, std::min<long long>(n, 16384));
  std::vector<std::optional<double>> results(static_cast<std::size_t>(wave));
  while (static_cast<long long>(accepted.size()) < n) {
    const long long base = attempts_done;
    parallel_for_index(static_cast<std::size_t>(wave), threads, [&](std::size_t i) {
      results[i] = attempt(static_cast<std::uint64_t>(base + static_cast<long long>(i)));
    });
    for (long long i = 0; i < wave && static_cast<long long>(accepted.size()) < n; ++i) {
      ++attempts_done;
      const auto& r = results[static_cast<std::size_t>(i)];
      if (r.has_value())
        accepted.push_back(*r);
      else
        ++discarded;
    }
    if (attempts_done >= 4096 && accepted.size() < static_cast<std::size_t>(attempts_done) / 1000)
      throw NumericError("theorem_estimate: more than 99.9% of attempts were discarded");
    if (attempts_done > (1LL << 40))
      throw NumericError("theorem_estimate: attempt budget exhausted");
  }
  return {std::move(accepted), discarded};
}

}  // namespace

CoalescenceEstimate theorem_estimate(const ModelSpec& model, std::span<const WSampler> samplers,
                                     int t, int k, long long n, std::uint64_t seed, int threads) {
  if (k < 2) throw std::invalid_argument("theorem_estimate: k must be at least 2");
  if (t < 0) throw std::invalid_argument("theorem_estimate: t must be nonnegative");
  if (n < 2) throw std::invalid_argument("theorem_estimate: need at least 2 replicates");
  const int d = model.dimension();
  if (static_cast<int>(samplers.size()) != d)
    throw std::invalid_argument("theorem_estimate: need one sampler per type");

  const auto attempt = [&](std::uint64_t rep) -> std::optional<double> {
    const StreamFactory streams(seed, rep);
    bool capped = false;
    PopulationState zt;
    zt.generation = 0;
    zt.counts.assign(static_cast<std::size_t>(d), 0);
    zt.counts[static_cast<std::size_t>(model.root_type())] = 1;
    for (int g = 0; g < t && !capped && zt.total() > 0; ++g)
      zt = step(zt, model, streams, &capped);
    if (capped) return std::nullopt;
    if (zt.total() == 0) return std::nullopt;
    RngStream wrng = streams.at(StreamPurpose::w_draw);
    const auto powk = [k](double x) {
      double r = x;
      for (int e = 1; e < k; ++e) r *= x;
      return r;
    };
    double sum_w = 0.0;
    double sum_wk = 0.0;
    bool any_positive = false;
    for (int i = 0; i < d; ++i) {
      const long long m = zt.counts[static_cast<std::size_t>(i)];
      for (long long s = 0; s < m; ++s) {
        const double w = samplers[static_cast<std::size_t>(i)].draw(wrng);
        if (w > 0.0) {
          any_positive = true;
          sum_w += w;
          sum_wk += powk(w);
        }
      }
    }
    if (!any_positive) return std::nullopt;
    return sum_wk / powk(sum_w);
  };

  auto [values, discarded] = collect_accepted(n, threads, attempt);

  double mean = 0.0;
  for (double a : values) mean += a;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double a : values) var += (a - mean) * (a - mean);
  var /= static_cast<double>(n - 1);

  CoalescenceEstimate est;
  est.t = t;
  est.k = k;
  est.p_hat = 1.0 - mean;
  est.std_err = std::sqrt(var / static_cast<double>(n));
  est.n_used = n;
  est.n_discarded = discarded;
  return est;
}

CoalescenceEstimate theorem_estimate(const ModelSpec& model, std::span<const DensityGrid> densities,
                                     int t, int k, long long n, std::uint64_t seed, int threads) {
  std::vector<WSampler> samplers;
  samplers.reserve(densities.size());
  for (const auto& g : densities) samplers.emplace_back(g);
  return theorem_estimate(model, std::span<const WSampler>(samplers), t, k, n, seed, threads);
}

}  // namespace branchkit
