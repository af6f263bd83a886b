#include "branchkit/hs_transform.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "branchkit/simulate.hpp"

namespace branchkit {

namespace {
constexpr long long kMaxRejects = 1'000'000;
}

double hs_pgf_eval(const ModelSpec& model, const ExtinctionVector& q, int parent,
                   std::span<const double> s) {
  const int d = model.dimension();
  if (static_cast<int>(s.size()) != d)
    throw std::invalid_argument("hs_pgf_eval: argument has wrong dimension");
  const double qp = q.q[static_cast<std::size_t>(parent)];
  if (1.0 - qp < 1e-12)
    throw NumericError("hs_pgf_eval: parent extinction probability is too close to 1");
  std::vector<double> mapped(static_cast<std::size_t>(d));
  for (int j = 0; j < d; ++j) {
    const double qj = q.q[static_cast<std::size_t>(j)];
    mapped[static_cast<std::size_t>(j)] = s[static_cast<std::size_t>(j)] * (1.0 - qj) + qj;
  }
  const double f = pgf_eval(model, parent, std::span<const double>(mapped));
  return (f - qp) / (1.0 - qp);
}

std::vector<long long> sample_y1(const ModelSpec& model, const ExtinctionVector& q, int parent,
                                 RngStream& rng, long long* attempts) {
  const int d = model.dimension();
  if (1.0 - q.q[static_cast<std::size_t>(parent)] < 1e-12)
    throw NumericError("sample_y1: parent extinction probability is too close to 1");
  std::vector<long long> survivors(static_cast<std::size_t>(d), 0);
  for (long long round = 1; round <= kMaxRejects; ++round) {
    const std::vector<long long> children = draw_offspring(model, parent, rng);
    long long alive = 0;
    for (int j = 0; j < d; ++j) {
      const double keep = 1.0 - q.q[static_cast<std::size_t>(j)];
      long long kept = 0;
      for (long long c = 0; c < children[static_cast<std::size_t>(j)]; ++c)
        if (rng.next_double() < keep) ++kept;
      survivors[static_cast<std::size_t>(j)] = kept;
      alive += kept;
    }
    if (alive > 0) {
      if (attempts) *attempts = round;
      return survivors;
    }
  }
  throw NumericError("sample_y1: rejection loop exceeded 1e6 rounds (extinction nearly certain)");
}

HSBoundInputs estimate_sup_moments(const ModelSpec& model, const ExtinctionVector& q, long long n,
                                   std::uint64_t seed) {
  if (n < 1000) throw std::invalid_argument("estimate_sup_moments: need at least 1e3 replicates");
  const int d = model.dimension();
  double sum_y = 0.0, sum_y2 = 0.0, sum_inv = 0.0, sum_inv2 = 0.0;
  for (long long rep = 0; rep < n; ++rep) {
    RngStream rng = StreamFactory(seed, static_cast<std::uint64_t>(rep))
                        .at(StreamPurpose::sup_moment);
    double max_y = 0.0;
    double max_inv = 0.0;
    for (int i = 0; i < d; ++i) {
      const auto y = sample_y1(model, q, i, rng);
      long long total = 0;
      for (long long c : y) total += c;
      max_y = std::max(max_y, static_cast<double>(total));
      max_inv = std::max(max_inv, 1.0 / static_cast<double>(total));
    }
    sum_y += max_y;
    sum_y2 += max_y * max_y;
    sum_inv += max_inv;
    sum_inv2 += max_inv * max_inv;
  }
  const double nd = static_cast<double>(n);
  HSBoundInputs out;
  out.sup_q = *std::max_element(q.q.begin(), q.q.end());
  out.e_sup_y = sum_y / nd;
  out.e_sup_inv_y = sum_inv / nd;
  out.se_sup_y = std::sqrt(std::max(0.0, sum_y2 / nd - out.e_sup_y * out.e_sup_y) / nd);
  out.se_sup_inv_y =
      std::sqrt(std::max(0.0, sum_inv2 / nd - out.e_sup_inv_y * out.e_sup_inv_y) / nd);
  out.replicates = n;
  return out;
}

double admissible_epsilon_sup(const WMomentTable& table, int k) {
  if (k < 1 || 2 * k > table.max_order)
    throw std::invalid_argument("admissible_epsilon_sup: moment table does not cover order 2k");
  double sup = table.moment(0, 1);
  for (int i = 0; i < table.d; ++i) {
    sup = std::min(sup, table.moment(i, 1));
    sup = std::min(sup, table.moment(i, k));
  }
  return sup;
}

BoundConstants bound_constants(const WMomentTable& table, const ExtinctionVector& q,
                               double epsilon, int k) {
  if (k < 2) throw std::invalid_argument("bound_constants: k must be at least 2");
  if (2 * k > table.max_order)
    throw std::invalid_argument("bound_constants: moment table does not cover order 2k");
  const double sup_eps = admissible_epsilon_sup(table, k);
  if (!(epsilon > 0.0) || !(epsilon < sup_eps)) {
    std::ostringstream msg;
    msg << "bound_constants: epsilon must lie in (0, " << sup_eps << ")";
    throw std::invalid_argument(msg.str());
  }

  double sup_m1 = 0.0, inf_m1 = table.moment(0, 1);
  double sup_mk = 0.0, inf_mk = table.moment(0, k);
  double sup_var1 = 0.0, sup_vark = 0.0;
  for (int i = 0; i < table.d; ++i) {
    sup_m1 = std::max(sup_m1, table.moment(i, 1));
    inf_m1 = std::min(inf_m1, table.moment(i, 1));
    sup_mk = std::max(sup_mk, table.moment(i, k));
    inf_mk = std::min(inf_mk, table.moment(i, k));
    sup_var1 = std::max(sup_var1, table.variance_of_power(i, 1));
    sup_vark = std::max(sup_vark, table.variance_of_power(i, k));
  }
  const double sup_q = *std::max_element(q.q.begin(), q.q.end());

  BoundConstants c;
  c.epsilon = epsilon;
  c.k = k;
  c.c1 = (sup_mk + epsilon) / std::pow(inf_m1 - epsilon, k);
  c.c2 = (inf_mk - epsilon) / std::pow(sup_m1 + epsilon, k);
  c.c3 = (sup_var1 + sup_vark) / (epsilon * epsilon * (1.0 - sup_q));
  c.c4 = (c.c1 + c.c3) / ((1.0 - sup_q) * (1.0 - sup_q));
  c.c5 = c.c2 * std::pow(1.0 - sup_q, k);
  c.c6 = c.c2 * c.c3 / ((1.0 - sup_q) * (1.0 - sup_q));
  return c;
}

BoundCurve corollary_bounds(const BoundConstants& constants, const HSBoundInputs& inputs,
                            int t_min, int t_max) {
  BoundCurve curve;
  for (int t = t_min; t <= t_max; ++t) {
    const double td = static_cast<double>(t);
    const double lower = 1.0 - constants.c4 * std::pow(inputs.e_sup_inv_y, td);
    const double upper =
        1.0 -
        constants.c5 * std::pow(inputs.e_sup_y, -td * static_cast<double>(constants.k - 1)) +
        constants.c6 * std::pow(inputs.e_sup_inv_y, td * static_cast<double>(constants.k));
    curve.t.push_back(t);
    curve.lower.push_back(lower);
    curve.upper.push_back(upper);
  }
  return curve;
}

}  // namespace branchkit
