#pragma once

#include <span>
#include <vector>

#include "branchkit/model.hpp"
#include "branchkit/rng.hpp"
#include "branchkit/wmoments.hpp"

namespace branchkit {

// Monte Carlo inputs for the decay-rate bounds: the largest extinction
// probability and the expectations of sup_i |Y1^i| and sup_i 1/|Y1^i| over
// one independent transformed-offspring draw per type.
struct HSBoundInputs {
  double sup_q = 0.0;
  double e_sup_y = 0.0;
  double e_sup_inv_y = 0.0;
  double se_sup_y = 0.0;
  double se_sup_inv_y = 0.0;
  long long replicates = 0;
};

struct BoundConstants {
  double c1 = 0.0, c2 = 0.0, c3 = 0.0;
  double c4 = 0.0, c5 = 0.0, c6 = 0.0;
  double epsilon = 0.0;
  int k = 2;
};

// Transformed pgf F^parent(s) = (f^parent(s*(1-q)+q) - q_parent)/(1 - q_parent).
// F^parent(0) = 0 and F^parent(1) = 1.
double hs_pgf_eval(const ModelSpec& model, const ExtinctionVector& q, int parent,
                   std::span<const double> s);

// Exact sampler for the transformed offspring law: draw the original
// offspring, thin each type-j child with survival probability 1-q_j, and
// reject until at least one child survives. attempts (when non-null)
// receives the number of thinning rounds used.
std::vector<long long> sample_y1(const ModelSpec& model, const ExtinctionVector& q, int parent,
                                 RngStream& rng, long long* attempts = nullptr);

HSBoundInputs estimate_sup_moments(const ModelSpec& model, const ExtinctionVector& q, long long n,
                                   std::uint64_t seed);

// Largest admissible epsilon: min over types i and orders j in {1, k} of
// the j-th moment in the table.
double admissible_epsilon_sup(const WMomentTable& table, int k);

BoundConstants bound_constants(const WMomentTable& table, const ExtinctionVector& q,
                               double epsilon, int k);

struct BoundCurve {
  std::vector<int> t;
  std::vector<double> lower;  // raw values, not clamped
  std::vector<double> upper;
};

BoundCurve corollary_bounds(const BoundConstants& constants, const HSBoundInputs& inputs,
                            int t_min, int t_max);

}  // namespace branchkit
