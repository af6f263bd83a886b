#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "branchkit/cf_density.hpp"
#include "branchkit/hs_transform.hpp"
#include "branchkit/model.hpp"

namespace branchkit {

struct CoalescenceEstimate {
  int t = 0;
  int k = 2;
  double p_hat = 0.0;
  double std_err = 0.0;
  long long n_used = 0;
  long long n_discarded = 0;
};

struct HarmonicMoment {
  enum class Conditioning { at_t, at_infinity };
  int t = 0;
  int r = 1;
  double value = 0.0;
  Conditioning conditioning = Conditioning::at_t;
};

// (f_t^i(s))_i by t nested applications of the offspring pgfs; t = 0 is s.
std::vector<double> iterate_pgf(const ModelSpec& model, int t, std::span<const double> s);

// r-th harmonic moment of the total population at generation t, conditioned
// on survival to t, via the Gamma-integral representation
//   (1/Gamma(r)) * Int_0^inf u^(r-1) (f_t(e^-u 1) - f_t(0)) / (1 - f_t(0)) du
// evaluated with adaptive quadrature split at u = 1.
HarmonicMoment harmonic_moment_gamma(const ModelSpec& model, int t, int r, double rel_tol = 1e-8);

struct BoundPoint {
  double lower = 0.0;  // raw, not clamped
  double upper = 1.0;
};

// Bounds on the limiting coalescence probability from harmonic moments at
// generation t. The at-t moments are converted to the conditioned-on-survival
// limit in the direction that keeps each side valid.
BoundPoint harmonic_bounds(const HarmonicMoment& hm_1, const HarmonicMoment& hm_km1,
                           const HarmonicMoment& hm_k, const BoundConstants& constants,
                           double sup_q);

BoundCurve harmonic_bound_curve(const ModelSpec& model, const BoundConstants& constants,
                                double sup_q, int t_min, int t_max, double rel_tol = 1e-8);

// Monte Carlo estimator of the limiting coalescence probability: simulate to
// generation t, draw one limit sample per surviving individual from its
// type's density, discard replicates whose population died or whose draws
// are all zero, and average sum(W^k)/(sum W)^k over n accepted replicates.
CoalescenceEstimate theorem_estimate(const ModelSpec& model, std::span<const DensityGrid> densities,
                                     int t, int k, long long n, std::uint64_t seed,
                                     int threads = 1);

CoalescenceEstimate theorem_estimate(const ModelSpec& model, std::span<const WSampler> samplers,
                                     int t, int k, long long n, std::uint64_t seed,
                                     int threads = 1);

}  // namespace branchkit
