#pragma once

#include <complex>
#include <vector>

#include "branchkit/model.hpp"
#include "branchkit/rng.hpp"
#include "branchkit/wmoments.hpp"

namespace branchkit {

// Characteristic-function values on geometric rings. Ring l holds
// per_ring points on [lambda^l z, lambda^{l+1} z]; values at the mirrored
// negative abscissas are stored separately so conjugate symmetry is a
// checkable property of the computation rather than true by construction.
struct CFGrid {
  double z = 0.0;
  double lambda = 0.0;
  int per_ring = 0;
  int rings = 0;
  std::vector<double> y;  // positive abscissas, ascending, rings * per_ring
  // values[type][idx]: pos at +i*y[idx], neg at -i*y[idx]
  std::vector<std::vector<std::complex<double>>> pos;
  std::vector<std::vector<std::complex<double>>> neg;

  int dimension() const { return static_cast<int>(pos.size()); }
  double max_abscissa() const { return y.empty() ? 0.0 : y.back(); }
  // Largest |phi_j - q_j| over the outermost ring and all types.
  double outer_ring_distance(const ExtinctionVector& q) const;
};

// Density of the rescaled-population limit conditioned on being positive,
// on a uniform grid, plus the atom at zero.
struct DensityGrid {
  int type = 0;
  double x0 = 0.0;
  double dx = 0.0;
  std::vector<double> values;
  double atom = 0.0;          // extinction probability of this type
  double clipped_mass = 0.0;  // mass removed when negatives were clipped

  double mass() const;  // dx * sum(values)
  double mean() const;  // dx * sum(x * values)
};

// Ring 0 for all types: Taylor expansion of the conditional Laplace/Fourier
// transform around 0 evaluated on [z, lambda*z] and the mirrored interval.
// Requires the truncation remainder bound
//   (z*lambda)^(m+1) * max_j moments[j][m] / (m+1)! < 1e-8,  m = max order,
// otherwise throws and advises a smaller z.
CFGrid taylor_seed(const WMomentTable& table, double lambda, double z, int per_ring);

// Appends extra_rings rings, each computed from the previous one through the
// offspring generating functions. Throws if any |phi| exceeds 1 + 1e-6.
void propagate_cf(const ModelSpec& model, CFGrid& grid, int extra_rings);

// Inverse transform of (phi_type - q_type) on M uniform points spanning the
// grid's abscissa range; M must be a power of two. Negative density values
// are clipped to zero and accounted in clipped_mass.
DensityGrid invert_density(const CFGrid& grid, const ExtinctionVector& q, int type, int m_points);

// Composition sampling: 0 with probability atom, otherwise a grid point with
// probability proportional to its density value.
std::vector<double> sample_w(const DensityGrid& density, long n, RngStream& rng);

// Prepared alias table for O(1) repeated draws from one DensityGrid.
class WSampler {
 public:
  explicit WSampler(const DensityGrid& density);
  double draw(RngStream& rng) const;

 private:
  double atom_;
  double x0_, dx_;
  std::vector<double> accept_;    // acceptance threshold per bin
  std::vector<std::uint32_t> alias_;
};

// Truncating the transform at |phi - q| ~ eps leaks ripples of height
// ~eps/(pi x) across the whole x-range; their contribution to the grid mean
// is about eps * grid_points / extent. Auto mode therefore propagates rings
// until the extent, the outer-ring decay, and that ringing-bias estimate are
// all within tolerance.
struct DensityOptions {
  double z = 1e-2;
  int per_ring = 64;
  int rings = 0;  // 0 = auto
  int grid_points = 1 << 16;
  double min_extent = 100.0;
  double decay_tol = 1e-4;
  double ring_bias_tol = 2e-3;
  double max_extent = 1e7;  // auto mode gives up past this abscissa
};

// Seed + propagate with automatic ring count.
CFGrid build_cf_grid(const ModelSpec& model, const SpectralData& spec, const WMomentTable& table,
                     const ExtinctionVector& q, const DensityOptions& opts = {});

DensityGrid build_density(const ModelSpec& model, const SpectralData& spec,
                          const WMomentTable& table, const ExtinctionVector& q, int type,
                          const DensityOptions& opts = {});

std::vector<DensityGrid> build_densities(const ModelSpec& model, const SpectralData& spec,
                                         const WMomentTable& table, const ExtinctionVector& q,
                                         const DensityOptions& opts = {});

}  // namespace branchkit
