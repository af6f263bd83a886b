#include "branchkit/cf_density.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>

namespace branchkit {

namespace {

constexpr double kMagnitudeTol = 1e-6;   // allowed |phi| overshoot past 1
constexpr double kSeedBound = 1e-8;      // Taylor remainder bound on ring 0
constexpr double kImagRatioTol = 1e-2;   // max |Im| vs max |Re| after inversion

std::complex<double> taylor_cf(const WMomentTable& table, int type, double y) {
  // sum_n E(W^n) (-i y)^n / n!
  std::complex<double> acc(0.0, 0.0);
  std::complex<double> power(1.0, 0.0);
  const std::complex<double> step(0.0, -y);
  double factorial = 1.0;
  for (int n = 0; n <= table.max_order; ++n) {
    if (n > 0) {
      power *= step;
      factorial *= static_cast<double>(n);
    }
    acc += table.moment(type, n) * power / factorial;
  }
  return acc;
}

}  // namespace

double CFGrid::outer_ring_distance(const ExtinctionVector& q) const {
  if (rings == 0) return 0.0;
  double worst = 0.0;
  const std::size_t begin = static_cast<std::size_t>(rings - 1) * static_cast<std::size_t>(per_ring);
  for (int j = 0; j < dimension(); ++j) {
    for (std::size_t idx = begin; idx < y.size(); ++idx) {
      worst = std::max(worst, std::abs(pos[static_cast<std::size_t>(j)][idx] -
                                       q.q[static_cast<std::size_t>(j)]));
      worst = std::max(worst, std::abs(neg[static_cast<std::size_t>(j)][idx] -
                                       q.q[static_cast<std::size_t>(j)]));
    }
  }
  return worst;
}

double DensityGrid::mass() const {
  return dx * std::accumulate(values.begin(), values.end(), 0.0);
}

double DensityGrid::mean() const {
  double acc = 0.0;
  for (std::size_t m = 0; m < values.size(); ++m)
    acc += (x0 + dx * static_cast<double>(m)) * values[m];
  return dx * acc;
}

CFGrid taylor_seed(const WMomentTable& table, double lambda, double z, int per_ring) {
  if (!(z > 0.0)) throw std::invalid_argument("taylor_seed: z must be positive");
  if (per_ring < 2) throw std::invalid_argument("taylor_seed: need at least 2 points per ring");
  if (!(lambda > 1.0)) throw std::invalid_argument("taylor_seed: lambda must exceed 1");

  const int m = table.max_order;
  double lead = 0.0;
  for (int j = 0; j < table.d; ++j) lead = std::max(lead, table.moment(j, m));
  const double remainder =
      std::pow(z * lambda, m + 1) * lead / std::tgamma(static_cast<double>(m + 2));
  if (!(remainder < kSeedBound)) {
    std::ostringstream msg;
    msg << "taylor_seed: truncation remainder bound " << remainder
        << " exceeds " << kSeedBound << "; use a smaller z";
    throw NumericError(msg.str());
  }

  CFGrid grid;
  grid.z = z;
  grid.lambda = lambda;
  grid.per_ring = per_ring;
  grid.rings = 1;
  grid.y.resize(static_cast<std::size_t>(per_ring));
  const double span = lambda * z - z;
  for (int i = 0; i < per_ring; ++i)
    grid.y[static_cast<std::size_t>(i)] =
        z + span * static_cast<double>(i) / static_cast<double>(per_ring - 1);
  grid.pos.assign(static_cast<std::size_t>(table.d), {});
  grid.neg.assign(static_cast<std::size_t>(table.d), {});
  for (int j = 0; j < table.d; ++j) {
    auto& p = grid.pos[static_cast<std::size_t>(j)];
    auto& n = grid.neg[static_cast<std::size_t>(j)];
    p.resize(grid.y.size());
    n.resize(grid.y.size());
    for (std::size_t idx = 0; idx < grid.y.size(); ++idx) {
      p[idx] = taylor_cf(table, j, grid.y[idx]);
      n[idx] = taylor_cf(table, j, -grid.y[idx]);
    }
  }
  return grid;
}

void propagate_cf(const ModelSpec& model, CFGrid& grid, int extra_rings) {
  const int d = model.dimension();
  if (grid.dimension() != d) throw std::invalid_argument("propagate_cf: grid/model dimension mismatch");
  if (grid.rings < 1) throw std::invalid_argument("propagate_cf: seed ring missing");

  std::vector<std::complex<double>> args_pos(static_cast<std::size_t>(d));
  std::vector<std::complex<double>> args_neg(static_cast<std::size_t>(d));
  for (int r = 0; r < extra_rings; ++r) {
    const std::size_t count = static_cast<std::size_t>(grid.per_ring);
    const std::size_t prev_begin = grid.y.size() - count;
    const std::size_t next_begin = grid.y.size();
    grid.y.resize(grid.y.size() + count);
    for (int j = 0; j < d; ++j) {
      grid.pos[static_cast<std::size_t>(j)].resize(grid.y.size());
      grid.neg[static_cast<std::size_t>(j)].resize(grid.y.size());
    }
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t src = prev_begin + i;
      const std::size_t dst = next_begin + i;
      grid.y[dst] = grid.lambda * grid.y[src];
      for (int j = 0; j < d; ++j) {
        args_pos[static_cast<std::size_t>(j)] = grid.pos[static_cast<std::size_t>(j)][src];
        args_neg[static_cast<std::size_t>(j)] = grid.neg[static_cast<std::size_t>(j)][src];
      }
      for (int j = 0; j < d; ++j) {
        const auto vp = pgf_eval(model, j, std::span<const std::complex<double>>(args_pos));
        const auto vn = pgf_eval(model, j, std::span<const std::complex<double>>(args_neg));
        if (std::abs(vp) > 1.0 + kMagnitudeTol || std::abs(vn) > 1.0 + kMagnitudeTol)
          throw NumericError(
              "propagate_cf: characteristic-function magnitude exceeded 1 (seed inaccuracy)");
        grid.pos[static_cast<std::size_t>(j)][dst] = vp;
        grid.neg[static_cast<std::size_t>(j)][dst] = vn;
      }
    }
    ++grid.rings;
  }
}

namespace {

// Piecewise-linear interpolation of the ring values (real and imaginary
// parts separately) onto an arbitrary abscissa in [-max_y, max_y]. The
// table rows are (-y descending ... 0 ... +y ascending) with phi(0) = 1.
class RingInterpolator {
 public:
  RingInterpolator(const CFGrid& grid, int type) {
    const auto& pos = grid.pos[static_cast<std::size_t>(type)];
    const auto& neg = grid.neg[static_cast<std::size_t>(type)];
    const std::size_t n = grid.y.size();
    xs_.reserve(2 * n + 1);
    vs_.reserve(2 * n + 1);
    for (std::size_t i = n; i-- > 0;) {
      xs_.push_back(-grid.y[i]);
      vs_.push_back(neg[i]);
    }
    xs_.push_back(0.0);
    vs_.push_back({1.0, 0.0});
    for (std::size_t i = 0; i < n; ++i) {
      xs_.push_back(grid.y[i]);
      vs_.push_back(pos[i]);
    }
  }

  std::complex<double> operator()(double x) const {
    if (x <= xs_.front()) return vs_.front();
    if (x >= xs_.back()) return vs_.back();
    const auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
    return at(static_cast<std::size_t>(it - xs_.begin()), x);
  }

  // Evaluates count ascending points x = start + k * stride, subtracting the
  // atom, with a single pass over the table.
  void sweep(double start, double stride, std::size_t count, double atom,
             std::complex<double>* out) const {
    std::size_t hi = 1;
    for (std::size_t k = 0; k < count; ++k) {
      const double x = start + stride * static_cast<double>(k);
      if (x <= xs_.front()) {
        out[k] = vs_.front() - atom;
        continue;
      }
      if (x >= xs_.back()) {
        out[k] = vs_.back() - atom;
        continue;
      }
      while (xs_[hi] <= x) ++hi;
      out[k] = at(hi, x) - atom;
    }
  }

 private:
  std::complex<double> at(std::size_t hi, double x) const {
    const std::size_t lo = hi - 1;
    const double width = xs_[hi] - xs_[lo];
    if (width <= 0.0) return vs_[lo];
    const double w = (x - xs_[lo]) / width;
    return {(1.0 - w) * vs_[lo].real() + w * vs_[hi].real(),
            (1.0 - w) * vs_[lo].imag() + w * vs_[hi].imag()};
  }

  std::vector<double> xs_;
  std::vector<std::complex<double>> vs_;
};

std::mutex fftw_plan_mutex;

}  // namespace

DensityGrid invert_density(const CFGrid& grid, const ExtinctionVector& q, int type, int m_points) {
  if (m_points < 2 || (m_points & (m_points - 1)) != 0)
    throw std::invalid_argument("invert_density: grid size must be a power of two");
  if (type < 0 || type >= grid.dimension())
    throw std::invalid_argument("invert_density: type out of range");

  const double a = grid.max_abscissa();
  const double qj = q.q[static_cast<std::size_t>(type)];
  const std::size_t m = static_cast<std::size_t>(m_points);
  const double dxi = 2.0 * a / static_cast<double>(m_points);

  // The target abscissas ascend, so one merge sweep over the table suffices.
  RingInterpolator interp(grid, type);
  std::vector<std::complex<double>> buf(m);
  interp.sweep(-a, dxi, m, qj, buf.data());

  {
    // Plans are cached per size; planning is far costlier than executing.
    std::lock_guard<std::mutex> lock(fftw_plan_mutex);
    static std::map<int, fftw_plan> plans;
    auto it = plans.find(m_points);
    if (it == plans.end()) {
      std::vector<std::complex<double>> scratch(m);
      fftw_plan plan = fftw_plan_dft_1d(
          m_points, reinterpret_cast<fftw_complex*>(scratch.data()),
          reinterpret_cast<fftw_complex*>(scratch.data()), FFTW_BACKWARD, FFTW_ESTIMATE);
      it = plans.emplace(m_points, plan).first;
    }
    fftw_execute_dft(it->second, reinterpret_cast<fftw_complex*>(buf.data()),
                     reinterpret_cast<fftw_complex*>(buf.data()));
  }

  // Grid starts at -a, so the continuous inversion picks up a phase of
  // exp(-i a x_m) = (-1)^m at x_m = m * pi / a.
  DensityGrid out;
  out.type = type;
  out.atom = qj;
  out.x0 = 0.0;
  out.dx = 2.0 * M_PI / (static_cast<double>(m_points) * dxi);
  out.values.resize(m);
  double max_re = 0.0, max_im = 0.0;
  const double scale = dxi / (2.0 * M_PI);
  for (std::size_t i = 0; i < m; ++i) {
    const double sign = (i % 2 == 0) ? 1.0 : -1.0;
    const double re = scale * sign * buf[i].real();
    const double im = scale * sign * buf[i].imag();
    max_re = std::max(max_re, std::abs(re));
    max_im = std::max(max_im, std::abs(im));
    out.values[i] = re;
  }
  if (max_im > kImagRatioTol * max_re)
    throw NumericError(
        "invert_density: imaginary residue too large (increase the ring extent or grid size)");

  double clipped = 0.0;
  for (double& v : out.values) {
    if (v < 0.0) {
      clipped += -v;
      v = 0.0;
    }
  }
  out.clipped_mass = clipped * out.dx;
  return out;
}

std::vector<double> sample_w(const DensityGrid& density, long n, RngStream& rng) {
  WSampler sampler(density);
  std::vector<double> out(static_cast<std::size_t>(n));
  for (auto& v : out) v = sampler.draw(rng);
  return out;
}

// Walker/Vose alias construction; zero-weight bins end up with acceptance
// threshold 0 and are never returned. The table is trimmed to the effective
// support: trailing bins whose combined mass is below 1e-12 of the total are
// dropped, which keeps the table cache-resident for tight draw loops.
WSampler::WSampler(const DensityGrid& density)
    : atom_(density.atom), x0_(density.x0), dx_(density.dx) {
  const double total = std::accumulate(density.values.begin(), density.values.end(), 0.0);
  if (!(total > 0.0)) {
    if (atom_ < 1.0) throw NumericError("WSampler: density has no positive mass");
    accept_.assign(1, 1.0);
    alias_.assign(1, 0);
    return;
  }
  std::size_t n = density.values.size();
  double suffix = 0.0;
  while (n > 1 && suffix + density.values[n - 1] <= 1e-12 * total) {
    suffix += density.values[n - 1];
    --n;
  }
  accept_.assign(n, 0.0);
  alias_.assign(n, 0);
  std::vector<double> scaled(n);
  for (std::size_t i = 0; i < n; ++i)
    scaled[i] = density.values[i] * static_cast<double>(n) / total;
  std::vector<std::uint32_t> small, large;
  small.reserve(n);
  large.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    (scaled[i] < 1.0 ? small : large).push_back(static_cast<std::uint32_t>(i));
  while (!small.empty() && !large.empty()) {
    const std::uint32_t s = small.back();
    const std::uint32_t l = large.back();
    small.pop_back();
    accept_[s] = scaled[s];
    alias_[s] = l;
    scaled[l] -= 1.0 - scaled[s];
    if (scaled[l] < 1.0) {
      large.pop_back();
      small.push_back(l);
    }
  }
  // Leftovers are scaled ~1 up to roundoff; a stray ~0 entry (possible after
  // repeated subtractions) must still never be returned, so alias it to the
  // heaviest bin instead of accepting it.
  const auto heavy = static_cast<std::uint32_t>(
      std::max_element(density.values.begin(),
                       density.values.begin() + static_cast<std::ptrdiff_t>(n)) -
      density.values.begin());
  for (std::uint32_t i : large) accept_[i] = 1.0;
  for (std::uint32_t i : small) {
    if (scaled[i] >= 0.5) {
      accept_[i] = 1.0;
    } else {
      accept_[i] = 0.0;
      alias_[i] = heavy;
    }
  }
}

double WSampler::draw(RngStream& rng) const {
  if (rng.next_double() < atom_) return 0.0;
  // One draw covers both the bin index (high part) and the acceptance coin
  // (fractional part of u * n).
  const auto prod = static_cast<unsigned __int128>(rng.next_u64()) * accept_.size();
  const auto bin = static_cast<std::size_t>(prod >> 64);
  const double coin =
      static_cast<double>(static_cast<std::uint64_t>(prod) >> 11) * 0x1.0p-53;
  const std::size_t idx = coin < accept_[bin] ? bin : alias_[bin];
  return x0_ + dx_ * static_cast<double>(idx);
}

namespace {

double taylor_seed_remainder(const WMomentTable& table, double lambda, double z) {
  const int m = table.max_order;
  double lead = 0.0;
  for (int j = 0; j < table.d; ++j) lead = std::max(lead, table.moment(j, m));
  return std::pow(z * lambda, m + 1) * lead / std::tgamma(static_cast<double>(m + 2));
}

}  // namespace

CFGrid build_cf_grid(const ModelSpec& model, const SpectralData& spec, const WMomentTable& table,
                     const ExtinctionVector& q, const DensityOptions& opts) {
  // The requested z is an upper bound; shrink until the seed ring satisfies
  // its truncation-remainder precondition.
  double z = opts.z;
  int shrink = 0;
  while (taylor_seed_remainder(table, spec.lambda, z) >= 0.9 * kSeedBound) {
    z *= 0.75;
    if (++shrink > 200) throw NumericError("build_cf_grid: cannot satisfy the seed bound");
  }
  // Each ring spans a factor lambda in abscissa, so a strongly supercritical
  // model stretches the same point count over a much wider span. Scale the
  // count to keep the per-octave sampling (and with it the linear
  // interpolation error) at the per_ring baseline.
  const int per_ring = std::max(
      opts.per_ring,
      static_cast<int>(std::ceil(opts.per_ring * (spec.lambda - 1.0) / 0.809)));
  CFGrid grid = taylor_seed(table, spec.lambda, z, per_ring);
  if (opts.rings > 0) {
    propagate_cf(model, grid, opts.rings - 1);
    return grid;
  }
  for (;;) {
    const double extent = grid.max_abscissa();
    const double outer = grid.outer_ring_distance(q);
    const bool extent_ok = extent >= opts.min_extent;
    const bool decay_ok = outer < opts.decay_tol;
    const bool bias_ok =
        outer * static_cast<double>(opts.grid_points) / extent < opts.ring_bias_tol;
    if (extent_ok && decay_ok && bias_ok) return grid;
    if (grid.max_abscissa() > opts.max_extent)
      throw NumericError(
          "build_cf_grid: characteristic function did not decay within the extent limit; "
          "set an explicit ring count (degenerate limits have non-decaying transforms)");
    propagate_cf(model, grid, 1);
  }
}

DensityGrid build_density(const ModelSpec& model, const SpectralData& spec,
                          const WMomentTable& table, const ExtinctionVector& q, int type,
                          const DensityOptions& opts) {
  const CFGrid grid = build_cf_grid(model, spec, table, q, opts);
  return invert_density(grid, q, type, opts.grid_points);
}

std::vector<DensityGrid> build_densities(const ModelSpec& model, const SpectralData& spec,
                                         const WMomentTable& table, const ExtinctionVector& q,
                                         const DensityOptions& opts) {
  const CFGrid grid = build_cf_grid(model, spec, table, q, opts);
  std::vector<DensityGrid> out;
  out.reserve(static_cast<std::size_t>(model.dimension()));
  for (int j = 0; j < model.dimension(); ++j)
    out.push_back(invert_density(grid, q, j, opts.grid_points));
  return out;
}

}  // namespace branchkit
