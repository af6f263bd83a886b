#pragma once

#include <complex>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace branchkit {

class ModelError : public std::runtime_error {
 public:
  explicit ModelError(const std::string& what) : std::runtime_error(what) {}
};

class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// ---------------------------------------------------------------------------
// Offspring laws
// ---------------------------------------------------------------------------

struct Poisson {
  double rate = 0.0;
};
struct Binomial {
  long long trials = 0;
  double success = 0.0;
};
// Support {0, 1, 2, ...}: number of failures before the first success.
struct Geometric {
  double success = 1.0;
};
struct Constant {
  long long value = 0;
};

using UnivariateLaw = std::variant<Poisson, Binomial, Geometric, Constant>;

double law_mean(const UnivariateLaw& law);
void validate_law(const UnivariateLaw& law);

// pgf of a single offspring count, real or complex argument.
template <typename Scalar>
Scalar law_pgf(const UnivariateLaw& law, Scalar s);

// Per-parent offspring law over all child types. Either independent child
// counts per type (one univariate law per type) or an explicit finite table.
struct ProductForm {
  std::vector<UnivariateLaw> cells;  // exactly d entries
};

struct JointRow {
  std::vector<long long> offspring;  // length d, entries >= 0
  double prob = 0.0;
};

struct JointTable {
  std::vector<JointRow> rows;  // probabilities sum to 1 within 1e-12
};

using OffspringLaw = std::variant<ProductForm, JointTable>;

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

// Immutable after construction; all operations on it are pure.
class ModelSpec {
 public:
  // root_type is 0-based here; file formats use 1-based type indices.
  ModelSpec(int d, std::vector<OffspringLaw> laws, int root_type);

  int dimension() const { return d_; }
  int root_type() const { return root_type_; }
  const OffspringLaw& law(int parent) const { return laws_.at(static_cast<std::size_t>(parent)); }
  const std::vector<OffspringLaw>& laws() const { return laws_; }

  // Cumulative row probabilities for JointTable parents (empty otherwise).
  const std::vector<double>& joint_cdf(int parent) const {
    return joint_cdfs_.at(static_cast<std::size_t>(parent));
  }

 private:
  int d_;
  int root_type_;
  std::vector<OffspringLaw> laws_;
  std::vector<std::vector<double>> joint_cdfs_;
};

struct MeanMatrix {
  int d = 0;
  std::vector<double> entries;  // row-major, entries[i*d + j]

  double operator()(int i, int j) const {
    return entries[static_cast<std::size_t>(i) * static_cast<std::size_t>(d) +
                   static_cast<std::size_t>(j)];
  }
  double& operator()(int i, int j) {
    return entries[static_cast<std::size_t>(i) * static_cast<std::size_t>(d) +
                   static_cast<std::size_t>(j)];
  }
};

// Perron root with left/right eigenvectors, normalized so that
// nu . 1 = 1 and u . nu = 1. Under this scaling u_i is the expected value
// of the rescaled-population limit started from one type-i individual.
struct SpectralData {
  double lambda = 0.0;
  std::vector<double> u;
  std::vector<double> nu;
};

struct ExtinctionVector {
  std::vector<double> q;
  // Set when some entry sits within 1e-9 of 1, which signals a model that
  // is not actually supercritical.
  bool near_one = false;
};

struct Classification {
  bool irreducible = false;
  bool supercritical = false;
  bool moment_order_ok = true;  // true for every supported law family
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

MeanMatrix mean_matrix(const ModelSpec& model);

// f^parent(s); requires |s_j| <= 1 + 1e-12 componentwise.
std::complex<double> pgf_eval(const ModelSpec& model, int parent,
                              std::span<const std::complex<double>> s);
double pgf_eval(const ModelSpec& model, int parent, std::span<const double> s);

// Power iteration on M and its transpose; relative convergence 1e-12,
// at most 1e5 iterations. Requires an irreducible matrix.
SpectralData spectral(const MeanMatrix& m);

// Minimal fixed point of q = f(q), by iterating from the zero vector.
ExtinctionVector extinction(const ModelSpec& model, double tol = 1e-12,
                            long max_iter = 1'000'000);

Classification classify(const ModelSpec& model);

// Spectral radius estimate that tolerates reducible matrices (used by
// classify); spectral() itself refuses non-irreducible input.
double spectral_radius_estimate(const MeanMatrix& m);

bool is_irreducible(const MeanMatrix& m);

}  // namespace branchkit
