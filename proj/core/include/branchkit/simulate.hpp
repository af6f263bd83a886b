#pragma once

#include <cstdint>
#include <vector>

#include "branchkit/model.hpp"
#include "branchkit/rng.hpp"

namespace branchkit {

inline constexpr long long kPopulationCap = 1'000'000'000'000LL;  // per type

struct PopulationState {
  std::vector<long long> counts;
  int generation = 0;

  long long total() const {
    long long s = 0;
    for (long long c : counts) s += c;
    return s;
  }
};

// One ancestor index per living individual, anchored at generation t_anchor.
// Individuals are ordered type-major; ancestor indices are 1-based positions
// in the generation-t_anchor population.
struct GenealogyFrame {
  std::vector<int> types;          // 0-based type per individual
  std::vector<std::int64_t> ancestors;
  int t_anchor = 0;

  std::size_t size() const { return ancestors.size(); }
};

struct MrcaEstimate {
  double p_hat = 0.0;
  double std_err = 0.0;
  long long n_effective = 0;
  long long n_requested = 0;
  long long n_capped = 0;
};

// One generation forward. Draws are keyed by (population, generation, parent
// type, child type), so restepping the same state reproduces the same result
// and the genealogy path sees identical population totals. ProductForm
// Poisson cells aggregate all parents of one type into a single draw.
// Exceeding the per-type population cap sets *capped and stops growth.
PopulationState step(const PopulationState& state, const ModelSpec& model,
                     const StreamFactory& streams, bool* capped = nullptr);

// Trajectory from a single root-type individual, generations 0..T.
std::vector<PopulationState> run_population(const ModelSpec& model, int T,
                                            const StreamFactory& streams, bool* capped = nullptr);

// Population-level to generation t, then child-level attribution to T with
// each individual's generation-t ancestor index carried along.
GenealogyFrame run_genealogy(const ModelSpec& model, int t, int T, const StreamFactory& streams,
                             bool* capped = nullptr);

// Draw one offspring vector of a single parent (used by tests and the
// moment cross-checks).
std::vector<long long> draw_offspring(const ModelSpec& model, int parent, RngStream& rng);

// Uniform k-subset of {0, ..., total-1} without replacement.
std::vector<long long> sample_distinct(long long total, int k, RngStream& rng);

// Direct estimator of the probability that k individuals sampled at
// generation T do NOT all descend from one generation-t ancestor,
// conditioned on at least k individuals being alive at T. Runs with fewer
// than k survivors (or a capped population) are excluded from the
// denominator. Throws when fewer than 100 usable runs remain.
MrcaEstimate mrca_direct_estimate(const ModelSpec& model, int t, int T, int k, long long n_runs,
                                  std::uint64_t seed, int threads = 1);

}  // namespace branchkit
