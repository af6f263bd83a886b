#include "branchkit/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "branchkit/parallel.hpp"

namespace branchkit {

namespace {

long long capped_add(long long a, long long b, bool* capped) {
  const long long s = a + b;
  if (s > kPopulationCap) {
    if (capped) *capped = true;
    return kPopulationCap;
  }
  return s;
}

// Draws the generation-g type-j children of the n type-i parents, matching
// the stream/draw discipline of the genealogy path exactly: Poisson cells
// aggregate into one draw, every other family draws once per parent.
long long cell_total(const UnivariateLaw& cell, long long parents, RngStream& rng) {
  return std::visit(
      [&](const auto& law) -> long long {
        using T = std::decay_t<decltype(law)>;
        if constexpr (std::is_same_v<T, Poisson>) {
          return rng.poisson(static_cast<double>(parents) * law.rate);
        } else if constexpr (std::is_same_v<T, Binomial>) {
          long long total = 0;
          for (long long p = 0; p < parents; ++p) total += rng.binomial(law.trials, law.success);
          return total;
        } else if constexpr (std::is_same_v<T, Geometric>) {
          long long total = 0;
          for (long long p = 0; p < parents; ++p) total += rng.geometric(law.success);
          return total;
        } else {
          if (law.value > 0 && parents > kPopulationCap / law.value)
            return kPopulationCap + 1;  // caller caps and flags
          return parents * law.value;
        }
      },
      cell);
}

long long draw_joint_row(const ModelSpec& model, int parent, RngStream& rng) {
  const auto& cdf = model.joint_cdf(parent);
  const double u = rng.next_double();
  const auto it = std::lower_bound(cdf.begin(), cdf.end(), u);
  return static_cast<long long>(it - cdf.begin());
}

}  // namespace

// Floyd's algorithm.
std::vector<long long> sample_distinct(long long total, int k, RngStream& rng) {
  if (k < 0 || total < k) throw std::invalid_argument("sample_distinct: need 0 <= k <= total");
  std::unordered_set<long long> chosen;
  chosen.reserve(static_cast<std::size_t>(k) * 2);
  for (long long j = total - k; j < total; ++j) {
    const auto r = static_cast<long long>(rng.uniform_below(static_cast<std::uint64_t>(j + 1)));
    chosen.insert(chosen.count(r) ? j : r);
  }
  return {chosen.begin(), chosen.end()};
}

std::vector<long long> draw_offspring(const ModelSpec& model, int parent, RngStream& rng) {
  const int d = model.dimension();
  std::vector<long long> counts(static_cast<std::size_t>(d), 0);
  std::visit(
      [&](const auto& law) {
        using T = std::decay_t<decltype(law)>;
        if constexpr (std::is_same_v<T, ProductForm>) {
          for (int j = 0; j < d; ++j)
            counts[static_cast<std::size_t>(j)] =
                cell_total(law.cells[static_cast<std::size_t>(j)], 1, rng);
        } else {
          const auto row = static_cast<std::size_t>(draw_joint_row(model, parent, rng));
          for (int j = 0; j < d; ++j)
            counts[static_cast<std::size_t>(j)] = law.rows[row].offspring[static_cast<std::size_t>(j)];
        }
      },
      model.law(parent));
  return counts;
}

PopulationState step(const PopulationState& state, const ModelSpec& model,
                     const StreamFactory& streams, bool* capped) {
  const int d = model.dimension();
  PopulationState next;
  next.generation = state.generation + 1;
  next.counts.assign(static_cast<std::size_t>(d), 0);
  const auto g = static_cast<std::uint64_t>(state.generation);
  for (int i = 0; i < d; ++i) {
    const long long parents = state.counts[static_cast<std::size_t>(i)];
    if (parents == 0) continue;
    std::visit(
        [&](const auto& law) {
          using T = std::decay_t<decltype(law)>;
          if constexpr (std::is_same_v<T, ProductForm>) {
            for (int j = 0; j < d; ++j) {
              RngStream rng = streams.at(StreamPurpose::population, g,
                                         static_cast<std::uint64_t>(i),
                                         static_cast<std::uint64_t>(j));
              const long long born =
                  cell_total(law.cells[static_cast<std::size_t>(j)], parents, rng);
              next.counts[static_cast<std::size_t>(j)] =
                  capped_add(next.counts[static_cast<std::size_t>(j)], born, capped);
            }
          } else {
            RngStream rng =
                streams.at(StreamPurpose::population, g, static_cast<std::uint64_t>(i), 0);
            for (long long p = 0; p < parents; ++p) {
              const auto row = static_cast<std::size_t>(draw_joint_row(model, i, rng));
              for (int j = 0; j < d; ++j)
                next.counts[static_cast<std::size_t>(j)] =
                    capped_add(next.counts[static_cast<std::size_t>(j)],
                               law.rows[row].offspring[static_cast<std::size_t>(j)], capped);
            }
          }
        },
        model.law(i));
  }
  return next;
}

std::vector<PopulationState> run_population(const ModelSpec& model, int T,
                                            const StreamFactory& streams, bool* capped) {
  if (T < 0) throw std::invalid_argument("run_population: negative horizon");
  std::vector<PopulationState> trajectory;
  trajectory.reserve(static_cast<std::size_t>(T) + 1);
  PopulationState state;
  state.generation = 0;
  state.counts.assign(static_cast<std::size_t>(model.dimension()), 0);
  state.counts[static_cast<std::size_t>(model.root_type())] = 1;
  trajectory.push_back(state);
  bool hit_cap = false;
  for (int g = 0; g < T; ++g) {
    state = step(state, model, streams, &hit_cap);
    trajectory.push_back(state);
    if (hit_cap) break;
  }
  if (capped) *capped = hit_cap;
  return trajectory;
}

GenealogyFrame run_genealogy(const ModelSpec& model, int t, int T, const StreamFactory& streams,
                             bool* capped) {
  if (t < 0 || t >= T) throw std::invalid_argument("run_genealogy: need 0 <= t < T");
  const int d = model.dimension();
  bool hit_cap = false;

  PopulationState state;
  state.generation = 0;
  state.counts.assign(static_cast<std::size_t>(d), 0);
  state.counts[static_cast<std::size_t>(model.root_type())] = 1;
  for (int g = 0; g < t && !hit_cap; ++g) state = step(state, model, streams, &hit_cap);

  GenealogyFrame frame;
  frame.t_anchor = t;
  if (capped) *capped = hit_cap;
  if (hit_cap || state.total() == 0) return frame;

  // Anchor indices are 1-based positions in the type-major generation-t
  // ordering.
  std::vector<std::vector<std::int64_t>> anchors(static_cast<std::size_t>(d));
  std::int64_t next_index = 1;
  for (int i = 0; i < d; ++i) {
    auto& group = anchors[static_cast<std::size_t>(i)];
    group.resize(static_cast<std::size_t>(state.counts[static_cast<std::size_t>(i)]));
    for (auto& a : group) a = next_index++;
  }

  std::vector<std::vector<std::int64_t>> next_anchors(static_cast<std::size_t>(d));
  for (int g = t; g < T; ++g) {
    const auto gu = static_cast<std::uint64_t>(g);
    long long total_next = 0;
    for (auto& group : next_anchors) group.clear();
    const auto over_cap = [&](std::size_t j, long long born) {
      return born > kPopulationCap ||
             static_cast<long long>(next_anchors[j].size()) > kPopulationCap - born;
    };
    for (int i = 0; i < d && !hit_cap; ++i) {
      const auto& parents = anchors[static_cast<std::size_t>(i)];
      if (parents.empty()) continue;
      const auto n_parents = static_cast<long long>(parents.size());
      std::visit(
          [&](const auto& law) {
            using T2 = std::decay_t<decltype(law)>;
            if constexpr (std::is_same_v<T2, ProductForm>) {
              for (int j = 0; j < d && !hit_cap; ++j) {
                RngStream rng = streams.at(StreamPurpose::population, gu,
                                           static_cast<std::uint64_t>(i),
                                           static_cast<std::uint64_t>(j));
                const auto& cell = law.cells[static_cast<std::size_t>(j)];
                auto& out = next_anchors[static_cast<std::size_t>(j)];
                if (std::holds_alternative<Poisson>(cell)) {
                  // Same aggregate total as the population path; children are
                  // attributed to uniformly chosen parents, which matches the
                  // law of independent per-parent draws given their sum.
                  const long long born = cell_total(cell, n_parents, rng);
                  if (over_cap(static_cast<std::size_t>(j), born)) {
                    hit_cap = true;
                    break;
                  }
                  RngStream assign = streams.at(StreamPurpose::assign, gu,
                                                static_cast<std::uint64_t>(i),
                                                static_cast<std::uint64_t>(j));
                  for (long long c = 0; c < born; ++c) {
                    const auto pick = static_cast<std::size_t>(
                        assign.uniform_below(static_cast<std::uint64_t>(n_parents)));
                    out.push_back(parents[pick]);
                  }
                } else {
                  for (long long p = 0; p < n_parents; ++p) {
                    const long long born = cell_total(cell, 1, rng);
                    if (over_cap(static_cast<std::size_t>(j), born)) {
                      hit_cap = true;
                      break;
                    }
                    for (long long c = 0; c < born; ++c)
                      out.push_back(parents[static_cast<std::size_t>(p)]);
                  }
                }
              }
            } else {
              RngStream rng =
                  streams.at(StreamPurpose::population, gu, static_cast<std::uint64_t>(i), 0);
              for (long long p = 0; p < n_parents && !hit_cap; ++p) {
                const auto row = static_cast<std::size_t>(draw_joint_row(model, i, rng));
                for (int j = 0; j < d; ++j) {
                  const long long born = law.rows[row].offspring[static_cast<std::size_t>(j)];
                  if (over_cap(static_cast<std::size_t>(j), born)) {
                    hit_cap = true;
                    break;
                  }
                  for (long long c = 0; c < born; ++c)
                    next_anchors[static_cast<std::size_t>(j)].push_back(
                        parents[static_cast<std::size_t>(p)]);
                }
              }
            }
          },
          model.law(i));
    }
    if (hit_cap) {
      if (capped) *capped = true;
      return GenealogyFrame{{}, {}, t};
    }
    for (int j = 0; j < d; ++j)
      total_next += static_cast<long long>(next_anchors[static_cast<std::size_t>(j)].size());
    anchors.swap(next_anchors);
    if (total_next == 0) break;
  }

  for (int i = 0; i < d; ++i) {
    for (std::int64_t a : anchors[static_cast<std::size_t>(i)]) {
      frame.types.push_back(i);
      frame.ancestors.push_back(a);
    }
  }
  return frame;
}

MrcaEstimate mrca_direct_estimate(const ModelSpec& model, int t, int T, int k, long long n_runs,
                                  std::uint64_t seed, int threads) {
  if (k < 2) throw std::invalid_argument("mrca_direct_estimate: k must be at least 2");
  if (n_runs < 1) throw std::invalid_argument("mrca_direct_estimate: need at least one run");

  enum class Outcome : unsigned char { excluded, capped, all_equal, split };
  std::vector<Outcome> outcomes(static_cast<std::size_t>(n_runs), Outcome::excluded);
  parallel_for_index(static_cast<std::size_t>(n_runs), threads, [&](std::size_t rep) {
    const StreamFactory streams(seed, static_cast<std::uint64_t>(rep));
    bool capped = false;
    const GenealogyFrame frame = run_genealogy(model, t, T, streams, &capped);
    if (capped) {
      outcomes[rep] = Outcome::capped;
      return;
    }
    const auto total = static_cast<long long>(frame.size());
    if (total < k) return;
    RngStream pick = streams.at(StreamPurpose::pick);
    const std::vector<long long> chosen = sample_distinct(total, k, pick);
    bool all_equal = true;
    std::int64_t first = -1;
    for (long long idx : chosen) {
      const std::int64_t a = frame.ancestors[static_cast<std::size_t>(idx)];
      if (first < 0)
        first = a;
      else if (a != first)
        all_equal = false;
    }
    outcomes[rep] = all_equal ? Outcome::all_equal : Outcome::split;
  });

  MrcaEstimate out;
  out.n_requested = n_runs;
  long long split = 0;
  for (Outcome o : outcomes) {
    switch (o) {
      case Outcome::capped:
        ++out.n_capped;
        break;
      case Outcome::all_equal:
        ++out.n_effective;
        break;
      case Outcome::split:
        ++out.n_effective;
        ++split;
        break;
      default:
        break;
    }
  }
  if (out.n_effective < 100)
    throw NumericError("mrca_direct_estimate: fewer than 100 usable runs");
  out.p_hat = static_cast<double>(split) / static_cast<double>(out.n_effective);
  // Adjusted-count (Agresti-Coull) standard error: the plain binomial SE
  // collapses to 0 when every or no sampled pair splits, which happens
  // routinely at large t even though the estimate is still uncertain.
  const double n_adj = static_cast<double>(out.n_effective) + 4.0;
  const double p_adj = (static_cast<double>(split) + 2.0) / n_adj;
  out.std_err = std::sqrt(p_adj * (1.0 - p_adj) / n_adj);
  return out;
}

}  // namespace branchkit
