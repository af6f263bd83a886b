#include <doctest.h>

#include <cmath>
#include <map>

#include "branchkit/model.hpp"
#include "branchkit/rng.hpp"
#include "branchkit/simulate.hpp"
#include "test_util.hpp"

using namespace branchkit;
using testutil::single_constant;
using testutil::table1;

TEST_CASE("stream samplers match their law moments") {
  RngStream rng = RngStream::from_key({1, 2, 3});
  SUBCASE("poisson small and large means") {
    for (double mean : {0.3, 7.0, 45.0, 3000.0}) {
      const long long n = 200'000;
      double sum = 0.0, sumsq = 0.0;
      for (long long i = 0; i < n; ++i) {
        const auto x = static_cast<double>(rng.poisson(mean));
        sum += x;
        sumsq += x * x;
      }
      const double m = sum / static_cast<double>(n);
      const double v = sumsq / static_cast<double>(n) - m * m;
      const double se_mean = std::sqrt(mean / static_cast<double>(n));
      CHECK(std::abs(m - mean) <= 4.5 * se_mean);
      CHECK(std::abs(v - mean) <= 0.05 * mean);
    }
  }
  SUBCASE("geometric counts failures before success") {
    const long long n = 200'000;
    double sum = 0.0;
    for (long long i = 0; i < n; ++i) sum += static_cast<double>(rng.geometric(0.25));
    CHECK(std::abs(sum / static_cast<double>(n) - 3.0) < 0.05);
    CHECK(rng.geometric(1.0) == 0);
  }
  SUBCASE("binomial") {
    const long long n = 100'000;
    double sum = 0.0;
    for (long long i = 0; i < n; ++i) sum += static_cast<double>(rng.binomial(7, 0.3));
    CHECK(std::abs(sum / static_cast<double>(n) - 2.1) < 0.03);
  }
}

TEST_CASE("population step") {
  SUBCASE("extinction is absorbing") {
    PopulationState dead;
    dead.counts = {0, 0};
    dead.generation = 3;
    const PopulationState next = step(dead, table1(), StreamFactory(5, 0));
    CHECK(next.total() == 0);
    CHECK(next.generation == 4);
  }
  SUBCASE("deterministic doubling") {
    const ModelSpec model = single_constant(2);
    bool capped = false;
    const auto traj = run_population(model, 5, StreamFactory(6, 0), &capped);
    REQUIRE(traj.size() == 6);
    CHECK(traj.back().counts[0] == 32);
    CHECK_FALSE(capped);
  }
  SUBCASE("one-step empirical means match the rates") {
    const ModelSpec model = table1();
    const long long n = 100'000;
    double s0 = 0.0, s1 = 0.0;
    for (long long rep = 0; rep < n; ++rep) {
      PopulationState root;
      root.counts = {1, 0};
      root.generation = 0;
      const PopulationState next =
          step(root, model, StreamFactory(7, static_cast<std::uint64_t>(rep)));
      s0 += static_cast<double>(next.counts[0]);
      s1 += static_cast<double>(next.counts[1]);
    }
    const double nd = static_cast<double>(n);
    CHECK(std::abs(s0 / nd - 1.0) <= 4.0 * std::sqrt(1.0 / nd));
    CHECK(std::abs(s1 / nd - 0.5) <= 4.0 * std::sqrt(0.5 / nd));
  }
  SUBCASE("restepping the same state reproduces the same draw") {
    const ModelSpec model = table1();
    PopulationState state;
    state.counts = {3, 4};
    state.generation = 2;
    const StreamFactory streams(8, 0);
    const PopulationState a = step(state, model, streams);
    const PopulationState b = step(state, model, streams);
    CHECK(a.counts == b.counts);
  }
}

TEST_CASE("population trajectory reproduces limit laws") {
  const ModelSpec model = table1();
  const SpectralData s = spectral(mean_matrix(model));
  const ExtinctionVector q = extinction(model);

  SUBCASE("extinction frequency at a deep horizon") {
    const int horizon = 30;
    const long long n = 100'000;
    long long dead = 0;
    for (long long rep = 0; rep < n; ++rep) {
      bool capped = false;
      const auto traj =
          run_population(model, horizon, StreamFactory(9, static_cast<std::uint64_t>(rep)), &capped);
      REQUIRE_FALSE(capped);
      if (traj.back().total() == 0) ++dead;
    }
    const double freq = static_cast<double>(dead) / static_cast<double>(n);
    const double se = std::sqrt(q.q[0] * (1.0 - q.q[0]) / static_cast<double>(n));
    CHECK(std::abs(freq - q.q[0]) <= 4.0 * se);
  }
  SUBCASE("rescaled population mean tends to the right eigenvector entry") {
    const int horizon = 15;
    const long long n = 50'000;
    std::vector<double> ws;
    ws.reserve(n);
    for (long long rep = 0; rep < n; ++rep) {
      const auto traj =
          run_population(model, horizon, StreamFactory(10, static_cast<std::uint64_t>(rep)));
      ws.push_back(std::pow(s.lambda, -horizon) * static_cast<double>(traj.back().total()));
    }
    const auto st = testutil::mean_and_se(ws);
    CHECK(std::abs(st.mean - s.u[0]) <= 4.0 * st.std_err);
  }
}

TEST_CASE("trivial trajectory shapes") {
  const auto traj = run_population(table1(), 0, StreamFactory(11, 0));
  REQUIRE(traj.size() == 1);
  CHECK(traj[0].counts[0] == 1);
  CHECK(traj[0].counts[1] == 0);
}

TEST_CASE("genealogy frames") {
  SUBCASE("anchored at the founder") {
    const GenealogyFrame frame = run_genealogy(table1(), 0, 6, StreamFactory(12, 0));
    for (const auto a : frame.ancestors) CHECK(a == 1);
  }
  SUBCASE("regular binary tree") {
    const GenealogyFrame frame = run_genealogy(single_constant(2), 2, 4, StreamFactory(13, 0));
    REQUIRE(frame.size() == 16);
    std::map<std::int64_t, int> counts;
    for (const auto a : frame.ancestors) ++counts[a];
    CHECK(counts.size() == 4);
    for (const auto& [anchor, c] : counts) {
      CHECK(anchor >= 1);
      CHECK(anchor <= 4);
      CHECK(c == 4);
    }
  }
  SUBCASE("frame length couples to an identically seeded population run") {
    for (std::uint64_t rep = 0; rep < 40; ++rep) {
      const StreamFactory streams(14, rep);
      const GenealogyFrame frame = run_genealogy(table1(), 3, 9, streams);
      const auto traj = run_population(table1(), 9, streams);
      CHECK(static_cast<long long>(frame.size()) == traj.back().total());
      // anchor indices partition the living population
      long long zt = traj[3].total();
      for (const auto a : frame.ancestors) {
        CHECK(a >= 1);
        CHECK(a <= zt);
      }
    }
  }
  SUBCASE("per-type counts also couple") {
    const StreamFactory streams(15, 4);
    const GenealogyFrame frame = run_genealogy(table1(), 2, 8, streams);
    const auto traj = run_population(table1(), 8, streams);
    std::vector<long long> by_type(2, 0);
    for (const int ty : frame.types) ++by_type[static_cast<std::size_t>(ty)];
    CHECK(by_type[0] == traj.back().counts[0]);
    CHECK(by_type[1] == traj.back().counts[1]);
  }
}

TEST_CASE("uniform distinct sampling") {
  RngStream rng = RngStream::from_key({16});
  const long long total = 37;
  const int k = 3;
  std::vector<long long> hits(static_cast<std::size_t>(total), 0);
  const long long reps = 60'000;
  for (long long rep = 0; rep < reps; ++rep) {
    const auto picks = sample_distinct(total, k, rng);
    REQUIRE(picks.size() == static_cast<std::size_t>(k));
    for (long long p : picks) {
      REQUIRE(p >= 0);
      REQUIRE(p < total);
      ++hits[static_cast<std::size_t>(p)];
    }
    CHECK((picks[0] != picks[1] && picks[1] != picks[2] && picks[0] != picks[2]));
  }
  const double expect = static_cast<double>(k) / static_cast<double>(total);
  const double se = std::sqrt(expect * (1.0 - expect) / static_cast<double>(reps));
  for (long long i = 0; i < total; ++i) {
    const double freq = static_cast<double>(hits[static_cast<std::size_t>(i)]) /
                        static_cast<double>(reps);
    CHECK(std::abs(freq - expect) <= 4.5 * se);
  }
}

TEST_CASE("direct coalescence estimator on the binary tree") {
  const ModelSpec model = single_constant(2);
  SUBCASE("matches closed-form pair counting") {
    const int t = 3, T = 13;
    const MrcaEstimate est = mrca_direct_estimate(model, t, T, 2, 4000, 17);
    const double exact = testutil::binary_tree_split_prob(t, T);
    CHECK(std::abs(est.p_hat - exact) <= 4.0 * est.std_err);
    CHECK(est.n_effective == 4000);
  }
  SUBCASE("everyone shares the founder at t = 0") {
    const MrcaEstimate est = mrca_direct_estimate(model, 0, 8, 2, 500, 18);
    CHECK(est.p_hat == 0.0);
  }
  SUBCASE("three-way sampling") {
    // P(all three in one generation-t family) = 2^t * C(m,3) / C(n,3),
    // m = 2^(T-t), n = 2^T
    const int t = 2, T = 10;
    const double m = std::pow(2.0, T - t), n = std::pow(2.0, T);
    const double same = std::pow(2.0, t) * (m * (m - 1) * (m - 2)) / (n * (n - 1) * (n - 2));
    const MrcaEstimate est = mrca_direct_estimate(model, t, T, 3, 4000, 19);
    CHECK(std::abs(est.p_hat - (1.0 - same)) <= 4.0 * est.std_err);
  }
  SUBCASE("insufficient data is reported") {
    CHECK_THROWS_AS(mrca_direct_estimate(model, 1, 3, 40, 200, 20), NumericError);
  }
}

TEST_CASE("determinism across worker counts") {
  const ModelSpec model = table1();
  const MrcaEstimate a = mrca_direct_estimate(model, 3, 10, 2, 600, 21, 1);
  const MrcaEstimate b = mrca_direct_estimate(model, 3, 10, 2, 600, 21, 2);
  const MrcaEstimate c = mrca_direct_estimate(model, 3, 10, 2, 600, 21, 8);
  CHECK(a.p_hat == b.p_hat);
  CHECK(a.p_hat == c.p_hat);
  CHECK(a.std_err == b.std_err);
  CHECK(a.n_effective == c.n_effective);
}

TEST_CASE("population cap flags the replicate") {
  // mean 40 per generation overflows the per-type cap quickly
  std::vector<OffspringLaw> laws;
  laws.push_back(ProductForm{{Poisson{40.0}}});
  const ModelSpec model(1, std::move(laws), 0);
  bool capped = false;
  const auto traj = run_population(model, 12, StreamFactory(22, 0), &capped);
  CHECK(capped);
  CHECK(traj.back().counts[0] == kPopulationCap);
}
