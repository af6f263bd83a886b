#include <doctest.h>

#include <cmath>
#include <complex>

#include "branchkit/model.hpp"
#include "branchkit/rng.hpp"
#include "branchkit/simulate.hpp"
#include "test_util.hpp"

using namespace branchkit;
using testutil::single_constant;
using testutil::single_poisson;
using testutil::single_quarter_table;
using testutil::table1;
using testutil::table2;

namespace {

std::complex<double> cpgf(const ModelSpec& m, int parent, std::vector<std::complex<double>> s) {
  return pgf_eval(m, parent, std::span<const std::complex<double>>(s));
}

double rpgf(const ModelSpec& m, int parent, std::vector<double> s) {
  return pgf_eval(m, parent, std::span<const double>(s));
}

// Random small model for property checks: d in {1,2,3}, mixed law families.
ModelSpec random_model(RngStream& rng) {
  const int d = 1 + static_cast<int>(rng.uniform_below(3));
  std::vector<OffspringLaw> laws;
  for (int i = 0; i < d; ++i) {
    if (rng.next_double() < 0.75) {
      ProductForm form;
      for (int j = 0; j < d; ++j) {
        switch (rng.uniform_below(4)) {
          case 0:
            form.cells.push_back(Poisson{3.0 * rng.next_double()});
            break;
          case 1:
            form.cells.push_back(
                Binomial{1 + static_cast<long long>(rng.uniform_below(4)), rng.next_double()});
            break;
          case 2:
            form.cells.push_back(Geometric{0.3 + 0.7 * rng.next_double()});
            break;
          default:
            form.cells.push_back(Constant{static_cast<long long>(rng.uniform_below(3))});
        }
      }
      laws.push_back(std::move(form));
    } else {
      JointTable table;
      const int rows = 2 + static_cast<int>(rng.uniform_below(3));
      double left = 1.0;
      for (int r = 0; r < rows; ++r) {
        JointRow row;
        for (int j = 0; j < d; ++j)
          row.offspring.push_back(static_cast<long long>(rng.uniform_below(4)));
        row.prob = (r + 1 == rows) ? left : left * rng.next_double();
        left -= (r + 1 == rows) ? 0.0 : row.prob;
        table.rows.push_back(std::move(row));
      }
      laws.push_back(std::move(table));
    }
  }
  return ModelSpec(d, std::move(laws), 0);
}

}  // namespace

TEST_CASE("mean matrix closed forms") {
  const MeanMatrix m1 = mean_matrix(table1());
  CHECK(m1(0, 0) == doctest::Approx(1.0));
  CHECK(m1(0, 1) == doctest::Approx(0.5));
  CHECK(m1(1, 0) == doctest::Approx(0.5));
  CHECK(m1(1, 1) == doctest::Approx(1.5));

  const MeanMatrix m2 = mean_matrix(table2());
  CHECK(m2(0, 0) == doctest::Approx(4.0));
  CHECK(m2(0, 1) == doctest::Approx(2.0));
  CHECK(m2(1, 0) == doctest::Approx(1.0));
  CHECK(m2(1, 1) == doctest::Approx(3.0));

  CHECK(mean_matrix(single_constant(2))(0, 0) == doctest::Approx(2.0));
  CHECK(mean_matrix(single_quarter_table())(0, 0) == doctest::Approx(1.5));

  std::vector<OffspringLaw> laws;
  laws.push_back(ProductForm{{Binomial{3, 0.5}, Geometric{0.25}}});
  laws.push_back(ProductForm{{Constant{1}, Poisson{0.7}}});
  const MeanMatrix m3 = mean_matrix(ModelSpec(2, std::move(laws), 0));
  CHECK(m3(0, 0) == doctest::Approx(1.5));
  CHECK(m3(0, 1) == doctest::Approx(3.0));
  CHECK(m3(1, 0) == doctest::Approx(1.0));
  CHECK(m3(1, 1) == doctest::Approx(0.7));
}

TEST_CASE("pgf evaluation") {
  CHECK(rpgf(table1(), 0, {1.0, 1.0}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(rpgf(single_quarter_table(), 0, {1.0 / 3.0}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(rpgf(table1(), 0, {0.0, 0.0}) == doctest::Approx(std::exp(-1.5)).epsilon(1e-12));

  const auto v = cpgf(table1(), 1, {{0.3, 0.2}, {0.5, -0.1}});
  CHECK(std::abs(v) <= 1.0 + 1e-9);

  CHECK_THROWS_AS(rpgf(table1(), 0, {1.1, 0.0}), std::domain_error);
}

TEST_CASE("pgf normalization and monotonicity properties") {
  RngStream rng = RngStream::from_key({2024, 1});
  for (int rep = 0; rep < 200; ++rep) {
    const ModelSpec model = random_model(rng);
    const int d = model.dimension();
    std::vector<double> ones(static_cast<std::size_t>(d), 1.0);
    for (int i = 0; i < d; ++i)
      CHECK(rpgf(model, i, ones) == doctest::Approx(1.0).epsilon(1e-12));

    std::vector<double> lo(static_cast<std::size_t>(d));
    std::vector<double> hi(static_cast<std::size_t>(d));
    for (int j = 0; j < d; ++j) {
      lo[static_cast<std::size_t>(j)] = rng.next_double();
      hi[static_cast<std::size_t>(j)] =
          lo[static_cast<std::size_t>(j)] +
          (1.0 - lo[static_cast<std::size_t>(j)]) * rng.next_double();
    }
    for (int i = 0; i < d; ++i) CHECK(rpgf(model, i, lo) <= rpgf(model, i, hi) + 1e-12);
  }
}

TEST_CASE("spectral data on the reference systems") {
  SUBCASE("strongly supercritical") {
    const SpectralData s = spectral(mean_matrix(table2()));
    CHECK(std::abs(s.lambda - 5.0) < 1e-10);
    // nu sums to one, u . nu = 1; with these conventions the eigenvectors
    // are (4/3, 2/3) and (1/2, 1/2).
    CHECK(s.u[0] == doctest::Approx(4.0 / 3.0).epsilon(1e-9));
    CHECK(s.u[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
    CHECK(s.nu[0] == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(s.nu[1] == doctest::Approx(0.5).epsilon(1e-9));
  }
  SUBCASE("slightly supercritical") {
    const SpectralData s = spectral(mean_matrix(table1()));
    CHECK(std::abs(s.lambda - (2.5 + std::sqrt(1.25)) / 2.0) < 1e-10);
  }
  SUBCASE("scalar") {
    const SpectralData s = spectral(mean_matrix(single_constant(2)));
    CHECK(s.lambda == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(s.u[0] == doctest::Approx(1.0));
    CHECK(s.nu[0] == doctest::Approx(1.0));
  }
}

TEST_CASE("spectral residuals and normalization on random 2-type systems") {
  RngStream rng = RngStream::from_key({2024, 2});
  int tested = 0;
  while (tested < 50) {
    const double a = 0.2 + 3.0 * rng.next_double();
    const double b = 0.05 + 2.0 * rng.next_double();
    const double c = 0.05 + 2.0 * rng.next_double();
    const double d = 0.2 + 3.0 * rng.next_double();
    const ModelSpec model = testutil::two_type_poisson(a, b, c, d);
    const MeanMatrix m = mean_matrix(model);
    const SpectralData s = spectral(m);
    ++tested;

    CHECK(std::abs(s.lambda - testutil::perron_root_2x2(m)) < 1e-10);
    CHECK(s.nu[0] + s.nu[1] == doctest::Approx(1.0).epsilon(1e-10));
    CHECK(s.u[0] * s.nu[0] + s.u[1] * s.nu[1] == doctest::Approx(1.0).epsilon(1e-10));
    for (int i = 0; i < 2; ++i) {
      double mu = 0.0, mnu = 0.0;
      for (int j = 0; j < 2; ++j) {
        mu += m(i, j) * s.u[static_cast<std::size_t>(j)];
        mnu += m(j, i) * s.nu[static_cast<std::size_t>(j)];
      }
      CHECK(std::abs(mu - s.lambda * s.u[static_cast<std::size_t>(i)]) <= 1e-10 * s.lambda *
                                                                              std::max(1.0, s.u[static_cast<std::size_t>(i)]));
      CHECK(std::abs(mnu - s.lambda * s.nu[static_cast<std::size_t>(i)]) <= 1e-10 * s.lambda);
    }
  }
}

TEST_CASE("extinction probabilities") {
  SUBCASE("slightly supercritical reference values") {
    const ExtinctionVector q = extinction(table1());
    CHECK(std::abs(q.q[0] - 0.36) < 0.005);
    CHECK(std::abs(q.q[1] - 0.23) < 0.005);
    CHECK_FALSE(q.near_one);
  }
  SUBCASE("quarter table has q = 1/3") {
    const ExtinctionVector q = extinction(single_quarter_table());
    CHECK(q.q[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-10));
  }
  SUBCASE("deterministic growth never dies") {
    CHECK(extinction(single_constant(2)).q[0] == doctest::Approx(0.0));
  }
  SUBCASE("fixed point is stable under further iteration") {
    const ModelSpec model = table1();
    const ExtinctionVector q = extinction(model, 1e-12);
    std::vector<double> s = q.q;
    for (int t = 0; t < 25; ++t) {
      std::vector<double> next(s.size());
      for (int i = 0; i < model.dimension(); ++i)
        next[static_cast<std::size_t>(i)] = pgf_eval(model, i, std::span<const double>(s));
      s = next;
      for (std::size_t i = 0; i < s.size(); ++i) CHECK(std::abs(s[i] - q.q[i]) < 1e-11);
    }
  }
}

TEST_CASE("classification") {
  const Classification c2 = classify(table2());
  CHECK(c2.irreducible);
  CHECK(c2.supercritical);
  CHECK(c2.moment_order_ok);

  const Classification c1 = classify(single_constant(1));
  CHECK(c1.irreducible);
  CHECK_FALSE(c1.supercritical);
  CHECK(c1.moment_order_ok);

  // Block-diagonal positivity pattern is reducible.
  std::vector<OffspringLaw> laws;
  laws.push_back(ProductForm{{Poisson{2.0}, Constant{0}}});
  laws.push_back(ProductForm{{Constant{0}, Poisson{2.0}}});
  const Classification cb = classify(ModelSpec(2, std::move(laws), 0));
  CHECK_FALSE(cb.irreducible);

  CHECK_THROWS_AS(spectral(mean_matrix(ModelSpec(
                      2,
                      {ProductForm{{Poisson{2.0}, Constant{0}}},
                       ProductForm{{Constant{0}, Poisson{2.0}}}},
                      0))),
                  ModelError);
}

TEST_CASE("model validation errors") {
  CHECK_THROWS_AS(ModelSpec(0, {}, 0), ModelError);
  CHECK_THROWS_AS(ModelSpec(1, {ProductForm{{Poisson{1.0}}}}, 2), ModelError);
  CHECK_THROWS_AS(ModelSpec(2, {ProductForm{{Poisson{1.0}}}}, 0), ModelError);
  CHECK_THROWS_AS(ModelSpec(1, {ProductForm{{Poisson{-1.0}}}}, 0), ModelError);
  CHECK_THROWS_AS(ModelSpec(1, {ProductForm{{Geometric{0.0}}}}, 0), ModelError);
  CHECK_THROWS_AS(ModelSpec(1, {JointTable{{JointRow{{1}, 0.5}}}}, 0), ModelError);
  CHECK_THROWS_AS(ModelSpec(1, {JointTable{{JointRow{{1, 2}, 1.0}}}}, 0), ModelError);
}

TEST_CASE("mean matrix agrees with Monte Carlo offspring draws") {
  for (const ModelSpec& model : {table1(), single_quarter_table()}) {
    const MeanMatrix m = mean_matrix(model);
    const int d = model.dimension();
    const long long n = 1'000'000;
    for (int i = 0; i < d; ++i) {
      std::vector<double> sum(static_cast<std::size_t>(d), 0.0);
      std::vector<double> sumsq(static_cast<std::size_t>(d), 0.0);
      RngStream rng = RngStream::from_key({99, static_cast<std::uint64_t>(i)});
      for (long long rep = 0; rep < n; ++rep) {
        const auto v = draw_offspring(model, i, rng);
        for (int j = 0; j < d; ++j) {
          const auto x = static_cast<double>(v[static_cast<std::size_t>(j)]);
          sum[static_cast<std::size_t>(j)] += x;
          sumsq[static_cast<std::size_t>(j)] += x * x;
        }
      }
      for (int j = 0; j < d; ++j) {
        const double mean = sum[static_cast<std::size_t>(j)] / static_cast<double>(n);
        const double var =
            sumsq[static_cast<std::size_t>(j)] / static_cast<double>(n) - mean * mean;
        const double se = std::sqrt(std::max(var, 1e-12) / static_cast<double>(n));
        CHECK(std::abs(mean - m(i, j)) <= 4.0 * se + 1e-9);
      }
    }
  }
}
