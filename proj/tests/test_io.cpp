#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "branchkit/model.hpp"
#include "branchkit/model_io.hpp"
#include "test_util.hpp"

using namespace branchkit;

TEST_CASE("model json parsing") {
  const std::string text = R"({
    "d": 2,
    "root_type": 1,
    "laws": [
      {"product": [{"poisson": 1.0}, {"poisson": 0.5}]},
      {"table": [{"v": [2, 0], "p": 0.75}, {"v": [0, 0], "p": 0.25}]}
    ]
  })";
  const ModelSpec model = parse_model_json(text);
  CHECK(model.dimension() == 2);
  CHECK(model.root_type() == 0);
  const MeanMatrix m = mean_matrix(model);
  CHECK(m(0, 0) == doctest::Approx(1.0));
  CHECK(m(1, 0) == doctest::Approx(1.5));
  CHECK(m(1, 1) == doctest::Approx(0.0));
}

TEST_CASE("model json parsing: all univariate families") {
  const std::string text = R"({
    "d": 1,
    "root_type": 1,
    "laws": [
      {"product": [{"binomial": {"trials": 3, "success": 0.5}}]}
    ]
  })";
  CHECK(mean_matrix(parse_model_json(text))(0, 0) == doctest::Approx(1.5));

  const std::string geo = R"({"d": 1, "root_type": 1,
    "laws": [{"product": [{"geometric": {"success": 0.25}}]}]})";
  CHECK(mean_matrix(parse_model_json(geo))(0, 0) == doctest::Approx(3.0));

  const std::string con = R"({"d": 1, "root_type": 1,
    "laws": [{"product": [{"constant": 2}]}]})";
  CHECK(mean_matrix(parse_model_json(con))(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("model json errors carry context") {
  CHECK_THROWS_AS(parse_model_json("{oops", "bad.json"), ParseError);
  try {
    parse_model_json("{oops", "bad.json");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("bad.json") != std::string::npos);
  }

  const std::string missing_law = R"({"d": 2, "root_type": 1,
    "laws": [{"product": [{"poisson": 1.0}, {"poisson": 1.0}]}, {"nope": 1}]})";
  try {
    parse_model_json(missing_law, "m.json");
    CHECK(false);
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("laws[1]") != std::string::npos);
  }

  const std::string bad_prob = R"({"d": 1, "root_type": 1,
    "laws": [{"table": [{"v": [1], "p": 0.7}]}]})";
  CHECK_THROWS_AS(parse_model_json(bad_prob), ParseError);

  const std::string bad_root = R"({"d": 1, "root_type": 3,
    "laws": [{"product": [{"poisson": 1.0}]}]})";
  CHECK_THROWS_AS(parse_model_json(bad_root), ParseError);
}

TEST_CASE("model json round trip") {
  const ModelSpec model = testutil::table1();
  const std::string text = model_to_json(model);
  const ModelSpec back = parse_model_json(text);
  CHECK(back.dimension() == model.dimension());
  CHECK(back.root_type() == model.root_type());
  const MeanMatrix a = mean_matrix(model);
  const MeanMatrix b = mean_matrix(back);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) CHECK(a(i, j) == b(i, j));

  const ModelSpec table_model = testutil::single_quarter_table();
  const ModelSpec table_back = parse_model_json(model_to_json(table_model));
  CHECK(mean_matrix(table_back)(0, 0) == doctest::Approx(1.5));
}

TEST_CASE("shipped example models load and classify") {
  for (const char* name : {"slightly_supercritical.json", "very_supercritical.json"}) {
    const ModelSpec model = load_model(std::string(BRANCHKIT_MODEL_DIR "/") + name);
    const Classification c = classify(model);
    CHECK(c.irreducible);
    CHECK(c.supercritical);
  }
}

TEST_CASE("csv formatting") {
  SUBCASE("header-only table") {
    CsvTable t;
    t.header = {"t", "lower", "upper"};
    CHECK(format_csv(t) == "t,lower,upper\n");
  }
  SUBCASE("twelve significant digits and empty cells") {
    CsvTable t;
    t.header = {"a", "b"};
    t.rows.push_back({1.0 / 3.0, std::nullopt});
    const std::string s = format_csv(t);
    CHECK(s == "a,b\n0.333333333333,\n");
  }
  SUBCASE("non-finite values are refused") {
    CsvTable t;
    t.header = {"a"};
    t.rows.push_back({std::nan("")});
    CHECK_THROWS(format_csv(t));
    CsvTable t2;
    t2.header = {"a"};
    t2.rows.push_back({std::numeric_limits<double>::infinity()});
    CHECK_THROWS(format_csv(t2));
  }
  SUBCASE("width mismatch is refused") {
    CsvTable t;
    t.header = {"a", "b"};
    t.rows.push_back({1.0});
    CHECK_THROWS(format_csv(t));
  }
}
