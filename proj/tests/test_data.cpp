#include <cstdio>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "mfpl/data.hpp"

using namespace mfpl;

TEST_CASE("csv parsing") {
  const Dataset ds = parse_dataset_csv("-10,2\n10,2\n");
  REQUIRE(ds.size() == 2);
  CHECK(ds.x[0] == -10.0);
  CHECK(ds.y[0] == 2.0);
  CHECK(ds.x[1] == 10.0);

  // out-of-order rows come back sorted
  const Dataset ds2 = parse_dataset_csv("x,y\n3,1\n-1,0\n2,5\n");
  CHECK(ds2.x == std::vector<double>{-1, 2, 3});
  CHECK(ds2.y == std::vector<double>{0, 5, 1});

  CHECK_THROWS_AS(parse_dataset_csv("0,1\n0,2\n"), DuplicateInput);
  CHECK_THROWS_AS(parse_dataset_csv(""), EmptyDataset);
  CHECK_THROWS_AS(parse_dataset_csv("1,2\nfoo,3\n"), ParseError);
  CHECK_THROWS_AS(parse_dataset_csv("1\n"), ParseError);
}

TEST_CASE("json parsing") {
  const Dataset ds = parse_dataset_json(R"({"points": [[1, 2], [-1, 0.5]]})");
  REQUIRE(ds.size() == 2);
  CHECK(ds.x[0] == -1.0);
  CHECK_THROWS_AS(parse_dataset_json("{}"), ParseError);
  CHECK_THROWS_AS(parse_dataset_json("not json"), ParseError);
}

TEST_CASE("csv round trip is bit exact") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  std::vector<std::pair<double, double>> pts;
  for (int i = 0; i < 50; ++i) pts.emplace_back(u(rng), u(rng) * 1e-7);
  const Dataset ds = Dataset::from_points(pts);
  const auto tmp = std::filesystem::temp_directory_path() / "mfpl_roundtrip.csv";
  save_dataset_csv(ds, tmp.string());
  const Dataset back = load_dataset(tmp.string(), DataFormat::Csv);
  REQUIRE(back.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    CHECK(back.x[i] == ds.x[i]);
    CHECK(back.y[i] == ds.y[i]);
  }
  std::filesystem::remove(tmp);
}

TEST_CASE("interval construction") {
  const Dataset ds = parse_dataset_csv("-10,2\n10,2\n");
  const PredictionIntervals pi = make_intervals(ds, 15.0);
  REQUIRE(pi.count() == 3);
  CHECK(pi.lo(0) == -15.0);
  CHECK(pi.hi(0) == -10.0);
  CHECK(pi.lo(1) == -10.0);
  CHECK(pi.hi(1) == 10.0);
  CHECK(pi.hi(2) == 15.0);

  const Dataset single = parse_dataset_csv("0,1\n");
  const PredictionIntervals pi1 = make_intervals(single, 1.0);
  REQUIRE(pi1.count() == 2);
  CHECK(pi1.lo(0) == -1.0);
  CHECK(pi1.hi(0) == 0.0);
  CHECK(pi1.hi(1) == 1.0);

  CHECK_THROWS_AS(make_intervals(ds, 5.0), PaddingTooSmall);
  CHECK_THROWS_AS(make_intervals(ds, 10.0), PaddingTooSmall);
}

TEST_CASE("locate is monotone with left tie-breaking") {
  const Dataset ds = parse_dataset_csv("-1,0\n0,1\n2,0\n");
  const PredictionIntervals pi = make_intervals(ds, 4.0);
  REQUIRE(pi.count() == 4);
  // shared endpoints go left
  CHECK(pi.locate(-1.0) == 0);
  CHECK(pi.locate(0.0) == 1);
  CHECK(pi.locate(2.0) == 2);
  CHECK(pi.locate(-4.0) == 0);
  CHECK(pi.locate(4.0) == 3);
  CHECK(pi.locate(-1.0 - 1e-12) == 0);
  CHECK(pi.locate(-1.0 + 1e-12) == 1);

  std::size_t prev = 0;
  for (int i = 0; i <= 1000; ++i) {
    const double x = -4.0 + 8.0 * i / 1000.0;
    const std::size_t j = pi.locate(x);
    CHECK(j >= prev);
    CHECK(pi.lo(j) <= x);
    CHECK(x <= pi.hi(j));
    prev = j;
  }
}

TEST_CASE("default padding exceeds the data range") {
  const Dataset ds = parse_dataset_csv("-10,2\n10,2\n");
  CHECK(default_padding(ds) == 16.0);
  CHECK_NOTHROW(make_intervals(ds, default_padding(ds)));
}
