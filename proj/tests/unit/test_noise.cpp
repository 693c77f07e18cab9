#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "barw/noise.hpp"

#include <cmath>
#include <set>

using namespace barw;

TEST_CASE("purity: the same point always gives the same uniform") {
  const NoiseField a(42, 7);
  const NoiseField b(42, 7);
  for (std::int64_t i = -50; i < 50; ++i) {
    const Site x(i, 3 * i, -i);
    CHECK(a.uniform_at(x, i) == a.uniform_at(x, i));
    CHECK(a.uniform_at(x, i) == b.uniform_at(x, i));
  }
}

TEST_CASE("values lie in [0, 1) and streams differ") {
  const NoiseField a(1, 0);
  const NoiseField b = a.with_stream(1);
  int same = 0;
  for (std::int64_t i = 0; i < 1000; ++i) {
    const double u = a.uniform_at(Site(i, 0, 0), 0);
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    same += u == b.uniform_at(Site(i, 0, 0), 0);
  }
  CHECK(same == 0);
}

TEST_CASE("mean of 10^6 uniforms at fixed time within the CLT band") {
  const NoiseField f(2024, 3);
  double sum = 0.0;
  std::int64_t below = 0;
  const std::int64_t n = 1000000;
  for (std::int64_t i = 0; i < n; ++i) {
    const double u = f.uniform_at(Site(i % 1000, i / 1000, 0), 5);
    sum += u;
    below += u < 0.25;
  }
  // 3 sd of the mean: 3 (1/sqrt 12) / 10^3
  CHECK(std::abs(sum / n - 0.5) < 3.0 / std::sqrt(12.0) / 1000.0);
  // binomial 3 sd: 3 sqrt(0.25 0.75 / 10^6) = 0.0013
  CHECK(std::abs(static_cast<double>(below) / n - 0.25) < 0.0013);
}

TEST_CASE("row helpers reproduce uniform_at") {
  const NoiseField f(9, 9);
  for (std::int64_t x0 = -5; x0 < 5; ++x0) {
    const auto row = f.row_key(4, -2, 11);
    CHECK(NoiseField::row_uniform(row, x0) == f.uniform_at(Site(x0, 4, -2), 11));
  }
}

TEST_CASE("planted boxes override only their region and time") {
  const NoiseField f(5, 1);
  const NoiseField g = f.with_planted(PlantedNoise{Site(2, 0, 0), Site(4, 0, 0), 3, 1.0});
  CHECK(g.has_plants());
  CHECK_FALSE(f.has_plants());
  CHECK(g.uniform_at(Site(3, 0, 0), 3) == 1.0);
  CHECK(g.uniform_at(Site(3, 0, 0), 4) == f.uniform_at(Site(3, 0, 0), 4));
  CHECK(g.uniform_at(Site(5, 0, 0), 3) == f.uniform_at(Site(5, 0, 0), 3));
}

TEST_CASE("derived streams are distinct across tags and indices") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t tag = 0; tag < 8; ++tag)
    for (std::uint64_t i = 0; i < 256; ++i) seen.insert(derive_stream(17, tag, i));
  CHECK(seen.size() == 8 * 256);
}
