#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <random>

#include "dfos/waterfall.hpp"
#include "test_support.hpp"

using namespace dfos;
using dfos_test::TempDir;

namespace {

Waterfall random_waterfall(std::size_t rows, std::size_t cols, unsigned seed) {
  SensorGeometry g = dfos_test::test_geometry(cols);
  Waterfall w(g, 5.0, rows);
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> dist(0.0f, 100.0f);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) w.at(r, c) = dist(rng);
  return w;
}

}  // namespace

TEST_CASE("geometry kp conversions") {
  SensorGeometry g = dfos_test::test_geometry(2000, 8.3);

  SUBCASE("channel 100 at 5 m per channel is 0.5 km past the origin") {
    CHECK(g.channel_to_kp(100) == doctest::Approx(8.8).epsilon(1e-12));
  }
  SUBCASE("channel 0 is the origin") {
    CHECK(g.channel_to_kp(0) == doctest::Approx(8.3));
  }
  SUBCASE("the 8.3 -> 17.17 kp span covers 1774 channels") {
    // (17.17 - 8.3) * 1000 / 5
    CHECK(g.kp_to_channel(17.17) == 1774);
  }
  SUBCASE("out-of-range channel throws") {
    CHECK_THROWS_AS(g.channel_to_kp(2000), std::out_of_range);
    CHECK_THROWS_AS(g.kp_to_channel(100.0), std::out_of_range);
  }
  SUBCASE("kp_to_channel and channel_to_kp invert each other") {
    std::mt19937 rng(3);
    std::uniform_int_distribution<std::size_t> chan(0, g.channel_count - 1);
    for (int i = 0; i < 200; ++i) {
      const std::size_t c = chan(rng);
      CHECK(g.kp_to_channel(g.channel_to_kp(c)) == c);
    }
    std::uniform_real_distribution<double> kp(g.kp_min(), g.kp_max());
    for (int i = 0; i < 200; ++i) {
      const double p = kp(rng);
      const double back = g.channel_to_kp(g.kp_to_channel(p));
      CHECK(std::fabs(back - p) <= 0.5 * g.spatial_resolution_m / 1000.0 + 1e-12);
    }
  }
  SUBCASE("negative direction flips the axis") {
    g.kp_direction = -1;
    g.origin_kp = 20.2;
    CHECK(g.channel_to_kp(100) == doctest::Approx(19.7));
    CHECK(g.kp_to_channel(19.7) == 100);
  }
}

TEST_CASE("geometry validation") {
  SensorGeometry g = dfos_test::test_geometry();
  g.spatial_resolution_m = 0.0;
  CHECK_THROWS(g.validate());
  g = dfos_test::test_geometry();
  g.kp_direction = 2;
  CHECK_THROWS(g.validate());
  g = dfos_test::test_geometry();
  g.channel_count = 0;
  CHECK_THROWS(g.validate());
}

TEST_CASE("slice") {
  Waterfall w = random_waterfall(100, 50, 11);

  SUBCASE("full-range selector returns an identical grid") {
    const Waterfall s = slice(w, {0.0, w.duration_s(), 0, w.cols()});
    CHECK(s.rows() == w.rows());
    CHECK(s.cols() == w.cols());
    CHECK(s.samples() == w.samples());
    CHECK(s.geometry() == w.geometry());
    CHECK(s.start_time_s() == w.start_time_s());
  }
  SUBCASE("ten seconds at 0.1 s resolution is 100 rows") {
    const Waterfall s = slice(w, {0.0, 10.0, 0, w.cols()});
    CHECK(s.rows() == 100);
  }
  SUBCASE("channel range past the grid throws") {
    CHECK_THROWS_AS(slice(w, {0.0, 1.0, 0, w.cols() + 1}), std::out_of_range);
  }
  SUBCASE("time range past the grid throws") {
    CHECK_THROWS_AS(slice(w, {0.0, w.duration_s() + 1.0, 0, w.cols()}), std::out_of_range);
  }
  SUBCASE("origin and start time shift with the selector") {
    const Waterfall s = slice(w, {2.0, 5.0, 10, 30});
    CHECK(s.start_time_s() == doctest::Approx(w.start_time_s() + 2.0));
    CHECK(s.geometry().origin_kp == doctest::Approx(w.geometry().channel_to_kp(10)));
    CHECK(s.cols() == 20);
    CHECK(s.at(0, 0) == w.at(20, 10));
  }
  SUBCASE("slice composition equals the composed selector") {
    std::mt19937 rng(5);
    const double dt = w.geometry().temporal_resolution_s;
    for (int trial = 0; trial < 50; ++trial) {
      std::uniform_int_distribution<std::size_t> row0(0, w.rows() - 2);
      std::uniform_int_distribution<std::size_t> col0(0, w.cols() - 2);
      const std::size_t ar0 = row0(rng);
      const std::size_t ac0 = col0(rng);
      std::uniform_int_distribution<std::size_t> row1(ar0 + 1, w.rows());
      std::uniform_int_distribution<std::size_t> col1(ac0 + 1, w.cols());
      const std::size_t ar1 = row1(rng);
      const std::size_t ac1 = col1(rng);
      const WindowSelector a{ar0 * dt, ar1 * dt, ac0, ac1};

      const std::size_t a_rows = ar1 - ar0, a_cols = ac1 - ac0;
      std::uniform_int_distribution<std::size_t> brow0(0, a_rows - 1);
      std::uniform_int_distribution<std::size_t> bcol0(0, a_cols - 1);
      const std::size_t br0 = brow0(rng);
      const std::size_t bc0 = bcol0(rng);
      std::uniform_int_distribution<std::size_t> brow1(br0 + 1, a_rows);
      std::uniform_int_distribution<std::size_t> bcol1(bc0 + 1, a_cols);
      const WindowSelector b{br0 * dt, brow1(rng) * dt, bc0, bcol1(rng)};

      const Waterfall nested = slice(slice(w, a), b);
      const WindowSelector composed{(ar0 + br0) * dt, (ar0 + std::llround(b.t1_s / dt)) * dt,
                                    ac0 + b.c0, ac0 + b.c1};
      const Waterfall direct = slice(w, composed);
      CHECK(nested.rows() == direct.rows());
      CHECK(nested.cols() == direct.cols());
      CHECK(nested.samples() == direct.samples());
      CHECK(nested.start_time_s() == doctest::Approx(direct.start_time_s()));
      CHECK(nested.geometry().origin_kp == doctest::Approx(direct.geometry().origin_kp));
    }
  }
}

TEST_CASE("binary round-trip is bit exact") {
  TempDir tmp("wf_bin");
  const Waterfall w = random_waterfall(10, 10, 21);
  save_waterfall(w, tmp.path("grid.dfwf"));
  const Waterfall back = load_waterfall(tmp.path("grid.dfwf"));
  CHECK(back.rows() == w.rows());
  CHECK(back.cols() == w.cols());
  CHECK(back.samples() == w.samples());  // bitwise: float payload untouched
  CHECK(back.geometry() == w.geometry());
  CHECK(back.start_time_s() == w.start_time_s());
}

TEST_CASE("binary header echo") {
  TempDir tmp("wf_hdr");
  const Waterfall w = random_waterfall(100, 50, 2);
  save_waterfall(w, tmp.path("grid.dfwf"));
  const Waterfall back = load_waterfall(tmp.path("grid.dfwf"));
  CHECK(back.rows() == 100);
  CHECK(back.cols() == 50);
}

TEST_CASE("csv round-trip and sidecar") {
  TempDir tmp("wf_csv");

  SUBCASE("one-row file") {
    std::ofstream(tmp.path("w.csv")) << "0.0,1.5,2.0\n";
    std::ofstream(tmp.path("w.csv.meta"))
        << "temporal_resolution_s=0.1\nspatial_resolution_m=5\norigin_kp=8.3\n"
        << "kp_direction=1\nstart_time_s=0\n";
    const Waterfall w = load_waterfall(tmp.path("w.csv"));
    CHECK(w.rows() == 1);
    CHECK(w.cols() == 3);
    CHECK(w.at(0, 1) == doctest::Approx(1.5));
  }
  SUBCASE("round-trip preserves values to printed precision") {
    const Waterfall w = random_waterfall(20, 7, 33);
    save_waterfall(w, tmp.path("w.csv"));
    const Waterfall back = load_waterfall(tmp.path("w.csv"));
    REQUIRE(back.rows() == w.rows());
    REQUIRE(back.cols() == w.cols());
    for (std::size_t r = 0; r < w.rows(); ++r)
      for (std::size_t c = 0; c < w.cols(); ++c)
        CHECK(back.at(r, c) == doctest::Approx(w.at(r, c)).epsilon(1e-7));
    CHECK(back.geometry() == w.geometry());
  }
  SUBCASE("ragged row is a dimension-mismatch error naming the row") {
    std::ofstream(tmp.path("bad.csv")) << "1,2,3\n4,5\n";
    std::ofstream(tmp.path("bad.csv.meta"))
        << "temporal_resolution_s=0.1\nspatial_resolution_m=5\norigin_kp=0\n"
        << "kp_direction=1\nstart_time_s=0\n";
    CHECK_THROWS_WITH_AS(load_waterfall(tmp.path("bad.csv")),
                         doctest::Contains("bad.csv:2"), std::runtime_error);
  }
  SUBCASE("negative sample is rejected") {
    std::ofstream(tmp.path("neg.csv")) << "1,-2,3\n";
    std::ofstream(tmp.path("neg.csv.meta"))
        << "temporal_resolution_s=0.1\nspatial_resolution_m=5\norigin_kp=0\n"
        << "kp_direction=1\nstart_time_s=0\n";
    CHECK_THROWS(load_waterfall(tmp.path("neg.csv")));
  }
  SUBCASE("missing sidecar is an error") {
    std::ofstream(tmp.path("lonely.csv")) << "1,2\n";
    CHECK_THROWS(load_waterfall(tmp.path("lonely.csv")));
  }
}

TEST_CASE("save to an unwritable location fails") {
  const Waterfall w = random_waterfall(2, 2, 1);
  CHECK_THROWS(save_waterfall(w, "/nonexistent_dir_zz/grid.dfwf"));
}

TEST_CASE("malformed binary header") {
  TempDir tmp("wf_bad");
  {
    std::ofstream os(tmp.path("bad.dfwf"), std::ios::binary);
    os << "DFWF";
    os << "garbage";
  }
  CHECK_THROWS(load_waterfall(tmp.path("bad.dfwf")));
  SUBCASE("truncated payload") {
    const Waterfall w = random_waterfall(10, 10, 4);
    save_waterfall(w, tmp.path("trunc.dfwf"));
    std::filesystem::resize_file(tmp.path("trunc.dfwf"), 100);
    CHECK_THROWS_WITH_AS(load_waterfall(tmp.path("trunc.dfwf")),
                         doctest::Contains("payload"), std::runtime_error);
  }
}
