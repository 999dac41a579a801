#include <cstring>
#include <fstream>

#include "doctest.h"
#include "l3gs/grid.hpp"
#include "test_support.hpp"

using namespace l3gs;
using doctest::Approx;

namespace {

Scene grid_scene() {
  Scene sc = testutil::line_scene({50, 100});
  for (std::size_t i = 0; i < sc.splats.size(); ++i) {
    Splat& sp = sc.splats[i];
    sp.object_id = ObjectId(i % 4);
    // Spread positions around the origin so every view direction sees some.
    sp.position = {2.0f * float(int(i % 5) - 2), 0.5f * float(int(i % 3) - 1),
                   2.0f * float(int(i / 20) - 2)};
  }
  return sc;
}

GridSpec small_spec() {
  GridSpec spec;
  spec.min_corner = {-3.0, -1.0, -3.0};
  spec.max_corner = {3.0, 1.0, 3.0};
  spec.nx = spec.ny = spec.nz = 2;
  spec.nyaw = 4;
  spec.npitch = 2;
  spec.nroll = 3;
  return spec;
}

}  // namespace

TEST_CASE("default spec covers the scene bbox at the stock lattice size") {
  Scene sc = grid_scene();
  GridSpec spec = default_grid_spec(sc);
  CHECK(spec.num_positions() == 1000);
  CHECK(spec.num_orientations() == 1728);
  CHECK(spec.min_corner.x() == Approx(-4.0));
  CHECK(spec.max_corner.x() == Approx(4.0));
  CHECK(spec.min_corner.y() == Approx(-0.5));
}

TEST_CASE("sample points map back to their own cells") {
  UtilityGrid grid(small_spec(), {0, 1, 2, 3}, 2);
  for (int pi = 0; pi < int(grid.spec().num_positions()); ++pi)
    CHECK(grid.nearest_position(grid.position_sample(pi)) == pi);
  for (int oi = 0; oi < int(grid.spec().num_orientations()); ++oi) {
    const Eigen::Vector3d o = grid.orientation_sample(oi);
    CHECK(grid.nearest_orientation(o.x(), o.y(), o.z()) == oi);
  }
}

TEST_CASE("nearest lookup clamps positions and wraps angles") {
  UtilityGrid grid(small_spec(), {0}, 1);
  // Far outside the box snaps to the boundary cell.
  CHECK(grid.nearest_position({-100.0, 0.0, 0.0}) ==
        grid.nearest_position({-2.9, 0.0, 0.0}));
  CHECK(grid.nearest_position({100.0, 100.0, 100.0}) ==
        int(grid.spec().num_positions()) - 1);
  // Yaw wraps: 185 degrees lives in the same bin as -175.
  CHECK(grid.nearest_orientation(185.0, 0.0, 0.0) ==
        grid.nearest_orientation(-175.0, 0.0, 0.0));
  CHECK(grid.nearest_orientation(-180.0, 0.0, 0.0) ==
        grid.nearest_orientation(-179.9, 0.0, 0.0));
  CHECK(grid.nearest_orientation(0.0, 0.0, 365.0) ==
        grid.nearest_orientation(0.0, 0.0, 5.0));
  // Pitch clamps at the poles.
  CHECK(grid.nearest_orientation(0.0, 95.0, 0.0) ==
        grid.nearest_orientation(0.0, 89.0, 0.0));
}

TEST_CASE("precomputed values equal direct evaluation at the samples") {
  Scene sc = grid_scene();
  GridSpec spec = small_spec();
  spec.clip_samples = 64;  // match the scalar evaluator's default exactly
  UtilityGrid grid = precompute_grid(sc, spec, 1);

  UtilityConfig cfg;
  cfg.clip_samples = 64;
  SceneEvaluator eval(sc, cfg);
  std::vector<double> direct;
  for (int pi = 0; pi < int(spec.num_positions()); ++pi)
    for (int oi = 0; oi < int(spec.num_orientations()); ++oi) {
      eval.evaluate(grid.sample_viewport(pi, oi), direct);
      for (ObjectId j : grid.objects())
        for (int l = 1; l <= grid.num_layers(); ++l) {
          const double want = direct[eval.slot_of(j, l)];
          // float32 storage bounds the error; the math is identical.
          CHECK(grid.value(pi, oi, j, l) == Approx(want).epsilon(1e-6).scale(1e-9));
        }
    }
}

TEST_CASE("lookup snaps a viewport to its containing cell") {
  Scene sc = grid_scene();
  GridSpec spec = small_spec();
  UtilityGrid grid = precompute_grid(sc, spec, 1);

  Viewport vp = grid.sample_viewport(5, 7);
  vp.position += Eigen::Vector3d(0.2, -0.1, 0.3);  // still inside cell 5
  vp.yaw += 10.0;
  vp.pitch -= 8.0;
  CHECK(grid.lookup(vp, 1, 2) == Approx(grid.value(5, 7, 1, 2)));

  std::vector<double> rows;
  grid.lookup_layers(vp, rows);
  REQUIRE(rows.size() == 8);  // 4 objects x 2 layers
  for (ObjectId j : grid.objects())
    for (int l = 1; l <= 2; ++l)
      CHECK(rows[std::size_t(j) * 2 + (l - 1)] == Approx(grid.value(5, 7, j, l)));
  CHECK_THROWS_AS((void)grid.lookup(vp, 99, 1), ValidationError);
}

TEST_CASE("thread count does not change the result") {
  Scene sc = grid_scene();
  GridSpec spec = small_spec();
  UtilityGrid a = precompute_grid(sc, spec, 1);
  UtilityGrid b = precompute_grid(sc, spec, 3);
  REQUIRE(a.raw_values().size() == b.raw_values().size());
  CHECK(std::memcmp(a.raw_values().data(), b.raw_values().data(),
                    a.raw_values().size() * sizeof(float)) == 0);
}

TEST_CASE("grid files round-trip bitwise") {
  const std::string dir = testutil::tmp_dir("grid_io");
  Scene sc = grid_scene();
  UtilityGrid grid = precompute_grid(sc, small_spec(), 1);
  save_grid(grid, dir + "/g.l3gg");
  UtilityGrid back = load_grid(dir + "/g.l3gg");
  CHECK(back.spec().nx == 2);
  CHECK(back.spec().nroll == 3);
  CHECK(back.spec().min_corner == grid.spec().min_corner);
  CHECK(back.objects() == grid.objects());
  CHECK(back.num_layers() == grid.num_layers());
  REQUIRE(back.raw_values().size() == grid.raw_values().size());
  CHECK(std::memcmp(back.raw_values().data(), grid.raw_values().data(),
                    grid.raw_values().size() * sizeof(float)) == 0);

  SUBCASE("bad magic") {
    std::ofstream(dir + "/bad.l3gg", std::ios::binary) << "NOPEnope";
    CHECK_THROWS_AS((void)load_grid(dir + "/bad.l3gg"), ParseError);
  }
  SUBCASE("truncated value block") {
    std::ifstream in(dir + "/g.l3gg", std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), {});
    in.close();
    bytes.resize(bytes.size() - 5);
    std::ofstream(dir + "/cut.l3gg", std::ios::binary) << bytes;
    CHECK_THROWS_AS((void)load_grid(dir + "/cut.l3gg"), ParseError);
  }
}
