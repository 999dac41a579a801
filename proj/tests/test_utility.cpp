#include <cmath>

#include "doctest.h"
#include "l3gs/utility.hpp"
#include "test_support.hpp"

using namespace l3gs;
using doctest::Approx;

namespace {

constexpr double kPi = 3.14159265358979323846;

Splat basic_splat(float x, float y, float z, float sx = 0.05f, float sy = 0.05f,
                  float sz = 0.05f) {
  Splat sp;
  sp.position = {x, y, z};
  sp.scale = {sx, sy, sz};
  sp.rotation = {1.0f, 0.0f, 0.0f, 0.0f};
  sp.opacity = 1.0f;
  sp.sh = {0.5f, 0.5f, 0.5f};
  return sp;
}

}  // namespace

TEST_CASE("utility factors: closeness times overlap times opacity") {
  Viewport vp;
  Splat sp = basic_splat(0.0f, 0.0f, -4.0f, 0.05f, 0.03f, 0.08f);
  sp.opacity = 0.6f;
  UtilityTerms t = splat_utility(sp, vp);
  CHECK(t.closeness == Approx(1.0 / 5.0).epsilon(1e-12));
  CHECK(t.opacity == Approx(0.6).epsilon(1e-6));
  CHECK(t.utility == Approx(t.closeness * t.overlap * t.opacity).epsilon(1e-12));

  // An axis-aligned splat on the optical axis projects to an ellipse with
  // semi-axes fx*sx/d and fy*sy/d, so overlap = pi*fx*fy*sx*sy/(d^2*w*h).
  const double fx = 512.0, fy = 512.0, d = 4.0;
  const double expect = kPi * fx * fy * 0.05 * 0.03 / (d * d * 1024.0 * 1024.0);
  CHECK(t.overlap == Approx(expect).epsilon(1e-6));
}

TEST_CASE("utility is linear in opacity") {
  Viewport vp;
  Splat sp = basic_splat(0.3f, -0.2f, -2.5f);
  sp.opacity = 0.25f;
  const double u1 = splat_utility(sp, vp).utility;
  sp.opacity = 0.75f;
  const double u3 = splat_utility(sp, vp).utility;
  CHECK(u3 == Approx(3.0 * u1).epsilon(1e-9));
}

TEST_CASE("splats behind the camera or inside the near plane contribute zero") {
  Viewport vp;
  CHECK(splat_utility(basic_splat(0, 0, 3.0f), vp).utility == 0.0);
  CHECK(splat_utility(basic_splat(0, 0, -0.005f), vp).utility == 0.0);
  // Far off to the side, outside any 90-degree view cone.
  CHECK(splat_utility(basic_splat(50.0f, 0, -1.0f), vp).utility == 0.0);
}

TEST_CASE("overlap saturates at the full frame") {
  Viewport vp;
  Splat sp = basic_splat(0, 0, -1.0f, 30.0f, 30.0f, 30.0f);
  UtilityTerms t = splat_utility(sp, vp);
  CHECK(t.overlap == Approx(1.0).epsilon(1e-9));
  // Fully outside the frame: nothing left after clipping.
  Splat off = basic_splat(80.0f, 0, -40.0f, 0.05f, 0.05f, 0.05f);
  CHECK(splat_utility(off, vp).overlap == 0.0);
}

TEST_CASE("view-ray closeness uses perpendicular distance") {
  Viewport vp;
  UtilityConfig cfg;
  cfg.closeness_mode = ClosenessMode::view_ray;
  Splat sp = basic_splat(1.5f, 0.0f, -3.0f);
  UtilityTerms t = splat_utility(sp, vp, cfg);
  CHECK(t.closeness == Approx(1.0 / (1.0 + 1.5)).epsilon(1e-9));
  // On the axis the ray distance vanishes.
  UtilityTerms axis = splat_utility(basic_splat(0, 0, -3.0f), vp, cfg);
  CHECK(axis.closeness == Approx(1.0).epsilon(1e-9));
}

TEST_CASE("utility table prefix/suffix bookkeeping") {
  UtilityTable t({4, 7}, 2, 3);
  // delta(t, j, l): slot-major hand-filled values.
  t.set_delta(0, 4, 1, 0.5);
  t.set_delta(0, 4, 2, 0.25);
  t.set_delta(1, 4, 1, 0.1);
  t.set_delta(2, 4, 1, 0.2);
  t.set_delta(0, 7, 1, 1.0);
  t.finalize();

  CHECK(t.u(0, 4, 1) == Approx(0.5));
  CHECK(t.u(0, 4, 2) == Approx(0.75));  // prefix over layers
  CHECK(t.u(0, 4, 0) == 0.0);
  CHECK(t.cum_delta(0, 4, 1) == Approx(0.8));  // 0.5 + 0.1 + 0.2
  CHECK(t.cum_delta(1, 4, 1) == Approx(0.3));
  CHECK(t.cum_delta(2, 4, 1) == Approx(0.2));
  CHECK(t.cum_delta(0, 4, 2) == Approx(0.25));
  CHECK(t.cum_delta(2, 7, 1) == 0.0);
}

TEST_CASE("evaluator agrees with per-splat and per-table paths") {
  Scene sc = testutil::line_scene({30, 60});
  for (std::size_t i = 0; i < sc.splats.size(); ++i)
    sc.splats[i].object_id = ObjectId(i % 3);
  Viewport vp;
  vp.position = {0.0, 0.2, 1.0};
  vp.yaw = 4.0;

  SceneEvaluator eval(sc);
  std::vector<double> slots;
  eval.evaluate(vp, slots);
  REQUIRE(slots.size() == 6);  // 3 objects x 2 layers

  // Sum of per-splat values, bucketed the same way.
  std::vector<double> per_splat(sc.size(), 0.0);
  eval.add_splat_values(vp, per_splat.data());
  std::vector<double> rebuilt(slots.size(), 0.0);
  for (const Splat& sp : sc.splats)
    rebuilt[eval.slot_of(sp.object_id, sp.layer_id)] += per_splat[sp.splat_index];
  for (std::size_t k = 0; k < slots.size(); ++k)
    CHECK(rebuilt[k] == Approx(slots[k]).epsilon(1e-12));

  // splat_value matches the bulk pass entry by entry.
  for (std::uint32_t i = 0; i < sc.size(); ++i)
    CHECK(eval.splat_value(i, vp) == Approx(per_splat[i]).epsilon(1e-12));

  // subset_utility over everything equals the grand total.
  std::vector<std::uint32_t> all(sc.size());
  for (std::uint32_t i = 0; i < sc.size(); ++i) all[i] = i;
  double grand = 0.0;
  for (double v : slots) grand += v;
  CHECK(eval.subset_utility(vp, all.data(), all.size()) ==
        Approx(grand).epsilon(1e-12));

  // object_utility sums layers 1..version.
  const double o1 =
      object_utility(sc, 1, 2, vp) - (slots[eval.slot_of(1, 1)] + slots[eval.slot_of(1, 2)]);
  CHECK(o1 == Approx(0.0).epsilon(1e-12));
  CHECK(object_utility(sc, 1, 0, vp) == 0.0);

  // build_utility_table equals an evaluator pass per slot.
  UtilityTable table = build_utility_table(sc, {vp, vp});
  for (ObjectId j : {0u, 1u, 2u})
    for (int l = 1; l <= 2; ++l) {
      const double inc = l == 1 ? slots[eval.slot_of(j, 1)]
                                : slots[eval.slot_of(j, 2)];
      CHECK(table.delta(0, j, l) == Approx(inc).epsilon(1e-12));
      CHECK(table.cum_delta(0, j, l) == Approx(2.0 * inc).epsilon(1e-12));
    }
}

TEST_CASE("layer utilities are additive, never negative") {
  Scene sc = testutil::line_scene({20, 40, 60});
  Viewport vp;
  vp.position = {0.5, -0.1, 2.0};
  vp.pitch = -5.0;
  SceneEvaluator eval(sc);
  std::vector<double> slots;
  eval.evaluate(vp, slots);
  double cum = 0.0;
  for (double v : slots) {
    CHECK(v >= 0.0);
    cum += v;
  }
  CHECK(cum == Approx(object_utility(sc, 0, 3, vp)).epsilon(1e-12));
}
