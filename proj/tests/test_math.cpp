#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "segrasp/geom.hpp"
#include "segrasp/rng.hpp"

using namespace segrasp;

TEST_CASE("rng is a pure function of seed and counter") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; i++) REQUIRE(a.next_u64() == b.next_u64());

  Rng c(42);
  c.restore(42, 50);
  Rng d(42);
  for (int i = 0; i < 50; i++) d.next_u64();
  REQUIRE(c.next_u64() == d.next_u64());
}

TEST_CASE("rng streams derived with different tags are distinct") {
  Rng root(7);
  Rng a = root.derive(1), b = root.derive(2), a2 = root.derive(1);
  const uint64_t first_a = a.next_u64();
  REQUIRE(first_a != b.next_u64());
  REQUIRE(first_a == a2.next_u64());  // same tag, same stream
  REQUIRE(root.counter() == 0);       // derive must not advance the parent
}

TEST_CASE("uniform stays in range, normal has sane moments") {
  Rng r(3);
  double sum = 0, sum2 = 0;
  const int n = 20000;
  for (int i = 0; i < n; i++) {
    const double u = r.uniform(-2.0, 5.0);
    REQUIRE(u >= -2.0);
    REQUIRE(u < 5.0);
  }
  for (int i = 0; i < n; i++) {
    const double g = r.normal();
    sum += g;
    sum2 += g * g;
  }
  REQUIRE(std::abs(sum / n) < 0.05);
  REQUIRE(std::abs(sum2 / n - 1.0) < 0.05);
}

TEST_CASE("quaternion rotation matches the rotation matrix") {
  const Quat q = Quat::axis_angle({0, 0, 1}, kPi / 2);
  const Vec3 v = q.rotate({1, 0, 0});
  REQUIRE(std::abs(v.x) < 1e-12);
  REQUIRE(std::abs(v.y - 1.0) < 1e-12);
  REQUIRE(std::abs(v.z) < 1e-12);

  // composition order: (a*b).rotate == a.rotate(b.rotate(.))
  const Quat a = Quat::axis_angle({1, 2, 0.5}, 0.7);
  const Quat b = Quat::axis_angle({-0.3, 1, 2}, -1.2);
  const Vec3 w{0.3, -0.8, 0.5};
  const Vec3 lhs = (a * b).rotate(w);
  const Vec3 rhs = a.rotate(b.rotate(w));
  REQUIRE(norm(lhs - rhs) < 1e-12);
}

TEST_CASE("rotation preserves length and unit norm survives composition") {
  Rng r(11);
  Quat acc;
  for (int i = 0; i < 1000; i++) {
    const Quat q =
        Quat::axis_angle({r.uniform(-1, 1), r.uniform(-1, 1), r.uniform(-1, 1)}, r.uniform(-3, 3));
    acc = (acc * q).normalized();
  }
  REQUIRE(std::abs(acc.norm() - 1.0) < 1e-9);
  const Vec3 v{1, -2, 0.5};
  REQUIRE(std::abs(norm(acc.rotate(v)) - norm(v)) < 1e-9);
}

TEST_CASE("orientation_error returns the axis-angle taking from onto to") {
  const Quat from = Quat::axis_angle({0, 1, 0}, 0.3);
  const Quat to = Quat::axis_angle({0, 1, 0}, 0.9);
  const Vec3 e = orientation_error(to, from);
  REQUIRE(std::abs(e.x) < 1e-12);
  REQUIRE(std::abs(e.y - 0.6) < 1e-12);
  REQUIRE(std::abs(e.z) < 1e-12);

  // identical orientations -> zero error
  const Vec3 z = orientation_error(from, from);
  REQUIRE(norm(z) < 1e-12);

  // applying the error as a rotation recovers `to`
  const Vec3 e2 = orientation_error(to, Quat::axis_angle({1, 1, 1}, 1.1));
  const Quat fixed = Quat::axis_angle(e2, norm(e2)) * Quat::axis_angle({1, 1, 1}, 1.1);
  REQUIRE(norm(orientation_error(to, fixed)) < 1e-9);
}

TEST_CASE("pose compose and apply agree") {
  const Pose a{{1, 2, 3}, Quat::axis_angle({0, 0, 1}, 0.5)};
  const Pose b{{-0.5, 0.25, 1}, Quat::axis_angle({1, 0, 0}, -0.8)};
  const Vec3 p{0.1, 0.2, 0.3};
  REQUIRE(norm(a.compose(b).apply(p) - a.apply(b.apply(p))) < 1e-12);
}
