#include "bevsync/feature_map.hpp"
#include "bevsync/geometry.hpp"

#include <doctest.h>

#include <cmath>

using namespace bevsync;
using geom::OrientedBox;
using geom::Pose2;

namespace {

bool poseNear(const Pose2& a, const Pose2& b, double tol = 1e-9) {
  return std::abs(a.x - b.x) < tol && std::abs(a.y - b.y) < tol &&
         std::abs(geom::normalizeAngle(a.yaw - b.yaw)) < tol;
}

FeatureMap rampMap(const geom::GridSpec& grid) {
  FeatureMap f(2, grid);
  for (int r = 0; r < grid.height_cells; ++r)
    for (int c = 0; c < grid.width_cells; ++c) {
      f.data[0](r, c) = 0.1 * r + 0.01 * c;
      f.data[1](r, c) = std::sin(0.3 * r) * std::cos(0.2 * c);
    }
  return f;
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("compose identity and inverse") {
  const Pose2 p{2.5, -1.0, 0.7};
  CHECK(poseNear(geom::compose(Pose2::identity(), p), p));
  CHECK(poseNear(geom::compose(p, geom::inverse(p)), Pose2::identity()));
  CHECK(poseNear(geom::compose(geom::inverse(p), p), Pose2::identity()));
}

TEST_CASE("compose quarter turn") {
  const Pose2 a{1.0, 0.0, M_PI / 2};
  const Pose2 b{1.0, 0.0, 0.0};
  const Pose2 c = geom::compose(a, b);
  CHECK(c.x == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(c.y == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(c.yaw == doctest::Approx(M_PI / 2));
}

TEST_CASE("compose associativity on random triples") {
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const Pose2 a{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-3, 3)};
    const Pose2 b{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-3, 3)};
    const Pose2 c{rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-3, 3)};
    CHECK(poseNear(geom::compose(geom::compose(a, b), c),
                   geom::compose(a, geom::compose(b, c)), 1e-9));
  }
}

TEST_CASE("yaw normalization lands in (-pi, pi]") {
  CHECK(geom::normalizeAngle(M_PI) == doctest::Approx(M_PI));
  CHECK(geom::normalizeAngle(-M_PI) == doctest::Approx(M_PI));
  CHECK(geom::normalizeAngle(3 * M_PI) == doctest::Approx(M_PI));
  const Pose2 a{0, 0, 3.0};
  const Pose2 b{0, 0, 3.0};
  const double yaw = geom::compose(a, b).yaw;
  CHECK(yaw > -M_PI);
  CHECK(yaw <= M_PI);
}

TEST_CASE("grid world/cell mapping round trips") {
  const geom::GridSpec grid{-4.0, -4.0, 0.4, 20, 20};
  const Eigen::Vector2d center = grid.cellCenter(2, 2);
  CHECK(center.x() == doctest::Approx(-3.0));
  CHECK(center.y() == doctest::Approx(-3.0));
  int r, c;
  REQUIRE(grid.cellIndex(center.x(), center.y(), r, c));
  CHECK(r == 2);
  CHECK(c == 2);
  const Eigen::Vector2d rc = grid.worldToCell(center.x(), center.y());
  CHECK(rc.x() == doctest::Approx(2.0));
  CHECK(rc.y() == doctest::Approx(2.0));
}

TEST_CASE("warp with identity is exact") {
  const geom::GridSpec grid{0.0, 0.0, 0.5, 16, 16};
  const FeatureMap f = rampMap(grid);
  const FeatureMap w = warpFeatureMap(f, Pose2::identity());
  for (int ch = 0; ch < 2; ++ch)
    CHECK((w.data[ch] - f.data[ch]).cwiseAbs().maxCoeff() == doctest::Approx(0.0));
}

TEST_CASE("warp by whole cells equals an index shift") {
  const geom::GridSpec grid{0.0, 0.0, 0.5, 16, 16};
  const FeatureMap f = rampMap(grid);
  const int k = 3;
  // rel maps input into output: shifting content +k columns
  const Pose2 rel{k * grid.cell_size, 0.0, 0.0};
  const FeatureMap w = warpFeatureMap(f, rel);
  for (int r = 0; r < 16; ++r) {
    for (int c = 0; c < 16; ++c) {
      const double expected = c >= k ? f.data[0](r, c - k) : 0.0;
      CHECK(w.data[0](r, c) == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("double half-turn warp restores the interior") {
  const geom::GridSpec grid{-4.0, -4.0, 0.5, 16, 16};
  FeatureMap f(1, grid);
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 16; ++c)
      f.data[0](r, c) = std::exp(-0.05 * ((r - 8.0) * (r - 8.0) + (c - 8.0) * (c - 8.0)));
  const Pose2 half_turn{0.0, 0.0, M_PI};
  const FeatureMap once = warpFeatureMap(f, half_turn);
  const FeatureMap twice = warpFeatureMap(once, half_turn);
  for (int r = 4; r < 12; ++r)
    for (int c = 4; c < 12; ++c)
      CHECK(twice.data[0](r, c) == doctest::Approx(f.data[0](r, c)).epsilon(1e-6));
}

TEST_CASE("warp linearity") {
  const geom::GridSpec grid{0.0, 0.0, 0.5, 12, 12};
  const FeatureMap f1 = rampMap(grid);
  FeatureMap f2(2, grid);
  Rng rng(3);
  for (int ch = 0; ch < 2; ++ch)
    for (int r = 0; r < 12; ++r)
      for (int c = 0; c < 12; ++c) f2.data[ch](r, c) = rng.uniform(-1, 1);
  FeatureMap sum(2, grid);
  for (int ch = 0; ch < 2; ++ch) sum.data[ch] = f1.data[ch] + f2.data[ch];

  const Pose2 rel{0.77, -0.31, 0.4};
  const FeatureMap wsum = warpFeatureMap(sum, rel);
  const FeatureMap w1 = warpFeatureMap(f1, rel);
  const FeatureMap w2 = warpFeatureMap(f2, rel);
  for (int ch = 0; ch < 2; ++ch)
    CHECK((wsum.data[ch] - w1.data[ch] - w2.data[ch]).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("iou fixtures") {
  const OrientedBox a{0, 0, 0, 2, 2};
  CHECK(geom::rotatedIou(a, a) == doctest::Approx(1.0).epsilon(1e-9));
  const OrientedBox far{10, 10, 0.3, 2, 2};
  CHECK(geom::rotatedIou(a, far) == doctest::Approx(0.0));
  const OrientedBox b{1, 0, 0, 2, 2};
  CHECK(geom::rotatedIou(a, b) == doctest::Approx(1.0 / 3.0).epsilon(1e-9));
  const OrientedBox degenerate{0, 0, 0, 0, 2};
  CHECK(geom::rotatedIou(a, degenerate) == 0.0);
}

TEST_CASE("iou symmetry and rotation invariance") {
  Rng rng(11);
  for (int i = 0; i < 100; ++i) {
    const OrientedBox a{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-3, 3),
                        rng.uniform(0.5, 4), rng.uniform(0.5, 4)};
    const OrientedBox b{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-3, 3),
                        rng.uniform(0.5, 4), rng.uniform(0.5, 4)};
    const double ab = geom::rotatedIou(a, b);
    const double ba = geom::rotatedIou(b, a);
    CHECK(std::abs(ab - ba) < 1e-9);

    const double phi = rng.uniform(-3, 3);
    auto rotate = [phi](const OrientedBox& box) {
      const double c = std::cos(phi), s = std::sin(phi);
      return OrientedBox{c * box.cx - s * box.cy, s * box.cx + c * box.cy,
                         box.yaw + phi, box.length, box.width};
    };
    CHECK(std::abs(geom::rotatedIou(rotate(a), rotate(b)) - ab) < 1e-9);
  }
}

TEST_CASE("box corners stay counter-clockwise under rotation") {
  Rng rng(5);
  for (int i = 0; i < 50; ++i) {
    const OrientedBox box{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-3, 3),
                          rng.uniform(0.5, 3), rng.uniform(0.5, 3)};
    const auto corners = box.corners();
    double cross_sum = 0.0;
    for (int k = 0; k < 4; ++k) {
      const auto& p = corners[k];
      const auto& q = corners[(k + 1) % 4];
      cross_sum += p.x() * q.y() - q.x() * p.y();
    }
    CHECK(cross_sum > 0.0);  // positive signed area
  }
}

}  // TEST_SUITE
