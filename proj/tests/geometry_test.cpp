#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "nirplan/geometry.hpp"

using namespace nirplan;

namespace {

RigidTransform random_transform(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  const Vector3 axis(g(rng), g(rng), g(rng));
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  return RigidTransform::rotation(axis.normalized(), angle(rng), Vector3(g(rng), g(rng), g(rng)) * 50.0);
}

}  // namespace

TEST(RigidTransform, IdentityLeavesPointsAlone) {
  EXPECT_TRUE(apply_transform(RigidTransform::identity(), {1, 2, 3}).isApprox(Point3(1, 2, 3)));
}

TEST(RigidTransform, Translation) {
  const auto p = apply_transform(RigidTransform::translation({10, 0, 0}), {1, 2, 3});
  EXPECT_NEAR((p - Point3(11, 2, 3)).norm(), 0.0, 1e-12);
}

TEST(RigidTransform, QuarterTurnAboutZ) {
  const auto t = RigidTransform::rotation(Vector3::UnitZ(), std::numbers::pi / 2);
  EXPECT_NEAR((t.apply({1, 0, 0}) - Point3(0, 1, 0)).norm(), 0.0, 1e-12);
}

TEST(RigidTransform, RejectsNonOrthonormal) {
  Matrix3 m = Matrix3::Identity();
  m(0, 1) = 1e-6;
  EXPECT_THROW(RigidTransform(m, Vector3::Zero()), Error);
  Matrix3 reflect = Matrix3::Identity();
  reflect(2, 2) = -1;
  EXPECT_THROW(RigidTransform(reflect, Vector3::Zero()), Error);
}

TEST(RigidTransform, ComposeGroupProperties) {
  std::mt19937_64 rng(7);
  const auto t = random_transform(rng);
  const auto id = compose(RigidTransform::identity(), t);
  EXPECT_TRUE(id.rotation().isApprox(t.rotation(), 1e-12));
  const auto round = compose(t, t.inverse());
  EXPECT_LT((round.rotation() - Matrix3::Identity()).norm(), 1e-9);
  EXPECT_LT(round.translation().norm(), 1e-9);

  const auto q = RigidTransform::rotation(Vector3::UnitZ(), std::numbers::pi / 2);
  const auto half = compose(q, q);
  EXPECT_NEAR(half.rotation_angle(), std::numbers::pi, 1e-12);
  EXPECT_NEAR((half.apply({1, 0, 0}) - Point3(-1, 0, 0)).norm(), 0.0, 1e-12);
}

TEST(RigidTransform, ComposeMatchesSequentialApplication) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 30.0);
  for (int i = 0; i < 200; ++i) {
    const auto a = random_transform(rng), b = random_transform(rng);
    const Point3 p(g(rng), g(rng), g(rng));
    EXPECT_LT((compose(a, b).apply(p) - a.apply(b.apply(p))).norm(), 1e-9);
  }
}

TEST(RigidTransform, IsometryAndInverseRoundTrip) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 100.0);
  for (int i = 0; i < 500; ++i) {
    const auto t = random_transform(rng);
    const Point3 p(g(rng), g(rng), g(rng)), q(g(rng), g(rng), g(rng));
    EXPECT_LT(std::abs((p - q).norm() - (t.apply(p) - t.apply(q)).norm()), 1e-9);
    EXPECT_LT((t.inverse().apply(t.apply(p)) - p).norm(), 1e-9);
  }
}

TEST(RigidTransform, LookAtPointsOpticalAxisAtTarget) {
  const auto pose = RigidTransform::look_at({0, 0, 400}, {0, 0, 0}, Vector3::UnitY());
  const Point3 c = pose.apply({0, 0, 0});
  EXPECT_NEAR(c.x(), 0, 1e-9);
  EXPECT_NEAR(c.y(), 0, 1e-9);
  EXPECT_NEAR(c.z(), 400, 1e-9);
}

TEST(TriangleMesh, ValidateCatchesBadInput) {
  TriangleMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  m.triangles = {{0, 1, 2}};
  EXPECT_NO_THROW(m.validate());
  m.triangles = {{0, 1, 3}};
  EXPECT_THROW(m.validate(), Error);
  m.vertices.push_back({2, 0, 0});
  m.triangles = {{0, 1, 3}};
  EXPECT_THROW(m.validate(), Error);  // collinear
  m.triangles = {{0, 1, 2}};
  m.normals.assign(4, Vector3(0, 0, 2));
  EXPECT_THROW(m.validate(), Error);
}
