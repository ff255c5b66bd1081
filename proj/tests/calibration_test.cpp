#include <gtest/gtest.h>

#include <filesystem>
#include <numbers>
#include <random>

#include "nirplan/calibration.hpp"
#include "oracles.hpp"

using namespace nirplan;

namespace {

RigidTransform random_pose(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> angle(-std::numbers::pi, std::numbers::pi);
  return RigidTransform::rotation(Vector3(g(rng), g(rng), g(rng)).normalized(), angle(rng),
                                  Vector3(g(rng), g(rng), g(rng)) * 100.0);
}

std::vector<Correspondence> pairs_from(const RigidTransform& t, const std::vector<Point3>& src) {
  std::vector<Correspondence> out;
  for (const auto& p : src) out.push_back({p, t.apply(p)});
  return out;
}

}  // namespace

TEST(Projection, OpticalAxisHitsPrincipalPoint) {
  CameraModel cam;
  for (double z : {1.0, 50.0, 1e4}) {
    const auto px = project(cam, {0, 0, z});
    ASSERT_TRUE(px);
    EXPECT_DOUBLE_EQ(px->u, cam.cx);
    EXPECT_DOUBLE_EQ(px->v, cam.cy);
  }
}

TEST(Projection, SimilarTriangles) {
  CameraModel cam;
  cam.fx = cam.fy = 1000;
  const auto px = project(cam, {0.1, 0, 1000});
  ASSERT_TRUE(px);
  EXPECT_NEAR(px->u, cam.cx + 0.1, 1e-12);
  EXPECT_NEAR(px->v, cam.cy, 1e-12);
}

TEST(Projection, BehindCameraHasNoPixel) {
  CameraModel cam;
  EXPECT_FALSE(project(cam, {0, 0, 0}));
  EXPECT_FALSE(project(cam, {10, 0, -5}));
}

TEST(Projection, BackProjectionRoundTrip) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-100, 100), z(50, 900);
  const auto cam = CameraModel::from_fov(640, 480, 60, random_pose(rng));
  for (int i = 0; i < 500; ++i) {
    const Point3 pc(u(rng), u(rng), z(rng));
    const Point3 world = cam.pose.inverse().apply(pc);
    const auto px = project(cam, world);
    ASSERT_TRUE(px);
    EXPECT_LT((back_project(cam, *px, pc.z()) - world).norm(), 1e-6);
  }
}

TEST(RigidFit, ExactRecovery) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const auto truth = random_pose(rng);
    const auto fit = estimate_rigid_transform(pairs_from(truth, oracle::random_points(rng, 20, 50)));
    EXPECT_LT((fit.transform.rotation() - truth.rotation()).norm(), 1e-9);
    EXPECT_LT((fit.transform.translation() - truth.translation()).norm(), 1e-9);
    EXPECT_LT(fit.rms, 1e-9);
  }
}

TEST(RigidFit, IdentityCorrespondences) {
  std::mt19937_64 rng(3);
  const auto fit = estimate_rigid_transform(pairs_from(RigidTransform::identity(), oracle::random_points(rng, 10, 5)));
  EXPECT_LT((fit.transform.rotation() - Matrix3::Identity()).norm(), 1e-12);
  EXPECT_LT(fit.transform.translation().norm(), 1e-12);
}

TEST(RigidFit, NoisyMonteCarlo) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> noise(0.0, 0.1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto truth = random_pose(rng);
    auto pairs = pairs_from(truth, oracle::random_points(rng, 50, 100));
    for (auto& c : pairs) c.target += Vector3(noise(rng), noise(rng), noise(rng));
    const auto fit = estimate_rigid_transform(pairs);
    EXPECT_LT(compose(fit.transform, truth.inverse()).rotation_angle(), 0.01);
    EXPECT_LT((fit.transform.translation() - truth.translation()).norm(), 0.1);
    EXPECT_NEAR(fit.rms, 0.1 * std::sqrt(3.0), 0.05);
  }
}

TEST(RigidFit, DegenerateInputs) {
  std::vector<Correspondence> two{{{0, 0, 0}, {0, 0, 0}}, {{1, 0, 0}, {1, 0, 0}}};
  EXPECT_THROW(estimate_rigid_transform(two), Error);
  std::vector<Correspondence> line;
  for (int i = 0; i < 5; ++i) line.push_back({{double(i), 0, 0}, {double(i), 1, 0}});
  try {
    estimate_rigid_transform(line);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateConfiguration);
  }
}

TEST(RigidFit, LeftInvariance) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const auto truth = random_pose(rng), g = random_pose(rng);
    std::normal_distribution<double> noise(0.0, 0.2);
    auto pairs = pairs_from(truth, oracle::random_points(rng, 30, 60));
    for (auto& c : pairs) c.target += Vector3(noise(rng), noise(rng), noise(rng));
    auto moved = pairs;
    for (auto& c : moved) {
      c.source = g.apply(c.source);
      c.target = g.apply(c.target);
    }
    const auto a = estimate_rigid_transform(pairs).transform;
    const auto b = estimate_rigid_transform(moved).transform;
    const auto conj = compose(g, compose(a, g.inverse()));
    EXPECT_LT((b.rotation() - conj.rotation()).norm(), 1e-9);
    EXPECT_LT((b.translation() - conj.translation()).norm(), 1e-9 * 1000);
  }
}

TEST(RigidFit, CsvRoundTrip) {
  std::mt19937_64 rng(6);
  const auto pairs = pairs_from(random_pose(rng), oracle::random_points(rng, 12, 40));
  const auto path = std::filesystem::temp_directory_path() / "nirplan_corr.csv";
  write_correspondences_csv(path, pairs);
  const auto back = read_correspondences_csv(path);
  ASSERT_EQ(back.size(), pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    EXPECT_EQ(back[i].source, pairs[i].source);
    EXPECT_EQ(back[i].target, pairs[i].target);
  }
  std::filesystem::remove(path);
}

TEST(FrameGraph, ChainsAndInverts) {
  FrameGraph g;
  const auto a = RigidTransform::translation({10, 0, 0});
  const auto b = RigidTransform::rotation(Vector3::UnitZ(), 0.3, {0, 5, 0});
  g.add_edge("depth", "world", a);
  g.add_edge("nir", "depth", b);
  const Point3 p(1, 2, 3);
  EXPECT_LT((g.transform("nir", "world").apply(p) - b.apply(a.apply(p))).norm(), 1e-12);
  EXPECT_LT((g.transform("world", "nir").apply(b.apply(a.apply(p))) - p).norm(), 1e-12);
}

TEST(FrameGraph, DisconnectedAndUnknownFrames) {
  FrameGraph g;
  g.add_edge("a", "b", RigidTransform::identity());
  g.add_edge("c", "d", RigidTransform::identity());
  EXPECT_THROW(g.transform("a", "c"), Error);
  EXPECT_THROW(g.transform("a", "zzz"), Error);
}

TEST(FrameGraph, RejectsInconsistentCycle) {
  FrameGraph g;
  g.add_edge("b", "a", RigidTransform::translation({1, 0, 0}));
  g.add_edge("c", "b", RigidTransform::translation({0, 1, 0}));
  EXPECT_NO_THROW(g.add_edge("c", "a", RigidTransform::translation({1, 1, 0})));
  EXPECT_THROW(g.add_edge("c", "a", RigidTransform::translation({1, 1, 1e-3})), Error);
  EXPECT_THROW(g.add_edge("a", "c", RigidTransform::rotation(Vector3::UnitZ(), 1e-6, {-1, -1, 0})), Error);
}

TEST(MapCloud, IdentityGraphEqualsDirectProjection) {
  std::mt19937_64 rng(7);
  CameraModel cam;
  FrameGraph g;
  g.add_frame("cam");
  LabeledPointCloud cloud;
  cloud.frame = "cam";
  cloud.points = oracle::random_points(rng, 200, 200);
  cloud.labels.assign(cloud.size(), Label::kBackground);
  const auto proj = map_cloud_to_image(cloud, g, cam, "cam");
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto px = project(cam, cloud.points[i]);
    if (!px) {
      EXPECT_EQ(proj[i].status, ProjectionStatus::kBehindCamera);
      continue;
    }
    EXPECT_EQ(proj[i].pixel.u, px->u);
    EXPECT_EQ(proj[i].status, cam.in_bounds(*px) ? ProjectionStatus::kInImage : ProjectionStatus::kOutOfBounds);
  }
}

TEST(MapCloud, TranslatedCloudWithCompensatingEdge) {
  std::mt19937_64 rng(8);
  CameraModel cam;
  const Vector3 t(5, -3, 40);
  LabeledPointCloud original;
  original.frame = "cam";
  std::uniform_real_distribution<double> u(-50, 50), z(100, 500);
  for (int i = 0; i < 100; ++i) original.points.emplace_back(u(rng), u(rng), z(rng));
  original.labels.assign(original.size(), Label::kBackground);
  FrameGraph direct;
  direct.add_frame("cam");
  LabeledPointCloud moved = original.transformed(RigidTransform::translation(t), "moved");
  FrameGraph g;
  g.add_edge("cam", "moved", RigidTransform::translation(-t));
  const auto a = map_cloud_to_image(original, direct, cam, "cam");
  const auto b = map_cloud_to_image(moved, g, cam, "cam");
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_NEAR(a[i].pixel.u, b[i].pixel.u, 1e-9);
    EXPECT_NEAR(a[i].pixel.v, b[i].pixel.v, 1e-9);
  }
}

TEST(MapCloud, RandomGraphMatchesComposeThenProject) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    const auto w2d = random_pose(rng), d2n = random_pose(rng);
    FrameGraph g;
    g.add_edge("depth", "world", w2d);
    g.add_edge("nir", "depth", d2n);
    CameraModel cam;
    LabeledPointCloud cloud;
    cloud.frame = "world";
    cloud.points = oracle::random_points(rng, 50, 300);
    cloud.labels.assign(cloud.size(), Label::kBackground);
    const auto proj = map_cloud_to_image(cloud, g, cam, "nir");
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      // independent order: apply each edge in turn rather than composing
      const Point3 pc = d2n.apply(w2d.apply(cloud.points[i]));
      const auto px = project_camera_frame(cam, pc);
      if (!px) {
        EXPECT_EQ(proj[i].status, ProjectionStatus::kBehindCamera);
      } else {
        EXPECT_NEAR(proj[i].pixel.u, px->u, 1e-6);
        EXPECT_NEAR(proj[i].pixel.v, px->v, 1e-6);
      }
    }
  }
}

TEST(Checkerboard, BoardFitRecoversPose) {
  std::mt19937_64 rng(10);
  const auto corners = checkerboard_corners(9, 6, 25.0, {0, 0, 0});
  EXPECT_EQ(corners.size(), 54u);
  const auto pose = random_pose(rng);
  const auto fit = estimate_rigid_transform(observe_board(corners, pose, 0.0, rng));
  EXPECT_LT((fit.transform.translation() - pose.translation()).norm(), 1e-9);
}
