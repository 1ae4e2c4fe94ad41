#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "kloc/geometry.hpp"
#include "test_util.hpp"

using namespace kloc;

TEST_CASE("compose identity and inverse") {
  Rng rng(7);
  const Pose p = test::random_pose(rng);
  const Pose ip = compose(Pose::identity(), p);
  CHECK((ip.rotation - p.rotation).norm() == 0.0);
  CHECK((ip.translation - p.translation).norm() == 0.0);

  const Pose round = compose(p, invert(p));
  CHECK((round.rotation - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(round.translation.norm() < 1e-12);
}

TEST_CASE("compose matches pointwise application") {
  Rng rng(11);
  const Pose p1 = test::random_pose(rng);
  const Pose p2 = test::random_pose(rng);
  const Pose p12 = compose(p1, p2);
  for (int i = 0; i < 100; ++i) {
    const Vec3 x(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3));
    CHECK((p12.apply(x) - p1.apply(p2.apply(x))).norm() < 1e-12);
  }
}

TEST_CASE("invert examples") {
  Pose ident = invert(Pose::identity());
  CHECK((ident.rotation - Mat3::Identity()).norm() == 0.0);
  CHECK(ident.translation.norm() == 0.0);

  Pose shift;
  shift.translation = Vec3(1, 2, 3);
  const Pose inv = invert(shift);
  CHECK((inv.translation - Vec3(-1, -2, -3)).norm() == 0.0);

  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const Pose p = test::random_pose(rng);
    const Pose pp = invert(invert(p));
    CHECK((pp.rotation - p.rotation).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((pp.translation - p.translation).norm() < 1e-12);
  }
}

TEST_CASE("transform_points examples and rigidity") {
  Rng rng(5);
  PointCloud cloud{test::random_cloud(rng, 40), FrameTag::kCamera};

  const PointCloud same = transform_points(Pose::identity(), cloud);
  CHECK((same.points - cloud.points).cwiseAbs().maxCoeff() == 0.0);
  CHECK(same.frame == FrameTag::kGlobal);

  Pose lift;
  lift.translation = Vec3(0, 0, 1);
  PointCloud origin{Mat3X::Zero(3, 1), FrameTag::kCamera};
  CHECK((transform_points(lift, origin).points.col(0) - Vec3(0, 0, 1)).norm() ==
        0.0);

  const Pose p = test::random_pose(rng);
  const PointCloud moved = transform_points(p, cloud);
  for (Eigen::Index i = 0; i < cloud.count(); ++i) {
    CHECK((moved.points.col(i) -
           (p.rotation * cloud.points.col(i) + p.translation))
              .norm() < 1e-12);
  }
  // Pairwise distances survive.
  for (Eigen::Index i = 0; i + 1 < cloud.count(); i += 7) {
    const double before = (cloud.points.col(i) - cloud.points.col(i + 1)).norm();
    const double after = (moved.points.col(i) - moved.points.col(i + 1)).norm();
    CHECK(std::abs(before - after) < 1e-12);
  }
}

TEST_CASE("rotation_angle_deg examples") {
  Rng rng(13);
  const Mat3 r = test::random_rotation(rng);
  CHECK(rotation_angle_deg(r, r) == doctest::Approx(0.0).epsilon(1e-12));

  const Mat3 rz180 = axis_angle(Vec3(0, 0, 1), M_PI);
  CHECK(rotation_angle_deg(Mat3::Identity(), rz180) ==
        doctest::Approx(180.0).epsilon(1e-9));

  for (int i = 0; i < 25; ++i) {
    Vec3 axis(rng.normal(), rng.normal(), rng.normal());
    const Mat3 r30 = axis_angle(axis, 30.0 * M_PI / 180.0);
    CHECK(std::abs(rotation_angle_deg(Mat3::Identity(), r30) - 30.0) < 1e-9);
  }
}

TEST_CASE("rotation_angle_deg symmetry and triangle inequality") {
  Rng rng(17);
  for (int i = 0; i < 100; ++i) {
    const Mat3 a = test::random_rotation(rng);
    const Mat3 b = test::random_rotation(rng);
    const Mat3 c = test::random_rotation(rng);
    const double ab = rotation_angle_deg(a, b);
    const double ba = rotation_angle_deg(b, a);
    CHECK(std::abs(ab - ba) < 1e-9);
    CHECK(rotation_angle_deg(a, c) <= ab + rotation_angle_deg(b, c) + 1e-9);
  }
}

TEST_CASE("rotation_angle_deg never NaN under round-off") {
  // A rotation product whose trace lands a hair above 3.
  Rng rng(19);
  for (int i = 0; i < 200; ++i) {
    const Mat3 r = test::random_rotation(rng);
    const double angle = rotation_angle_deg(r, r);
    CHECK(std::isfinite(angle));
    CHECK(angle >= 0.0);
  }
}

TEST_CASE("rotation_angle_deg rejects non-orthonormal input") {
  Mat3 bad = Mat3::Identity();
  bad(0, 0) = 1.5;
  CHECK_THROWS_AS((void)rotation_angle_deg(bad, Mat3::Identity()), Error);
}

TEST_CASE("back_project examples") {
  CameraIntrinsics k(100.0, 100.0, 320.0, 240.0);
  PixelGrid g;
  g.width = 640;
  g.height = 480;
  g.pixels.resize(3, 1);
  g.pixels.col(0) = Vec3(320.0, 240.0, 1.0);
  DepthMap d{VecX::Constant(1, 2.0), 0.1, 10.0};
  const PointCloud c = back_project(d, k, g);
  CHECK((c.points.col(0) - Vec3(0, 0, 2)).norm() < 1e-15);
  CHECK(c.frame == FrameTag::kCamera);

  CameraIntrinsics unit(1.0, 1.0, 0.0, 0.0);
  PixelGrid g2;
  g2.width = 4;
  g2.height = 4;
  g2.pixels.resize(3, 1);
  g2.pixels.col(0) = Vec3(1.0, 1.0, 1.0);
  DepthMap d3{VecX::Constant(1, 3.0), 0.1, 10.0};
  CHECK((back_project(d3, unit, g2).points.col(0) - Vec3(3, 3, 3)).norm() <
        1e-15);

  DepthMap bad{VecX::Constant(1, 2.0), 0.1, 10.0};
  bad.values[0] = -1.0;  // bypass validate to hit the operation's own check
  CHECK_THROWS_AS((void)back_project(bad, unit, g2), Error);
}

TEST_CASE("project examples and round trip") {
  CameraIntrinsics unit(1.0, 1.0, 0.0, 0.0);
  PointCloud c{Mat3X::Zero(3, 1), FrameTag::kGlobal};
  c.points.col(0) = Vec3(0, 0, 2);
  const Mat2X px = project(Pose::identity(), c, unit);
  CHECK(px.col(0).norm() < 1e-15);

  CameraIntrinsics k(100.0, 100.0, 320.0, 240.0);
  c.points.col(0) = Vec3(2, 4, 2);
  const Mat2X px2 = project(Pose::identity(), c, k);
  CHECK(px2(0, 0) == doctest::Approx(420.0).epsilon(1e-12));
  CHECK(px2(1, 0) == doctest::Approx(440.0).epsilon(1e-12));

  c.points.col(0) = Vec3(0, 0, -1);
  CHECK_THROWS_AS((void)project(Pose::identity(), c, k), Error);

  // back_project then project with identity pose returns the pixels.
  Rng rng(23);
  PixelGrid g;
  g.width = 640;
  g.height = 480;
  g.pixels.resize(3, 50);
  DepthMap d{VecX(50), 0.1, 50.0};
  for (int i = 0; i < 50; ++i) {
    g.pixels.col(i) = Vec3(rng.uniform(0, 639), rng.uniform(0, 479), 1.0);
    d.values[i] = rng.uniform(0.5, 20.0);
  }
  CameraIntrinsics kr(rng.uniform(50, 500), rng.uniform(50, 500),
                      rng.uniform(200, 400), rng.uniform(150, 300));
  const PointCloud bp = back_project(d, kr, g);
  const Mat2X round = project(Pose::identity(), bp, kr);
  CHECK((round - g.pixels.topRows<2>()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("pose quaternion round trip") {
  const PoseVec7 ident = pose_to_quat(Pose::identity());
  CHECK(ident[3] == doctest::Approx(1.0));
  CHECK(std::abs(ident[4]) + std::abs(ident[5]) + std::abs(ident[6]) < 1e-15);

  Pose z180;
  z180.rotation = axis_angle(Vec3(0, 0, 1), M_PI);
  const PoseVec7 q180 = pose_to_quat(z180);
  CHECK(std::abs(q180[3]) < 1e-9);
  CHECK(std::abs(q180[6]) == doctest::Approx(1.0).epsilon(1e-12));

  Rng rng(29);
  for (int i = 0; i < 100; ++i) {
    const Pose p = test::random_pose(rng);
    const Pose back = quat_to_pose(pose_to_quat(p));
    CHECK((back.rotation - p.rotation).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((back.translation - p.translation).norm() < 1e-9);
  }

  CHECK_THROWS_AS((void)quat_to_pose(PoseVec7{0, 0, 0, 0, 0, 0, 0}), Error);
}

TEST_CASE("pixel grid invariants") {
  const PixelGrid g = PixelGrid::full(4, 3);
  CHECK(g.count() == 12);
  CHECK(g.pixels(0, 0) == 0.0);
  CHECK(g.pixels(1, 11) == 2.0);
  g.validate();

  PixelGrid bad = g;
  bad.pixels(0, 0) = -1.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}
