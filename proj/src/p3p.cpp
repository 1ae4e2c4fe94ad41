#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>

#include "kloc/robust.hpp"

namespace kloc {

namespace {

// Dense polynomial with coefficients indexed by degree.
using Poly = std::vector<double>;

Poly poly_mul(const Poly& a, const Poly& b) {
  Poly out(a.size() + b.size() - 1, 0.0);
  for (size_t i = 0; i < a.size(); ++i)
    for (size_t j = 0; j < b.size(); ++j) out[i + j] += a[i] * b[j];
  return out;
}

Poly poly_add(const Poly& a, const Poly& b) {
  Poly out(std::max(a.size(), b.size()), 0.0);
  for (size_t i = 0; i < a.size(); ++i) out[i] += a[i];
  for (size_t i = 0; i < b.size(); ++i) out[i] += b[i];
  return out;
}

Poly poly_scale(const Poly& a, double s) {
  Poly out = a;
  for (double& c : out) c *= s;
  return out;
}

double poly_eval(const Poly& p, double x) {
  double acc = 0.0;
  for (size_t i = p.size(); i-- > 0;) acc = acc * x + p[i];
  return acc;
}

double poly_deriv_eval(const Poly& p, double x) {
  double acc = 0.0;
  for (size_t i = p.size(); i-- > 1;)
    acc = acc * x + p[i] * static_cast<double>(i);
  return acc;
}

// Real roots via the companion matrix, polished with a few Newton steps.
std::vector<double> real_roots(Poly p) {
  double scale = 0.0;
  for (double c : p) scale = std::max(scale, std::abs(c));
  if (scale == 0.0) return {};
  while (p.size() > 1 && std::abs(p.back()) < 1e-12 * scale) p.pop_back();
  const int degree = static_cast<int>(p.size()) - 1;
  if (degree < 1) return {};
  Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(degree, degree);
  for (int i = 0; i < degree; ++i)
    companion(0, i) = -p[p.size() - 2 - static_cast<size_t>(i)] / p.back();
  for (int i = 1; i < degree; ++i) companion(i, i - 1) = 1.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(companion, false);
  std::vector<double> roots;
  for (int i = 0; i < degree; ++i) {
    const auto ev = es.eigenvalues()[i];
    if (std::abs(ev.imag()) > 1e-8 * (1.0 + std::abs(ev.real()))) continue;
    double x = ev.real();
    for (int it = 0; it < 3; ++it) {
      const double d = poly_deriv_eval(p, x);
      if (std::abs(d) < 1e-30) break;
      x -= poly_eval(p, x) / d;
    }
    roots.push_back(x);
  }
  return roots;
}

}  // namespace

std::vector<Pose> solve_p3p(const std::array<Vec3, 3>& world_points,
                            const std::array<Vec3, 3>& bearings) {
  const Vec3& p0 = world_points[0];
  const Vec3& p1 = world_points[1];
  const Vec3& p2 = world_points[2];

  // Collinear world points have no unique pose.
  if ((p1 - p0).cross(p2 - p0).norm() <
      1e-9 * std::max(1.0, (p1 - p0).norm() * (p2 - p0).norm())) {
    return {};
  }

  const double a2 = (p1 - p2).squaredNorm();
  const double b2 = (p0 - p2).squaredNorm();
  const double c2 = (p0 - p1).squaredNorm();
  if (a2 < 1e-18 || b2 < 1e-18 || c2 < 1e-18) return {};

  const Vec3 f0 = bearings[0].normalized();
  const Vec3 f1 = bearings[1].normalized();
  const Vec3 f2 = bearings[2].normalized();
  const double cos_a = f1.dot(f2);
  const double cos_b = f0.dot(f2);
  const double cos_g = f0.dot(f1);
  // Coincident bearings are degenerate.
  if (std::abs(cos_a) > 1.0 - 1e-12 || std::abs(cos_b) > 1.0 - 1e-12 ||
      std::abs(cos_g) > 1.0 - 1e-12) {
    return {};
  }

  // Distances s_i from the camera center obey the law of cosines:
  //   s1² + s2² - 2 s1 s2 cos_a = a², and cyclically. With u = s1/s0,
  //   v = s2/s0, K1 = a²/b², K2 = c²/b²:
  //   (i)  u² + v² - 2uv cos_a - K1 (1 + v² - 2v cos_b) = 0
  //   (ii) 1 + u² - 2u cos_g  - K2 (1 + v² - 2v cos_b) = 0
  // (i)-(ii) is linear in u, so u = N(v)/D(v); substituting into (ii)
  // yields a quartic in v, assembled here by polynomial arithmetic.
  const double k1 = a2 / b2;
  const double k2 = c2 / b2;
  const Poly q = {1.0, -2.0 * cos_b, 1.0};  // 1 + v² - 2v cos_b
  const Poly n = poly_add(poly_scale(q, k1 - k2), Poly{1.0, 0.0, -1.0});
  const Poly d = {2.0 * cos_g, -2.0 * cos_a};
  // (ii) * D²:  N² - 2 cos_g N D + D² (1 - K2 q) = 0
  const Poly quartic = poly_add(
      poly_add(poly_mul(n, n), poly_scale(poly_mul(n, d), -2.0 * cos_g)),
      poly_mul(poly_mul(d, d), poly_add(Poly{1.0}, poly_scale(q, -k2))));

  std::vector<Pose> poses;
  for (double v : real_roots(quartic)) {
    if (!(v > 0.0)) continue;
    const double denom = poly_eval(d, v);
    if (std::abs(denom) < 1e-12) continue;
    const double u = poly_eval(n, v) / denom;
    if (!(u > 0.0)) continue;
    const double s0_sq = b2 / poly_eval(q, v);
    if (!(s0_sq > 0.0)) continue;
    const double s0 = std::sqrt(s0_sq);

    Mat3X camera(3, 3), world(3, 3);
    camera.col(0) = s0 * f0;
    camera.col(1) = u * s0 * f1;
    camera.col(2) = v * s0 * f2;
    world.col(0) = p0;
    world.col(1) = p1;
    world.col(2) = p2;
    try {
      auto [pose, trace] = weighted_kabsch(camera, world, VecX::Ones(3));
      (void)trace;
      // Keep candidates that actually reproduce the three points.
      double err = 0.0;
      for (int i = 0; i < 3; ++i)
        err += (world.col(i) - pose.apply(camera.col(i))).squaredNorm();
      if (err < 1e-8 * (1.0 + b2)) poses.push_back(pose);
    } catch (const Error&) {
      continue;
    }
  }
  return poses;
}

Pose refine_pnp(const Pose& initial, const Mat3X& world_points,
                const Mat2X& pixels, const CameraIntrinsics& k,
                int max_iterations) {
  const Eigen::Index m = world_points.cols();
  Pose cam = invert(initial);  // work in global->camera

  auto total_error = [&](const Pose& gc) {
    double e = 0.0;
    for (Eigen::Index i = 0; i < m; ++i) {
      const Vec3 x = gc.apply(world_points.col(i));
      if (x.z() <= kBehindCameraEps) return std::numeric_limits<double>::max();
      const double du = k.fx * x.x() / x.z() + k.cx - pixels(0, i);
      const double dv = k.fy * x.y() / x.z() + k.cy - pixels(1, i);
      e += du * du + dv * dv;
    }
    return e;
  };

  double err = total_error(cam);
  double damping = 1e-6;
  for (int it = 0; it < max_iterations; ++it) {
    Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
    for (Eigen::Index i = 0; i < m; ++i) {
      const Vec3 x = cam.apply(world_points.col(i));
      if (x.z() <= kBehindCameraEps) continue;
      Eigen::Matrix<double, 2, 3> jp;
      jp << k.fx / x.z(), 0.0, -k.fx * x.x() / (x.z() * x.z()), 0.0,
          k.fy / x.z(), -k.fy * x.y() / (x.z() * x.z());
      // Left perturbation: x = exp(w) (R p + t) + dt, so dx/dw = -[x]x.
      Eigen::Matrix3d skew;
      skew << 0, -x.z(), x.y(), x.z(), 0, -x.x(), -x.y(), x.x(), 0;
      Eigen::Matrix<double, 2, 6> jac;
      jac.block<2, 3>(0, 0) = -jp * skew;
      jac.block<2, 3>(0, 3) = jp;
      Eigen::Vector2d r(k.fx * x.x() / x.z() + k.cx - pixels(0, i),
                        k.fy * x.y() / x.z() + k.cy - pixels(1, i));
      h += jac.transpose() * jac;
      g += jac.transpose() * r;
    }
    bool improved = false;
    for (int attempt = 0; attempt < 8; ++attempt) {
      Eigen::Matrix<double, 6, 6> damped = h;
      damped.diagonal().array() += damping;
      const Eigen::Matrix<double, 6, 1> delta = damped.ldlt().solve(-g);
      Pose next = cam;
      const Vec3 w(delta[0], delta[1], delta[2]);
      const double angle = w.norm();
      if (angle > 1e-16) next.rotation = axis_angle(w, angle) * cam.rotation;
      next.translation =
          (angle > 1e-16 ? axis_angle(w, angle) * cam.translation
                         : cam.translation) +
          Vec3(delta[3], delta[4], delta[5]);
      const double next_err = total_error(next);
      if (next_err < err) {
        cam = next;
        err = next_err;
        damping = std::max(1e-9, damping * 0.3);
        improved = true;
        break;
      }
      damping *= 10.0;
    }
    if (!improved || err < 1e-20) break;
  }
  return invert(cam);
}

}  // namespace kloc
