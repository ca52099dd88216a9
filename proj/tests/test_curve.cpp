// Closed-curve geometry checks against circle and ellipse closed forms, a
// Richardson-extrapolated shoelace oracle, and adaptive quadrature for the
// ellipse perimeter.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "sdflab/curve.hpp"

using namespace sdflab;

namespace {

constexpr double kPi = 3.14159265358979323846264338328;
constexpr double kTwoPi = 2.0 * kPi;

ParametricCurve circle(int m, double r, double cx, double cy) {
  return sample_curve(m, [=](double t) {
    return std::array<double, 2>{cx + r * std::cos(t), cy + r * std::sin(t)};
  });
}

ParametricCurve ellipse(int m, double a, double b) {
  return sample_curve(m, [=](double t) {
    return std::array<double, 2>{a * std::cos(t), b * std::sin(t)};
  });
}

double adaptive_simpson(const std::function<double(double)>& f, double a,
                        double b, double tol, int depth = 0) {
  const double mid = 0.5 * (a + b);
  const double fa = f(a), fm = f(mid), fb = f(b);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  const double left =
      (mid - a) / 6.0 * (fa + 4.0 * f(0.5 * (a + mid)) + fm);
  const double right =
      (b - mid) / 6.0 * (fm + 4.0 * f(0.5 * (mid + b)) + fb);
  if (depth > 40 || std::abs(left + right - whole) < 15.0 * tol) {
    return left + right + (left + right - whole) / 15.0;
  }
  return adaptive_simpson(f, a, mid, 0.5 * tol, depth + 1) +
         adaptive_simpson(f, mid, b, 0.5 * tol, depth + 1);
}

// Polygon area of the curve resampled at m points, for the shoelace oracle.
double shoelace(const TrigSeries& xs, const TrigSeries& ys, int m) {
  double area = 0.0;
  double px = xs.eval(0.0), py = ys.eval(0.0);
  const double x0 = px, y0 = py;
  for (int j = 1; j <= m; ++j) {
    const double t = kTwoPi * j / m;
    const double qx = j == m ? x0 : xs.eval(t);
    const double qy = j == m ? y0 : ys.eval(t);
    area += px * qy - qx * py;
    px = qx;
    py = qy;
  }
  return 0.5 * area;
}

}  // namespace

TEST_CASE("circle: curvature, length, area, normal, centroid") {
  const double r = 1.7, cx = 0.3, cy = -0.2;
  auto c = circle(256, r, cx, cy);
  CurveWorkspace ws(256);
  auto geo = curve_geometry(c, ws);

  for (int j = 0; j < 256; ++j) {
    CHECK(std::abs(geo.kappa[j] - 1.0 / r) < 1e-11);
    // outward normal is radial
    const double rx = (c.x[j] - cx) / r, ry = (c.y[j] - cy) / r;
    CHECK(std::abs(geo.normal_x[j] - rx) < 1e-12);
    CHECK(std::abs(geo.normal_y[j] - ry) < 1e-12);
    CHECK(std::abs(geo.speed[j] - r) < 1e-12);
  }
  CHECK(std::abs(geo.length - kTwoPi * r) < 1e-11);
  CHECK(std::abs(geo.area - kPi * r * r) < 1e-11);
  CHECK(std::abs(geo.centroid[0] - cx) < 1e-12);
  CHECK(std::abs(geo.centroid[1] - cy) < 1e-12);
  CHECK(geo.min_spacing == doctest::Approx(kTwoPi * r / 256).epsilon(1e-3));
}

TEST_CASE("ellipse: closed-form curvature and quadrature oracles") {
  const double a = 2.0, b = 1.0;
  auto c = ellipse(256, a, b);
  CurveWorkspace ws(256);
  auto geo = curve_geometry(c, ws);

  // node 0 sits at t = 0, the flat-side midpoint of maximal curvature
  CHECK(std::abs(geo.kappa[0] - a / (b * b)) < 1e-9);
  for (int j = 0; j < 256; j += 17) {
    const double t = kTwoPi * j / 256;
    const double denom = std::pow(
        a * a * std::sin(t) * std::sin(t) + b * b * std::cos(t) * std::cos(t),
        1.5);
    CHECK(std::abs(geo.kappa[j] - a * b / denom) < 1e-9);
  }

  CHECK(std::abs(geo.area - kPi * a * b) < 1e-10);
  const double perimeter = adaptive_simpson(
      [&](double t) {
        return std::hypot(a * std::sin(t), b * std::cos(t));
      },
      0.0, kTwoPi, 1e-14);
  CHECK(std::abs(geo.length - perimeter) < 1e-10);
  CHECK(std::abs(geo.centroid[0]) < 1e-12);
  CHECK(std::abs(geo.centroid[1]) < 1e-12);
}

TEST_CASE("square-ish profile: area against Richardson shoelace") {
  // four-fold bump: smooth, visibly non-circular
  const double eps = 0.15;
  auto c = sample_curve(256, [eps](double t) {
    const double r = 1.0 + eps * std::cos(4.0 * t);
    return std::array<double, 2>{r * std::cos(t), r * std::sin(t)};
  });
  CurveWorkspace ws(256);
  auto geo = curve_geometry(c, ws);

  // polar area closed form: pi (1 + eps^2/2)
  CHECK(std::abs(geo.area - kPi * (1.0 + 0.5 * eps * eps)) < 1e-12);

  auto xs = make_series(ws, c.x);
  auto ys = make_series(ws, c.y);
  const double a1 = shoelace(xs, ys, 4096);
  const double a2 = shoelace(xs, ys, 8192);
  const double richardson = (4.0 * a2 - a1) / 3.0;
  CHECK(std::abs(geo.area - richardson) < 1e-8);
}

TEST_CASE("arclength laplacian: circle eigenfunctions and conservation") {
  const double r = 2.0;
  auto c = circle(128, r, 0.0, 0.0);
  CurveWorkspace ws(128);
  auto geo = curve_geometry(c, ws);

  std::vector<double> u(128), expect(128);
  for (int j = 0; j < 128; ++j) {
    const double t = kTwoPi * j / 128;
    u[j] = std::cos(3.0 * t);
    expect[j] = -9.0 / (r * r) * u[j];
  }
  auto lap = arclength_laplacian(geo, u, ws);
  for (int j = 0; j < 128; ++j) CHECK(std::abs(lap[j] - expect[j]) < 1e-10);

  // integral of the laplacian against ds vanishes, and the operator is
  // symmetric against the arclength measure
  auto v = ws.derivative(u, 1);  // any smooth mean-zero companion
  auto lv = arclength_laplacian(geo, v, ws);
  std::vector<double> t1(128), t2(128), t3(128);
  for (int j = 0; j < 128; ++j) {
    t1[j] = lap[j] * geo.speed[j];
    t2[j] = u[j] * lv[j] * geo.speed[j];
    t3[j] = v[j] * lap[j] * geo.speed[j];
  }
  CHECK(std::abs(pairwise_sum(t1)) < 1e-12 * 128);
  CHECK(std::abs(pairwise_sum(t2) - pairwise_sum(t3)) < 1e-11 * 128);
}

TEST_CASE("stabilized solve inverts its own splitting term") {
  CurveWorkspace ws(64);
  std::vector<double> v(64);
  for (int j = 0; j < 64; ++j) {
    const double t = kTwoPi * j / 64;
    v[j] = 0.4 * std::sin(t) + 0.3 * std::cos(5.0 * t) - 0.2 * std::sin(9.0 * t);
  }
  const double coeff = 0.37, dt = 2.5e-3;
  auto v4 = ws.derivative(v, 4);
  std::vector<double> rhs(64);
  for (int j = 0; j < 64; ++j) rhs[j] = v[j] + coeff * dt * v4[j];
  auto back = ws.solve_stabilized(rhs, coeff, dt);
  for (int j = 0; j < 64; ++j) CHECK(std::abs(back[j] - v[j]) < 1e-12);

  CHECK_THROWS_AS(ws.solve_stabilized(v, 0.0, dt), std::invalid_argument);
  CHECK_THROWS_AS(ws.solve_stabilized(v, coeff, -1.0), std::invalid_argument);
}

TEST_CASE("trig series reproduces samples and integrates exactly") {
  CurveWorkspace ws(64);
  std::vector<double> v(64);
  for (int j = 0; j < 64; ++j) {
    const double t = kTwoPi * j / 64;
    v[j] = 1.2 + std::sin(2.0 * t) - 0.7 * std::cos(5.0 * t);
  }
  auto s = make_series(ws, v);
  for (int j = 0; j < 64; ++j) {
    CHECK(std::abs(s.eval(kTwoPi * j / 64) - v[j]) < 1e-13);
  }
  const double t = 0.7123;
  CHECK(std::abs(s.eval(t) -
                 (1.2 + std::sin(2.0 * t) - 0.7 * std::cos(5.0 * t))) < 1e-13);
  // running primitive: int_0^t sin(2s) ds = (1 - cos 2t)/2, etc.
  const double expect = 1.2 * t + 0.5 * (1.0 - std::cos(2.0 * t)) -
                        0.7 / 5.0 * std::sin(5.0 * t);
  CHECK(std::abs(s.integral_from_zero(t) - expect) < 1e-13);
  CHECK(std::abs(s.integral_from_zero(kTwoPi) - 1.2 * kTwoPi) < 1e-13);
}

TEST_CASE("arclength resampling equalizes spacing and stays on the curve") {
  const double a = 2.0, b = 1.0;
  auto c = ellipse(256, a, b);
  CurveWorkspace ws(256);
  auto before = curve_geometry(c, ws);
  // parameter sampling of an ellipse is visibly non-uniform in arclength
  CHECK(before.min_speed < 0.999 * before.length / kTwoPi);

  auto rc = resample_arclength(c, ws);
  auto after = curve_geometry(rc, ws);

  CHECK(rc.x[0] == c.x[0]);
  CHECK(rc.y[0] == c.y[0]);
  for (int j = 0; j < 256; ++j) {
    // uniform arclength parametrization has constant speed L / 2 pi
    CHECK(std::abs(after.speed[j] - after.length / kTwoPi) <
          1e-9 * after.length);
    // nodes stay on the original ellipse
    const double on = rc.x[j] * rc.x[j] / (a * a) + rc.y[j] * rc.y[j] / (b * b);
    CHECK(std::abs(on - 1.0) < 1e-10);
  }
  CHECK(std::abs(after.length - before.length) < 1e-12 * before.length);
  CHECK(std::abs(after.area - before.area) < 1e-12 * before.area);
}

TEST_CASE("validation and degeneracy guards") {
  // clockwise circle: negative orientation is rejected
  CHECK_THROWS_AS(sample_curve(64,
                               [](double t) {
                                 return std::array<double, 2>{std::cos(-t),
                                                              std::sin(-t)};
                               }),
                  std::invalid_argument);

  // duplicate consecutive nodes
  std::vector<double> x(32, 0.0), y(32, 0.0);
  for (int j = 0; j < 32; ++j) {
    x[j] = std::cos(kTwoPi * j / 32);
    y[j] = std::sin(kTwoPi * j / 32);
  }
  x[5] = x[6];
  y[5] = y[6];
  CHECK_THROWS_AS(make_curve(x, y), std::invalid_argument);

  CHECK_THROWS_AS(sample_curve(15,
                               [](double t) {
                                 return std::array<double, 2>{std::cos(t),
                                                              std::sin(t)};
                               }),
                  std::invalid_argument);

  // cardioid: the cusp lands exactly on a node, where |gamma'| vanishes
  auto cusp = sample_curve(64, [](double t) {
    const double r = 1.0 + std::cos(t);
    return std::array<double, 2>{r * std::cos(t) + 0.0,
                                 r * std::sin(t)};
  });
  CurveWorkspace ws(64);
  CHECK_THROWS_AS(curve_geometry(cusp, ws), GuardViolation);

  CHECK_THROWS_AS(CurveWorkspace(10), std::invalid_argument);
  std::vector<double> wrong(48, 0.0);
  CHECK_THROWS_AS(ws.derivative(wrong, 1), std::invalid_argument);
}
