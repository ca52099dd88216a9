#include "sdflab/curve.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <string>

namespace sdflab {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

void validate_nodes(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) {
    throw std::invalid_argument("curve: coordinate arrays differ in length");
  }
  const int m = static_cast<int>(x.size());
  if (m < 16 || m % 2 != 0) {
    throw std::invalid_argument("curve: need an even node count >= 16, got " +
                                std::to_string(m));
  }
  for (int j = 0; j < m; ++j) {
    if (!std::isfinite(x[j]) || !std::isfinite(y[j])) {
      throw std::invalid_argument("curve: nonfinite node " + std::to_string(j));
    }
  }
  double shoelace = 0.0;
  for (int j = 0; j < m; ++j) {
    const int k = (j + 1) % m;
    if (x[j] == x[k] && y[j] == y[k]) {
      throw std::invalid_argument("curve: nodes " + std::to_string(j) +
                                  " and " + std::to_string(k) + " coincide");
    }
    shoelace += x[j] * y[k] - x[k] * y[j];
  }
  if (shoelace <= 0.0) {
    throw std::invalid_argument(
        "curve: orientation is not counterclockwise (signed area " +
        std::to_string(0.5 * shoelace) + ")");
  }
}

}  // namespace

ParametricCurve make_curve(std::vector<double> x, std::vector<double> y) {
  validate_nodes(x, y);
  return ParametricCurve{std::move(x), std::move(y)};
}

ParametricCurve sample_curve(
    int m, const std::function<std::array<double, 2>(double)>& gamma) {
  std::vector<double> x(std::max(m, 0)), y(std::max(m, 0));
  for (int j = 0; j < m; ++j) {
    const auto p = gamma(kTwoPi * j / m);
    x[j] = p[0];
    y[j] = p[1];
  }
  return make_curve(std::move(x), std::move(y));
}

struct CurveWorkspace::Impl {
  int m;
  int mc;  // m/2 + 1 complex entries
  std::vector<double> rbuf;
  std::vector<std::complex<double>> cbuf;
  fftw_plan fwd;
  fftw_plan bwd;

  explicit Impl(int m_in) : m(m_in), mc(m_in / 2 + 1), rbuf(m_in), cbuf(mc) {
    fwd = fftw_plan_dft_r2c_1d(m, rbuf.data(),
                               reinterpret_cast<fftw_complex*>(cbuf.data()),
                               FFTW_ESTIMATE);
    bwd = fftw_plan_dft_c2r_1d(m, reinterpret_cast<fftw_complex*>(cbuf.data()),
                               rbuf.data(), FFTW_ESTIMATE);
  }
  ~Impl() {
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(bwd);
  }

  template <typename ModeFn>
  std::vector<double> apply(const std::vector<double>& v, ModeFn&& factor) {
    std::copy(v.begin(), v.end(), rbuf.begin());
    fftw_execute(fwd);
    const double inv = 1.0 / m;
    for (int k = 0; k < mc; ++k) cbuf[k] *= factor(k) * inv;
    fftw_execute(bwd);
    return std::vector<double>(rbuf.begin(), rbuf.end());
  }
};

CurveWorkspace::CurveWorkspace(int m) : m_(m) {
  if (m < 16 || m % 2 != 0) {
    throw std::invalid_argument(
        "CurveWorkspace: need an even node count >= 16, got " +
        std::to_string(m));
  }
  impl_ = std::make_unique<Impl>(m);
}

CurveWorkspace::~CurveWorkspace() = default;

std::vector<double> CurveWorkspace::derivative(const std::vector<double>& v,
                                               int order) {
  if (static_cast<int>(v.size()) != m_) {
    throw std::invalid_argument("CurveWorkspace::derivative: size mismatch");
  }
  if (order < 1 || order > 4) {
    throw std::invalid_argument("CurveWorkspace::derivative: order 1..4");
  }
  const int nyq = m_ / 2;
  return impl_->apply(v, [order, nyq](int k) {
    if (order % 2 == 1 && k == nyq) return std::complex<double>(0.0, 0.0);
    std::complex<double> ik(0.0, static_cast<double>(k));
    std::complex<double> f(1.0, 0.0);
    for (int p = 0; p < order; ++p) f *= ik;
    return f;
  });
}

std::vector<double> CurveWorkspace::solve_stabilized(
    const std::vector<double>& v, double coeff, double dt) {
  if (static_cast<int>(v.size()) != m_) {
    throw std::invalid_argument(
        "CurveWorkspace::solve_stabilized: size mismatch");
  }
  if (!(coeff > 0.0) || !(dt > 0.0)) {
    throw std::invalid_argument(
        "CurveWorkspace::solve_stabilized: need coeff > 0 and dt > 0");
  }
  return impl_->apply(v, [coeff, dt](int k) {
    const double k2 = static_cast<double>(k) * k;
    return std::complex<double>(1.0 / (1.0 + coeff * dt * k2 * k2), 0.0);
  });
}

void CurveWorkspace::coefficients(const std::vector<double>& v,
                                  std::vector<double>& cosc,
                                  std::vector<double>& sinc) {
  if (static_cast<int>(v.size()) != m_) {
    throw std::invalid_argument("CurveWorkspace::coefficients: size mismatch");
  }
  std::copy(v.begin(), v.end(), impl_->rbuf.begin());
  fftw_execute(impl_->fwd);
  const int half = m_ / 2;
  cosc.assign(half + 1, 0.0);
  sinc.assign(half + 1, 0.0);
  cosc[0] = impl_->cbuf[0].real() / m_;
  for (int k = 1; k < half; ++k) {
    cosc[k] = 2.0 * impl_->cbuf[k].real() / m_;
    sinc[k] = -2.0 * impl_->cbuf[k].imag() / m_;
  }
  cosc[half] = impl_->cbuf[half].real() / m_;
}

double TrigSeries::eval(double t) const {
  double v = cosc[0];
  for (std::size_t k = 1; k < cosc.size(); ++k) {
    v += cosc[k] * std::cos(k * t) + sinc[k] * std::sin(k * t);
  }
  return v;
}

double TrigSeries::integral_from_zero(double t) const {
  double v = cosc[0] * t;
  for (std::size_t k = 1; k < cosc.size(); ++k) {
    v += (cosc[k] * std::sin(k * t) + sinc[k] * (1.0 - std::cos(k * t))) / k;
  }
  return v;
}

TrigSeries make_series(CurveWorkspace& ws, const std::vector<double>& v) {
  TrigSeries s;
  ws.coefficients(v, s.cosc, s.sinc);
  return s;
}

CurveGeometry curve_geometry(const ParametricCurve& c, CurveWorkspace& ws) {
  const int m = c.size();
  if (m != ws.size()) {
    throw std::invalid_argument("curve_geometry: workspace built for " +
                                std::to_string(ws.size()) + " nodes, curve has " +
                                std::to_string(m));
  }
  CurveGeometry geo;
  geo.xp = ws.derivative(c.x, 1);
  geo.yp = ws.derivative(c.y, 1);
  const auto xpp = ws.derivative(c.x, 2);
  const auto ypp = ws.derivative(c.y, 2);

  geo.speed.resize(m);
  geo.kappa.resize(m);
  geo.normal_x.resize(m);
  geo.normal_y.resize(m);
  geo.min_speed = std::numeric_limits<double>::infinity();
  for (int j = 0; j < m; ++j) {
    const double s = std::hypot(geo.xp[j], geo.yp[j]);
    geo.speed[j] = s;
    geo.min_speed = std::min(geo.min_speed, s);
  }
  if (!(geo.min_speed >= 1e-10)) {
    throw GuardViolation("curve parametrization degenerates: min |gamma'| = " +
                         std::to_string(geo.min_speed));
  }
  for (int j = 0; j < m; ++j) {
    const double s = geo.speed[j];
    geo.kappa[j] = (geo.xp[j] * ypp[j] - geo.yp[j] * xpp[j]) / (s * s * s);
    geo.normal_x[j] = geo.yp[j] / s;
    geo.normal_y[j] = -geo.xp[j] / s;
  }

  const double h = kTwoPi / m;
  geo.length = pairwise_sum(geo.speed) * h;

  std::vector<double> tmp(m);
  for (int j = 0; j < m; ++j) {
    tmp[j] = c.x[j] * geo.yp[j] - c.y[j] * geo.xp[j];
  }
  geo.area = 0.5 * pairwise_sum(tmp) * h;

  for (int j = 0; j < m; ++j) tmp[j] = c.x[j] * c.x[j] * geo.yp[j];
  geo.centroid[0] = 0.5 * pairwise_sum(tmp) * h / geo.area;
  for (int j = 0; j < m; ++j) tmp[j] = c.y[j] * c.y[j] * geo.xp[j];
  geo.centroid[1] = -0.5 * pairwise_sum(tmp) * h / geo.area;

  geo.min_spacing = std::numeric_limits<double>::infinity();
  for (int j = 0; j < m; ++j) {
    const int k = (j + 1) % m;
    geo.min_spacing = std::min(
        geo.min_spacing, std::hypot(c.x[k] - c.x[j], c.y[k] - c.y[j]));
  }
  return geo;
}

std::vector<double> arclength_laplacian(const CurveGeometry& geo,
                                        const std::vector<double>& u,
                                        CurveWorkspace& ws) {
  if (u.size() != geo.speed.size()) {
    throw std::invalid_argument("arclength_laplacian: size mismatch");
  }
  auto du = ws.derivative(u, 1);
  for (std::size_t j = 0; j < du.size(); ++j) du[j] /= geo.speed[j];
  auto out = ws.derivative(du, 1);
  for (std::size_t j = 0; j < out.size(); ++j) out[j] /= geo.speed[j];
  return out;
}

ParametricCurve resample_arclength(const ParametricCurve& c,
                                   CurveWorkspace& ws) {
  const int m = c.size();
  auto geo = curve_geometry(c, ws);
  const auto s_series = make_series(ws, geo.speed);
  const auto x_series = make_series(ws, c.x);
  const auto y_series = make_series(ws, c.y);
  const double total = s_series.integral_from_zero(kTwoPi);

  std::vector<double> nx(m), ny(m);
  nx[0] = c.x[0];
  ny[0] = c.y[0];
  double lo = 0.0;
  for (int j = 1; j < m; ++j) {
    const double target = total * j / m;
    // sigma(t) is strictly increasing, so Newton with a bisection fallback
    // inside a shrinking bracket always lands.
    double hi = kTwoPi;
    double t = std::max(kTwoPi * j / m, lo);
    for (int it = 0; it < 100; ++it) {
      const double err = s_series.integral_from_zero(t) - target;
      if (std::abs(err) <= 1e-14 * total) break;
      if (err > 0.0) {
        hi = t;
      } else {
        lo = t;
      }
      double next = t - err / s_series.eval(t);
      if (!(next > lo) || !(next < hi)) next = 0.5 * (lo + hi);
      t = next;
    }
    lo = t;
    nx[j] = x_series.eval(t);
    ny[j] = y_series.eval(t);
  }
  return make_curve(std::move(nx), std::move(ny));
}

}  // namespace sdflab
