#pragma once
// Closed plane curves sampled at uniform parameter values, with spectral
// differentiation in the parameter. Geometric quantities (curvature,
// arclength operators, enclosed area) are intrinsic, so the parametrization
// only needs to stay nondegenerate; a periodic resampler re-equalizes the
// nodes in arclength between flow steps.

#include <array>
#include <functional>
#include <memory>
#include <vector>

#include "sdflab/geometry.hpp"

namespace sdflab {

// Closed curve with m uniform parameter nodes t_j = 2 pi j / m, positively
// oriented (counterclockwise, enclosed area > 0).
struct ParametricCurve {
  std::vector<double> x, y;
  int size() const { return static_cast<int>(x.size()); }
};

// Validates node count (even, >= 16), finiteness, distinct consecutive
// nodes and positive orientation.
ParametricCurve make_curve(std::vector<double> x, std::vector<double> y);

// Samples gamma(t) at m uniform parameter values and validates as above.
ParametricCurve sample_curve(
    int m, const std::function<std::array<double, 2>(double)>& gamma);

struct CurveGeometry {
  std::vector<double> xp, yp;            // d gamma / dt
  std::vector<double> speed;             // |gamma'|
  std::vector<double> kappa;             // curvature, 1/R on a CCW circle
  std::vector<double> normal_x, normal_y;  // outward unit normal
  double length = 0.0;
  double area = 0.0;                     // enclosed area (positive)
  std::array<double, 2> centroid{0.0, 0.0};  // area centroid
  double min_speed = 0.0;
  double min_spacing = 0.0;              // smallest node-to-node distance
};

// FFT plans and scratch for curves with a fixed node count. Not shareable
// across threads, same ownership rules as SpectralWorkspace.
class CurveWorkspace {
 public:
  explicit CurveWorkspace(int m);
  ~CurveWorkspace();
  CurveWorkspace(const CurveWorkspace&) = delete;
  CurveWorkspace& operator=(const CurveWorkspace&) = delete;

  int size() const { return m_; }

  // d^order v / dt^order, order 1..4, odd orders drop the Nyquist mode.
  std::vector<double> derivative(const std::vector<double>& v, int order);

  // Solves w + coeff*dt*w'''' = v mode by mode (coeff > 0, dt > 0).
  std::vector<double> solve_stabilized(const std::vector<double>& v,
                                       double coeff, double dt);

  // Cosine/sine coefficients, index k = 0..m/2 (sine Nyquist entry is 0).
  void coefficients(const std::vector<double>& v, std::vector<double>& cosc,
                    std::vector<double>& sinc);

 private:
  struct Impl;
  int m_;
  std::unique_ptr<Impl> impl_;
};

// Trigonometric interpolant of uniform closed samples, exact at the nodes.
struct TrigSeries {
  std::vector<double> cosc, sinc;
  double eval(double t) const;
  // Running primitive int_0^t of the series, used for the arclength map.
  double integral_from_zero(double t) const;
};

TrigSeries make_series(CurveWorkspace& ws, const std::vector<double>& v);

// All pointwise and integral quantities; throws GuardViolation when the
// parametrization degenerates (min |gamma'| < 1e-10).
CurveGeometry curve_geometry(const ParametricCurve& c, CurveWorkspace& ws);

// Arclength Laplacian (1/|g'|) d/dt ( u' / |g'| ), the curve analogue of
// the divergence-form surface operator.
std::vector<double> arclength_laplacian(const CurveGeometry& geo,
                                        const std::vector<double>& u,
                                        CurveWorkspace& ws);

// Moves the nodes along the trigonometric interpolant so they become
// uniformly spaced in arclength. Node 0 stays anchored.
ParametricCurve resample_arclength(const ParametricCurve& c,
                                   CurveWorkspace& ws);

}  // namespace sdflab
