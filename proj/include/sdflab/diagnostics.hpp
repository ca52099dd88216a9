#pragma once
// Read-only diagnostics evaluated along a flow: curvature energies, the exact
// time-derivative identity of the Dirichlet energy, distance and translation
// fits against the expected limit shape, coercivity margins of the second
// variation, exponential rate fits and sampled functional-inequality probes.
// Everything here consumes already-built geometry and never mutates it.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "sdflab/curve.hpp"
#include "sdflab/geometry.hpp"
#include "sdflab/stability.hpp"

namespace sdflab {

// int |grad H|^2_g dmu. This is the quantity whose decay drives every
// convergence statement, so it gets its own entry point.
double dirichlet_energy(const GeometryCache& cache, SpectralWorkspace& ws);

// int |Hess H|^2 dmu with the covariant Hessian fully contracted by g^{-1}
// on both index pairs.
double hessian_energy(const GeometryCache& cache, SpectralWorkspace& ws);

// hessian + K * dirichlet for K > 2 (throws std::invalid_argument otherwise).
// Lies between F and K*F where F = hessian + 2 * dirichlet.
double lyapunov_energy(const GeometryCache& cache, SpectralWorkspace& ws,
                       double K = 4.0);

// Pieces of the exact evolution law of the Dirichlet energy. Writing
// V = Lap_g H, along the flow
//   d/dt int |grad H|^2 dmu = -2 Pi(V) + int H V |grad H|^2 dmu
//                             - 2 int h(grad H, grad H) V dmu,
// where h(grad H, grad H) contracts the second fundamental form with the
// g^{-1}-raised gradient on both slots.
struct IdentityTerms {
  double dirichlet = 0.0;       // int |grad H|^2 dmu at this state
  double pi_of_velocity = 0.0;  // Pi(V) = int (|grad V|^2 - |B|^2 V^2) dmu
  double cubic = 0.0;           // int H V |grad H|^2 dmu
  double b_grad = 0.0;          // int h^{ij} d_iH d_jH V dmu
  double rhs() const { return -2.0 * pi_of_velocity + cubic - 2.0 * b_grad; }
};

IdentityTerms identity_terms(const GeometryCache& cache, SpectralWorkspace& ws);

// Relative mismatch between the centered difference of the Dirichlet energy
// over one sample window (dt_span = t_next - t_prev) and the analytic right
// side evaluated at the middle state. First order in the step size.
double energy_identity_residual(double dirichlet_prev, double dirichlet_next,
                                double dt_span, const IdentityTerms& mid);

// Run-time coercivity monitor Pi(Lap_g H) - sigma * int |grad H|^2 dmu.
// Stays nonnegative (up to round-off) while the flow remains in the coercive
// neighbourhood of a strictly stable reference with constant sigma.
double pi_coercivity_margin(const GeometryCache& cache, SpectralWorkspace& ws,
                            double sigma);

// Equality-case form of the same margin on a reference surface:
// Pi(phi) - sigma * |phi|^2 in L^2(dmu), with phi projected to mean zero.
// Vanishes exactly when phi is the sigma-realizing eigenfield.
double pi_coercivity_margin(const ReferenceSurface& ref,
                            const std::vector<double>& phi, double sigma);

// Distance to the flat reference at the given level: the tubular map is the
// vertical translation, so the symmetric-difference integral has the closed
// form (1/2) int (f - level)^2 dx.
double lamella_distance(const GraphSurface& surface, double level);

// Best vertical translate of the reference level and the size of what is
// left over. eta minimizes the L^2 distance, so it is the mean offset.
struct GraphTranslateFit {
  double eta = 0.0;           // fitted vertical shift relative to level
  double residual_l2 = 0.0;   // sqrt(int (f - mean f)^2 dx)
  double residual_sup = 0.0;  // sup |f - mean f|
};

GraphTranslateFit translate_fit(const GraphSurface& surface, double level);

// ---- curve-side counterparts -------------------------------------------

// int (d kappa/ds)^2 ds, the curve Dirichlet energy of the curvature.
double curve_dirichlet_energy(const CurveGeometry& geo, CurveWorkspace& ws);

// int (Lap_s kappa)^2 ds. For curves the second-order quantity replaces the
// covariant Hessian, keeping the decay-to-zero property of the energy.
double curve_hessian_energy(const CurveGeometry& geo, CurveWorkspace& ws);

// curve_hessian + K * curve_dirichlet, K > 2 enforced as in the graph case.
double curve_lyapunov_energy(const CurveGeometry& geo, CurveWorkspace& ws,
                             double K = 4.0);

// L^2/(4 pi A) - 1; zero exactly on round circles, quadratic in the
// deviation, so it decays at twice the linearized mode rate.
double isoperimetric_deficit(const CurveGeometry& geo);

// Equal-area circle fitted to the curve: center is the arclength first
// moment, the radius matches the enclosed area, residuals measure how far
// the radial profile is from constant.
struct CircleFit {
  std::array<double, 2> center{0.0, 0.0};
  double radius = 0.0;
  double residual_l2 = 0.0;   // sqrt(int (|gamma - c| - radius)^2 ds)
  double residual_sup = 0.0;  // sup | |gamma - c| - radius |
};

CircleFit circle_fit(const ParametricCurve& c, const CurveGeometry& geo);

// Symmetric-difference distance to the fitted equal-area circle, integrated
// by membership tests (crossing parity for the curve) on a background grid
// with 4x the curve node count per axis. A trend monitor, not a high-order
// quadrature.
double circle_distance(const ParametricCurve& c, const CurveGeometry& geo,
                       const CircleFit& fit);

// Pi(Lap_s kappa) - sigma * int (d kappa/ds)^2 ds with
// Pi(psi) = int ((d psi/ds)^2 - kappa^2 psi^2) ds, psi mean-projected.
double curve_pi_margin(const CurveGeometry& geo, CurveWorkspace& ws,
                       double sigma);

// ---- fits and probes -----------------------------------------------------

// Least-squares fit of log y against t. rate is the decay constant (positive
// for decreasing data), quality the coefficient of determination. Requires
// at least 10 samples, all strictly positive.
struct RateFit {
  double rate = 0.0;
  double quality = 0.0;
  int samples = 0;
};

RateFit exp_rate_fit(std::span<const double> t, std::span<const double> y);

// Worst observed ratio |u - mean u|_2 / |grad u|_2 over seeded band-limited
// samples plus the slowest Fourier mode, flat metric. The supremum over all
// fields is bound = L_max / (2 pi); the deterministic extra sample attains
// it, so worst_ratio reports the sharp constant. Near-constant samples are
// skipped and counted.
struct PoincareReport {
  double worst_ratio = 0.0;
  double bound = 0.0;
  int samples = 0;
  int skipped = 0;
};

PoincareReport poincare_probe(const GridPtr& grid, int samples,
                              std::uint64_t seed);

// Interpolation-inequality probe: ratios |grad^j u|_p / (|grad^m u|_r^theta
// |u|_q^(1-theta)) over seeded band-limited samples plus one deterministic
// pure mode (the equality case when every integrability exponent is 2). The
// exponents must satisfy 1/p = j/d + theta (1/r - m/d) + (1-theta)/q with d
// the grid dimension and theta in [j/m, 1); anything else throws. The report
// carries the worst ratio at the requested sample count and at twice that
// count so callers can check saturation.
struct GNExponents {
  int j = 1;
  int m = 2;
  double p = 2.0;
  double r = 2.0;
  double q = 2.0;
  double theta = 0.5;
};

struct GNReport {
  double worst_ratio = 0.0;
  double worst_ratio_doubled = 0.0;
  int samples = 0;
};

GNReport gn_probe(const GridPtr& grid, const GNExponents& e, int samples,
                  std::uint64_t seed);

}  // namespace sdflab
