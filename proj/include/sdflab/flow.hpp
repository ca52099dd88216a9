#pragma once
// Time integration of the fourth-order flow for graph surfaces and closed
// curves. Default scheme is a stabilized implicit-explicit splitting (the
// stiff constant-coefficient bilaplacian is solved exactly per mode, the
// geometric remainder is explicit); an explicit RK4 alternative exists for
// cross-validation. The conserved bulk quantity (enclosed volume for graphs,
// enclosed area for curves) is restored exactly after every step, and the
// run loop monitors the same continuation alternatives the analysis uses:
// a C^1 bound, an energy bound and a distance bound.

#include <vector>

#include "sdflab/curve.hpp"
#include "sdflab/diagnostics.hpp"
#include "sdflab/geometry.hpp"

namespace sdflab {

enum class TimeScheme { imex_stabilized, explicit_rk4 };

enum class HaltReason {
  converged,
  max_steps,
  c1_bound,
  energy_bound,
  volume_distance_bound,
  guard_violation,
};

const char* halt_reason_name(HaltReason reason);

// Guard-class halts: the run left the monitored neighbourhood instead of
// finishing. Drives the process exit code of the CLI.
bool halt_is_failure(HaltReason reason);

struct FlowConfig {
  double dt = 0.0;        // <= 0 picks the scheme default for the grid
  TimeScheme scheme = TimeScheme::imex_stabilized;
  double stabilizer = 0.0;  // <= 0 picks 1 + sup(1 + |grad f0|^2)^2
  bool volume_correction = true;
  long max_steps = 1000;
  int sample_every = 10;
  bool dealias = true;
  double c1_bound = 0.0;    // <= 0 picks 0.4 * min period (0.4 * radius for curves)
  double energy_bound = 0.0;           // <= 0 disables the monitor
  double volume_distance_bound = 0.0;  // <= 0 disables the monitor
  double convergence_tol = 1e-9;       // sup-norm residual of the shape fit
  int resample_every = 10;             // curves: arclength re-equalization
  double lyapunov_k = 4.0;
  double sigma = 0.0;  // <= 0 picks the analytic reference constant
  int threads = 1;
};

// One diagnostics sample. For curves, area holds the length, volume the
// enclosed area, sup_grad the largest |kappa|, and fit_residual the sup
// deviation from the fitted equal-area circle.
struct SeriesRow {
  double t = 0.0;
  double area = 0.0;
  double volume = 0.0;
  double dirichlet = 0.0;
  double hessian = 0.0;
  double lyapunov = 0.0;
  double sup_grad = 0.0;
  double distance = 0.0;
  double pi_margin = 0.0;
  double fit_residual = 0.0;
  double deficit = 0.0;  // curves only, 0 for graphs
};

struct StepReport {
  double volume_before = 0.0;
  double volume_after = 0.0;
  double area_before = 0.0;
  double area_after = 0.0;
  double sup_velocity = 0.0;
  double correction = 0.0;  // constant shift (graphs) or scale - 1 (curves)
};

// V = Lap_g H; with the correction enabled the mu-mean is subtracted so the
// discrete flow conserves volume at the velocity level too.
ScalarField normal_velocity(const GeometryCache& cache, SpectralWorkspace& ws,
                            bool volume_correction = true);

// One accepted step. dt and stabilizer must already be resolved (> 0); the
// constant vertical shift restores enclosed_volume to volume_target exactly.
// Guard breaches inside the geometry build propagate as GuardViolation.
GraphSurface step_graph(const GraphSurface& surface, SpectralWorkspace& ws,
                        const FlowConfig& config, double dt, double stabilizer,
                        double volume_target, StepReport* report = nullptr);

// Curve analogue: V = Lap_s kappa with the length-mean removed, motion along
// the outward normal, stabilized per coordinate, enclosed area restored by a
// uniform dilation about the area centroid. Node collisions (spacing below
// 1e-8) raise GuardViolation.
ParametricCurve step_curve(const ParametricCurve& curve, CurveWorkspace& ws,
                           const FlowConfig& config, double dt,
                           double stabilizer, double area_target,
                           StepReport* report = nullptr);

struct GraphRunResult {
  std::vector<SeriesRow> series;
  GraphSurface surface;
  HaltReason halt = HaltReason::max_steps;
  long steps = 0;
  double time = 0.0;
  double reference_level = 0.0;  // equal-volume lamella height
  double sigma = 0.0;            // constant used in the margin column
  double dt = 0.0;               // resolved step size
};

struct CurveRunResult {
  std::vector<SeriesRow> series;
  ParametricCurve curve;
  HaltReason halt = HaltReason::max_steps;
  long steps = 0;
  double time = 0.0;
  double reference_radius = 0.0;  // equal-area circle radius
  double sigma = 0.0;
  double dt = 0.0;
};

// Integrates until convergence (shape-fit sup residual below tol, checked at
// sample rows), max_steps, or a monitor breach. A guarded step is retried
// once at half the step size before halting. Every sample row lands in the
// series; the final state always gets a row.
GraphRunResult run_graph_flow(const GraphSurface& initial,
                              const FlowConfig& config);

CurveRunResult run_curve_flow(const ParametricCurve& initial,
                              const FlowConfig& config);

}  // namespace sdflab
