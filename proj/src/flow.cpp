#include "sdflab/flow.hpp"

#include "sdflab/stability.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace sdflab {

const char* halt_reason_name(HaltReason reason) {
  switch (reason) {
    case HaltReason::converged: return "converged";
    case HaltReason::max_steps: return "max_steps";
    case HaltReason::c1_bound: return "c1_bound";
    case HaltReason::energy_bound: return "energy_bound";
    case HaltReason::volume_distance_bound: return "volume_distance_bound";
    case HaltReason::guard_violation: return "guard_violation";
  }
  return "unknown";
}

bool halt_is_failure(HaltReason reason) {
  return reason == HaltReason::c1_bound || reason == HaltReason::energy_bound ||
         reason == HaltReason::volume_distance_bound ||
         reason == HaltReason::guard_violation;
}

namespace {

constexpr double kTwoPi = 6.28318530717958647692528676656;

void validate_config(const FlowConfig& c) {
  if (c.sample_every < 1)
    throw std::invalid_argument("flow: sample_every must be >= 1");
  if (c.resample_every < 1)
    throw std::invalid_argument("flow: resample_every must be >= 1");
  if (c.max_steps < 0)
    throw std::invalid_argument("flow: max_steps must be >= 0");
  if (!(c.lyapunov_k > 2.0))
    throw std::invalid_argument("flow: lyapunov_k must exceed 2");
  if (!(c.convergence_tol > 0.0))
    throw std::invalid_argument("flow: convergence_tol must be positive");
  if (c.scheme == TimeScheme::imex_stabilized && c.stabilizer > 0.0 &&
      c.stabilizer < 1.0)
    throw std::invalid_argument("flow: imex stabilizer must be >= 1");
}

GeometryOptions geometry_options(const FlowConfig& c) {
  GeometryOptions opt;
  opt.dealias_curvature = c.dealias;
  opt.threads = c.threads;
  return opt;
}

double default_dt(const FlowConfig& c, double h) {
  return c.scheme == TimeScheme::imex_stabilized ? 1e-3 * h * h
                                                 : 0.05 * h * h * h * h;
}

double resolve_stabilizer(const FlowConfig& c, double sup_grad) {
  if (c.stabilizer > 0.0) return c.stabilizer;
  const double w2 = 1.0 + sup_grad * sup_grad;
  return 1.0 + w2 * w2;
}

double vector_sup(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s = std::max(s, std::abs(x));
  return s;
}

}  // namespace

ScalarField normal_velocity(const GeometryCache& cache, SpectralWorkspace& ws,
                            bool volume_correction) {
  ScalarField h{cache.grid, cache.H};
  ScalarField v = laplace_beltrami(cache, h, ws);
  if (volume_correction) {
    const double mean = surface_integral(cache, v) / cache.area;
    for (double& x : v.values) x -= mean;
  }
  return v;
}

namespace {

// Vertical velocity W * V: the graph moves at V along the normal, whose
// vertical component is 1/W.
ScalarField vertical_velocity(const GeometryCache& cache, SpectralWorkspace& ws,
                              const FlowConfig& config, double* sup_v) {
  ScalarField v = normal_velocity(cache, ws, config.volume_correction);
  if (sup_v) *sup_v = vector_sup(v.values);
  for (std::size_t p = 0; p < v.values.size(); ++p)
    v.values[p] *= cache.sqrt_det_g[p];
  if (config.dealias) v = ws.dealias(v);
  return v;
}

// Restores the enclosed volume by a constant shift, with one refinement
// round so the residual is a single rounding error, not a random walk.
double restore_volume(GraphSurface& s, double target) {
  const double box = s.grid()->box_volume();
  double shift = 0.0;
  for (int round = 0; round < 2; ++round) {
    const double c = (target - enclosed_volume(s)) / box;
    for (double& x : s.heights.values) x += c;
    shift += c;
  }
  return shift;
}

}  // namespace

GraphSurface step_graph(const GraphSurface& surface, SpectralWorkspace& ws,
                        const FlowConfig& config, double dt, double stabilizer,
                        double volume_target, StepReport* report) {
  if (!(dt > 0.0)) throw std::invalid_argument("step_graph: dt must be positive");
  const GeometryOptions opt = geometry_options(config);
  GeometryCache cache = build_geometry(surface, ws, opt);

  StepReport rep;
  rep.volume_before = cache.volume;
  rep.area_before = cache.area;

  GraphSurface next = surface;
  if (config.scheme == TimeScheme::imex_stabilized) {
    if (!(stabilizer >= 1.0))
      throw std::invalid_argument("step_graph: stabilizer must be >= 1");
    ScalarField vel = vertical_velocity(cache, ws, config, &rep.sup_velocity);
    ScalarField b = ws.bilaplacian(surface.heights);
    ScalarField rhs = surface.heights;
    for (std::size_t p = 0; p < rhs.values.size(); ++p)
      rhs.values[p] += dt * (vel.values[p] + stabilizer * b.values[p]);
    next.heights = ws.solve_stabilized(rhs, stabilizer, dt);
  } else {
    // Classic RK4 on df/dt = W V(f); the inner stages build their own
    // geometry, so guard breaches at any stage abort the step.
    ScalarField k1 = vertical_velocity(cache, ws, config, &rep.sup_velocity);
    auto stage = [&](const ScalarField& k, double factor) {
      GraphSurface probe = surface;
      for (std::size_t p = 0; p < probe.heights.values.size(); ++p)
        probe.heights.values[p] += factor * dt * k.values[p];
      GeometryCache c = build_geometry(probe, ws, opt);
      return vertical_velocity(c, ws, config, nullptr);
    };
    ScalarField k2 = stage(k1, 0.5);
    ScalarField k3 = stage(k2, 0.5);
    ScalarField k4 = stage(k3, 1.0);
    for (std::size_t p = 0; p < next.heights.values.size(); ++p)
      next.heights.values[p] += dt / 6.0 *
                                (k1.values[p] + 2.0 * k2.values[p] +
                                 2.0 * k3.values[p] + k4.values[p]);
  }

  if (config.volume_correction)
    rep.correction = restore_volume(next, volume_target);
  rep.volume_after = enclosed_volume(next);
  if (report) {
    // The post-step area costs one extra geometry build, so it is only
    // assembled when a report was asked for.
    GeometryCache after = build_geometry(next, ws, opt);
    rep.area_after = after.area;
    *report = rep;
  }
  return next;
}

namespace {

struct CurveVelocity {
  std::vector<double> vx, vy;
  double sup_v = 0.0;
};

CurveVelocity curve_velocity(const ParametricCurve& c, const CurveGeometry& geo,
                             CurveWorkspace& ws, const FlowConfig& config) {
  const int m = c.size();
  const double w = kTwoPi / m;
  std::vector<double> v = arclength_laplacian(geo, geo.kappa, ws);
  if (config.volume_correction) {
    std::vector<double> terms(m);
    for (int j = 0; j < m; ++j) terms[j] = v[j] * geo.speed[j];
    const double mean = pairwise_sum(terms) * w / geo.length;
    for (int j = 0; j < m; ++j) v[j] -= mean;
  }
  CurveVelocity out;
  out.vx.resize(m);
  out.vy.resize(m);
  out.sup_v = vector_sup(v);
  for (int j = 0; j < m; ++j) {
    out.vx[j] = v[j] * geo.normal_x[j];
    out.vy[j] = v[j] * geo.normal_y[j];
  }
  return out;
}

void check_spacing(const CurveGeometry& geo) {
  if (geo.min_spacing < 1e-8)
    throw GuardViolation("step_curve: node collision (spacing below 1e-8)");
}

// Dilation about the area centroid; the enclosed area scales by exactly
// lambda^2, so one round restores the target to round-off.
double restore_area(ParametricCurve& c, const CurveGeometry& geo,
                    double target) {
  const double lambda = std::sqrt(target / geo.area);
  for (int j = 0; j < c.size(); ++j) {
    c.x[j] = geo.centroid[0] + lambda * (c.x[j] - geo.centroid[0]);
    c.y[j] = geo.centroid[1] + lambda * (c.y[j] - geo.centroid[1]);
  }
  return lambda - 1.0;
}

}  // namespace

ParametricCurve step_curve(const ParametricCurve& curve, CurveWorkspace& ws,
                           const FlowConfig& config, double dt,
                           double stabilizer, double area_target,
                           StepReport* report) {
  if (!(dt > 0.0)) throw std::invalid_argument("step_curve: dt must be positive");
  CurveGeometry geo = curve_geometry(curve, ws);
  check_spacing(geo);

  StepReport rep;
  rep.volume_before = geo.area;
  rep.area_before = geo.length;

  const int m = curve.size();
  ParametricCurve next = curve;
  if (config.scheme == TimeScheme::imex_stabilized) {
    if (!(stabilizer >= 1.0))
      throw std::invalid_argument("step_curve: stabilizer must be >= 1");
    CurveVelocity vel = curve_velocity(curve, geo, ws, config);
    rep.sup_velocity = vel.sup_v;
    // Fourth parameter derivative approximates the arclength bilaplacian
    // through the ds/dt scale rho; each coordinate is stabilized separately.
    const double rho = geo.length / kTwoPi;
    const double coeff = stabilizer / (rho * rho * rho * rho);
    std::vector<double> x4 = ws.derivative(curve.x, 4);
    std::vector<double> y4 = ws.derivative(curve.y, 4);
    std::vector<double> rx(m), ry(m);
    for (int j = 0; j < m; ++j) {
      rx[j] = curve.x[j] + dt * (vel.vx[j] + coeff * x4[j]);
      ry[j] = curve.y[j] + dt * (vel.vy[j] + coeff * y4[j]);
    }
    next.x = ws.solve_stabilized(rx, coeff, dt);
    next.y = ws.solve_stabilized(ry, coeff, dt);
  } else {
    CurveVelocity k1 = curve_velocity(curve, geo, ws, config);
    rep.sup_velocity = k1.sup_v;
    auto stage = [&](const CurveVelocity& k, double factor) {
      ParametricCurve probe = curve;
      for (int j = 0; j < m; ++j) {
        probe.x[j] += factor * dt * k.vx[j];
        probe.y[j] += factor * dt * k.vy[j];
      }
      CurveGeometry g = curve_geometry(probe, ws);
      check_spacing(g);
      return curve_velocity(probe, g, ws, config);
    };
    CurveVelocity k2 = stage(k1, 0.5);
    CurveVelocity k3 = stage(k2, 0.5);
    CurveVelocity k4 = stage(k3, 1.0);
    for (int j = 0; j < m; ++j) {
      next.x[j] += dt / 6.0 * (k1.vx[j] + 2.0 * k2.vx[j] + 2.0 * k3.vx[j] + k4.vx[j]);
      next.y[j] += dt / 6.0 * (k1.vy[j] + 2.0 * k2.vy[j] + 2.0 * k3.vy[j] + k4.vy[j]);
    }
  }

  CurveGeometry after = curve_geometry(next, ws);
  check_spacing(after);
  if (config.volume_correction) {
    rep.correction = restore_area(next, after, area_target);
    rep.volume_after = area_target;
    rep.area_after = (1.0 + rep.correction) * after.length;
  } else {
    rep.volume_after = after.area;
    rep.area_after = after.length;
  }
  if (report) *report = rep;
  return next;
}

namespace {

SeriesRow graph_row(const GeometryCache& cache, const GraphSurface& s,
                    SpectralWorkspace& ws, const FlowConfig& config, double t,
                    double level, double sigma, const GraphTranslateFit& fit) {
  SeriesRow row;
  row.t = t;
  row.area = cache.area;
  row.volume = cache.volume;
  row.sup_grad = cache.sup_grad;
  row.dirichlet = dirichlet_energy(cache, ws);
  row.hessian = hessian_energy(cache, ws);
  row.lyapunov = row.hessian + config.lyapunov_k * row.dirichlet;
  ScalarField v = normal_velocity(cache, ws, config.volume_correction);
  row.pi_margin = quadratic_form(cache, v, ws) - sigma * row.dirichlet;
  row.distance = lamella_distance(s, level);
  row.fit_residual = fit.residual_sup;
  return row;
}

SeriesRow curve_row(const ParametricCurve& c, const CurveGeometry& geo,
                    CurveWorkspace& ws, const FlowConfig& config, double t,
                    double sigma, const CircleFit& fit) {
  SeriesRow row;
  row.t = t;
  row.area = geo.length;
  row.volume = geo.area;
  row.sup_grad = vector_sup(geo.kappa);
  row.dirichlet = curve_dirichlet_energy(geo, ws);
  row.hessian = curve_hessian_energy(geo, ws);
  row.lyapunov = row.hessian + config.lyapunov_k * row.dirichlet;
  row.pi_margin = curve_pi_margin(geo, ws, sigma);
  row.distance = circle_distance(c, geo, fit);
  row.fit_residual = fit.residual_sup;
  row.deficit = isoperimetric_deficit(geo);
  return row;
}

}  // namespace

GraphRunResult run_graph_flow(const GraphSurface& initial,
                              const FlowConfig& config) {
  validate_config(config);
  const GridPtr& grid = initial.grid();
  SpectralWorkspace ws(grid);
  const GeometryOptions opt = geometry_options(config);

  GraphRunResult out;
  out.surface = initial;
  const double volume_target = enclosed_volume(initial);
  out.reference_level = volume_target / grid->box_volume();

  out.dt = config.dt > 0.0 ? config.dt
                           : default_dt(config, grid->min_spacing());
  GeometryCache cache = build_geometry(out.surface, ws, opt);
  const double stabilizer = resolve_stabilizer(config, cache.sup_grad);
  out.sigma = config.sigma > 0.0
                  ? config.sigma
                  : analytic_sigma_min(
                        lamella_reference(grid, out.reference_level));
  double c1 = config.c1_bound;
  if (c1 <= 0.0) {
    double min_period = grid->period(0);
    for (int a = 1; a < grid->dim(); ++a)
      min_period = std::min(min_period, grid->period(a));
    c1 = 0.4 * min_period;
  }

  bool halted = false;
  while (!halted) {
    const GraphTranslateFit fit = translate_fit(out.surface, out.reference_level);
    if (out.steps % config.sample_every == 0) {
      SeriesRow row = graph_row(cache, out.surface, ws, config, out.time,
                                out.reference_level, out.sigma, fit);
      out.series.push_back(row);
      if (fit.residual_sup < config.convergence_tol) {
        out.halt = HaltReason::converged;
        halted = true;
        continue;
      }
      if (config.energy_bound > 0.0 && !(row.lyapunov <= config.energy_bound)) {
        out.halt = HaltReason::energy_bound;
        halted = true;
        continue;
      }
      if (config.volume_distance_bound > 0.0 &&
          !(row.distance <= config.volume_distance_bound)) {
        out.halt = HaltReason::volume_distance_bound;
        halted = true;
        continue;
      }
    }
    // Negated comparison so a non-finite state (scheme blowup) also lands
    // in the C^1 halt instead of slipping past a NaN comparison.
    if (!(std::max(fit.residual_sup, cache.sup_grad) <= c1)) {
      out.halt = HaltReason::c1_bound;
      break;
    }
    if (out.steps >= config.max_steps) {
      out.halt = HaltReason::max_steps;
      break;
    }
    // Advance one step; on a guard breach retry once at half the step,
    // then give up.
    bool advanced = false;
    for (double try_dt : {out.dt, 0.5 * out.dt}) {
      try {
        GraphSurface next = step_graph(out.surface, ws, config, try_dt,
                                       stabilizer, volume_target);
        GeometryCache next_cache = build_geometry(next, ws, opt);
        out.surface = std::move(next);
        cache = std::move(next_cache);
        out.time += try_dt;
        advanced = true;
        break;
      } catch (const GuardViolation&) {
      }
    }
    if (!advanced) {
      out.halt = HaltReason::guard_violation;
      break;
    }
    ++out.steps;
  }

  if (out.series.empty() || out.series.back().t != out.time) {
    const GraphTranslateFit fit = translate_fit(out.surface, out.reference_level);
    out.series.push_back(graph_row(cache, out.surface, ws, config, out.time,
                                   out.reference_level, out.sigma, fit));
  }
  return out;
}

CurveRunResult run_curve_flow(const ParametricCurve& initial,
                              const FlowConfig& config) {
  validate_config(config);
  CurveWorkspace ws(initial.size());

  CurveRunResult out;
  out.curve = initial;
  CurveGeometry geo = curve_geometry(out.curve, ws);
  const double area_target = geo.area;
  out.reference_radius = std::sqrt(area_target / std::acos(-1.0));
  // sigma of the equal-area circle: the m=2 mode of the second variation.
  out.sigma = config.sigma > 0.0
                  ? config.sigma
                  : 3.0 / (out.reference_radius * out.reference_radius);
  out.dt = config.dt > 0.0 ? config.dt : default_dt(config, geo.min_spacing);
  const double stabilizer = resolve_stabilizer(config, 0.0);
  const double c1 =
      config.c1_bound > 0.0 ? config.c1_bound : 0.4 * out.reference_radius;

  bool halted = false;
  while (!halted) {
    const CircleFit fit = circle_fit(out.curve, geo);
    if (out.steps % config.sample_every == 0) {
      SeriesRow row =
          curve_row(out.curve, geo, ws, config, out.time, out.sigma, fit);
      out.series.push_back(row);
      if (fit.residual_sup < config.convergence_tol) {
        out.halt = HaltReason::converged;
        halted = true;
        continue;
      }
      if (config.energy_bound > 0.0 && !(row.lyapunov <= config.energy_bound)) {
        out.halt = HaltReason::energy_bound;
        halted = true;
        continue;
      }
      if (config.volume_distance_bound > 0.0 &&
          !(row.distance <= config.volume_distance_bound)) {
        out.halt = HaltReason::volume_distance_bound;
        halted = true;
        continue;
      }
    }
    if (!(fit.residual_sup <= c1)) {
      out.halt = HaltReason::c1_bound;
      break;
    }
    if (out.steps >= config.max_steps) {
      out.halt = HaltReason::max_steps;
      break;
    }
    bool advanced = false;
    for (double try_dt : {out.dt, 0.5 * out.dt}) {
      try {
        ParametricCurve next = step_curve(out.curve, ws, config, try_dt,
                                          stabilizer, area_target);
        if ((out.steps + 1) % config.resample_every == 0) {
          next = resample_arclength(next, ws);
          if (config.volume_correction) {
            CurveGeometry g = curve_geometry(next, ws);
            restore_area(next, g, area_target);
          }
        }
        CurveGeometry next_geo = curve_geometry(next, ws);
        check_spacing(next_geo);
        out.curve = std::move(next);
        geo = std::move(next_geo);
        out.time += try_dt;
        advanced = true;
        break;
      } catch (const GuardViolation&) {
      }
    }
    if (!advanced) {
      out.halt = HaltReason::guard_violation;
      break;
    }
    ++out.steps;
  }

  if (out.series.empty() || out.series.back().t != out.time) {
    const CircleFit fit = circle_fit(out.curve, geo);
    out.series.push_back(
        curve_row(out.curve, geo, ws, config, out.time, out.sigma, fit));
  }
  return out;
}

}  // namespace sdflab
