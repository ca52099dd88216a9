#include "sdflab/diagnostics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <map>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>

namespace sdflab {

namespace {

// Quadrature against dmu: multiplies the integrand by W in place, then runs
// the deterministic pairwise sum.
double mu_quadrature(const GeometryCache& cache, std::vector<double>& terms) {
  const std::size_t n = cache.nodes();
  for (std::size_t p = 0; p < n; ++p) terms[p] *= cache.sqrt_det_g[p];
  return pairwise_sum(terms) * cache.grid->cell_volume();
}

std::vector<ScalarField> gradient_fields(const GeometryCache& cache,
                                         const ScalarField& u,
                                         SpectralWorkspace& ws) {
  std::vector<ScalarField> g;
  g.reserve(cache.dim);
  for (int a = 0; a < cache.dim; ++a)
    g.push_back(derivative(ws, u, a, 1, cache.backend));
  return g;
}

// |grad u|^2_g per node, both indices raised through g^{-1}.
std::vector<double> grad_norm2(const GeometryCache& cache,
                               const std::vector<ScalarField>& g) {
  const int d = cache.dim;
  const std::size_t n = cache.nodes();
  std::vector<double> out(n, 0.0);
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      const double w = (i == j) ? 1.0 : 2.0;
      const auto& ginv = cache.ginv[sym_index(d, i, j)];
      for (std::size_t p = 0; p < n; ++p)
        out[p] += w * ginv[p] * g[i].values[p] * g[j].values[p];
    }
  return out;
}

double curve_node_weight(int m) { return 2.0 * std::acos(-1.0) / m; }

void require_k(double K, const char* who) {
  if (!(K > 2.0))
    throw std::invalid_argument(std::string(who) + ": K must exceed 2");
}

}  // namespace

double dirichlet_energy(const GeometryCache& cache, SpectralWorkspace& ws) {
  ScalarField h{cache.grid, cache.H};
  auto g = gradient_fields(cache, h, ws);
  auto terms = grad_norm2(cache, g);
  return mu_quadrature(cache, terms);
}

double hessian_energy(const GeometryCache& cache, SpectralWorkspace& ws) {
  ScalarField h{cache.grid, cache.H};
  auto t = covariant_hessian(cache, h, ws);
  const int d = cache.dim;
  const std::size_t n = cache.nodes();
  std::vector<double> terms(n, 0.0);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      for (int k = 0; k < d; ++k)
        for (int l = 0; l < d; ++l) {
          const auto& gik = cache.ginv[sym_index(d, i, k)];
          const auto& gjl = cache.ginv[sym_index(d, j, l)];
          const auto& tij = t[sym_index(d, i, j)];
          const auto& tkl = t[sym_index(d, k, l)];
          for (std::size_t p = 0; p < n; ++p)
            terms[p] += gik[p] * gjl[p] * tij[p] * tkl[p];
        }
  return mu_quadrature(cache, terms);
}

double lyapunov_energy(const GeometryCache& cache, SpectralWorkspace& ws,
                       double K) {
  require_k(K, "lyapunov_energy");
  return hessian_energy(cache, ws) + K * dirichlet_energy(cache, ws);
}

IdentityTerms identity_terms(const GeometryCache& cache,
                             SpectralWorkspace& ws) {
  const int d = cache.dim;
  const std::size_t n = cache.nodes();
  ScalarField h{cache.grid, cache.H};
  ScalarField v = laplace_beltrami(cache, h, ws);
  auto g = gradient_fields(cache, h, ws);
  auto gh2 = grad_norm2(cache, g);

  IdentityTerms out;
  {
    auto terms = gh2;
    out.dirichlet = mu_quadrature(cache, terms);
  }
  out.pi_of_velocity = quadratic_form(cache, v, ws);
  {
    std::vector<double> terms(n);
    for (std::size_t p = 0; p < n; ++p)
      terms[p] = cache.H[p] * v.values[p] * gh2[p];
    out.cubic = mu_quadrature(cache, terms);
  }
  {
    // X^i = g^{ij} d_j H, then h_{ij} X^i X^j.
    std::vector<std::vector<double>> x(d, std::vector<double>(n, 0.0));
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) {
        const auto& gij = cache.ginv[sym_index(d, i, j)];
        for (std::size_t p = 0; p < n; ++p)
          x[i][p] += gij[p] * g[j].values[p];
      }
    std::vector<double> terms(n, 0.0);
    for (int i = 0; i < d; ++i)
      for (int j = i; j < d; ++j) {
        const double w = (i == j) ? 1.0 : 2.0;
        const auto& hij = cache.hform[sym_index(d, i, j)];
        for (std::size_t p = 0; p < n; ++p)
          terms[p] += w * hij[p] * x[i][p] * x[j][p];
      }
    for (std::size_t p = 0; p < n; ++p) terms[p] *= v.values[p];
    out.b_grad = mu_quadrature(cache, terms);
  }
  return out;
}

double energy_identity_residual(double dirichlet_prev, double dirichlet_next,
                                double dt_span, const IdentityTerms& mid) {
  if (!(dt_span > 0.0))
    throw std::invalid_argument("energy_identity_residual: dt_span <= 0");
  const double lhs = (dirichlet_next - dirichlet_prev) / dt_span;
  const double rhs = mid.rhs();
  const double denom = std::max(std::abs(lhs), std::abs(rhs));
  if (denom < 1e-14) return std::abs(lhs - rhs);
  return std::abs(lhs - rhs) / denom;
}

double pi_coercivity_margin(const GeometryCache& cache, SpectralWorkspace& ws,
                            double sigma) {
  ScalarField h{cache.grid, cache.H};
  ScalarField v = laplace_beltrami(cache, h, ws);
  return quadratic_form(cache, v, ws) - sigma * dirichlet_energy(cache, ws);
}

double pi_coercivity_margin(const ReferenceSurface& ref,
                            const std::vector<double>& phi, double sigma) {
  JacobiOperator op = assemble_jacobi(ref);
  if (phi.size() != op.n)
    throw std::invalid_argument("pi_coercivity_margin: field size mismatch");
  // Same mean projection the quadratic form applies, so both factors see
  // one and the same field.
  std::vector<double> weighted(op.n);
  for (std::size_t p = 0; p < op.n; ++p) weighted[p] = op.mu[p] * phi[p];
  const double mean = pairwise_sum(weighted) / op.area;
  for (std::size_t p = 0; p < op.n; ++p) {
    const double c = phi[p] - mean;
    weighted[p] = op.mu[p] * c * c;
  }
  const double norm2 = pairwise_sum(weighted);
  return quadratic_form(ref, phi) - sigma * norm2;
}

double lamella_distance(const GraphSurface& surface, double level) {
  const auto& f = surface.heights.values;
  std::vector<double> terms(f.size());
  for (std::size_t p = 0; p < f.size(); ++p) {
    const double c = f[p] - level;
    terms[p] = 0.5 * c * c;
  }
  return pairwise_sum(terms) * surface.grid()->cell_volume();
}

GraphTranslateFit translate_fit(const GraphSurface& surface, double level) {
  const auto& f = surface.heights.values;
  const double mean = field_sum(surface.heights) / double(f.size());
  GraphTranslateFit fit;
  fit.eta = mean - level;
  std::vector<double> terms(f.size());
  for (std::size_t p = 0; p < f.size(); ++p) {
    const double c = f[p] - mean;
    terms[p] = c * c;
    fit.residual_sup = std::max(fit.residual_sup, std::abs(c));
  }
  fit.residual_l2 =
      std::sqrt(pairwise_sum(terms) * surface.grid()->cell_volume());
  return fit;
}

double curve_dirichlet_energy(const CurveGeometry& geo, CurveWorkspace& ws) {
  auto kp = ws.derivative(geo.kappa, 1);
  std::vector<double> terms(kp.size());
  for (std::size_t j = 0; j < kp.size(); ++j)
    terms[j] = kp[j] * kp[j] / geo.speed[j];
  return pairwise_sum(terms) * curve_node_weight(ws.size());
}

double curve_hessian_energy(const CurveGeometry& geo, CurveWorkspace& ws) {
  auto lap = arclength_laplacian(geo, geo.kappa, ws);
  std::vector<double> terms(lap.size());
  for (std::size_t j = 0; j < lap.size(); ++j)
    terms[j] = lap[j] * lap[j] * geo.speed[j];
  return pairwise_sum(terms) * curve_node_weight(ws.size());
}

double curve_lyapunov_energy(const CurveGeometry& geo, CurveWorkspace& ws,
                             double K) {
  require_k(K, "curve_lyapunov_energy");
  return curve_hessian_energy(geo, ws) + K * curve_dirichlet_energy(geo, ws);
}

double isoperimetric_deficit(const CurveGeometry& geo) {
  const double pi = std::acos(-1.0);
  return geo.length * geo.length / (4.0 * pi * geo.area) - 1.0;
}

CircleFit circle_fit(const ParametricCurve& c, const CurveGeometry& geo) {
  const int m = c.size();
  const double w = curve_node_weight(m);
  const double pi = std::acos(-1.0);
  std::vector<double> tx(m), ty(m);
  for (int j = 0; j < m; ++j) {
    tx[j] = c.x[j] * geo.speed[j];
    ty[j] = c.y[j] * geo.speed[j];
  }
  CircleFit fit;
  fit.center[0] = pairwise_sum(tx) * w / geo.length;
  fit.center[1] = pairwise_sum(ty) * w / geo.length;
  fit.radius = std::sqrt(geo.area / pi);
  std::vector<double> terms(m);
  for (int j = 0; j < m; ++j) {
    const double dev = std::hypot(c.x[j] - fit.center[0],
                                  c.y[j] - fit.center[1]) -
                       fit.radius;
    terms[j] = dev * dev * geo.speed[j];
    fit.residual_sup = std::max(fit.residual_sup, std::abs(dev));
  }
  fit.residual_l2 = std::sqrt(pairwise_sum(terms) * w);
  return fit;
}

double circle_distance(const ParametricCurve& c, const CurveGeometry& geo,
                       const CircleFit& fit) {
  (void)geo;
  const int m = c.size();
  const double cx = fit.center[0], cy = fit.center[1], R = fit.radius;

  double xmin = cx - R, xmax = cx + R, ymin = cy - R, ymax = cy + R;
  for (int j = 0; j < m; ++j) {
    xmin = std::min(xmin, c.x[j]);
    xmax = std::max(xmax, c.x[j]);
    ymin = std::min(ymin, c.y[j]);
    ymax = std::max(ymax, c.y[j]);
  }
  const int nx = 4 * m, ny = 4 * m;
  const double hx = (xmax - xmin) / nx, hy = (ymax - ymin) / ny;
  // Pad by one cell so boundary cells see both sides.
  const double x0 = xmin - hx, y0 = ymin - hy;
  const int cols = nx + 2, rows = ny + 2;

  std::vector<double> cross;
  std::vector<double> contrib;
  for (int iy = 0; iy < rows; ++iy) {
    const double yc = y0 + (iy + 0.5) * hy;
    cross.clear();
    for (int j = 0; j < m; ++j) {
      const int k = (j + 1) % m;
      const double y1 = c.y[j], y2 = c.y[k];
      if ((y1 > yc) == (y2 > yc)) continue;
      cross.push_back(c.x[j] + (yc - y1) * (c.x[k] - c.x[j]) / (y2 - y1));
    }
    std::sort(cross.begin(), cross.end());
    for (int ix = 0; ix < cols; ++ix) {
      const double xc = x0 + (ix + 0.5) * hx;
      const auto it = std::upper_bound(cross.begin(), cross.end(), xc);
      const bool in_curve = (it - cross.begin()) % 2 == 1;
      const double r = std::hypot(xc - cx, yc - cy);
      const bool in_disk = r <= R;
      if (in_curve != in_disk) contrib.push_back(std::abs(r - R) * hx * hy);
    }
  }
  return pairwise_sum(contrib);
}

double curve_pi_margin(const CurveGeometry& geo, CurveWorkspace& ws,
                       double sigma) {
  const int m = ws.size();
  const double w = curve_node_weight(m);
  auto v = arclength_laplacian(geo, geo.kappa, ws);
  std::vector<double> terms(m);
  for (int j = 0; j < m; ++j) terms[j] = v[j] * geo.speed[j];
  const double mean = pairwise_sum(terms) * w / geo.length;
  for (int j = 0; j < m; ++j) v[j] -= mean;
  auto vp = ws.derivative(v, 1);
  for (int j = 0; j < m; ++j)
    terms[j] = vp[j] * vp[j] / geo.speed[j] -
               geo.kappa[j] * geo.kappa[j] * v[j] * v[j] * geo.speed[j];
  const double pi_v = pairwise_sum(terms) * w;
  return pi_v - sigma * curve_dirichlet_energy(geo, ws);
}

RateFit exp_rate_fit(std::span<const double> t, std::span<const double> y) {
  if (t.size() != y.size())
    throw std::invalid_argument("exp_rate_fit: length mismatch");
  if (t.size() < 10)
    throw std::invalid_argument("exp_rate_fit: needs at least 10 samples");
  const std::size_t n = t.size();
  std::vector<double> ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(y[i] > 0.0))
      throw std::invalid_argument("exp_rate_fit: nonpositive sample");
    ly[i] = std::log(y[i]);
  }
  double tm = 0.0, lm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    tm += t[i];
    lm += ly[i];
  }
  tm /= double(n);
  lm /= double(n);
  double sxx = 0.0, sxy = 0.0, stot = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (t[i] - tm) * (t[i] - tm);
    sxy += (t[i] - tm) * (ly[i] - lm);
    stot += (ly[i] - lm) * (ly[i] - lm);
  }
  if (!(sxx > 0.0))
    throw std::invalid_argument("exp_rate_fit: degenerate time window");
  const double slope = sxy / sxx;
  double sres = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double r = ly[i] - lm - slope * (t[i] - tm);
    sres += r * r;
  }
  RateFit fit;
  fit.rate = -slope;
  fit.quality = stot > 0.0 ? 1.0 - sres / stot : 1.0;
  fit.samples = int(n);
  return fit;
}

namespace {

double unit_uniform(std::mt19937_64& rng) {
  return double(rng() >> 11) * 0x1.0p-53;
}

// Random real trigonometric polynomial supported on |k_i| <= shape_i / 3,
// mean zero by construction (no constant mode ever enters).
ScalarField random_band_limited(const GridPtr& grid, std::mt19937_64& rng,
                                int modes) {
  const int d = grid->dim();
  const auto& shape = grid->shape();
  const double two_pi = 2.0 * std::acos(-1.0);
  std::vector<std::vector<double>> coords(d);
  for (int a = 0; a < d; ++a) {
    coords[a].resize(shape[a]);
    for (int i = 0; i < shape[a]; ++i) coords[a][i] = grid->coord(a, i);
  }
  ScalarField u = make_field(grid);
  std::vector<int> k(d);
  for (int mode = 0; mode < modes; ++mode) {
    int nonzero = 0;
    do {
      nonzero = 0;
      for (int a = 0; a < d; ++a) {
        const int band = shape[a] / 3;
        k[a] = int(std::floor(unit_uniform(rng) * (2 * band + 1))) - band;
        if (k[a] != 0) nonzero = 1;
      }
    } while (!nonzero);
    const double amp = 2.0 * unit_uniform(rng) - 1.0;
    const double phase = two_pi * unit_uniform(rng);
    for (std::size_t p = 0; p < u.values.size(); ++p) {
      double arg = phase;
      for (int a = 0; a < d; ++a) {
        const int idx = int(p / grid->stride(a)) % shape[a];
        arg += two_pi * k[a] * coords[a][idx] / grid->period(a);
      }
      u.values[p] += amp * std::cos(arg);
    }
  }
  return u;
}

double flat_l2(const GridPtr& grid, const std::vector<double>& v) {
  std::vector<double> terms(v.size());
  for (std::size_t p = 0; p < v.size(); ++p) terms[p] = v[p] * v[p];
  return std::sqrt(pairwise_sum(terms) * grid->cell_volume());
}

double flat_lp(const GridPtr& grid, const std::vector<double>& v, double p) {
  std::vector<double> terms(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    terms[i] = std::pow(std::abs(v[i]), p);
  return std::pow(pairwise_sum(terms) * grid->cell_volume(), 1.0 / p);
}

}  // namespace

PoincareReport poincare_probe(const GridPtr& grid, int samples,
                              std::uint64_t seed) {
  if (samples < 50)
    throw std::invalid_argument("poincare_probe: needs at least 50 samples");
  SpectralWorkspace ws(grid);
  const int d = grid->dim();
  std::mt19937_64 rng(seed);

  PoincareReport report;
  int slow_axis = 0;
  for (int a = 1; a < d; ++a)
    if (grid->period(a) > grid->period(slow_axis)) slow_axis = a;
  const double two_pi = 2.0 * std::acos(-1.0);
  report.bound = grid->period(slow_axis) / two_pi;

  auto ratio_of = [&](const ScalarField& u) -> double {
    const std::size_t n = u.values.size();
    const double mean = field_sum(u) / double(n);
    std::vector<double> centered(n);
    for (std::size_t p = 0; p < n; ++p) centered[p] = u.values[p] - mean;
    const double num = flat_l2(grid, centered);
    double den2 = 0.0;
    for (int a = 0; a < d; ++a) {
      ScalarField du = ws.derivative(u, a, 1);
      const double na = flat_l2(grid, du.values);
      den2 += na * na;
    }
    const double den = std::sqrt(den2);
    if (den <= 1e-14 * std::max(num, 1.0)) return -1.0;
    return num / den;
  };

  // Deterministic extremizer: the slowest mode attains the sharp constant.
  {
    ScalarField u = sample_field(grid, [&](std::span<const double> x) {
      return std::sin(two_pi * x[slow_axis] / grid->period(slow_axis));
    });
    report.worst_ratio = ratio_of(u);
  }
  for (int s = 0; s < samples; ++s) {
    ScalarField u = random_band_limited(grid, rng, 8);
    const double r = ratio_of(u);
    if (r < 0.0) {
      ++report.skipped;
      continue;
    }
    report.worst_ratio = std::max(report.worst_ratio, r);
  }
  report.samples = samples;
  return report;
}

namespace {

// All nondecreasing index tuples of the given order together with their
// multinomial multiplicity, enumerating the distinct partial derivatives of
// a symmetric derivative tensor.
void sorted_tuples(int d, int order, std::vector<int>& tuple,
                   std::vector<std::pair<std::vector<int>, double>>& out) {
  if (int(tuple.size()) == order) {
    std::array<int, 8> counts{};
    for (int a : tuple) counts[a]++;
    double mult = 1.0;
    for (int i = 2; i <= order; ++i) mult *= i;
    for (int a = 0; a < d; ++a)
      for (int i = 2; i <= counts[a]; ++i) mult /= i;
    out.emplace_back(tuple, mult);
    return;
  }
  const int start = tuple.empty() ? 0 : tuple.back();
  for (int a = start; a < d; ++a) {
    tuple.push_back(a);
    sorted_tuples(d, order, tuple, out);
    tuple.pop_back();
  }
}

// Pointwise Euclidean norm of the order-k derivative tensor, component
// derivatives taken spectrally and memoized per tuple prefix.
std::vector<double> derivative_tensor_norm(const ScalarField& u,
                                           SpectralWorkspace& ws, int order) {
  const GridPtr& grid = u.grid;
  const std::size_t n = u.values.size();
  if (order == 0) {
    std::vector<double> out(n);
    for (std::size_t p = 0; p < n; ++p) out[p] = std::abs(u.values[p]);
    return out;
  }
  std::vector<std::pair<std::vector<int>, double>> tuples;
  std::vector<int> scratch;
  sorted_tuples(grid->dim(), order, scratch, tuples);

  std::map<std::vector<int>, ScalarField> memo;
  memo[{}] = u;
  std::vector<double> acc(n, 0.0);
  for (const auto& [tuple, mult] : tuples) {
    std::vector<int> prefix;
    for (int a : tuple) {
      auto next = prefix;
      next.push_back(a);
      if (memo.find(next) == memo.end())
        memo[next] = ws.derivative(memo[prefix], a, 1);
      prefix = std::move(next);
    }
    const auto& dv = memo[prefix].values;
    for (std::size_t p = 0; p < n; ++p) acc[p] += mult * dv[p] * dv[p];
  }
  for (std::size_t p = 0; p < n; ++p) acc[p] = std::sqrt(acc[p]);
  return acc;
}

}  // namespace

GNReport gn_probe(const GridPtr& grid, const GNExponents& e, int samples,
                  std::uint64_t seed) {
  const int d = grid->dim();
  if (e.j < 0 || e.m < 1 || e.j >= e.m)
    throw std::invalid_argument("gn_probe: needs 0 <= j < m");
  if (!(e.p >= 1.0) || !(e.r >= 1.0) || !(e.q >= 1.0))
    throw std::invalid_argument("gn_probe: integrability exponents below 1");
  const double lo = double(e.j) / double(e.m);
  if (!(e.theta >= lo) || !(e.theta < 1.0))
    throw std::invalid_argument("gn_probe: theta outside [j/m, 1)");
  const double want = double(e.j) / d + e.theta * (1.0 / e.r - double(e.m) / d) +
                      (1.0 - e.theta) / e.q;
  if (std::abs(1.0 / e.p - want) > 1e-12)
    throw std::invalid_argument("gn_probe: incompatible exponent tuple");
  if (samples < 1)
    throw std::invalid_argument("gn_probe: needs at least one sample");

  SpectralWorkspace ws(grid);
  std::mt19937_64 rng(seed);
  auto ratio_of = [&](const ScalarField& u) -> double {
    auto tj = derivative_tensor_norm(u, ws, e.j);
    auto tm = derivative_tensor_norm(u, ws, e.m);
    const double nj = flat_lp(grid, tj, e.p);
    const double nm = flat_lp(grid, tm, e.r);
    const double nq = flat_lp(grid, u.values, e.q);
    const double den = std::pow(nm, e.theta) * std::pow(nq, 1.0 - e.theta);
    if (den <= 0.0) return 0.0;
    return nj / den;
  };

  GNReport report;
  report.samples = samples;
  {
    // Deterministic pure-mode sample; for the L^2 exponent family it is the
    // equality case of the spectral inequality.
    const double two_pi = 2.0 * std::acos(-1.0);
    ScalarField u = sample_field(grid, [&](std::span<const double> x) {
      return std::sin(two_pi * x[0] / grid->period(0));
    });
    report.worst_ratio = ratio_of(u);
  }
  for (int s = 0; s < samples; ++s)
    report.worst_ratio =
        std::max(report.worst_ratio, ratio_of(random_band_limited(grid, rng, 8)));
  report.worst_ratio_doubled = report.worst_ratio;
  for (int s = 0; s < samples; ++s)
    report.worst_ratio_doubled = std::max(
        report.worst_ratio_doubled, ratio_of(random_band_limited(grid, rng, 8)));
  return report;
}

}  // namespace sdflab
