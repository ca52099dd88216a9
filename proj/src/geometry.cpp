#include "sdflab/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace sdflab {

namespace {

std::string at_node(std::size_t node) {
  return " at node " + std::to_string(node);
}

void require_same_grid(const GridPtr& a, const GridPtr& b, const char* what) {
  if (a != b) {
    throw std::invalid_argument(std::string(what) +
                                ": operands live on different grids");
  }
}

ScalarField mixed_second(SpectralWorkspace& ws, const ScalarField& u, int i,
                         int j, DerivativeBackend backend) {
  if (backend == DerivativeBackend::spectral) {
    return i == j ? ws.derivative(u, i, 2) : ws.derivative2(u, i, j);
  }
  if (i == j) return fd_derivative(u, i, 2);
  return fd_derivative(fd_derivative(u, i, 1), j, 1);
}

void check_finite(const std::vector<double>& v, const char* what) {
  for (std::size_t p = 0; p < v.size(); ++p) {
    if (!std::isfinite(v[p])) {
      throw GuardViolation(std::string("nonfinite ") + what + at_node(p));
    }
  }
}

}  // namespace

GraphSurface make_graph(ScalarField heights, double reference_height) {
  if (!heights.grid) {
    throw std::invalid_argument("make_graph: heights carry no grid");
  }
  if (heights.values.size() != heights.grid->node_count()) {
    throw std::invalid_argument("make_graph: heights have " +
                                std::to_string(heights.values.size()) +
                                " values for " +
                                std::to_string(heights.grid->node_count()) +
                                " nodes");
  }
  if (!std::isfinite(reference_height)) {
    throw std::invalid_argument("make_graph: nonfinite reference height");
  }
  return GraphSurface{std::move(heights), reference_height};
}

std::size_t sym_size(int d) {
  return static_cast<std::size_t>(d) * (d + 1) / 2;
}

std::size_t sym_index(int d, int i, int j) {
  if (i > j) std::swap(i, j);
  return static_cast<std::size_t>(i) * d - static_cast<std::size_t>(i) * (i - 1) / 2 +
         (j - i);
}

GeometryCache build_geometry(const GraphSurface& surface, SpectralWorkspace& ws,
                             const GeometryOptions& opt) {
  const GridPtr& grid = surface.grid();
  if (!grid) throw std::invalid_argument("build_geometry: surface has no grid");
  require_same_grid(grid, ws.grid(), "build_geometry");
  if (!(opt.det_floor > 0.0) || !(opt.grad_cap > 0.0)) {
    throw std::invalid_argument("build_geometry: guard thresholds must be > 0");
  }
  if (opt.threads < 1) {
    throw std::invalid_argument("build_geometry: threads must be >= 1");
  }

  const int d = grid->dim();
  const std::size_t n = grid->node_count();
  const std::size_t sd = sym_size(d);

  GeometryCache cache;
  cache.grid = grid;
  cache.dim = d;
  cache.backend = opt.backend;

  cache.grad.resize(d);
  for (int i = 0; i < d; ++i) {
    cache.grad[i] =
        derivative(ws, surface.heights, i, 1, opt.backend).values;
    check_finite(cache.grad[i], "height gradient");
  }
  cache.hess.resize(sd);
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      cache.hess[sym_index(d, i, j)] =
          mixed_second(ws, surface.heights, i, j, opt.backend).values;
      check_finite(cache.hess[sym_index(d, i, j)], "height Hessian");
    }
  }

  cache.metric.assign(sd, std::vector<double>(n));
  cache.ginv.assign(sd, std::vector<double>(n));
  cache.sqrt_det_g.resize(n);
  cache.nu.assign(d + 1, std::vector<double>(n));
  cache.gamma.assign(static_cast<std::size_t>(d) * sd, std::vector<double>(n));
  cache.hform.assign(sd, std::vector<double>(n));
  cache.H.resize(n);
  cache.B2.resize(n);

  parallel_for(n, opt.threads, [&](std::size_t begin, std::size_t end) {
    // Dense d x d scratch for the |B|^2 trace; d is 1 or 2 in practice.
    std::vector<double> shape(static_cast<std::size_t>(d) * d);
    for (std::size_t p = begin; p < end; ++p) {
      double q = 1.0;  // det g = 1 + |grad f|^2 for graph metrics
      for (int i = 0; i < d; ++i) q += cache.grad[i][p] * cache.grad[i][p];
      const double w = std::sqrt(q);
      cache.sqrt_det_g[p] = w;

      for (int i = 0; i < d; ++i) {
        for (int j = i; j < d; ++j) {
          const std::size_t s = sym_index(d, i, j);
          const double gigj = cache.grad[i][p] * cache.grad[j][p];
          const double delta = i == j ? 1.0 : 0.0;
          cache.metric[s][p] = delta + gigj;
          cache.ginv[s][p] = delta - gigj / q;
          cache.hform[s][p] = -cache.hess[s][p] / w;
          for (int l = 0; l < d; ++l) {
            cache.gamma[static_cast<std::size_t>(l) * sd + s][p] =
                cache.hess[s][p] * cache.grad[l][p] / q;
          }
        }
      }

      for (int i = 0; i < d; ++i) cache.nu[i][p] = -cache.grad[i][p] / w;
      cache.nu[d][p] = 1.0 / w;

      // H as the literal trace of the stored tensors keeps the pointwise
      // identity H = g^ij h_ij exact in floating point.
      double trace = 0.0;
      for (int i = 0; i < d; ++i) {
        for (int j = i; j < d; ++j) {
          const std::size_t s = sym_index(d, i, j);
          trace += (i == j ? 1.0 : 2.0) * cache.ginv[s][p] * cache.hform[s][p];
        }
      }
      cache.H[p] = trace;

      for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
          double m = 0.0;
          for (int k = 0; k < d; ++k) {
            m += cache.ginv[sym_index(d, i, k)][p] *
                 cache.hess[sym_index(d, k, j)][p];
          }
          shape[static_cast<std::size_t>(i) * d + j] = m;
        }
      }
      double tr2 = 0.0;
      for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
          tr2 += shape[static_cast<std::size_t>(i) * d + j] *
                 shape[static_cast<std::size_t>(j) * d + i];
        }
      }
      cache.B2[p] = tr2 / q;
    }
  });

  double min_q = cache.sqrt_det_g[0] * cache.sqrt_det_g[0];
  // Track sup|grad f| from the gradient fields themselves rather than as
  // sqrt(q - 1): the subtraction zeroes out once |grad f| drops below
  // sqrt(eps), and the series column should stay meaningful near a flat state.
  double max_g2 = 0.0;
  for (std::size_t p = 0; p < n; ++p) {
    const double q = cache.sqrt_det_g[p] * cache.sqrt_det_g[p];
    min_q = std::min(min_q, q);
    double g2 = 0.0;
    for (int i = 0; i < d; ++i) {
      g2 += cache.grad[static_cast<std::size_t>(i)][p] *
            cache.grad[static_cast<std::size_t>(i)][p];
    }
    max_g2 = std::max(max_g2, g2);
    if (!std::isfinite(cache.H[p]) || !std::isfinite(cache.B2[p])) {
      throw GuardViolation("nonfinite curvature" + at_node(p));
    }
  }
  if (min_q < opt.det_floor) {
    throw GuardViolation("metric determinant " + std::to_string(min_q) +
                         " below floor " + std::to_string(opt.det_floor));
  }
  cache.sup_grad = std::sqrt(max_g2);
  if (cache.sup_grad > opt.grad_cap) {
    throw GuardViolation("sup|grad f| " + std::to_string(cache.sup_grad) +
                         " exceeds cap " + std::to_string(opt.grad_cap));
  }

  if (opt.dealias_curvature) {
    ScalarField h{grid, cache.H};
    cache.H = ws.dealias(h).values;
  }

  ScalarField w_field{grid, cache.sqrt_det_g};
  cache.area = flat_integral(w_field);
  cache.volume = flat_integral(surface.heights);
  return cache;
}

ScalarField laplace_beltrami(const GeometryCache& cache, const ScalarField& u,
                             SpectralWorkspace& ws) {
  require_same_grid(cache.grid, u.grid, "laplace_beltrami");
  require_same_grid(cache.grid, ws.grid(), "laplace_beltrami");
  const int d = cache.dim;
  const std::size_t n = cache.nodes();

  std::vector<ScalarField> du(d);
  for (int j = 0; j < d; ++j) du[j] = derivative(ws, u, j, 1, cache.backend);

  ScalarField out = make_field(cache.grid);
  ScalarField flux = make_field(cache.grid);
  for (int i = 0; i < d; ++i) {
    for (std::size_t p = 0; p < n; ++p) {
      double v = 0.0;
      for (int j = 0; j < d; ++j) {
        v += cache.ginv[sym_index(d, i, j)][p] * du[j].values[p];
      }
      flux.values[p] = cache.sqrt_det_g[p] * v;
    }
    ScalarField dflux = derivative(ws, flux, i, 1, cache.backend);
    for (std::size_t p = 0; p < n; ++p) out.values[p] += dflux.values[p];
  }
  for (std::size_t p = 0; p < n; ++p) out.values[p] /= cache.sqrt_det_g[p];
  return out;
}

std::vector<std::vector<double>> covariant_hessian(const GeometryCache& cache,
                                                   const ScalarField& u,
                                                   SpectralWorkspace& ws) {
  require_same_grid(cache.grid, u.grid, "covariant_hessian");
  require_same_grid(cache.grid, ws.grid(), "covariant_hessian");
  const int d = cache.dim;
  const std::size_t n = cache.nodes();
  const std::size_t sd = sym_size(d);

  std::vector<ScalarField> du(d);
  for (int k = 0; k < d; ++k) du[k] = derivative(ws, u, k, 1, cache.backend);

  std::vector<std::vector<double>> out(sd);
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      const std::size_t s = sym_index(d, i, j);
      out[s] = mixed_second(ws, u, i, j, cache.backend).values;
      for (std::size_t p = 0; p < n; ++p) {
        double gamma_du = 0.0;
        for (int k = 0; k < d; ++k) {
          gamma_du += cache.gamma[static_cast<std::size_t>(k) * sd + s][p] *
                      du[k].values[p];
        }
        out[s][p] -= gamma_du;
      }
    }
  }
  return out;
}

std::vector<ScalarField> immersion_laplacian(const GeometryCache& cache,
                                             SpectralWorkspace& ws) {
  require_same_grid(cache.grid, ws.grid(), "immersion_laplacian");
  const int d = cache.dim;
  const std::size_t n = cache.nodes();

  std::vector<ScalarField> out;
  out.reserve(d + 1);
  ScalarField flux = make_field(cache.grid);
  for (int c = 0; c < d; ++c) {
    // d_j x_c = delta_jc, so the flux through axis i is just W g^ic.
    ScalarField comp = make_field(cache.grid);
    for (int i = 0; i < d; ++i) {
      for (std::size_t p = 0; p < n; ++p) {
        flux.values[p] =
            cache.sqrt_det_g[p] * cache.ginv[sym_index(d, i, c)][p];
      }
      ScalarField dflux = derivative(ws, flux, i, 1, cache.backend);
      for (std::size_t p = 0; p < n; ++p) comp.values[p] += dflux.values[p];
    }
    for (std::size_t p = 0; p < n; ++p) comp.values[p] /= cache.sqrt_det_g[p];
    out.push_back(std::move(comp));
  }

  // Height component: same divergence form fed with the stored gradient.
  ScalarField height = make_field(cache.grid);
  for (int i = 0; i < d; ++i) {
    for (std::size_t p = 0; p < n; ++p) {
      double v = 0.0;
      for (int j = 0; j < d; ++j) {
        v += cache.ginv[sym_index(d, i, j)][p] * cache.grad[j][p];
      }
      flux.values[p] = cache.sqrt_det_g[p] * v;
    }
    ScalarField dflux = derivative(ws, flux, i, 1, cache.backend);
    for (std::size_t p = 0; p < n; ++p) height.values[p] += dflux.values[p];
  }
  for (std::size_t p = 0; p < n; ++p) height.values[p] /= cache.sqrt_det_g[p];
  out.push_back(std::move(height));
  return out;
}

double surface_integral(const GeometryCache& cache, const ScalarField& u) {
  require_same_grid(cache.grid, u.grid, "surface_integral");
  std::vector<double> weighted(cache.nodes());
  for (std::size_t p = 0; p < weighted.size(); ++p) {
    weighted[p] = u.values[p] * cache.sqrt_det_g[p];
  }
  return pairwise_sum(weighted) * cache.grid->cell_volume();
}

double enclosed_volume(const GraphSurface& surface) {
  return flat_integral(surface.heights);
}

}  // namespace sdflab
