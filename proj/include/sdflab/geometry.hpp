#pragma once
// Differential geometry of periodic graph hypersurfaces x -> (x, f(x)) over
// a flat torus. The metric, normal, second fundamental form and Christoffel
// symbols all have closed forms in the first two derivatives of f, so the
// cache is assembled from d + d(d+1)/2 differentiations and pure pointwise
// algebra. Caches are immutable snapshots; concurrent reads are safe.

#include <stdexcept>
#include <vector>

#include "sdflab/grid.hpp"

namespace sdflab {

// Thrown when a run leaves the regime the discretization can represent
// (degenerate metric, gradient blow-up, nonfinite values). Callers treat
// this as a monitored stop, not a programming error.
struct GuardViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Height function over its grid plus the flat level the graph is compared
// against. `heights` carries the full height, level included.
struct GraphSurface {
  ScalarField heights;
  double reference_height = 0.0;

  const GridPtr& grid() const { return heights.grid; }
};

GraphSurface make_graph(ScalarField heights, double reference_height = 0.0);

struct GeometryOptions {
  DerivativeBackend backend = DerivativeBackend::spectral;
  bool dealias_curvature = false;  // 2/3-rule filter on H after assembly
  double det_floor = 1e-10;        // abort when det g drops below this
  double grad_cap = 10.0;          // abort when sup|grad f| exceeds this
  int threads = 1;                 // pointwise assembly loops only
};

// Packed symmetric d x d tensors: pairs (i,j) with i <= j, row by row.
std::size_t sym_size(int d);
std::size_t sym_index(int d, int i, int j);

// All pointwise geometric data of one graph surface. Tensor components are
// stored component-major (one contiguous node array per component) so each
// component can feed the differentiation routines directly.
struct GeometryCache {
  GridPtr grid;
  int dim = 0;                     // d = surface dimension, ambient is d+1
  DerivativeBackend backend = DerivativeBackend::spectral;

  std::vector<std::vector<double>> grad;    // [i][node]        df/dx_i
  std::vector<std::vector<double>> hess;    // [sym][node]      d2f/dx_i dx_j
  std::vector<std::vector<double>> metric;  // [sym][node]      g_ij
  std::vector<std::vector<double>> ginv;    // [sym][node]      g^ij
  std::vector<double> sqrt_det_g;           // [node]           W = sqrt(det g)
  std::vector<std::vector<double>> nu;      // [c][node], c<d+1 unit normal
  std::vector<std::vector<double>> gamma;   // [l*sym+s][node]  Gamma^l_ij
  std::vector<std::vector<double>> hform;   // [sym][node]      h_ij
  std::vector<double> H;                    // [node]           mean curvature
  std::vector<double> B2;                   // [node]           |B|^2

  double area = 0.0;      // integral of dmu
  double volume = 0.0;    // integral of f over the flat box
  double sup_grad = 0.0;  // max Euclidean norm of grad f

  std::size_t nodes() const { return sqrt_det_g.size(); }
};

// Differentiates f with the configured backend, assembles every cache field
// and checks the guard thresholds. The workspace must live on the same grid.
GeometryCache build_geometry(const GraphSurface& surface, SpectralWorkspace& ws,
                             const GeometryOptions& opt = {});

// Divergence-form Laplace-Beltrami (1/W) d_i(W g^ij d_j u). This form keeps
// the operator exactly self-adjoint in the discrete mu inner product.
ScalarField laplace_beltrami(const GeometryCache& cache, const ScalarField& u,
                             SpectralWorkspace& ws);

// Covariant Hessian d_i d_j u - Gamma^k_ij d_k u, packed symmetric.
std::vector<std::vector<double>> covariant_hessian(const GeometryCache& cache,
                                                   const ScalarField& u,
                                                   SpectralWorkspace& ws);

// Laplace-Beltrami of the immersion (x, f(x)), one field per ambient
// component. Coordinate components are not periodic, so they are handled
// through d_i(W g^ij) rather than by differentiating x_j itself.
std::vector<ScalarField> immersion_laplacian(const GeometryCache& cache,
                                             SpectralWorkspace& ws);

// Quadrature against dmu = W dx (pairwise-summed, deterministic).
double surface_integral(const GeometryCache& cache, const ScalarField& u);

// Flat-measure height integral; the conserved quantity of the flow.
double enclosed_volume(const GraphSurface& surface);

}  // namespace sdflab
