#include "sdflab/stability.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>

namespace sdflab {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

// Entries of the spectral second-derivative matrix on m nodes with period L.
// Circulant: entry (j,q) equals v[(j-q) mod m]. The Nyquist mode is kept, as
// for any even-order spectral derivative. v is mirrored exactly so the
// matrix comes out symmetric bit for bit.
std::vector<double> d2_circulant(int m, double period) {
  const double base = kTwoPi / period;
  const int half = m / 2;
  std::vector<double> v(m, 0.0);
  for (int r = 0; r <= half; ++r) {
    double acc = 0.0;
    for (int k = 1; k < half; ++k) {
      const double wave = base * k;
      acc -= 2.0 * wave * wave * std::cos(kTwoPi * k * r / m);
    }
    const double nyq = base * half;
    acc -= nyq * nyq * (r % 2 == 0 ? 1.0 : -1.0);
    v[r] = acc / m;
  }
  for (int r = 1; r < half; ++r) v[m - r] = v[r];
  return v;
}

struct Carrier {
  GridPtr grid;
  std::vector<double> mu;
  std::vector<double> b2;
  double area = 0.0;
  std::vector<std::vector<double>> normal;  // ambient components per node
};

double axis_coord(const PeriodicGrid& g, std::size_t p, int axis) {
  const std::size_t idx =
      (p / g.stride(axis)) % static_cast<std::size_t>(g.shape()[axis]);
  return g.coord(axis, static_cast<int>(idx));
}

Carrier homogeneous_carrier(const ReferenceSurface& ref) {
  Carrier c;
  c.grid = ref.grid;
  const std::size_t n = ref.grid->node_count();
  const double cell = ref.grid->cell_volume();
  double weight = cell;
  double b2val = 0.0;
  if (ref.kind != ReferenceKind::lamella) {
    weight = ref.radius * cell;
    b2val = 1.0 / (ref.radius * ref.radius);
  }
  c.mu.assign(n, weight);
  c.b2.assign(n, b2val);
  c.area = weight * static_cast<double>(n);

  const int ambient = ambient_dimension(ref);
  c.normal.assign(ambient, std::vector<double>(n, 0.0));
  switch (ref.kind) {
    case ReferenceKind::lamella:
      std::fill(c.normal.back().begin(), c.normal.back().end(), 1.0);
      break;
    case ReferenceKind::circle:
    case ReferenceKind::cylinder:
      for (std::size_t p = 0; p < n; ++p) {
        const double theta = axis_coord(*ref.grid, p, 0);
        c.normal[0][p] = std::cos(theta);
        c.normal[1][p] = std::sin(theta);
      }
      break;
    case ReferenceKind::graph:
      break;
  }
  return c;
}

Carrier graph_carrier(const ReferenceSurface& ref, int threads) {
  SpectralWorkspace ws(ref.graph.grid());
  GeometryOptions opt;
  opt.threads = threads;
  GeometryCache cache = build_geometry(ref.graph, ws, opt);

  Carrier c;
  c.grid = ref.graph.grid();
  const std::size_t n = cache.nodes();
  const double cell = c.grid->cell_volume();
  c.mu.resize(n);
  for (std::size_t p = 0; p < n; ++p) c.mu[p] = cache.sqrt_det_g[p] * cell;
  c.b2 = cache.B2;
  c.area = cache.area;
  c.normal = cache.nu;
  return c;
}

Carrier make_carrier(const ReferenceSurface& ref, int threads) {
  if (ref.kind == ReferenceKind::graph) return graph_carrier(ref, threads);
  return homogeneous_carrier(ref);
}

// Adds -scale * D2 along one grid axis into the dense matrix.
void add_axis_second_derivative(std::vector<double>& matrix,
                                const PeriodicGrid& grid, int axis,
                                double scale) {
  const std::size_t n = grid.node_count();
  const int m = grid.shape()[axis];
  const std::vector<double> v = d2_circulant(m, grid.period(axis));
  const std::size_t stride = grid.stride(axis);

  // Walk every 1-D line along `axis` and couple its m nodes pairwise.
  const std::size_t line_count = n / static_cast<std::size_t>(m);
  for (std::size_t line = 0; line < line_count; ++line) {
    // base index of this line: re-insert the axis coordinate as 0
    const std::size_t block = stride * static_cast<std::size_t>(m);
    const std::size_t outer = line / stride;
    const std::size_t inner = line % stride;
    const std::size_t base = outer * block + inner;
    for (int j = 0; j < m; ++j) {
      const std::size_t p = base + static_cast<std::size_t>(j) * stride;
      double* row = matrix.data() + p * n;
      for (int q = 0; q < m; ++q) {
        const std::size_t col = base + static_cast<std::size_t>(q) * stride;
        const int diff = ((j - q) % m + m) % m;
        row[col] -= scale * v[diff];
      }
    }
  }
}

void check_node_budget(std::size_t n) {
  if (n > 20000) {
    throw std::invalid_argument(
        "stability: dense analysis capped at 20000 nodes, got " +
        std::to_string(n) + "; use a coarser grid");
  }
}

using MatrixRM =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

ReferenceSurface lamella_reference(GridPtr grid, double level) {
  if (!grid) throw std::invalid_argument("lamella_reference: null grid");
  if (!std::isfinite(level)) {
    throw std::invalid_argument("lamella_reference: level must be finite");
  }
  ReferenceSurface ref;
  ref.kind = ReferenceKind::lamella;
  ref.grid = std::move(grid);
  ref.level = level;
  return ref;
}

ReferenceSurface circle_reference(double radius, int nodes) {
  if (!(radius > 0.0) || !std::isfinite(radius)) {
    throw std::invalid_argument("circle_reference: radius must be positive");
  }
  ReferenceSurface ref;
  ref.kind = ReferenceKind::circle;
  ref.grid = make_grid(FlatTorus{{kTwoPi}}, {nodes});
  ref.radius = radius;
  return ref;
}

ReferenceSurface cylinder_reference(double radius, int theta_nodes,
                                    double axis_period, int axis_nodes) {
  if (!(radius > 0.0) || !std::isfinite(radius)) {
    throw std::invalid_argument("cylinder_reference: radius must be positive");
  }
  ReferenceSurface ref;
  ref.kind = ReferenceKind::cylinder;
  ref.grid =
      make_grid(FlatTorus{{kTwoPi, axis_period}}, {theta_nodes, axis_nodes});
  ref.radius = radius;
  return ref;
}

ReferenceSurface graph_reference(GraphSurface surface) {
  if (!surface.grid()) {
    throw std::invalid_argument("graph_reference: surface has no grid");
  }
  ReferenceSurface ref;
  ref.kind = ReferenceKind::graph;
  ref.grid = surface.grid();
  ref.graph = std::move(surface);
  return ref;
}

int ambient_dimension(const ReferenceSurface& ref) {
  switch (ref.kind) {
    case ReferenceKind::lamella:
      return ref.grid->dim() + 1;
    case ReferenceKind::circle:
      return 2;
    case ReferenceKind::cylinder:
      return 3;
    case ReferenceKind::graph:
      return ref.grid->dim() + 1;
  }
  return 0;
}

double analytic_sigma_min(const ReferenceSurface& ref) {
  switch (ref.kind) {
    case ReferenceKind::lamella: {
      double best = std::numeric_limits<double>::infinity();
      for (int a = 0; a < ref.grid->dim(); ++a) {
        const double lam = kTwoPi / ref.grid->period(a);
        best = std::min(best, lam * lam);
      }
      return best;
    }
    case ReferenceKind::circle:
      return 3.0 / (ref.radius * ref.radius);
    case ReferenceKind::cylinder: {
      const double r2 = ref.radius * ref.radius;
      const double axis = kTwoPi / ref.grid->period(1);
      double best = std::numeric_limits<double>::infinity();
      for (int m = 0; m <= 4; ++m) {
        for (int k = 0; k <= 4; ++k) {
          if (m == 0 && k == 0) continue;
          if (m == 1 && k == 0) continue;  // translations
          const double val =
              (static_cast<double>(m * m) - 1.0) / r2 + axis * axis * k * k;
          best = std::min(best, val);
        }
      }
      return best;
    }
    case ReferenceKind::graph:
      throw std::invalid_argument(
          "analytic_sigma_min: graph surfaces need the eigensolve");
  }
  return 0.0;
}

double quadratic_form(const GeometryCache& cache, const ScalarField& psi,
                      SpectralWorkspace& ws) {
  const std::size_t n = cache.nodes();
  if (psi.values.size() != n) {
    throw std::invalid_argument("quadratic_form: field size mismatch");
  }
  const double mean = surface_integral(cache, psi) / cache.area;
  ScalarField p0 = psi;
  for (double& v : p0.values) v -= mean;

  const int d = cache.dim;
  std::vector<std::vector<double>> dp(d);
  for (int a = 0; a < d; ++a) dp[a] = ws.derivative(p0, a, 1).values;

  std::vector<double> integrand(n);
  for (std::size_t p = 0; p < n; ++p) {
    double grad2 = 0.0;
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) {
        grad2 += cache.ginv[sym_index(d, i, j)][p] * dp[i][p] * dp[j][p];
      }
    }
    integrand[p] =
        (grad2 - p0.values[p] * p0.values[p] * cache.B2[p]) *
        cache.sqrt_det_g[p];
  }
  return pairwise_sum(integrand) * cache.grid->cell_volume();
}

double quadratic_form(const ReferenceSurface& ref,
                      const std::vector<double>& psi) {
  if (ref.kind == ReferenceKind::graph) {
    SpectralWorkspace ws(ref.graph.grid());
    GeometryCache cache = build_geometry(ref.graph, ws);
    ScalarField field = make_field(ref.graph.grid());
    if (psi.size() != field.values.size()) {
      throw std::invalid_argument("quadratic_form: field size mismatch");
    }
    field.values = psi;
    return quadratic_form(cache, field, ws);
  }

  const std::size_t n = ref.grid->node_count();
  if (psi.size() != n) {
    throw std::invalid_argument("quadratic_form: field size mismatch");
  }
  Carrier carrier = homogeneous_carrier(ref);
  const double weight = carrier.mu[0];

  ScalarField p0 = make_field(ref.grid);
  p0.values = psi;
  const double mean = pairwise_sum(psi) / static_cast<double>(n);
  for (double& v : p0.values) v -= mean;

  SpectralWorkspace ws(ref.grid);
  const int d = ref.grid->dim();
  std::vector<double> integrand(n, 0.0);
  for (int a = 0; a < d; ++a) {
    double scale = 1.0;
    if (ref.kind != ReferenceKind::lamella && a == 0) {
      scale = 1.0 / (ref.radius * ref.radius);
    }
    ScalarField da = ws.derivative(p0, a, 1);
    for (std::size_t p = 0; p < n; ++p) {
      integrand[p] += scale * da.values[p] * da.values[p];
    }
  }
  for (std::size_t p = 0; p < n; ++p) {
    integrand[p] -= carrier.b2[p] * p0.values[p] * p0.values[p];
  }
  return pairwise_sum(integrand) * weight;
}

JacobiOperator assemble_jacobi(const ReferenceSurface& ref, int threads) {
  const std::size_t n = ref.grid->node_count();
  check_node_budget(n);

  JacobiOperator op;
  op.n = n;
  op.matrix.assign(n * n, 0.0);

  if (ref.kind == ReferenceKind::graph) {
    Carrier carrier = graph_carrier(ref, threads);
    op.mu = carrier.mu;
    op.b2 = carrier.b2;
    op.area = carrier.area;

    SpectralWorkspace ws(ref.graph.grid());
    GeometryOptions opt;
    opt.threads = threads;
    GeometryCache cache = build_geometry(ref.graph, ws, opt);
    ScalarField impulse = make_field(ref.grid);
    ScalarField lap = make_field(ref.grid);
    for (std::size_t q = 0; q < n; ++q) {
      impulse.values.assign(n, 0.0);
      impulse.values[q] = 1.0;
      lap = laplace_beltrami(cache, impulse, ws);
      for (std::size_t p = 0; p < n; ++p) op.matrix[p * n + q] = -lap.values[p];
      op.matrix[q * n + q] -= op.b2[q];
    }

    // Pure Nyquist corner modes: alternating sign along any subset of axes.
    const int d = ref.grid->dim();
    for (int mask = 1; mask < (1 << d); ++mask) {
      std::vector<double> mode(n);
      for (std::size_t p = 0; p < n; ++p) {
        int parity = 0;
        for (int a = 0; a < d; ++a) {
          if (!(mask & (1 << a))) continue;
          parity += static_cast<int>(
              (p / ref.grid->stride(a)) %
              static_cast<std::size_t>(ref.grid->shape()[a]));
        }
        mode[p] = parity % 2 == 0 ? 1.0 : -1.0;
      }
      op.gradient_kernel.push_back(std::move(mode));
    }
    return op;
  }

  Carrier carrier = homogeneous_carrier(ref);
  op.mu = carrier.mu;
  op.b2 = carrier.b2;
  op.area = carrier.area;

  const double r2 =
      ref.kind == ReferenceKind::lamella ? 1.0 : ref.radius * ref.radius;
  for (int a = 0; a < ref.grid->dim(); ++a) {
    const double scale =
        (ref.kind != ReferenceKind::lamella && a == 0) ? 1.0 / r2 : 1.0;
    add_axis_second_derivative(op.matrix, *ref.grid, a, scale);
  }
  for (std::size_t p = 0; p < n; ++p) op.matrix[p * n + p] -= op.b2[p];
  return op;
}

TranslationSubspace translation_basis(const ReferenceSurface& ref) {
  Carrier carrier = make_carrier(ref, 1);
  const std::size_t n = carrier.mu.size();
  const int ambient = ambient_dimension(ref);

  TranslationSubspace sub;
  sub.area = carrier.area;
  sub.candidates = std::move(carrier.normal);

  for (auto& cand : sub.candidates) {
    double dot = 0.0;
    {
      std::vector<double> tmp(n);
      for (std::size_t p = 0; p < n; ++p) tmp[p] = carrier.mu[p] * cand[p];
      dot = pairwise_sum(tmp);
    }
    const double mean = dot / carrier.area;
    for (double& v : cand) v -= mean;
  }

  sub.gram.assign(static_cast<std::size_t>(ambient) * ambient, 0.0);
  std::vector<double> tmp(n);
  for (int i = 0; i < ambient; ++i) {
    for (int j = i; j < ambient; ++j) {
      for (std::size_t p = 0; p < n; ++p) {
        tmp[p] = carrier.mu[p] * sub.candidates[i][p] * sub.candidates[j][p];
      }
      const double g = pairwise_sum(tmp);
      sub.gram[static_cast<std::size_t>(i) * ambient + j] = g;
      sub.gram[static_cast<std::size_t>(j) * ambient + i] = g;
    }
  }

  const double cutoff = 1e-8 * std::sqrt(carrier.area);
  for (int i = 0; i < ambient; ++i) {
    const double norm2 = sub.gram[static_cast<std::size_t>(i) * ambient + i];
    if (std::sqrt(std::max(norm2, 0.0)) > cutoff) sub.surviving_axes.push_back(i);
  }

  Eigen::Map<const MatrixRM> gram_map(sub.gram.data(), ambient, ambient);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram_map);
  const Eigen::MatrixXd frame = es.eigenvectors();
  sub.frame.assign(static_cast<std::size_t>(ambient) * ambient, 0.0);
  for (int i = 0; i < ambient; ++i) {
    for (int j = 0; j < ambient; ++j) {
      sub.frame[static_cast<std::size_t>(i) * ambient + j] = frame(i, j);
    }
  }

  for (int j = 0; j < ambient; ++j) {
    const double lam = es.eigenvalues()(j);
    if (!(lam > cutoff * cutoff)) continue;
    std::vector<double> rotated(n, 0.0);
    for (int i = 0; i < ambient; ++i) {
      const double w = frame(i, j);
      if (w == 0.0) continue;
      for (std::size_t p = 0; p < n; ++p) rotated[p] += w * sub.candidates[i][p];
    }
    const double inv = 1.0 / std::sqrt(lam);
    for (double& v : rotated) v *= inv;
    sub.basis.push_back(std::move(rotated));
  }
  return sub;
}

const char* classification_name(Classification c) {
  switch (c) {
    case Classification::strictly_stable:
      return "strictly_stable";
    case Classification::stable:
      return "stable";
    case Classification::unstable:
      return "unstable";
  }
  return "unknown";
}

Classification classify(double sigma_min, double zero_tol) {
  if (sigma_min > zero_tol) return Classification::strictly_stable;
  if (sigma_min < -zero_tol) return Classification::unstable;
  return Classification::stable;
}

StabilityReport min_eig_T_perp(const JacobiOperator& op,
                               const TranslationSubspace& subspace,
                               double zero_tol) {
  const std::size_t n = op.n;
  if (n == 0 || op.matrix.size() != n * n || op.mu.size() != n) {
    throw std::invalid_argument("min_eig_T_perp: malformed operator");
  }

  Eigen::Map<const MatrixRM> jmap(op.matrix.data(),
                                  static_cast<Eigen::Index>(n),
                                  static_cast<Eigen::Index>(n));
  Eigen::VectorXd sqrt_mu(static_cast<Eigen::Index>(n));
  for (std::size_t p = 0; p < n; ++p) {
    if (!(op.mu[p] > 0.0)) {
      throw std::invalid_argument("min_eig_T_perp: nonpositive measure weight");
    }
    sqrt_mu(static_cast<Eigen::Index>(p)) = std::sqrt(op.mu[p]);
  }

  // Conjugate by sqrt(mu) so self-adjointness in mu becomes plain symmetry.
  Eigen::MatrixXd S = sqrt_mu.asDiagonal() * jmap *
                      sqrt_mu.cwiseInverse().asDiagonal();
  const double scale = std::max(1.0, S.cwiseAbs().maxCoeff());
  const double asym = (S - S.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-6 * scale) {
    throw std::runtime_error(
        "min_eig_T_perp: operator fails the self-adjointness check, defect " +
        std::to_string(asym));
  }
  S = 0.5 * (S + S.transpose()).eval();

  StabilityReport report;
  report.zero_tol = zero_tol;
  report.max_asymmetry = asym;
  report.surviving_axes = subspace.surviving_axes;

  const std::size_t kg = op.gradient_kernel.size();
  const std::size_t kt = subspace.basis.size();
  Eigen::MatrixXd constraints(static_cast<Eigen::Index>(n),
                              static_cast<Eigen::Index>(1 + kg + kt));
  constraints.col(0) = sqrt_mu;
  for (std::size_t r = 0; r < kg; ++r) {
    for (std::size_t p = 0; p < n; ++p) {
      constraints(static_cast<Eigen::Index>(p),
                  static_cast<Eigen::Index>(1 + r)) =
          sqrt_mu(static_cast<Eigen::Index>(p)) * op.gradient_kernel[r][p];
    }
  }
  for (std::size_t t = 0; t < kt; ++t) {
    for (std::size_t p = 0; p < n; ++p) {
      constraints(static_cast<Eigen::Index>(p),
                  static_cast<Eigen::Index>(1 + kg + t)) =
          sqrt_mu(static_cast<Eigen::Index>(p)) * subspace.basis[t][p];
    }
  }

  // Mean-zero spectrum for the report (gradient-kernel modes quotiented).
  {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(
        constraints.leftCols(static_cast<Eigen::Index>(1 + kg)));
    Eigen::MatrixXd q = qr.householderQ();
    Eigen::MatrixXd comp =
        q.rightCols(static_cast<Eigen::Index>(n - 1 - kg));
    Eigen::MatrixXd reduced = comp.transpose() * S * comp;
    reduced = 0.5 * (reduced + reduced.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(reduced);
    const Eigen::Index total = es.eigenvalues().size();
    const Eigen::Index keep = std::min<Eigen::Index>(10, total);
    report.low_spectrum.assign(es.eigenvalues().data(),
                               es.eigenvalues().data() + keep);
    for (Eigen::Index i = 0; i < total; ++i) {
      if (std::abs(es.eigenvalues()(i)) <= zero_tol) ++report.zero_modes;
    }
  }

  // Constrained minimum over mean-zero ∩ translation-orthogonal.
  {
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(constraints);
    Eigen::MatrixXd q = qr.householderQ();
    Eigen::MatrixXd comp =
        q.rightCols(static_cast<Eigen::Index>(n - 1 - kg - kt));
    Eigen::MatrixXd reduced = comp.transpose() * S * comp;
    reduced = 0.5 * (reduced + reduced.transpose()).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(reduced);
    report.sigma_min = es.eigenvalues()(0);
    Eigen::VectorXd phi = comp * es.eigenvectors().col(0);
    report.sigma_field.resize(n);
    for (std::size_t p = 0; p < n; ++p) {
      report.sigma_field[p] =
          phi(static_cast<Eigen::Index>(p)) / sqrt_mu(static_cast<Eigen::Index>(p));
    }
  }

  report.classification = classify(report.sigma_min, zero_tol);
  return report;
}

StabilityReport analyze_stability(const ReferenceSurface& ref, double zero_tol,
                                  int threads) {
  JacobiOperator op = assemble_jacobi(ref, threads);
  TranslationSubspace sub = translation_basis(ref);
  return min_eig_T_perp(op, sub, zero_tol);
}

}  // namespace sdflab
