#include "sdflab/grid.hpp"

#include <fftw3.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <thread>

namespace sdflab {

double pairwise_sum(std::span<const double> v) {
  // Base case small enough to be cheap, large enough to amortize recursion.
  if (v.size() <= 8) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t, std::size_t)>& fn) {
  if (threads < 1) threads = 1;
  if (threads == 1 || n < 1024) {
    fn(0, n);
    return;
  }
  const std::size_t nt = std::min<std::size_t>(threads, n);
  std::vector<std::thread> pool;
  pool.reserve(nt);
  for (std::size_t t = 0; t < nt; ++t) {
    const std::size_t lo = n * t / nt;
    const std::size_t hi = n * (t + 1) / nt;
    pool.emplace_back([&fn, lo, hi] { fn(lo, hi); });
  }
  for (auto& th : pool) th.join();
}

PeriodicGrid::PeriodicGrid(FlatTorus torus, std::vector<int> resolution)
    : torus_(std::move(torus)), shape_(std::move(resolution)) {
  if (torus_.dim() == 0)
    throw std::invalid_argument("PeriodicGrid: torus has no axes");
  if (static_cast<int>(shape_.size()) != torus_.dim())
    throw std::invalid_argument(
        "PeriodicGrid: resolution rank " + std::to_string(shape_.size()) +
        " does not match torus dimension " + std::to_string(torus_.dim()));
  for (int i = 0; i < torus_.dim(); ++i) {
    const double L = torus_.periods[i];
    if (!(L > 0.0) || !std::isfinite(L))
      throw std::invalid_argument("PeriodicGrid: period[" + std::to_string(i) +
                                  "] = " + std::to_string(L) +
                                  " must be finite and positive");
    if (shape_[i] < 8 || shape_[i] % 2 != 0)
      throw std::invalid_argument(
          "PeriodicGrid: resolution[" + std::to_string(i) + "] = " +
          std::to_string(shape_[i]) + " must be even and at least 8");
  }
  strides_.assign(shape_.size(), 1);
  count_ = 1;
  for (int i = torus_.dim() - 1; i >= 0; --i) {
    strides_[i] = count_;
    count_ *= static_cast<std::size_t>(shape_[i]);
  }
}

double PeriodicGrid::min_spacing() const {
  double h = std::numeric_limits<double>::infinity();
  for (int i = 0; i < dim(); ++i) h = std::min(h, spacing(i));
  return h;
}

double PeriodicGrid::cell_volume() const {
  double v = 1.0;
  for (int i = 0; i < dim(); ++i) v *= spacing(i);
  return v;
}

double PeriodicGrid::box_volume() const {
  double v = 1.0;
  for (int i = 0; i < dim(); ++i) v *= torus_.periods[i];
  return v;
}

GridPtr make_grid(FlatTorus torus, std::vector<int> resolution) {
  return std::make_shared<const PeriodicGrid>(std::move(torus),
                                              std::move(resolution));
}

ScalarField make_field(GridPtr grid, double fill) {
  ScalarField f;
  f.values.assign(grid->node_count(), fill);
  f.grid = std::move(grid);
  return f;
}

ScalarField sample_field(GridPtr grid,
                         const std::function<double(std::span<const double>)>& f) {
  ScalarField out = make_field(grid);
  const int d = grid->dim();
  std::vector<int> idx(d, 0);
  std::vector<double> x(d, 0.0);
  for (std::size_t p = 0; p < grid->node_count(); ++p) {
    for (int a = 0; a < d; ++a) x[a] = grid->coord(a, idx[a]);
    out.values[p] = f(x);
    for (int a = d - 1; a >= 0; --a) {  // odometer
      if (++idx[a] < grid->shape()[a]) break;
      idx[a] = 0;
    }
  }
  return out;
}

double field_sum(const ScalarField& u) { return pairwise_sum(u.values); }

double flat_integral(const ScalarField& u) {
  return field_sum(u) * u.grid->cell_volume();
}

double sup_abs(const ScalarField& u) {
  double m = 0.0;
  for (double x : u.values) m = std::max(m, std::abs(x));
  return m;
}

// ---------------------------------------------------------------------------
// Spectral workspace

namespace {

// Integer mode index j -> signed wavenumber index (j <= N/2 ? j : j - N).
int signed_mode(int j, int n) { return j <= n / 2 ? j : j - n; }

}  // namespace

struct SpectralWorkspace::Impl {
  std::vector<int> shape;          // real-space shape
  std::vector<int> cshape;         // complex shape: last axis n/2+1
  std::size_t csize = 1;
  std::vector<std::vector<double>> wavenumbers;  // per axis, per mode index
  std::vector<std::vector<bool>> nyquist;        // per axis, per mode index
  std::vector<std::vector<bool>> alias_cut;      // per axis: |mode| >= N/3
  std::vector<double> rbuf;
  std::vector<std::complex<double>> cbuf, cwork;
  fftw_plan fwd = nullptr, bwd = nullptr;
  double inv_n = 1.0;

  ~Impl() {
    if (fwd) fftw_destroy_plan(fwd);
    if (bwd) fftw_destroy_plan(bwd);
  }

  // Applies a per-mode complex multiplier given by mode_mult(mode indices).
  template <typename ModeFn>
  void apply_symbol(int dim, const std::vector<double>& in,
                    std::vector<double>& out, ModeFn&& mode_mult) {
    std::memcpy(rbuf.data(), in.data(), in.size() * sizeof(double));
    fftw_execute(fwd);
    std::vector<int> idx(dim, 0);
    for (std::size_t p = 0; p < csize; ++p) {
      cbuf[p] *= mode_mult(idx) * inv_n;  // fold in inverse-FFT scale
      for (int a = dim - 1; a >= 0; --a) {
        if (++idx[a] < cshape[a]) break;
        idx[a] = 0;
      }
    }
    fftw_execute(bwd);
    out.assign(rbuf.begin(), rbuf.end());
  }
};

SpectralWorkspace::SpectralWorkspace(GridPtr grid)
    : grid_(std::move(grid)), impl_(std::make_unique<Impl>()) {
  auto& im = *impl_;
  im.shape = grid_->shape();
  const int d = grid_->dim();
  im.cshape = im.shape;
  im.cshape[d - 1] = im.shape[d - 1] / 2 + 1;
  im.csize = 1;
  for (int c : im.cshape) im.csize *= static_cast<std::size_t>(c);
  im.inv_n = 1.0 / static_cast<double>(grid_->node_count());

  im.wavenumbers.resize(d);
  im.nyquist.resize(d);
  im.alias_cut.resize(d);
  constexpr double two_pi = 6.283185307179586476925286766559;
  for (int a = 0; a < d; ++a) {
    const int n = im.shape[a];
    const int nc = im.cshape[a];
    im.wavenumbers[a].resize(nc);
    im.nyquist[a].assign(nc, false);
    im.alias_cut[a].assign(nc, false);
    for (int j = 0; j < nc; ++j) {
      const int m = signed_mode(j, n);
      im.wavenumbers[a][j] = two_pi * m / grid_->period(a);
      if (2 * std::abs(m) == n) im.nyquist[a][j] = true;
      if (3 * std::abs(m) >= n) im.alias_cut[a][j] = true;
    }
  }

  im.rbuf.resize(grid_->node_count());
  im.cbuf.resize(im.csize);
  im.cwork.resize(im.csize);
  im.fwd = fftw_plan_dft_r2c(d, im.shape.data(), im.rbuf.data(),
                             reinterpret_cast<fftw_complex*>(im.cbuf.data()),
                             FFTW_ESTIMATE);
  im.bwd = fftw_plan_dft_c2r(d, im.shape.data(),
                             reinterpret_cast<fftw_complex*>(im.cbuf.data()),
                             im.rbuf.data(), FFTW_ESTIMATE);
  if (!im.fwd || !im.bwd)
    throw std::runtime_error("SpectralWorkspace: FFTW plan creation failed");
}

SpectralWorkspace::~SpectralWorkspace() = default;

namespace {

void check_same_grid(const ScalarField& u, const GridPtr& g, const char* who) {
  if (u.grid.get() != g.get() &&
      (u.grid->shape() != g->shape() ||
       u.grid->torus().periods != g->torus().periods))
    throw std::invalid_argument(std::string(who) +
                                ": field grid does not match workspace grid");
}

}  // namespace

void SpectralWorkspace::derivative(const ScalarField& u, int axis, int order,
                                   ScalarField& out) {
  check_same_grid(u, grid_, "derivative");
  if (axis < 0 || axis >= grid_->dim())
    throw std::invalid_argument("derivative: axis " + std::to_string(axis) +
                                " out of range for dimension " +
                                std::to_string(grid_->dim()));
  if (order < 1 || order > 4)
    throw std::invalid_argument("derivative: order " + std::to_string(order) +
                                " not in 1..4");
  auto& im = *impl_;
  const bool odd = order % 2 == 1;
  // (ik)^order; for even orders this is the real factor (-1)^(order/2) k^order.
  im.apply_symbol(grid_->dim(), u.values, out.values,
               [&](const std::vector<int>& idx) -> std::complex<double> {
                 const double k = im.wavenumbers[axis][idx[axis]];
                 if (odd && im.nyquist[axis][idx[axis]])
                   return {0.0, 0.0};
                 std::complex<double> ik(0.0, k);
                 std::complex<double> m(1.0, 0.0);
                 for (int o = 0; o < order; ++o) m *= ik;
                 return m;
               });
  out.grid = u.grid;
}

ScalarField SpectralWorkspace::derivative(const ScalarField& u, int axis,
                                          int order) {
  ScalarField out;
  derivative(u, axis, order, out);
  return out;
}

ScalarField SpectralWorkspace::derivative2(const ScalarField& u, int axis_i,
                                           int axis_j) {
  if (axis_i == axis_j) return derivative(u, axis_i, 2);
  check_same_grid(u, grid_, "derivative2");
  auto& im = *impl_;
  ScalarField out;
  // Product of two first-order symbols; each drops its own Nyquist mode.
  im.apply_symbol(grid_->dim(), u.values, out.values,
               [&](const std::vector<int>& idx) -> std::complex<double> {
                 if (im.nyquist[axis_i][idx[axis_i]] ||
                     im.nyquist[axis_j][idx[axis_j]])
                   return {0.0, 0.0};
                 const double ki = im.wavenumbers[axis_i][idx[axis_i]];
                 const double kj = im.wavenumbers[axis_j][idx[axis_j]];
                 return {-ki * kj, 0.0};
               });
  out.grid = u.grid;
  return out;
}

ScalarField SpectralWorkspace::flat_laplacian(const ScalarField& u) {
  check_same_grid(u, grid_, "flat_laplacian");
  auto& im = *impl_;
  const int d = grid_->dim();
  ScalarField out;
  im.apply_symbol(grid_->dim(), u.values, out.values,
               [&](const std::vector<int>& idx) -> std::complex<double> {
                 double k2 = 0.0;
                 for (int a = 0; a < d; ++a) {
                   const double k = im.wavenumbers[a][idx[a]];
                   k2 += k * k;
                 }
                 return {-k2, 0.0};
               });
  out.grid = u.grid;
  return out;
}

ScalarField SpectralWorkspace::bilaplacian(const ScalarField& u) {
  check_same_grid(u, grid_, "bilaplacian");
  auto& im = *impl_;
  const int d = grid_->dim();
  ScalarField out;
  im.apply_symbol(grid_->dim(), u.values, out.values,
               [&](const std::vector<int>& idx) -> std::complex<double> {
                 double k2 = 0.0;
                 for (int a = 0; a < d; ++a) {
                   const double k = im.wavenumbers[a][idx[a]];
                   k2 += k * k;
                 }
                 return {k2 * k2, 0.0};
               });
  out.grid = u.grid;
  return out;
}

ScalarField SpectralWorkspace::solve_stabilized(const ScalarField& rhs,
                                                double A, double dt) {
  check_same_grid(rhs, grid_, "solve_stabilized");
  if (!(A >= 1.0))
    throw std::invalid_argument("solve_stabilized: stabilizer A = " +
                                std::to_string(A) + " must be >= 1");
  if (!(dt > 0.0))
    throw std::invalid_argument("solve_stabilized: dt = " +
                                std::to_string(dt) + " must be positive");
  auto& im = *impl_;
  const int d = grid_->dim();
  ScalarField out;
  im.apply_symbol(grid_->dim(), rhs.values, out.values,
               [&](const std::vector<int>& idx) -> std::complex<double> {
                 double k2 = 0.0;
                 for (int a = 0; a < d; ++a) {
                   const double k = im.wavenumbers[a][idx[a]];
                   k2 += k * k;
                 }
                 return {1.0 / (1.0 + A * dt * k2 * k2), 0.0};
               });
  out.grid = rhs.grid;
  return out;
}

ScalarField SpectralWorkspace::dealias(const ScalarField& u) {
  check_same_grid(u, grid_, "dealias");
  auto& im = *impl_;
  const int d = grid_->dim();
  ScalarField out;
  im.apply_symbol(grid_->dim(), u.values, out.values,
               [&](const std::vector<int>& idx) -> std::complex<double> {
                 for (int a = 0; a < d; ++a)
                   if (im.alias_cut[a][idx[a]]) return {0.0, 0.0};
                 return {1.0, 0.0};
               });
  out.grid = u.grid;
  return out;
}

ScalarField SpectralWorkspace::inverse_flat_laplacian(const ScalarField& u) {
  check_same_grid(u, grid_, "inverse_flat_laplacian");
  auto& im = *impl_;
  const int d = grid_->dim();
  ScalarField out;
  im.apply_symbol(grid_->dim(), u.values, out.values,
               [&](const std::vector<int>& idx) -> std::complex<double> {
                 double k2 = 0.0;
                 for (int a = 0; a < d; ++a) {
                   const double k = im.wavenumbers[a][idx[a]];
                   k2 += k * k;
                 }
                 if (k2 == 0.0) return {0.0, 0.0};
                 return {-1.0 / k2, 0.0};
               });
  out.grid = u.grid;
  return out;
}

// ---------------------------------------------------------------------------
// Centered finite differences (cross-validation backend)

ScalarField fd_derivative(const ScalarField& u, int axis, int order) {
  const auto& grid = *u.grid;
  if (axis < 0 || axis >= grid.dim())
    throw std::invalid_argument("fd_derivative: axis out of range");
  if (order < 1 || order > 4)
    throw std::invalid_argument("fd_derivative: order not in 1..4");
  const int n = grid.shape()[axis];
  const std::size_t stride = grid.stride(axis);
  const double h = grid.spacing(axis);
  ScalarField out = make_field(u.grid);

  // Neighbor offsets along the axis with periodic wrap.
  auto shifted = [&](std::size_t p, int along, int off) -> double {
    int q = along + off;
    q %= n;
    if (q < 0) q += n;
    return u.values[p + static_cast<std::size_t>(q - along) * stride];
  };

  const std::size_t count = grid.node_count();
  const std::size_t block = static_cast<std::size_t>(n) * stride;
  for (std::size_t p = 0; p < count; ++p) {
    const int along = static_cast<int>((p % block) / stride);
    const double um2 = shifted(p, along, -2), um1 = shifted(p, along, -1);
    const double up1 = shifted(p, along, +1), up2 = shifted(p, along, +2);
    const double u0 = u.values[p];
    switch (order) {
      case 1: out.values[p] = (up1 - um1) / (2 * h); break;
      case 2: out.values[p] = (up1 - 2 * u0 + um1) / (h * h); break;
      case 3:
        out.values[p] = (up2 - 2 * up1 + 2 * um1 - um2) / (2 * h * h * h);
        break;
      case 4:
        out.values[p] =
            (up2 - 4 * up1 + 6 * u0 - 4 * um1 + um2) / (h * h * h * h);
        break;
    }
  }
  return out;
}

ScalarField derivative(SpectralWorkspace& ws, const ScalarField& u, int axis,
                       int order, DerivativeBackend backend) {
  if (backend == DerivativeBackend::spectral)
    return ws.derivative(u, axis, order);
  return fd_derivative(u, axis, order);
}

}  // namespace sdflab
