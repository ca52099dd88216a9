#pragma once
// Periodic lattice substrate: rectangular flat tori, even-sized node grids,
// FFTW-backed spectral differentiation and the stabilized fourth-order solve
// used by the semi-implicit time stepper. All reductions go through a
// fixed-order pairwise sum so results do not depend on thread counts.

#include <complex>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sdflab {

// Fixed-order pairwise (binary tree) summation over the given values.
double pairwise_sum(std::span<const double> v);

// Run fn(begin, end) over disjoint chunks of [0, n). The partition depends
// only on n and threads, never on scheduling, so writes to disjoint slots
// give bit-identical results for any thread count.
void parallel_for(std::size_t n, int threads,
                  const std::function<void(std::size_t, std::size_t)>& fn);

struct FlatTorus {
  std::vector<double> periods;  // side lengths L_i, all finite and > 0
  int dim() const { return static_cast<int>(periods.size()); }
};

class PeriodicGrid {
 public:
  PeriodicGrid(FlatTorus torus, std::vector<int> resolution);

  const FlatTorus& torus() const { return torus_; }
  int dim() const { return torus_.dim(); }
  const std::vector<int>& shape() const { return shape_; }
  std::size_t node_count() const { return count_; }
  double period(int axis) const { return torus_.periods[axis]; }
  double spacing(int axis) const { return torus_.periods[axis] / shape_[axis]; }
  double min_spacing() const;
  double coord(int axis, int index) const { return spacing(axis) * index; }
  double cell_volume() const;  // prod of spacings
  double box_volume() const;   // prod of periods
  // Row-major strides, last axis fastest.
  std::size_t stride(int axis) const { return strides_[axis]; }

 private:
  FlatTorus torus_;
  std::vector<int> shape_;
  std::vector<std::size_t> strides_;
  std::size_t count_ = 0;
};

using GridPtr = std::shared_ptr<const PeriodicGrid>;

// Validates periods > 0 and every N_i even and >= 8.
GridPtr make_grid(FlatTorus torus, std::vector<int> resolution);

struct ScalarField {
  GridPtr grid;
  std::vector<double> values;  // node_count doubles, row-major
};

ScalarField make_field(GridPtr grid, double fill = 0.0);

// Fill from a callback taking node coordinates.
ScalarField sample_field(GridPtr grid,
                         const std::function<double(std::span<const double>)>& f);

double field_sum(const ScalarField& u);   // pairwise over nodes
double flat_integral(const ScalarField& u);  // field_sum * cell volume
double sup_abs(const ScalarField& u);

enum class DerivativeBackend { spectral, centered2 };

// Owns the FFTW plans and scratch buffers for one grid shape. One instance
// per worker; execution mutates the scratch so instances must not be shared
// across threads. Plans use FFTW_ESTIMATE (deterministic, cheap to create).
class SpectralWorkspace {
 public:
  explicit SpectralWorkspace(GridPtr grid);
  ~SpectralWorkspace();
  SpectralWorkspace(const SpectralWorkspace&) = delete;
  SpectralWorkspace& operator=(const SpectralWorkspace&) = delete;

  const GridPtr& grid() const { return grid_; }

  // d^order u / dx_axis^order, order in 1..4. Odd orders drop the Nyquist
  // mode (its derivative has no consistent sign on an even grid).
  void derivative(const ScalarField& u, int axis, int order, ScalarField& out);
  ScalarField derivative(const ScalarField& u, int axis, int order);

  // Mixed second derivative d2u/dx_i dx_j.
  ScalarField derivative2(const ScalarField& u, int axis_i, int axis_j);

  ScalarField flat_laplacian(const ScalarField& u);
  ScalarField bilaplacian(const ScalarField& u);

  // Solves u + A*dt*LapLap(u) = rhs mode by mode; requires A >= 1, dt > 0.
  ScalarField solve_stabilized(const ScalarField& rhs, double A, double dt);

  // 2/3-rule low-pass: zero all modes with |k_index| >= N_i/3 on any axis.
  ScalarField dealias(const ScalarField& u);

  // Zero-mean inverse Laplacian (the k=0 mode of the input is discarded).
  ScalarField inverse_flat_laplacian(const ScalarField& u);

 private:
  struct Impl;
  GridPtr grid_;
  std::unique_ptr<Impl> impl_;
};

// Second-order centered finite differences behind the same signature, for
// cross-validation of the spectral backend. Orders 1..4.
ScalarField fd_derivative(const ScalarField& u, int axis, int order);

ScalarField derivative(SpectralWorkspace& ws, const ScalarField& u, int axis,
                       int order, DerivativeBackend backend);

}  // namespace sdflab
