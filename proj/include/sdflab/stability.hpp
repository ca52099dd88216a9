#pragma once
// Second-variation (Jacobi) analysis of constant-mean-curvature reference
// surfaces: the quadratic form Pi(psi) = int |grad psi|^2 - psi^2 |B|^2 dmu,
// the translation subspace it vanishes on, and the minimal eigenvalue on the
// orthogonal complement, which classifies strict stability.
//
// Homogeneous references (lamella, circle, cylinder) are assembled as exact
// circulant operators so relabeling the nodes reproduces the same matrix
// entry for entry. Graph surfaces go through the divergence-form operator
// column by column and carry a measured self-adjointness defect instead.

#include <string>
#include <vector>

#include "sdflab/geometry.hpp"
#include "sdflab/grid.hpp"

namespace sdflab {

enum class ReferenceKind { lamella, circle, cylinder, graph };

struct ReferenceSurface {
  ReferenceKind kind = ReferenceKind::lamella;
  GridPtr grid;         // parameter grid: lamella d-dim, circle 1-D (2 pi),
                        // cylinder (theta, axis) with periods (2 pi, L)
  double radius = 1.0;  // circle and cylinder
  double level = 0.0;   // lamella height
  GraphSurface graph;   // populated for graph kind only
};

ReferenceSurface lamella_reference(GridPtr grid, double level = 0.0);
ReferenceSurface circle_reference(double radius, int nodes);
ReferenceSurface cylinder_reference(double radius, int theta_nodes,
                                    double axis_period, int axis_nodes);
ReferenceSurface graph_reference(GraphSurface surface);

// Dimension of the surrounding torus (surface dimension + 1).
int ambient_dimension(const ReferenceSurface& ref);

// Smallest constrained Jacobi eigenvalue from the Fourier symbol, for the
// homogeneous kinds where it is available in closed form.
double analytic_sigma_min(const ReferenceSurface& ref);

// Dense realization of psi -> -Lap_g psi - |B|^2 psi together with the node
// measure. Self-adjoint with respect to mu, not symmetric as plain numbers.
struct JacobiOperator {
  std::size_t n = 0;
  std::vector<double> matrix;  // row-major, action on node values
  std::vector<double> mu;      // positive node weights (measure included)
  std::vector<double> b2;
  double area = 0.0;
  // Functions with zero discrete gradient energy besides the constant. The
  // divergence-form operator on graphs is blind to the pure Nyquist corner
  // modes (their first derivative vanishes on the nodes), so they join the
  // constant in the quotient instead of polluting the spectrum with
  // -|B|^2 artifacts. Empty for the homogeneous references, whose circulant
  // second derivative keeps full Nyquist stiffness.
  std::vector<std::vector<double>> gradient_kernel;
};

struct TranslationSubspace {
  // <e_i | nu> per ambient axis, projected to mu-mean zero
  std::vector<std::vector<double>> candidates;
  std::vector<double> gram;       // ambient x ambient, of the candidates
  std::vector<double> frame;      // orthogonal Gram-diagonalizing rotation
  std::vector<int> surviving_axes;
  // rotated surviving functions, mu-normalized; what gets deflated
  std::vector<std::vector<double>> basis;
  double area = 0.0;
};

enum class Classification { strictly_stable, stable, unstable };

const char* classification_name(Classification c);

struct StabilityReport {
  std::vector<double> low_spectrum;  // lowest eigenvalues on mean-zero (<=10)
  int zero_modes = 0;                // entries with |lambda| <= zero_tol
  double sigma_min = 0.0;            // on mean-zero ∩ translation-orthogonal
  std::vector<double> sigma_field;   // minimizing psi, node values
  std::vector<int> surviving_axes;
  double max_asymmetry = 0.0;        // measured self-adjointness defect
  double zero_tol = 1e-7;
  Classification classification = Classification::stable;
};

// Direct quadrature route for Pi, independent of the dense assembly. The
// mean is projected out first in both routes.
double quadratic_form(const GeometryCache& cache, const ScalarField& psi,
                      SpectralWorkspace& ws);
double quadratic_form(const ReferenceSurface& ref,
                      const std::vector<double>& psi);

// Node guard: dense desk scale tops out at 20000 nodes.
JacobiOperator assemble_jacobi(const ReferenceSurface& ref, int threads = 1);

TranslationSubspace translation_basis(const ReferenceSurface& ref);

// Deflates the constant and the surviving translation functions, solves the
// dense symmetric eigenproblem twice (mean-zero spectrum for the report,
// fully constrained spectrum for sigma_min) and classifies.
StabilityReport min_eig_T_perp(const JacobiOperator& op,
                               const TranslationSubspace& subspace,
                               double zero_tol = 1e-7);

Classification classify(double sigma_min, double zero_tol = 1e-7);

// Convenience: assemble, build the subspace, solve, classify.
StabilityReport analyze_stability(const ReferenceSurface& ref,
                                  double zero_tol = 1e-7, int threads = 1);

}  // namespace sdflab
