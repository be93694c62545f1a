#pragma once

#include <Eigen/Core>
#include <functional>
#include <limits>
#include <optional>
#include <vector>

#include "otcf/classifier.hpp"
#include "otcf/error.hpp"
#include "otcf/maps.hpp"
#include "otcf/numerics.hpp"

namespace otcf::solvers {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

// A constraint set acting on a subset of the decision vector through an
// exact Euclidean projection of the scoped coordinates.
struct ProjectionSet {
  std::vector<Eigen::Index> scope;
  std::function<void(Vector&)> project;  // mutates the scoped sub-vector
};

// minimize 0.5 x'Hx + q'x + constant
// subject to  ineq_coeffs * x >= ineq_bounds  (row-wise)
//             x in every projection set
// Either `hessian` (dense PSD) or `hessian_diag` (diagonal, nonnegative) is
// set; the diagonal form keeps large separable problems cheap.
struct ConvexProblem {
  Matrix hessian;
  Vector hessian_diag;
  Vector linear;
  double constant = 0.0;
  Matrix ineq_coeffs;   // may have zero rows
  Vector ineq_bounds;
  std::vector<ProjectionSet> sets;
};

struct SplitOptions {
  double tol_primal = 1e-6;
  double tol_dual = 1e-6;
  int max_iter = 20000;
  double rho = 1.0;
  double over_relaxation = 1.6;
  // Iterations without a 0.1% improvement of the worst residual before the
  // solve is abandoned (and flagged as possibly infeasible if far from tol).
  int stall_window = 1500;
};

// Tighter settings used by the fitting routines, where downstream checks
// compare objectives against oracles at 1e-4.
SplitOptions fit_split_options();

struct SplitResult {
  Vector x;
  bool converged = false;
  bool infeasible_hint = false;
  int iterations = 0;
  double primal_residual = std::numeric_limits<double>::infinity();
  double dual_residual = std::numeric_limits<double>::infinity();
};

// Consensus operator splitting: alternates a regularized quadratic solve
// with projections onto every constraint set (each set keeps its own local
// copy and scaled dual). Exact projections make fixed points optimal.
SplitResult solve_operator_splitting(const ConvexProblem& p, const SplitOptions& o = {});

struct SolveReport {
  maps::TransportMap map;
  double objective = std::numeric_limits<double>::infinity();  // mean units
  double raw_sum = std::numeric_limits<double>::infinity();    // n * objective
  bool converged = false;
  bool infeasible_hint = false;
  int iterations = 0;
  double primal_residual = 0.0;
  double dual_residual = 0.0;
  double wall_time = 0.0;  // seconds
  // Mixture solves only: indices of components whose sub-solve failed.
  std::vector<Eigen::Index> failed_components;
};

using OptionalHalfspace = std::optional<classifier::Halfspace>;

// Per-point closed form: move each point the minimal distance onto the
// constraint halfspace (no coupling across the group).
SolveReport solve_independent(const Matrix& group, const OptionalHalfspace& hs);

// Pointwise counterfactuals with the pairwise upper distortion bound
// ||x'_i - x'_j|| <= upper * ||x_i - x_j||. upper may be kUnbounded.
SolveReport solve_group_lipschitz(const Matrix& group, const OptionalHalfspace& hs,
                                  double upper,
                                  const SplitOptions& opts = fit_split_options());

struct BilipschitzOptions {
  int restarts = 5;        // jittered runs after the deterministic one
  double time_cap = 1800.0;
  uint64_t seed = 0;
  double feas_tol = 1e-5;  // constraint tolerance of the feasibility check
};

// Non-convex pointwise baseline: multi-start penalty method on the lower
// distortion bound, with the upper bound and halfspace kept as projections.
// converged=false when no restart produces a feasible map.
SolveReport solve_group_bilipschitz(const Matrix& group, const OptionalHalfspace& hs,
                                    double upper, double lower,
                                    const BilipschitzOptions& opts = {});

// Affine map with unrestricted coefficient matrix. `upper` bounds the largest
// singular value when finite; a lower bound is not expressible for general
// matrices (non-convex), so requesting one throws UnsupportedConstraint.
SolveReport solve_affine_full(const Matrix& group, const OptionalHalfspace& hs,
                              double upper = kUnbounded, double lower = 0.0,
                              const SplitOptions& opts = fit_split_options());

// Symmetric PSD coefficient matrix with eigenvalues confined to
// [1/lower, upper] (the Loewner box); convex for any bounds.
SolveReport solve_affine_psd(const Matrix& group, const OptionalHalfspace& hs,
                             double upper, double lower,
                             const SplitOptions& opts = fit_split_options());

// Diagonal coefficient matrix, each entry in [1/lower, upper]. With
// tie_entries the diagonal is additionally constrained to be constant,
// giving the scaled map a*I as the smallest member of the affine family.
SolveReport solve_affine_diag(const Matrix& group, const OptionalHalfspace& hs,
                              double upper, double lower, bool tie_entries = false,
                              const SplitOptions& opts = fit_split_options());

// Gaussian-to-Gaussian transport with the coefficient matrix as a decision
// variable; the target covariance is recovered exactly as A*cov_P*A at the
// optimum, so the reported objective is the closed-form squared distance.
SolveReport solve_gaussian_full(const maps::GaussianMoments& p, const OptionalHalfspace& hs,
                                const Matrix& group, double upper, double lower,
                                const SplitOptions& opts = fit_split_options());

// Restriction to target covariances sharing the source eigenbasis; decision
// variables are the per-eigendirection standard deviations.
SolveReport solve_gaussian_commutative(const maps::GaussianMoments& p,
                                       const OptionalHalfspace& hs, const Matrix& group,
                                       double upper, double lower,
                                       const SplitOptions& opts = fit_split_options());

// Restriction to cov_Q = r^2 * cov_P; decision variables (mu_Q, r).
SolveReport solve_gaussian_scaled(const maps::GaussianMoments& p, const OptionalHalfspace& hs,
                                  const Matrix& group, double upper, double lower,
                                  const SplitOptions& opts = fit_split_options());

}  // namespace otcf::solvers
