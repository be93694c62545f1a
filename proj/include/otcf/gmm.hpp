#pragma once

#include <cstdint>
#include <vector>

#include "otcf/maps.hpp"
#include "otcf/solvers.hpp"

namespace otcf::gmm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Expectation-maximization fit with k-means++ seeding. The returned model
// stores the posterior responsibilities of `points` (n x m). Covariances are
// ridged with 1e-6 on the diagonal, which keeps every component usable even
// when its points are duplicated. A component that loses all posterior mass
// is re-seeded at the point farthest from the surviving means, at most three
// times, after which the fit gives up.
//
// When `log_likelihoods` is given it receives the per-iteration total
// log-likelihood; the trace restarts whenever a component is re-seeded, so
// within one trace the sequence is non-decreasing.
//
// Requires n >= m * (d + 1) so every component can support a full-rank
// estimate.
maps::GmmModel fit_gmm(const Matrix& points, Eigen::Index m, std::uint64_t seed,
                       int max_iter = 200, double tol = 1e-7,
                       std::vector<double>* log_likelihoods = nullptr);

// Mixture transport with component-wise coupling: each source component is
// solved against the sample points it claims (largest stored responsibility,
// ties to the lowest index), giving one constrained symmetric PSD affine map
// per component. The spectral box [1/lower, upper] is enforced on every
// component map, and additionally on the symmetrized responsibility-weighted
// average map; components that push the average outside the box are re-solved
// once with a proportionally tightened box, after which a remaining violation
// marks the report as not converged.
//
// objective = sum_j weights(j) * W2^2(source_j, target_j).
//
// `gmm` must have been fitted on `group` (the stored responsibilities are the
// routing table, so their shape has to match).
solvers::SolveReport solve_gmm_map(const maps::GmmModel& gmm,
                                   const solvers::OptionalHalfspace& hs,
                                   const Matrix& group, double upper,
                                   double lower,
                                   const solvers::SplitOptions& opts =
                                       solvers::fit_split_options());

}  // namespace otcf::gmm
