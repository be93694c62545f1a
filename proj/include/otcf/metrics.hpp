#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "otcf/classifier.hpp"
#include "otcf/maps.hpp"
#include "otcf/solvers.hpp"

namespace otcf::metrics {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Every fitting routine in the library, addressable by a stable name.
enum class Method {
  Independent,
  Lipschitz,
  Bilipschitz,
  AffineFull,
  AffinePsd,
  AffineDiag,
  AffineTied,
  GaussianFull,
  GaussianCommutative,
  GaussianScaled,
  Gmm,
};

// Stable identifiers used in configs and CSV output (e.g. "affine_psd").
std::string method_name(Method method);
Method method_from_name(const std::string& name);

// Baselines producing per-point lookup maps; they cannot be evaluated on
// held-out points, so the protocol scores them on their fitting data.
bool is_pointwise(Method method);

struct MetricsRecord {
  double w2_sq = 0.0;
  double emp_upper = 1.0;  // largest pairwise displacement ratio
  double emp_lower = 1.0;  // smallest pairwise displacement ratio
  double distortion = 0.0;
  double validity = 0.0;
  int n_eval = 0;
  bool has_bounds = false;        // at least one nondegenerate pair was seen
  bool collapsed = false;         // distinct inputs mapped to one point
  bool trivial_validity = false;  // validity taken on the fitting data
};

// (1/n) sum of squared row displacements. Rows are index-paired.
double empirical_w2(const Matrix& group, const Matrix& counterfactuals);

struct EmpiricalBounds {
  double upper = 1.0;
  double lower = 1.0;
};

// Extremes of ||x'_i - x'_j|| / ||x_i - x_j|| over pairs with distinct
// inputs; `upper` is the smallest valid Lipschitz constant of the evaluated
// map, `lower` the tightest compression. Throws DegenerateBounds when every
// pair has identical inputs.
EmpiricalBounds empirical_bounds(const Matrix& group, const Matrix& counterfactuals);

// 1 - 1/max{upper, 1/lower}: zero for isometries, approaching one as the map
// stretches or squashes. A non-positive `lower` (collapsed points) saturates
// at the sentinel value 1.
double distortion(double upper, double lower);

// Fraction of `holdout` rows whose mapped image scores strictly above alpha
// for the target class. Pointwise maps are rejected: they are defined only on
// their fitting points, where the fraction is 1 by construction.
double validity(const maps::TransportMap& map, const Matrix& holdout,
                const classifier::LinearModel& model, int target_class, double alpha);

// Metrics of an explicit input/output pairing (w2, bounds, distortion);
// validity is left at zero for the caller to fill.
MetricsRecord evaluate_pairs(const Matrix& group, const Matrix& counterfactuals);

struct EvalConfig {
  classifier::LinearModel model;
  int target_class = 1;
  double alpha = 0.5;
  double upper = solvers::kUnbounded;  // K
  double lower = solvers::kUnbounded;  // k (spectrum floor 1/k where supported)
  Eigen::Index mixture_components = 3;
  std::uint64_t seed = 0;  // multistart seed for the penalty method
  solvers::SplitOptions split = solvers::fit_split_options();
  solvers::BilipschitzOptions bilipschitz;  // seed field is overridden by `seed`
};

// One fit of `method` on `group` under the config's decision constraint.
// The general affine family cannot express a spectral floor, so it receives
// only the upper bound.
solvers::SolveReport fit_method(Method method, const Matrix& group,
                                const EvalConfig& cfg);

struct FoldRecord {
  MetricsRecord metrics;
  int fold = -1;  // -1 when evaluated on the fitting data
  bool converged = false;
  double wall_time = 0.0;  // fit time, seconds
};

struct CrossvalResult {
  MetricsRecord average;  // arithmetic mean over the converged folds
  std::vector<FoldRecord> folds;
  double convergence_rate = 0.0;
};

// Shuffled contiguous k-fold protocol: fit on k-1 folds, score the held-out
// fold, average the converged folds. Pointwise baselines skip the folding and
// come back as a single fitting-data record with trivial validity. Folds with
// a failed or non-converged fit stay in `folds` but are excluded from the
// average; when nothing converges the averaged fields are NaN.
CrossvalResult crossval_evaluate(const Matrix& group, Method method,
                                 const EvalConfig& cfg, int folds = 10,
                                 std::uint64_t seed = 0);

}  // namespace otcf::metrics
