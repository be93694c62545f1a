#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "otcf/dataio.hpp"
#include "otcf/metrics.hpp"

namespace otcf::bench {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// The nine families the experiment protocol can schedule: the three
// pointwise baselines plus the six functional-coupling solvers.
const std::vector<metrics::Method>& experiment_methods();

// Everything run_experiment needs, parsed from a flat key=value file.
// Documented keys: dataset (repeatable or comma-separated), label_column,
// seed, alpha, k_grid, methods, folds, train_fraction, clusters_per_label,
// group_cap, group_min_size, mixture_components, tol_primal, tol_dual,
// max_iter, restarts, time_cap, output_dir.  '#' starts a comment;
// unknown keys are rejected.
struct ExperimentConfig {
  std::vector<std::string> datasets;
  std::string label_column = "label";
  std::uint64_t seed = 0;
  double alpha = 0.8;
  std::vector<double> k_grid = {1.01, 1.5, 2.0, 3.5, 5.0};  // k tied to K
  std::vector<metrics::Method> methods;  // empty means all nine
  int folds = 10;
  double train_fraction = 0.8;
  int clusters_per_label = 10;
  int group_cap = 200;
  int group_min_size = 20;
  Eigen::Index mixture_components = 3;
  double tol_primal = 1e-9;
  double tol_dual = 1e-9;
  int max_iter = 100000;
  int restarts = 5;        // extra multistarts of the non-convex baseline
  double time_cap = 1800.0;
  std::string output_dir = "out";
};

ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);

// Enforces the config invariants (every K at least 1, alpha strictly inside
// (0, 1), methods drawn from experiment_methods(), sane protocol sizes).
void validate_config(const ExperimentConfig& config);

struct ExperimentReport {
  std::string metrics_path;
  std::string timings_path;
  long rows = 0;
  int maps_written = 0;
  std::vector<std::string> skipped;  // "path: reason" per unloadable dataset
};

// Full protocol: per dataset, standardize, split, grid-searched logistic
// fit, group construction, then cross-validated evaluation of every
// (group, method, K) cell.  One metrics row per fold; wall times go to a
// separate file so the metrics CSV is byte-identical across reruns.  A cell
// whose evaluation throws is recorded as a single unconverged row; an
// unloadable dataset is skipped and reported, never fatal.  Alongside the
// CSVs, the map refitted on each full group is saved under maps/ as JSON.
ExperimentReport run_experiment(const ExperimentConfig& config);

struct ProfileCurve {
  std::string method;
  // (threshold, fraction of problems solved within threshold of the best);
  // fractions are non-decreasing and stay in [0, 1].
  std::vector<std::pair<double, double>> points;
};

struct ProfileResult {
  std::vector<ProfileCurve> curves;
  Eigen::Index excluded = 0;  // problems where every method failed
};

// Cost ratios against the per-problem best, counted on a log-spaced
// threshold grid over [1, theta_max].  costs is problems x methods with
// +infinity marking a failed cell; all finite entries must be positive.
// theta_max <= 0 picks the largest finite ratio (at least 2).
ProfileResult performance_profile(const Matrix& costs,
                                  const std::vector<std::string>& methods,
                                  int grid_points = 50, double theta_max = 0.0);

// Seeded synthetic binary dataset: two classes separated along the first
// coordinate, each class a Gaussian (components == 1) or a uniform mixture
// of `components` Gaussians.  Raw units, not standardized.
struct SynthOptions {
  Eigen::Index per_class = 200;
  Eigen::Index dims = 2;
  double separation = 3.0;
  Eigen::Index components = 1;
  std::uint64_t seed = 0;
};
dataio::Dataset synth_dataset(const SynthOptions& options);

// Writes features plus a final label column in the dialect load_csv reads.
void write_dataset_csv(const dataio::Dataset& ds, const std::string& path);

// Canonical numeric formatting for every CSV this module writes: %.17g,
// which round-trips doubles exactly and never depends on locale.
std::string format_double(double v);

}  // namespace otcf::bench
