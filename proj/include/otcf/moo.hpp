#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "otcf/metrics.hpp"

namespace otcf::moo {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Objective pair plus a constraint violation measure for one candidate.
// violation is zero exactly when every mapped point clears the score
// threshold; otherwise it is the fraction of points that miss it.
struct Objectives {
  double f1 = 0.0;
  double f2 = 0.0;
  double violation = 0.0;
};

// Search space for one map family evaluated against a black-box scorer.
// The scorer sees candidate outputs one point at a time and returns the
// score that must exceed `alpha` for the point to count as valid; nothing
// about the model behind it leaks into the search.
//
// `objectives`, when set, replaces the built-in cost/distortion pair
// entirely (synthetic test problems); decode and the scorer are bypassed.
struct MooProblem {
  metrics::Method family = metrics::Method::AffineDiag;
  Matrix group;
  Vector lower_bounds;
  Vector upper_bounds;
  std::function<double(const Vector&)> score;
  double alpha = 0.5;
  std::function<Objectives(const Vector&)> objectives;
  // Source moments, precomputed so decoding stays cheap inside the loop.
  Vector source_mean;
  Matrix source_basis;  // eigenvectors of the fitting covariance
};

// Number of decision variables each family exposes for n points in d
// dimensions.  Families without a parametric encoding are rejected.
Eigen::Index parameter_count(metrics::Method family, Eigen::Index n,
                             Eigen::Index d);

// Builds a problem over `group` with finite default box bounds: coefficient
// entries get a fixed symmetric range, translation-like entries get the
// per-column data range padded by twice its span.
MooProblem make_problem(metrics::Method family, const Matrix& group,
                        std::function<double(const Vector&)> score,
                        double alpha = 0.5);

// Expands a parameter vector into the counterfactual matrix it encodes.
Matrix decode_counterfactuals(const MooProblem& problem, const Vector& params);

// Cost, distortion, and constraint violation of one candidate.
Objectives evaluate(const MooProblem& problem, const Vector& params);

struct FrontMember {
  Vector parameters;
  double f1 = 0.0;
  double f2 = 0.0;
  bool feasible = false;
};

// Final archive (mutually nondominated, feasibility-first) and the
// hypervolume of the feasible archive members after initialization and
// after each generation, so the trace has generations + 1 entries.
struct ParetoFront {
  std::vector<FrontMember> members;
  std::vector<double> hypervolume_trace;
};

// Elitist genetic search over the problem box.  Canonical operator
// settings are fixed constants: simulated binary crossover (eta 15,
// rate 0.9), polynomial mutation (eta 20, rate 1/nvar), binary tournament
// on (front rank, crowding distance), and feasibility-first domination.
// Deterministic for a fixed seed.  generations == 0 evaluates the initial
// population only and returns its nondominated subset.
ParetoFront nsga2(const MooProblem& problem, int population = 100,
                  int generations = 200, std::uint64_t seed = 0);

// Partitions points into successive nondominated fronts (minimization,
// weak domination: no worse in both coordinates and better in one).
// Indices within each front keep their input order.
std::vector<std::vector<std::size_t>> nondominated_sort(
    const std::vector<std::pair<double, double>>& points);

// Per-coordinate max-min rescaling onto [0, 1].  A constant coordinate
// maps to all zeros and raises the matching degenerate flag.
struct Normalized {
  std::vector<std::pair<double, double>> values;
  bool degenerate_first = false;
  bool degenerate_second = false;
};
Normalized normalize_objectives(
    const std::vector<std::pair<double, double>>& values);

// Area dominated by a front of normalized minimization objectives.
// Points are clipped into the unit square (with a warning when that
// changes anything).  With the default reference (1, 1) the result is the
// area between the front and the reference, so bigger is better.  The
// reference (0, 0) selects the complementary convention: the area of the
// union of boxes spanned from the origin to each point, so smaller is
// better.
double hypervolume_2d(const std::vector<std::pair<double, double>>& front,
                      std::pair<double, double> reference = {1.0, 1.0});

}  // namespace otcf::moo
