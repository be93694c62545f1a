#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "otcf/error.hpp"

namespace otcf::classifier {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Labels = Eigen::VectorXi;

// Margin (in logit units) by which solvers close the strict "score > alpha"
// constraint: they enforce w.x >= tau + kLogitMargin.
inline constexpr double kLogitMargin = 1e-6;

struct LinearModel {
  Vector weights;
  double intercept = 0.0;
  double l2_penalty = 0.0;

  bool converged = false;
  int iterations = 0;
  double grad_norm = 0.0;
  double train_cross_entropy = 0.0;

  // Filled by callers that fit from a named, standardized dataset; empty otherwise.
  std::vector<std::string> feature_names;
  Vector feat_mean;
  Vector feat_std;
};

struct FitOptions {
  double grad_tol = 1e-8;
  int max_iter = 500;
};

// Minimizes mean cross-entropy + l2_penalty/2 * |w|^2 (intercept unpenalized)
// by damped Newton with step halving; falls back to a gradient step when the
// Hessian solve fails. Perfect separation at penalty 0 runs to the iteration
// cap and reports converged = false.
LinearModel fit_logistic(const Matrix& X, const Labels& y, double l2_penalty,
                         const FitOptions& opts = {});

struct GridSearchResult {
  double best_penalty = 0.0;
  double cv_cross_entropy = 0.0;
  std::vector<double> grid;
  std::vector<double> grid_ce;
};

// 10-fold CV over {0} plus 9 log-spaced penalties in [1e-2, 1e2]; returns the
// argmin of mean validation cross-entropy, ties broken toward the larger penalty.
GridSearchResult grid_search_cv(const Matrix& X, const Labels& y, int folds = 10,
                                uint64_t seed = 0);

double predict_probability(const LinearModel& m, const Vector& x);  // class-1 probability
double score(const LinearModel& m, const Vector& x, int target_class);
int predict_label(const LinearModel& m, const Vector& x);

struct Halfspace {
  Vector normal;   // w
  double offset = 0.0;  // tau; the constraint reads normal.x >= tau
  int target_class = 1;
  double alpha = 0.5;
};

// Halfspace whose satisfaction (with margin) implies score(m, x, target_class) >= alpha.
Halfspace halfspace(const LinearModel& m, int target_class, double alpha);

double mean_cross_entropy(const LinearModel& m, const Matrix& X, const Labels& y);

}  // namespace otcf::classifier
