#include "otcf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "otcf/error.hpp"
#include "otcf/gmm.hpp"

namespace otcf::metrics {
namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double unit_draw(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

void check_pairing(const Matrix& group, const Matrix& counterfactuals) {
  require(group.rows() == counterfactuals.rows() &&
              group.cols() == counterfactuals.cols(),
          ErrorKind::DimensionMismatch,
          "group and counterfactuals must be index-paired matrices");
  require(group.rows() > 0, ErrorKind::EmptyInput, "no points to evaluate");
}

}  // namespace

std::string method_name(Method method) {
  switch (method) {
    case Method::Independent: return "independent";
    case Method::Lipschitz: return "lipschitz";
    case Method::Bilipschitz: return "bilipschitz";
    case Method::AffineFull: return "affine_full";
    case Method::AffinePsd: return "affine_psd";
    case Method::AffineDiag: return "affine_diag";
    case Method::AffineTied: return "affine_tied";
    case Method::GaussianFull: return "gaussian_full";
    case Method::GaussianCommutative: return "gaussian_commutative";
    case Method::GaussianScaled: return "gaussian_scaled";
    case Method::Gmm: return "gmm";
  }
  fail(ErrorKind::InvalidInput, "unknown method value");
}

Method method_from_name(const std::string& name) {
  static const std::vector<Method> all = {
      Method::Independent,   Method::Lipschitz,      Method::Bilipschitz,
      Method::AffineFull,    Method::AffinePsd,      Method::AffineDiag,
      Method::AffineTied,    Method::GaussianFull,   Method::GaussianCommutative,
      Method::GaussianScaled, Method::Gmm};
  for (Method m : all)
    if (method_name(m) == name) return m;
  fail(ErrorKind::ParseError, "unknown method name '" + name + "'");
}

bool is_pointwise(Method method) {
  return method == Method::Independent || method == Method::Lipschitz ||
         method == Method::Bilipschitz;
}

double empirical_w2(const Matrix& group, const Matrix& counterfactuals) {
  check_pairing(group, counterfactuals);
  return (group - counterfactuals).rowwise().squaredNorm().mean();
}

EmpiricalBounds empirical_bounds(const Matrix& group, const Matrix& counterfactuals) {
  check_pairing(group, counterfactuals);
  require(group.rows() >= 2, ErrorKind::DegenerateBounds,
          "pair ratios need at least two points");
  EmpiricalBounds b{0.0, std::numeric_limits<double>::infinity()};
  bool seen = false;
  for (Eigen::Index i = 0; i < group.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < group.rows(); ++j) {
      const double din = (group.row(i) - group.row(j)).norm();
      if (din <= 1e-12) continue;  // duplicate inputs carry no constraint
      const double r = (counterfactuals.row(i) - counterfactuals.row(j)).norm() / din;
      b.upper = std::max(b.upper, r);
      b.lower = std::min(b.lower, r);
      seen = true;
    }
  }
  require(seen, ErrorKind::DegenerateBounds,
          "every point pair is degenerate; displacement ratios are undefined");
  return b;
}

double distortion(double upper, double lower) {
  if (lower <= 0.0) return 1.0;  // some distinct points were merged
  require(upper >= lower - 1e-12, ErrorKind::InvalidInput,
          "upper bound below lower bound");
  return 1.0 - 1.0 / std::max(upper, 1.0 / lower);
}

double validity(const maps::TransportMap& map, const Matrix& holdout,
                const classifier::LinearModel& model, int target_class,
                double alpha) {
  require(!std::holds_alternative<maps::PointwiseMap>(map),
          ErrorKind::NotGeneralizable,
          "pointwise maps do not generalize; their fitting-data validity is 1 "
          "by construction");
  require(holdout.rows() > 0, ErrorKind::EmptyInput, "no holdout points");
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < holdout.rows(); ++i) {
    const Vector image = maps::apply(map, holdout.row(i).transpose());
    if (classifier::score(model, image, target_class) > alpha) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(holdout.rows());
}

MetricsRecord evaluate_pairs(const Matrix& group, const Matrix& counterfactuals) {
  MetricsRecord rec;
  rec.n_eval = static_cast<int>(group.rows());
  rec.w2_sq = empirical_w2(group, counterfactuals);
  if (group.rows() >= 2) {
    try {
      const EmpiricalBounds b = empirical_bounds(group, counterfactuals);
      rec.emp_upper = b.upper;
      rec.emp_lower = b.lower;
      rec.has_bounds = true;
      rec.collapsed = b.lower <= 0.0;
      rec.distortion = distortion(b.upper, b.lower);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::DegenerateBounds) throw;
    }
  }
  return rec;
}

solvers::SolveReport fit_method(Method method, const Matrix& group,
                                const EvalConfig& cfg) {
  const auto hs = classifier::halfspace(cfg.model, cfg.target_class, cfg.alpha);
  switch (method) {
    case Method::Independent:
      return solvers::solve_independent(group, hs);
    case Method::Lipschitz:
      return solvers::solve_group_lipschitz(group, hs, cfg.upper, cfg.split);
    case Method::Bilipschitz: {
      solvers::BilipschitzOptions opts = cfg.bilipschitz;
      opts.seed = cfg.seed;
      return solvers::solve_group_bilipschitz(group, hs, cfg.upper, cfg.lower, opts);
    }
    case Method::AffineFull:
      return solvers::solve_affine_full(group, hs, cfg.upper, 0.0, cfg.split);
    case Method::AffinePsd:
      return solvers::solve_affine_psd(group, hs, cfg.upper, cfg.lower, cfg.split);
    case Method::AffineDiag:
      return solvers::solve_affine_diag(group, hs, cfg.upper, cfg.lower, false,
                                        cfg.split);
    case Method::AffineTied:
      return solvers::solve_affine_diag(group, hs, cfg.upper, cfg.lower, true,
                                        cfg.split);
    case Method::GaussianFull:
      return solvers::solve_gaussian_full(maps::estimate_moments(group), hs, group,
                                          cfg.upper, cfg.lower, cfg.split);
    case Method::GaussianCommutative:
      return solvers::solve_gaussian_commutative(maps::estimate_moments(group), hs,
                                                 group, cfg.upper, cfg.lower,
                                                 cfg.split);
    case Method::GaussianScaled:
      return solvers::solve_gaussian_scaled(maps::estimate_moments(group), hs, group,
                                            cfg.upper, cfg.lower, cfg.split);
    case Method::Gmm: {
      const auto mixture = gmm::fit_gmm(group, cfg.mixture_components, cfg.seed);
      return gmm::solve_gmm_map(mixture, hs, group, cfg.upper, cfg.lower,
                                cfg.split);
    }
  }
  fail(ErrorKind::InvalidInput, "unknown method value");
}

namespace {

CrossvalResult fitting_data_record(Method method, const Matrix& group,
                                   const EvalConfig& cfg) {
  const auto report = fit_method(method, group, cfg);
  const auto& pw = std::get<maps::PointwiseMap>(report.map);

  FoldRecord fr;
  fr.fold = -1;
  fr.converged = report.converged;
  fr.wall_time = report.wall_time;
  fr.metrics = evaluate_pairs(group, pw.targets);
  fr.metrics.validity = 1.0;  // scored on the fitting points
  fr.metrics.trivial_validity = true;

  CrossvalResult result;
  result.folds.push_back(fr);
  result.convergence_rate = report.converged ? 1.0 : 0.0;
  if (report.converged) {
    result.average = fr.metrics;
  } else {
    result.average.w2_sq = kNan;
    result.average.emp_upper = kNan;
    result.average.emp_lower = kNan;
    result.average.distortion = kNan;
    result.average.validity = kNan;
  }
  return result;
}

}  // namespace

CrossvalResult crossval_evaluate(const Matrix& group, Method method,
                                 const EvalConfig& cfg, int folds,
                                 std::uint64_t seed) {
  require(group.rows() > 0, ErrorKind::EmptyInput, "empty group");
  if (is_pointwise(method)) return fitting_data_record(method, group, cfg);

  const Eigen::Index n = group.rows(), d = group.cols();
  require(folds >= 2 && n >= folds, ErrorKind::InvalidInput,
          "need at least one point per fold and two folds");

  // Deterministic Fisher-Yates shuffle, then contiguous blocks.
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 g(seed);
  for (Eigen::Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Eigen::Index>(unit_draw(g) * static_cast<double>(i + 1));
    std::swap(perm[static_cast<std::size_t>(i)],
              perm[static_cast<std::size_t>(std::min(j, i))]);
  }

  CrossvalResult result;
  for (int f = 0; f < folds; ++f) {
    const Eigen::Index begin = n * f / folds;
    const Eigen::Index end = n * (f + 1) / folds;
    Matrix eval(end - begin, d);
    Matrix train(n - (end - begin), d);
    Eigen::Index te = 0, tr = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i >= begin && i < end)
        eval.row(te++) = group.row(perm[static_cast<std::size_t>(i)]);
      else
        train.row(tr++) = group.row(perm[static_cast<std::size_t>(i)]);
    }

    FoldRecord fr;
    fr.fold = f;
    try {
      const auto report = fit_method(method, train, cfg);
      fr.converged = report.converged;
      fr.wall_time = report.wall_time;
      if (report.converged) {
        Matrix mapped(eval.rows(), d);
        for (Eigen::Index i = 0; i < eval.rows(); ++i)
          mapped.row(i) = maps::apply(report.map, eval.row(i).transpose()).transpose();
        fr.metrics = evaluate_pairs(eval, mapped);
        fr.metrics.validity =
            validity(report.map, eval, cfg.model, cfg.target_class, cfg.alpha);
      }
    } catch (const Error&) {
      fr.converged = false;  // a fold the method cannot fit is a failed fold
    }
    result.folds.push_back(fr);
  }

  int retained = 0, with_bounds = 0;
  double w2 = 0.0, val = 0.0, up = 0.0, lo = 0.0, dist = 0.0;
  MetricsRecord avg;
  for (const auto& fr : result.folds) {
    if (!fr.converged) continue;
    ++retained;
    w2 += fr.metrics.w2_sq;
    val += fr.metrics.validity;
    avg.n_eval += fr.metrics.n_eval;
    avg.collapsed = avg.collapsed || fr.metrics.collapsed;
    if (fr.metrics.has_bounds) {
      ++with_bounds;
      up += fr.metrics.emp_upper;
      lo += fr.metrics.emp_lower;
      dist += fr.metrics.distortion;
    }
  }
  avg.w2_sq = retained > 0 ? w2 / retained : kNan;
  avg.validity = retained > 0 ? val / retained : kNan;
  avg.has_bounds = with_bounds > 0;
  avg.emp_upper = with_bounds > 0 ? up / with_bounds : kNan;
  avg.emp_lower = with_bounds > 0 ? lo / with_bounds : kNan;
  avg.distortion = with_bounds > 0 ? dist / with_bounds : kNan;
  result.average = avg;
  result.convergence_rate = static_cast<double>(retained) / folds;
  return result;
}

}  // namespace otcf::metrics
