#include "otcf/gmm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>

#include "otcf/error.hpp"
#include "otcf/numerics.hpp"

namespace otcf::gmm {
namespace {

using numerics::SymMatrix;

constexpr double kCovRidge = 1e-6;
constexpr double kInf = std::numeric_limits<double>::infinity();

// Uniform in [0, 1) from the top 53 bits, so draws do not depend on the
// standard library's distribution implementation.
double unit_draw(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

Eigen::Index uniform_index(std::mt19937_64& g, Eigen::Index n) {
  const auto i = static_cast<Eigen::Index>(unit_draw(g) * static_cast<double>(n));
  return std::min(i, n - 1);
}

// k-means++ seeding: each new center is drawn with probability proportional
// to its squared distance from the nearest chosen center.
std::vector<Eigen::Index> seed_centers(const Matrix& x, Eigen::Index m,
                                       std::mt19937_64& g) {
  const Eigen::Index n = x.rows();
  std::vector<Eigen::Index> centers{uniform_index(g, n)};
  Vector d2 = (x.rowwise() - x.row(centers[0])).rowwise().squaredNorm();
  while (static_cast<Eigen::Index>(centers.size()) < m) {
    const double total = d2.sum();
    Eigen::Index pick = uniform_index(g, n);
    if (total > 0.0) {
      double u = unit_draw(g) * total;
      for (Eigen::Index i = 0; i < n; ++i) {
        u -= d2(i);
        if (u <= 0.0) {
          pick = i;
          break;
        }
      }
    }
    centers.push_back(pick);
    d2 = d2.cwiseMin((x.rowwise() - x.row(pick)).rowwise().squaredNorm());
  }
  return centers;
}

struct Posterior {
  Matrix resp;
  double log_likelihood = -kInf;
};

Posterior e_step(const maps::GmmModel& model, const Matrix& points) {
  const Eigen::Index n = points.rows(), m = model.size();
  Matrix logp(n, m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const double lw = std::log(model.weights(j));
    for (Eigen::Index i = 0; i < n; ++i)
      logp(i, j) =
          lw + maps::gaussian_log_density(model.components[static_cast<std::size_t>(j)],
                                          points.row(i).transpose());
  }
  const Vector rowmax = logp.rowwise().maxCoeff();
  const Vector lse =
      ((logp.colwise() - rowmax).array().exp().rowwise().sum().log() + rowmax.array())
          .matrix();
  Posterior post;
  post.resp = (logp.colwise() - lse).array().exp();
  post.log_likelihood = lse.sum();
  return post;
}

}  // namespace

maps::GmmModel fit_gmm(const Matrix& points, Eigen::Index m, std::uint64_t seed,
                       int max_iter, double tol,
                       std::vector<double>* log_likelihoods) {
  const Eigen::Index n = points.rows(), d = points.cols();
  require(n > 0 && d > 0, ErrorKind::EmptyInput, "cannot fit a mixture on an empty sample");
  require(m >= 1, ErrorKind::InvalidInput, "component count must be positive");
  require(n >= m * (d + 1), ErrorKind::InvalidInput,
          "too few points: fitting m components needs at least m*(d+1)");
  require(max_iter >= 1 && tol >= 0.0, ErrorKind::InvalidInput,
          "iteration cap and tolerance must be positive");

  std::mt19937_64 g(seed);
  Matrix base_cov = maps::estimate_moments(points).cov.mat();
  base_cov.diagonal().array() += kCovRidge;

  maps::GmmModel model;
  model.weights = Vector::Constant(m, 1.0 / static_cast<double>(m));
  const auto centers = seed_centers(points, m, g);
  for (Eigen::Index j = 0; j < m; ++j)
    model.components.push_back(
        {points.row(centers[static_cast<std::size_t>(j)]).transpose(),
         SymMatrix(base_cov), kCovRidge});

  if (log_likelihoods) log_likelihoods->clear();
  int reseeds = 0;
  double prev_ll = -kInf;
  for (int iter = 0; iter < max_iter; ++iter) {
    const Posterior post = e_step(model, points);
    const Vector mass = post.resp.colwise().sum().transpose();

    Eigen::Index empty = -1;
    for (Eigen::Index j = 0; j < m && empty < 0; ++j)
      if (mass(j) < 1e-8 * static_cast<double>(n)) empty = j;
    if (empty >= 0) {
      require(++reseeds <= 3, ErrorKind::InvalidInput,
              "a mixture component kept collapsing; use fewer components");
      // Restart the dead component at the point farthest from the live means.
      Eigen::Index far = 0;
      double far_d = -1.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        double nearest = kInf;
        for (Eigen::Index j = 0; j < m; ++j) {
          if (j == empty) continue;
          nearest = std::min(
              nearest, (points.row(i).transpose() -
                        model.components[static_cast<std::size_t>(j)].mean)
                           .squaredNorm());
        }
        if (nearest > far_d) {
          far_d = nearest;
          far = i;
        }
      }
      model.components[static_cast<std::size_t>(empty)] = {
          points.row(far).transpose(), SymMatrix(base_cov), kCovRidge};
      model.weights(empty) = 1.0 / static_cast<double>(n);
      model.weights /= model.weights.sum();
      // The ascent guarantee restarts with the model, and so does the trace.
      if (log_likelihoods) log_likelihoods->clear();
      prev_ll = -kInf;
      continue;
    }

    if (log_likelihoods) log_likelihoods->push_back(post.log_likelihood);

    model.weights = mass / static_cast<double>(n);
    for (Eigen::Index j = 0; j < m; ++j) {
      const Vector mu = (post.resp.col(j).transpose() * points).transpose() / mass(j);
      Matrix scatter = Matrix::Zero(d, d);
      for (Eigen::Index i = 0; i < n; ++i) {
        const Vector c = points.row(i).transpose() - mu;
        scatter.noalias() += post.resp(i, j) * c * c.transpose();
      }
      scatter /= mass(j);
      scatter.diagonal().array() += kCovRidge;
      model.components[static_cast<std::size_t>(j)] = {mu, SymMatrix(scatter), kCovRidge};
    }

    if (std::abs(post.log_likelihood - prev_ll) <=
        tol * (1.0 + std::abs(post.log_likelihood)))
      break;
    prev_ll = post.log_likelihood;
  }

  // Responsibilities of the returned parameters (one E step past the last
  // M step, which can only improve the likelihood).
  const Posterior final_post = e_step(model, points);
  if (log_likelihoods) log_likelihoods->push_back(final_post.log_likelihood);
  model.responsibilities = final_post.resp;
  return model;
}

namespace {

// Spectrum excess of the symmetrized average map over the box [lo, hi].
double box_excess(const Vector& eig, double lo, double hi) {
  double excess = std::max(0.0, eig.maxCoeff() - hi);
  if (lo > 0.0) excess = std::max(excess, lo - eig.minCoeff());
  return excess;
}

}  // namespace

solvers::SolveReport solve_gmm_map(const maps::GmmModel& gmm,
                                   const solvers::OptionalHalfspace& hs,
                                   const Matrix& group, double upper, double lower,
                                   const solvers::SplitOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  const Eigen::Index m = gmm.size();
  const Eigen::Index n = group.rows(), d = group.cols();
  require(m >= 1, ErrorKind::InvalidInput, "mixture has no components");
  require(gmm.weights.size() == m, ErrorKind::InvalidInput,
          "mixture weights and components disagree");
  for (const auto& c : gmm.components)
    require(c.mean.size() == d, ErrorKind::DimensionMismatch,
            "mixture dimension does not match the group");
  require(gmm.responsibilities.rows() == n && gmm.responsibilities.cols() == m,
          ErrorKind::InvalidInput,
          "stored responsibilities do not cover this group; fit the mixture on it");

  // Hard routing by the stored posterior; maxCoeff takes the first maximum,
  // which is the tie-break towards the lowest component index.
  std::vector<std::vector<Eigen::Index>> assigned(static_cast<std::size_t>(m));
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index j = 0;
    gmm.responsibilities.row(i).maxCoeff(&j);
    assigned[static_cast<std::size_t>(j)].push_back(i);
  }

  const auto solve_component = [&](Eigen::Index j, double up, double lo) {
    const auto& rows = assigned[static_cast<std::size_t>(j)];
    Matrix pts(static_cast<Eigen::Index>(rows.size()), d);
    for (std::size_t r = 0; r < rows.size(); ++r)
      pts.row(static_cast<Eigen::Index>(r)) = group.row(rows[r]);
    // A component that claims no points has nothing to move across the
    // boundary, so it keeps only the box constraint.
    const solvers::OptionalHalfspace local = rows.empty() ? std::nullopt : hs;
    return solvers::solve_gaussian_full(gmm.components[static_cast<std::size_t>(j)],
                                        local, pts, up, lo, opts);
  };

  std::vector<solvers::SolveReport> parts;
  parts.reserve(static_cast<std::size_t>(m));
  for (Eigen::Index j = 0; j < m; ++j) parts.push_back(solve_component(j, upper, lower));

  const auto component_map = [&](Eigen::Index j) -> const maps::AffineMap& {
    return std::get<maps::GaussianPairMap>(parts[static_cast<std::size_t>(j)].map).map;
  };
  const auto averaged = [&]() {
    Matrix abar = Matrix::Zero(d, d);
    for (Eigen::Index j = 0; j < m; ++j) abar += gmm.weights(j) * component_map(j).A;
    return SymMatrix(abar);  // symmetrized view of the mean map
  };

  const double hi = upper;
  const double lo = std::isinf(lower) ? 0.0 : 1.0 / lower;

  // Component maps are symmetric with spectra inside the box, so their convex
  // combination already satisfies the averaged bound; the corrective pass only
  // fires when a sub-solve left residual slack.
  numerics::Spectrum avg = numerics::sym_eig(averaged());
  double excess = box_excess(avg.values, lo, hi);
  if (excess > 1e-9) {
    const double shrink = 1.0 + std::max(excess, 1e-9);
    for (Eigen::Index j = 0; j < m; ++j) {
      bool violates = false;
      for (Eigen::Index t = 0; t < d && !violates; ++t) {
        if (avg.values(t) <= hi + 1e-12 && (lo <= 0.0 || avg.values(t) >= lo - 1e-12))
          continue;  // this direction is fine
        const Vector v = avg.vectors.col(t);
        const double q = v.dot(component_map(j).A * v);
        violates = q > hi + 1e-12 || (lo > 0.0 && q < lo - 1e-12);
      }
      if (violates)
        parts[static_cast<std::size_t>(j)] =
            solve_component(j, upper / shrink, lower / shrink);
    }
    avg = numerics::sym_eig(averaged());
    excess = box_excess(avg.values, lo, hi);
  }

  solvers::SolveReport report;
  maps::GmmMap out;
  out.source = gmm;
  double objective = 0.0;
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto& part = parts[static_cast<std::size_t>(j)];
    const auto& pair = std::get<maps::GaussianPairMap>(part.map);
    out.targets.push_back(pair.target);
    out.components.push_back(pair.map);
    objective += gmm.weights(j) * part.objective;
    report.iterations = std::max(report.iterations, part.iterations);
    report.primal_residual = std::max(report.primal_residual, part.primal_residual);
    report.dual_residual = std::max(report.dual_residual, part.dual_residual);
    report.infeasible_hint = report.infeasible_hint || part.infeasible_hint;
    if (!part.converged) report.failed_components.push_back(j);
  }
  report.map = std::move(out);
  report.objective = objective;
  report.raw_sum = objective * static_cast<double>(std::max<Eigen::Index>(n, 1));
  report.primal_residual = std::max(report.primal_residual, excess);
  report.converged = report.failed_components.empty() && excess <= 1e-5;
  report.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace otcf::gmm
