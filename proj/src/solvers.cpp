#include "otcf/solvers.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

namespace otcf::solvers {

namespace {

using numerics::SymMatrix;

struct Stopwatch {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

double threshold(const classifier::Halfspace& hs) {
  return hs.offset + classifier::kLogitMargin;
}

void project_onto_halfspace(Vector& v, const Vector& normal, double bound) {
  const double gap = bound - normal.dot(v);
  if (gap > 0.0) v += (gap / normal.squaredNorm()) * normal;
}

std::vector<Eigen::Index> contiguous_scope(Eigen::Index first, Eigen::Index count) {
  std::vector<Eigen::Index> s(static_cast<size_t>(count));
  for (Eigen::Index i = 0; i < count; ++i) s[static_cast<size_t>(i)] = first + i;
  return s;
}

void validate_box(double upper, double lower) {
  require(upper > 0.0 && lower > 0.0, ErrorKind::InvalidBox,
          "distortion bounds must be positive");
  const double lo = std::isinf(lower) ? 0.0 : 1.0 / lower;
  require(lo <= upper * (1.0 + 1e-12), ErrorKind::InvalidBox,
          "lower edge 1/lower exceeds upper");
}

double box_floor(double lower) { return std::isinf(lower) ? 0.0 : 1.0 / lower; }

// Mean squared displacement of a pointwise assignment.
double mean_displacement(const Matrix& from, const Matrix& to) {
  return (to - from).squaredNorm() / static_cast<double>(from.rows());
}

// Smallest-move intercept: the unconstrained optimum of b given A is the
// centroid residual; the halfspace then pulls it the minimal distance.
Vector polish_intercept(const Matrix& points, const Matrix& a, const OptionalHalfspace& hs) {
  const Vector mu = points.colwise().mean().transpose();
  Vector b = mu - a * mu;
  if (hs) {
    const double c = threshold(*hs);
    double needed = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < points.rows(); ++i)
      needed = std::max(needed, c - hs->normal.dot(a * points.row(i).transpose()));
    project_onto_halfspace(b, hs->normal, needed);
  }
  return b;
}

void fill_affine_report(SolveReport& r, const Matrix& points, const Matrix& a, const Vector& b,
                        maps::MapStructure tag) {
  Matrix mapped = (points * a.transpose()).rowwise() + b.transpose();
  r.objective = mean_displacement(points, mapped);
  r.raw_sum = r.objective * static_cast<double>(points.rows());
  r.map = maps::AffineMap{a, b, tag};
}

// mu_Q polish for the Gaussian family: given the coefficient matrix, the
// optimal mean shift is the projection of mu_P onto the surviving halfspace.
Vector polish_target_mean(const Vector& mu_p, const std::function<double(Eigen::Index)>& mapped_w,
                          Eigen::Index n, const OptionalHalfspace& hs) {
  Vector mu_q = mu_p;
  if (hs && n > 0) {
    const double c = threshold(*hs);
    double needed = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) needed = std::max(needed, c - mapped_w(i));
    project_onto_halfspace(mu_q, hs->normal, needed);
  }
  return mu_q;
}

bool is_diagonal(const Matrix& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (i != j && m(i, j) != 0.0) return false;
  return true;
}

// Spectrum of a covariance with eigenvalues floored at 1e-8, shared by the
// Gaussian solvers so the whole family sees the same regularized source.
struct SourceSpectrum {
  numerics::Spectrum spec;  // floored values, descending
  Matrix cov;               // reconstruction with the floored spectrum
  double trace = 0.0;
};

SourceSpectrum regularized_source(const maps::GaussianMoments& p) {
  SourceSpectrum s;
  s.spec = numerics::sym_eig(p.cov);
  const double floor = 1e-8;
  require(s.spec.values(s.spec.values.size() - 1) > -1e-6, ErrorKind::NotPsd,
          "source covariance is not PSD");
  for (Eigen::Index i = 0; i < s.spec.values.size(); ++i)
    s.spec.values(i) = std::max(s.spec.values(i), floor);
  require(s.spec.values(s.spec.values.size() - 1) >= 1e-14 * s.spec.values(0),
          ErrorKind::SingularMatrix, "source covariance is singular beyond repair");
  s.cov = s.spec.reconstruct();
  s.trace = s.spec.values.sum();
  return s;
}

}  // namespace

SplitOptions fit_split_options() {
  SplitOptions o;
  o.tol_primal = 1e-9;
  o.tol_dual = 1e-9;
  o.max_iter = 100000;
  o.stall_window = 5000;
  return o;
}

SplitResult solve_operator_splitting(const ConvexProblem& p, const SplitOptions& o) {
  const Eigen::Index n = p.linear.size();
  require(n > 0, ErrorKind::EmptyInput, "problem has no variables");
  const bool diag_mode = p.hessian.size() == 0;
  if (diag_mode) {
    require(p.hessian_diag.size() == n, ErrorKind::DimensionMismatch,
            "diagonal objective has wrong length");
    require(p.hessian_diag.minCoeff() >= -1e-10, ErrorKind::InvalidInput,
            "objective must be PSD");
  } else {
    require(p.hessian.rows() == n && p.hessian.cols() == n, ErrorKind::DimensionMismatch,
            "objective matrix has wrong shape");
    const double scale = std::max(1.0, p.hessian.cwiseAbs().maxCoeff());
    require((p.hessian - p.hessian.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale,
            ErrorKind::InvalidInput, "objective must be symmetric");
    if (is_diagonal(p.hessian)) {
      require(p.hessian.diagonal().minCoeff() >= -1e-10 * scale, ErrorKind::InvalidInput,
              "objective must be PSD");
    } else if (n <= 48) {
      const Vector ev = numerics::sym_eig(SymMatrix(p.hessian)).values;
      require(ev(ev.size() - 1) >= -1e-10 * scale, ErrorKind::InvalidInput,
              "objective must be PSD");
    }
  }

  // Fold the linear inequalities into halfspace projection sets.
  std::vector<ProjectionSet> sets = p.sets;
  require(p.ineq_coeffs.rows() == p.ineq_bounds.size(), ErrorKind::DimensionMismatch,
          "inequality bounds do not match rows");
  for (Eigen::Index r = 0; r < p.ineq_coeffs.rows(); ++r) {
    std::vector<Eigen::Index> scope;
    for (Eigen::Index j = 0; j < n; ++j)
      if (p.ineq_coeffs(r, j) != 0.0) scope.push_back(j);
    require(!scope.empty(), ErrorKind::InvalidInput, "inequality row is identically zero");
    Vector g(static_cast<Eigen::Index>(scope.size()));
    for (size_t t = 0; t < scope.size(); ++t)
      g(static_cast<Eigen::Index>(t)) = p.ineq_coeffs(r, scope[t]);
    const double bound = p.ineq_bounds(r);
    sets.push_back({std::move(scope),
                    [g, bound](Vector& v) { project_onto_halfspace(v, g, bound); }});
  }

  SplitResult res;
  if (sets.empty()) {
    // Pure quadratic: one linear solve.
    if (diag_mode) {
      res.x = Vector(n);
      for (Eigen::Index j = 0; j < n; ++j) {
        const double h = std::max(p.hessian_diag(j), 1e-300);
        res.x(j) = -p.linear(j) / h;
      }
    } else {
      Eigen::LDLT<Matrix> ldlt(p.hessian);
      res.x = ldlt.solve(-p.linear);
      if (!res.x.allFinite()) {
        Matrix h = p.hessian + 1e-12 * Matrix::Identity(n, n);
        res.x = Eigen::LDLT<Matrix>(h).solve(-p.linear);
      }
    }
    const Vector grad = diag_mode ? Vector(p.hessian_diag.cwiseProduct(res.x) + p.linear)
                                  : Vector(p.hessian * res.x + p.linear);
    res.dual_residual = std::sqrt(grad.squaredNorm() / static_cast<double>(n));
    res.primal_residual = 0.0;
    res.converged = res.dual_residual <= std::max(o.tol_dual, 1e-8);
    res.iterations = 1;
    return res;
  }

  Vector scope_count = Vector::Zero(n);
  Eigen::Index total_scope = 0;
  for (const auto& s : sets) {
    for (Eigen::Index idx : s.scope) scope_count(idx) += 1.0;
    total_scope += static_cast<Eigen::Index>(s.scope.size());
  }

  double rho = o.rho;
  Eigen::LDLT<Matrix> factor;
  Vector inv_diag;
  auto refactor = [&] {
    if (diag_mode) {
      inv_diag = Vector(n);
      for (Eigen::Index j = 0; j < n; ++j)
        inv_diag(j) = 1.0 / std::max(p.hessian_diag(j) + rho * scope_count(j), 1e-300);
    } else {
      Matrix m = p.hessian;
      m.diagonal() += rho * scope_count;
      // Tiny ridge keeps directions with no curvature and no constraint
      // (possible for underdetermined fits) solvable and pinned at zero.
      m.diagonal().array() += 1e-12 * std::max(1.0, m.diagonal().cwiseAbs().maxCoeff());
      factor.compute(m);
    }
  };
  refactor();

  Vector x = Vector::Zero(n);
  std::vector<Vector> z(sets.size()), u(sets.size());
  for (size_t i = 0; i < sets.size(); ++i) {
    z[i] = Vector::Zero(static_cast<Eigen::Index>(sets[i].scope.size()));
    u[i] = Vector::Zero(z[i].size());
  }

  const double alpha = o.over_relaxation;
  double best_combined = std::numeric_limits<double>::infinity();
  int best_iter = 0;
  Vector rhs(n), dual_acc(n), sx, v, w;

  for (int iter = 1; iter <= o.max_iter; ++iter) {
    rhs = -p.linear;
    for (size_t i = 0; i < sets.size(); ++i) {
      const auto& scope = sets[i].scope;
      for (size_t t = 0; t < scope.size(); ++t)
        rhs(scope[t]) += rho * (z[i](static_cast<Eigen::Index>(t)) -
                                u[i](static_cast<Eigen::Index>(t)));
    }
    x = diag_mode ? Vector(rhs.cwiseProduct(inv_diag)) : Vector(factor.solve(rhs));

    double primal_sq = 0.0;
    dual_acc.setZero();
    for (size_t i = 0; i < sets.size(); ++i) {
      const auto& scope = sets[i].scope;
      const Eigen::Index len = static_cast<Eigen::Index>(scope.size());
      sx.resize(len);
      for (Eigen::Index t = 0; t < len; ++t) sx(t) = x(scope[static_cast<size_t>(t)]);
      v = alpha * sx + (1.0 - alpha) * z[i];
      w = v + u[i];
      Vector znew = w;
      sets[i].project(znew);
      u[i] = w - znew;
      for (Eigen::Index t = 0; t < len; ++t)
        dual_acc(scope[static_cast<size_t>(t)]) += rho * (znew(t) - z[i](t));
      z[i] = std::move(znew);
      primal_sq += (sx - z[i]).squaredNorm();
    }

    res.primal_residual = std::sqrt(primal_sq / static_cast<double>(total_scope));
    res.dual_residual = std::sqrt(dual_acc.squaredNorm() / static_cast<double>(n));
    res.iterations = iter;

    if (res.primal_residual <= o.tol_primal && res.dual_residual <= o.tol_dual) {
      res.converged = true;
      break;
    }

    const double combined = std::max(res.primal_residual, res.dual_residual);
    if (combined < best_combined * 0.999) {
      best_combined = combined;
      best_iter = iter;
    }
    if (iter - best_iter > o.stall_window) {
      res.infeasible_hint = res.primal_residual > 1e3 * o.tol_primal;
      break;
    }

    if (iter % 100 == 0) {
      if (res.primal_residual > 10.0 * res.dual_residual) {
        rho *= 2.0;
        for (auto& ui : u) ui *= 0.5;
        refactor();
      } else if (res.dual_residual > 10.0 * res.primal_residual) {
        rho *= 0.5;
        for (auto& ui : u) ui *= 2.0;
        refactor();
      }
    }
  }

  res.x = x;
  return res;
}

SolveReport solve_independent(const Matrix& group, const OptionalHalfspace& hs) {
  Stopwatch sw;
  require(group.rows() >= 1, ErrorKind::EmptyInput, "group is empty");
  Matrix out = group;
  if (hs) {
    const double c = threshold(*hs);
    const double wn2 = hs->normal.squaredNorm();
    require(wn2 > 0.0, ErrorKind::NoDecisionBoundary, "halfspace normal is zero");
    for (Eigen::Index i = 0; i < group.rows(); ++i) {
      const double gap = c - hs->normal.dot(group.row(i).transpose());
      if (gap > 0.0) out.row(i) += (gap / wn2) * hs->normal.transpose();
    }
  }
  SolveReport r;
  r.objective = mean_displacement(group, out);
  r.raw_sum = r.objective * static_cast<double>(group.rows());
  r.map = maps::PointwiseMap{group, out};
  r.converged = true;
  r.iterations = 0;
  r.wall_time = sw.seconds();
  return r;
}

SolveReport solve_group_lipschitz(const Matrix& group, const OptionalHalfspace& hs,
                                  double upper, const SplitOptions& opts) {
  Stopwatch sw;
  const Eigen::Index n = group.rows(), d = group.cols();
  require(n >= 1 && d >= 1, ErrorKind::EmptyInput, "group is empty");
  require(upper >= 0.0, ErrorKind::InvalidBox, "upper bound must be nonnegative");

  ConvexProblem p;
  const Eigen::Index nvar = n * d;
  p.hessian_diag = Vector::Constant(nvar, 2.0 / static_cast<double>(n));
  p.linear.resize(nvar);
  for (Eigen::Index i = 0; i < n; ++i)
    p.linear.segment(i * d, d) = -(2.0 / static_cast<double>(n)) * group.row(i).transpose();
  p.constant = group.squaredNorm() / static_cast<double>(n);

  if (hs) {
    const Vector w = hs->normal;
    const double c = threshold(*hs);
    for (Eigen::Index i = 0; i < n; ++i)
      p.sets.push_back({contiguous_scope(i * d, d),
                        [w, c](Vector& v) { project_onto_halfspace(v, w, c); }});
  }
  if (std::isfinite(upper)) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double radius = upper * (group.row(i) - group.row(j)).norm();
        std::vector<Eigen::Index> scope = contiguous_scope(i * d, d);
        const auto tail = contiguous_scope(j * d, d);
        scope.insert(scope.end(), tail.begin(), tail.end());
        p.sets.push_back({std::move(scope), [d, radius](Vector& v) {
                            Vector diff = v.head(d) - v.tail(d);
                            const double len = diff.norm();
                            if (len > radius) {
                              const double pull = 0.5 * (len - radius) / len;
                              v.head(d) -= pull * diff;
                              v.tail(d) += pull * diff;
                            }
                          }});
      }
    }
  }

  SplitResult s = solve_operator_splitting(p, opts);
  Matrix out(n, d);
  for (Eigen::Index i = 0; i < n; ++i) out.row(i) = s.x.segment(i * d, d).transpose();
  if (hs) {
    const double c = threshold(*hs);
    for (Eigen::Index i = 0; i < n; ++i) {
      Vector row = out.row(i).transpose();
      project_onto_halfspace(row, hs->normal, c);
      out.row(i) = row.transpose();
    }
  }

  SolveReport r;
  r.objective = mean_displacement(group, out);
  r.raw_sum = r.objective * static_cast<double>(n);
  r.map = maps::PointwiseMap{group, out};
  r.converged = s.converged;
  r.infeasible_hint = s.infeasible_hint;
  r.iterations = s.iterations;
  r.primal_residual = s.primal_residual;
  r.dual_residual = s.dual_residual;
  r.wall_time = sw.seconds();
  return r;
}

namespace {

struct BilipschitzCandidate {
  Matrix points;
  double objective = std::numeric_limits<double>::infinity();
  double violation = std::numeric_limits<double>::infinity();
  bool feasible = false;
};

double constraint_violation(const Matrix& before, const Matrix& after,
                            const OptionalHalfspace& hs, double upper, double lower) {
  double v = 0.0;
  if (hs) {
    const double c = threshold(*hs);
    for (Eigen::Index i = 0; i < after.rows(); ++i)
      v = std::max(v, c - hs->normal.dot(after.row(i).transpose()));
  }
  const maps::PairRatioBounds b = maps::pairwise_ratio_bounds(before, after);
  if (b.defined) {
    if (std::isfinite(upper)) v = std::max(v, b.upper - upper);
    v = std::max(v, 1.0 / lower - b.lower);
  }
  return v;
}

}  // namespace

SolveReport solve_group_bilipschitz(const Matrix& group, const OptionalHalfspace& hs,
                                    double upper, double lower,
                                    const BilipschitzOptions& opts) {
  Stopwatch sw;
  const Eigen::Index n = group.rows(), d = group.cols();
  require(n >= 1 && d >= 1, ErrorKind::EmptyInput, "group is empty");
  require(upper >= 1.0 && lower >= 1.0, ErrorKind::InvalidBox,
          "distortion bounds must be at least 1");

  Matrix dist(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) dist(i, j) = (group.row(i) - group.row(j)).norm();

  SolveReport lip = solve_group_lipschitz(group, hs, upper);
  const Matrix base = std::get<maps::PointwiseMap>(lip.map).targets;
  const double c = hs ? threshold(*hs) : 0.0;

  const auto project_feasible = [&](Matrix& pts) {
    for (int sweep = 0; sweep < 12; ++sweep) {
      if (std::isfinite(upper)) {
        for (Eigen::Index i = 0; i < n; ++i) {
          for (Eigen::Index j = i + 1; j < n; ++j) {
            Eigen::RowVectorXd diff = pts.row(i) - pts.row(j);
            const double len = diff.norm();
            const double radius = upper * dist(i, j);
            if (len > radius + 1e-14) {
              const double pull = 0.5 * (len - radius) / len;
              pts.row(i) -= pull * diff;
              pts.row(j) += pull * diff;
            }
          }
        }
      }
      if (hs) {
        for (Eigen::Index i = 0; i < n; ++i) {
          Vector row = pts.row(i).transpose();
          project_onto_halfspace(row, hs->normal, c);
          pts.row(i) = row.transpose();
        }
      }
    }
  };

  const auto penalized = [&](const Matrix& pts, double mu, Matrix* grad) -> double {
    double f = (pts - group).squaredNorm() / static_cast<double>(n);
    if (grad) *grad = (2.0 / static_cast<double>(n)) * (pts - group);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double floor_ij = dist(i, j) / lower;
        Eigen::RowVectorXd diff = pts.row(i) - pts.row(j);
        const double len = diff.norm();
        const double gap = floor_ij - len;
        if (gap > 0.0) {
          f += mu * gap * gap;
          if (grad && len > 1e-12) {
            const Eigen::RowVectorXd push = (2.0 * mu * gap / len) * diff;
            grad->row(i) -= push;
            grad->row(j) += push;
          }
        }
      }
    }
    return f;
  };

  BilipschitzCandidate best;
  int total_iters = 0;
  const int runs = opts.restarts + 1;
  for (int run = 0; run < runs && sw.seconds() < opts.time_cap; ++run) {
    Matrix pts = base;
    if (run > 0) {
      std::mt19937_64 rng(opts.seed * 6364136223846793005ULL + static_cast<uint64_t>(run));
      std::normal_distribution<double> jitter(0.0, 0.1);
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) pts(i, j) += jitter(rng);
      project_feasible(pts);
    }

    for (double mu = 1.0; mu <= 1e6 && sw.seconds() < opts.time_cap; mu *= 10.0) {
      Matrix grad(n, d), prev_pts, prev_grad;
      double step = 1.0 / (2.0 / static_cast<double>(n) + 4.0 * mu);
      double f = penalized(pts, mu, &grad);
      for (int it = 0; it < 400; ++it) {
        ++total_iters;
        if (it > 0) {
          const Matrix sdiff = pts - prev_pts;
          const Matrix ydiff = grad - prev_grad;
          const double sy = (sdiff.array() * ydiff.array()).sum();
          const double yy = ydiff.squaredNorm();
          if (sy > 1e-300 && yy > 1e-300)
            step = std::clamp(sy / yy, 1e-12, 1e3);
        }
        prev_pts = pts;
        prev_grad = grad;
        Matrix trial;
        double ftrial = std::numeric_limits<double>::infinity();
        double t = step;
        for (int back = 0; back < 30; ++back) {
          trial = pts - t * grad;
          project_feasible(trial);
          ftrial = penalized(trial, mu, nullptr);
          if (ftrial <= f + 1e-12 * (1.0 + std::abs(f))) break;
          t *= 0.5;
        }
        if (!(ftrial < std::numeric_limits<double>::infinity())) break;
        pts = trial;
        f = penalized(pts, mu, &grad);
        if ((pts - prev_pts).norm() <= 1e-11 * (1.0 + pts.norm())) break;
      }
    }

    BilipschitzCandidate cand;
    cand.points = pts;
    cand.objective = mean_displacement(group, pts);
    cand.violation = constraint_violation(group, pts, hs, upper, lower);
    cand.feasible = cand.violation <= opts.feas_tol;
    const bool better = cand.feasible
                            ? (!best.feasible || cand.objective < best.objective)
                            : (!best.feasible && cand.violation < best.violation);
    if (better) best = cand;
  }

  SolveReport r;
  r.map = maps::PointwiseMap{group, best.points};
  r.objective = best.objective;
  r.raw_sum = best.objective * static_cast<double>(n);
  r.converged = best.feasible;
  r.iterations = total_iters;
  r.primal_residual = std::max(best.violation, 0.0);
  r.dual_residual = 0.0;
  r.wall_time = sw.seconds();
  return r;
}

namespace {

// Dense quadratic assembly for the affine fits: variables are the map
// coefficients (layout chosen per variant) followed by the intercept.
struct AffineAssembly {
  ConvexProblem problem;
  Eigen::Index coef_vars = 0;
};

std::vector<SymMatrix> svec_basis(Eigen::Index d) {
  const Eigen::Index m = numerics::svec_dim(d);
  std::vector<SymMatrix> basis;
  basis.reserve(static_cast<size_t>(m));
  for (Eigen::Index t = 0; t < m; ++t) {
    Vector e = Vector::Zero(m);
    e(t) = 1.0;
    basis.push_back(numerics::sunvec(e));
  }
  return basis;
}

SolveReport finish_from_split(const SplitResult& s, const Stopwatch& sw) {
  SolveReport r;
  r.converged = s.converged;
  r.infeasible_hint = s.infeasible_hint;
  r.iterations = s.iterations;
  r.primal_residual = s.primal_residual;
  r.dual_residual = s.dual_residual;
  r.wall_time = sw.seconds();
  return r;
}

}  // namespace

SolveReport solve_affine_psd(const Matrix& group, const OptionalHalfspace& hs, double upper,
                             double lower, const SplitOptions& opts) {
  Stopwatch sw;
  const Eigen::Index n = group.rows(), d = group.cols();
  require(n >= 1 && d >= 1, ErrorKind::EmptyInput, "group is empty");
  validate_box(upper, lower);
  const double lo = box_floor(lower);

  const Eigen::Index m = numerics::svec_dim(d);
  const Eigen::Index nvar = m + d;
  const auto basis = svec_basis(d);

  ConvexProblem p;
  p.hessian = Matrix::Zero(nvar, nvar);
  p.linear = Vector::Zero(nvar);
  Matrix xi(d, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector x = group.row(i).transpose();
    for (Eigen::Index t = 0; t < m; ++t) xi.col(t) = basis[static_cast<size_t>(t)].mat() * x;
    p.hessian.topLeftCorner(m, m) += xi.transpose() * xi;
    p.hessian.topRightCorner(m, d) += xi.transpose();
    p.hessian.bottomLeftCorner(d, m) += xi;
    p.hessian.bottomRightCorner(d, d) += Matrix::Identity(d, d);
    p.linear.head(m) -= xi.transpose() * x;
    p.linear.tail(d) -= x;
  }
  p.hessian *= 2.0 / static_cast<double>(n);
  p.linear *= 2.0 / static_cast<double>(n);
  p.constant = group.squaredNorm() / static_cast<double>(n);

  p.sets.push_back({contiguous_scope(0, m), [lo, upper](Vector& v) {
                      v = numerics::svec(
                          numerics::project_spectral_box(numerics::sunvec(v), lo, upper));
                    }});
  if (hs) {
    const double c = threshold(*hs);
    p.ineq_coeffs = Matrix::Zero(n, nvar);
    p.ineq_bounds = Vector::Constant(n, c);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vector x = group.row(i).transpose();
      const Matrix outer = hs->normal * x.transpose();
      p.ineq_coeffs.row(i).head(m) = numerics::svec(SymMatrix(outer)).transpose();
      p.ineq_coeffs.row(i).tail(d) = hs->normal.transpose();
    }
  }

  SplitResult s = solve_operator_splitting(p, opts);
  const Matrix a =
      numerics::project_spectral_box(numerics::sunvec(s.x.head(m)), lo, upper).mat();
  const Vector b = polish_intercept(group, a, hs);

  SolveReport r = finish_from_split(s, sw);
  fill_affine_report(r, group, a, b, maps::MapStructure::Psd);
  r.wall_time = sw.seconds();
  return r;
}

SolveReport solve_affine_diag(const Matrix& group, const OptionalHalfspace& hs, double upper,
                              double lower, bool tie_entries, const SplitOptions& opts) {
  Stopwatch sw;
  const Eigen::Index n = group.rows(), d = group.cols();
  require(n >= 1 && d >= 1, ErrorKind::EmptyInput, "group is empty");
  validate_box(upper, lower);
  const double lo = box_floor(lower);

  const Eigen::Index nvar = 2 * d;  // diagonal then intercept
  ConvexProblem p;
  p.hessian = Matrix::Zero(nvar, nvar);
  p.linear = Vector::Zero(nvar);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) {
      const double xj = group(i, j);
      p.hessian(j, j) += xj * xj;
      p.hessian(j, d + j) += xj;
      p.hessian(d + j, j) += xj;
      p.hessian(d + j, d + j) += 1.0;
      p.linear(j) -= xj * xj;
      p.linear(d + j) -= xj;
    }
  }
  p.hessian *= 2.0 / static_cast<double>(n);
  p.linear *= 2.0 / static_cast<double>(n);
  p.constant = group.squaredNorm() / static_cast<double>(n);

  p.sets.push_back({contiguous_scope(0, d), [lo, upper](Vector& v) {
                      for (Eigen::Index j = 0; j < v.size(); ++j)
                        v(j) = std::clamp(v(j), lo, upper);
                    }});
  if (tie_entries)
    p.sets.push_back({contiguous_scope(0, d),
                      [](Vector& v) { v.setConstant(v.mean()); }});
  if (hs) {
    const double c = threshold(*hs);
    p.ineq_coeffs = Matrix::Zero(n, nvar);
    p.ineq_bounds = Vector::Constant(n, c);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) {
        p.ineq_coeffs(i, j) = hs->normal(j) * group(i, j);
        p.ineq_coeffs(i, d + j) = hs->normal(j);
      }
    }
  }

  SplitResult s = solve_operator_splitting(p, opts);
  Vector diag = s.x.head(d);
  if (tie_entries) diag.setConstant(diag.mean());
  for (Eigen::Index j = 0; j < d; ++j) diag(j) = std::clamp(diag(j), lo, upper);
  const Matrix a = diag.asDiagonal();
  const Vector b = polish_intercept(group, a, hs);

  SolveReport r = finish_from_split(s, sw);
  fill_affine_report(r, group, a, b,
                     tie_entries ? maps::MapStructure::Scaled : maps::MapStructure::Diagonal);
  r.wall_time = sw.seconds();
  return r;
}

namespace {

// Frobenius projection onto { ||A||_2 <= limit }: shrink singular values
// above the limit, computed through the right singular basis only.
Matrix clamp_singular_values(const Matrix& a, double limit) {
  const numerics::Spectrum s = numerics::sym_eig(SymMatrix(a.transpose() * a));
  Matrix shrink = Matrix::Zero(a.cols(), a.cols());
  for (Eigen::Index t = 0; t < s.values.size(); ++t) {
    const double sigma = std::sqrt(std::max(s.values(t), 0.0));
    shrink += (sigma > limit ? limit / sigma : 1.0) * s.vectors.col(t) *
              s.vectors.col(t).transpose();
  }
  return a * shrink;
}

}  // namespace

SolveReport solve_affine_full(const Matrix& group, const OptionalHalfspace& hs, double upper,
                              double lower, const SplitOptions& opts) {
  Stopwatch sw;
  const Eigen::Index n = group.rows(), d = group.cols();
  require(n >= 1 && d >= 1, ErrorKind::EmptyInput, "group is empty");
  require(lower <= 0.0 || std::isinf(lower), ErrorKind::UnsupportedConstraint,
          "lower distortion bounds need a symmetric coefficient matrix");
  require(upper > 0.0, ErrorKind::InvalidBox, "upper bound must be positive");

  const Eigen::Index nvar = d * d + d;  // column-major coefficients, then intercept
  const auto var_of = [d](Eigen::Index row, Eigen::Index col) { return col * d + row; };

  ConvexProblem p;
  p.hessian = Matrix::Zero(nvar, nvar);
  p.linear = Vector::Zero(nvar);
  const Matrix second_moment = group.transpose() * group / static_cast<double>(n);
  const Vector mean = group.colwise().mean().transpose();
  for (Eigen::Index c1 = 0; c1 < d; ++c1)
    for (Eigen::Index c2 = 0; c2 < d; ++c2)
      for (Eigen::Index rr = 0; rr < d; ++rr)
        p.hessian(var_of(rr, c1), var_of(rr, c2)) = 2.0 * second_moment(c1, c2);
  for (Eigen::Index cc = 0; cc < d; ++cc)
    for (Eigen::Index rr = 0; rr < d; ++rr) {
      p.hessian(var_of(rr, cc), d * d + rr) = 2.0 * mean(cc);
      p.hessian(d * d + rr, var_of(rr, cc)) = 2.0 * mean(cc);
    }
  p.hessian.bottomRightCorner(d, d) = 2.0 * Matrix::Identity(d, d);
  for (Eigen::Index cc = 0; cc < d; ++cc)
    for (Eigen::Index rr = 0; rr < d; ++rr)
      p.linear(var_of(rr, cc)) = -2.0 * second_moment(cc, rr);
  p.linear.tail(d) = -2.0 * mean;
  p.constant = group.squaredNorm() / static_cast<double>(n);

  if (std::isfinite(upper)) {
    p.sets.push_back({contiguous_scope(0, d * d), [d, upper](Vector& v) {
                        const Eigen::Map<const Matrix> a(v.data(), d, d);
                        const Matrix clamped = clamp_singular_values(a, upper);
                        v = Eigen::Map<const Vector>(clamped.data(), d * d);
                      }});
  }
  if (hs) {
    const double c = threshold(*hs);
    p.ineq_coeffs = Matrix::Zero(n, nvar);
    p.ineq_bounds = Vector::Constant(n, c);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index cc = 0; cc < d; ++cc)
        for (Eigen::Index rr = 0; rr < d; ++rr)
          p.ineq_coeffs(i, var_of(rr, cc)) = hs->normal(rr) * group(i, cc);
      p.ineq_coeffs.row(i).tail(d) = hs->normal.transpose();
    }
  }

  SplitResult s = solve_operator_splitting(p, opts);
  Matrix a = Eigen::Map<const Matrix>(s.x.data(), d, d);
  if (std::isfinite(upper)) a = clamp_singular_values(a, upper);
  const Vector b = polish_intercept(group, a, hs);

  SolveReport r = finish_from_split(s, sw);
  fill_affine_report(r, group, a, b, maps::MapStructure::Full);
  r.wall_time = sw.seconds();
  return r;
}

namespace {

SolveReport finish_gaussian(const SplitResult& s, const Stopwatch& sw,
                            const maps::GaussianMoments& p_in, const Vector& mu_q,
                            const Matrix& a, const Matrix& cov_q, double w2,
                            maps::MapStructure tag, Eigen::Index n_points) {
  SolveReport r;
  r.converged = s.converged;
  r.infeasible_hint = s.infeasible_hint;
  r.iterations = s.iterations;
  r.primal_residual = s.primal_residual;
  r.dual_residual = s.dual_residual;

  maps::GaussianPairMap pair;
  pair.source = p_in;
  pair.target.mean = mu_q;
  pair.target.cov = SymMatrix(cov_q);
  pair.target.ridge = 0.0;
  pair.map = maps::AffineMap{a, mu_q - a * p_in.mean, tag};
  r.map = pair;
  r.objective = w2;
  r.raw_sum = w2 * static_cast<double>(std::max<Eigen::Index>(n_points, 1));
  r.wall_time = sw.seconds();
  return r;
}

void check_gaussian_inputs(const maps::GaussianMoments& p, const Matrix& group,
                           const OptionalHalfspace& hs) {
  require(p.mean.size() == p.cov.dim(), ErrorKind::DimensionMismatch,
          "covariance does not match mean dimension");
  if (group.rows() > 0)
    require(group.cols() == p.mean.size(), ErrorKind::DimensionMismatch,
            "group dimension does not match moments");
  if (hs)
    require(hs->normal.size() == p.mean.size(), ErrorKind::DimensionMismatch,
            "halfspace dimension does not match moments");
  if (hs)
    require(group.rows() > 0, ErrorKind::EmptyInput,
            "halfspace constraints need fitting points");
}

}  // namespace

SolveReport solve_gaussian_full(const maps::GaussianMoments& p, const OptionalHalfspace& hs,
                                const Matrix& group, double upper, double lower,
                                const SplitOptions& opts) {
  Stopwatch sw;
  check_gaussian_inputs(p, group, hs);
  validate_box(upper, lower);
  const double lo = box_floor(lower);
  const Eigen::Index d = p.mean.size();
  const Eigen::Index n = group.rows();
  const SourceSpectrum src = regularized_source(p);

  const Eigen::Index m = numerics::svec_dim(d);
  const Eigen::Index nvar = d + m;  // mean first, then svec of the coefficients
  const auto basis = svec_basis(d);

  ConvexProblem prob;
  prob.hessian = Matrix::Zero(nvar, nvar);
  prob.linear = Vector::Zero(nvar);
  prob.hessian.topLeftCorner(d, d) = 2.0 * Matrix::Identity(d, d);
  prob.linear.head(d) = -2.0 * p.mean;
  // Quadratic form svec(A)' M svec(A) = Tr(A cov A) built column by column.
  for (Eigen::Index t = 0; t < m; ++t) {
    const Matrix& e = basis[static_cast<size_t>(t)].mat();
    const Matrix col = 0.5 * (e * src.cov + src.cov * e);
    prob.hessian.col(d + t).tail(m) = numerics::svec(SymMatrix(col));
  }
  const Matrix quad = prob.hessian.bottomRightCorner(m, m);
  prob.hessian.bottomRightCorner(m, m) = quad + quad.transpose();
  prob.linear.tail(m) = -2.0 * numerics::svec(SymMatrix(src.cov));

  prob.sets.push_back({contiguous_scope(d, m), [lo, upper](Vector& v) {
                         v = numerics::svec(
                             numerics::project_spectral_box(numerics::sunvec(v), lo, upper));
                       }});
  if (hs) {
    const double c = threshold(*hs);
    prob.ineq_coeffs = Matrix::Zero(n, nvar);
    prob.ineq_bounds = Vector::Constant(n, c);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vector z = group.row(i).transpose() - p.mean;
      prob.ineq_coeffs.row(i).head(d) = hs->normal.transpose();
      prob.ineq_coeffs.row(i).tail(m) =
          numerics::svec(SymMatrix(hs->normal * z.transpose())).transpose();
    }
  }

  SplitResult s = solve_operator_splitting(prob, opts);
  const Matrix a =
      numerics::project_spectral_box(numerics::sunvec(s.x.tail(m)), lo, upper).mat();
  const Vector mu_q = polish_target_mean(
      p.mean,
      [&](Eigen::Index i) {
        return hs->normal.dot(a * (group.row(i).transpose() - p.mean));
      },
      n, hs);

  const Matrix cov_q = a * src.cov * a;
  const Matrix shifted = a - Matrix::Identity(d, d);
  const double w2 =
      (p.mean - mu_q).squaredNorm() + (shifted * src.cov * shifted).trace();
  return finish_gaussian(s, sw, p, mu_q, a, cov_q, w2, maps::MapStructure::Psd, n);
}

SolveReport solve_gaussian_commutative(const maps::GaussianMoments& p,
                                       const OptionalHalfspace& hs, const Matrix& group,
                                       double upper, double lower, const SplitOptions& opts) {
  Stopwatch sw;
  check_gaussian_inputs(p, group, hs);
  validate_box(upper, lower);
  const double lo = box_floor(lower);
  const Eigen::Index d = p.mean.size();
  const Eigen::Index n = group.rows();
  const SourceSpectrum src = regularized_source(p);
  const Matrix& u = src.spec.vectors;
  const Vector sqrt_lambda = src.spec.values.array().sqrt();

  const Eigen::Index nvar = 2 * d;  // mean, then per-direction deviations
  ConvexProblem prob;
  prob.hessian = Matrix::Zero(nvar, nvar);
  prob.linear = Vector::Zero(nvar);
  prob.hessian.topLeftCorner(d, d) = 2.0 * Matrix::Identity(d, d);
  prob.hessian.bottomRightCorner(d, d) = 2.0 * Matrix::Identity(d, d);
  prob.linear.head(d) = -2.0 * p.mean;
  prob.linear.tail(d) = -2.0 * sqrt_lambda;

  const Vector slo = lo * sqrt_lambda;
  const Vector shi = upper * sqrt_lambda;
  prob.sets.push_back({contiguous_scope(d, d), [slo, shi](Vector& v) {
                         for (Eigen::Index j = 0; j < v.size(); ++j)
                           v(j) = std::clamp(v(j), slo(j), shi(j));
                       }});
  if (hs) {
    const double c = threshold(*hs);
    const Vector v_w = u.transpose() * hs->normal;
    prob.ineq_coeffs = Matrix::Zero(n, nvar);
    prob.ineq_bounds = Vector::Constant(n, c);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vector zeta = u.transpose() * (group.row(i).transpose() - p.mean);
      prob.ineq_coeffs.row(i).head(d) = hs->normal.transpose();
      for (Eigen::Index j = 0; j < d; ++j)
        prob.ineq_coeffs(i, d + j) = v_w(j) * zeta(j) / sqrt_lambda(j);
    }
  }

  SplitResult s = solve_operator_splitting(prob, opts);
  Vector dev = s.x.tail(d);
  for (Eigen::Index j = 0; j < d; ++j) dev(j) = std::clamp(dev(j), slo(j), shi(j));
  const Vector ratio = dev.array() / sqrt_lambda.array();
  const Matrix a = u * ratio.asDiagonal() * u.transpose();
  const Vector mu_q = polish_target_mean(
      p.mean,
      [&](Eigen::Index i) {
        return hs->normal.dot(a * (group.row(i).transpose() - p.mean));
      },
      n, hs);

  const Vector dev_sq = dev.array().square();
  const Matrix cov_q = u * dev_sq.asDiagonal() * u.transpose();
  const double w2 = (p.mean - mu_q).squaredNorm() + (sqrt_lambda - dev).squaredNorm();
  return finish_gaussian(s, sw, p, mu_q, a, cov_q, w2, maps::MapStructure::Psd, n);
}

SolveReport solve_gaussian_scaled(const maps::GaussianMoments& p, const OptionalHalfspace& hs,
                                  const Matrix& group, double upper, double lower,
                                  const SplitOptions& opts) {
  Stopwatch sw;
  check_gaussian_inputs(p, group, hs);
  validate_box(upper, lower);
  const double lo = box_floor(lower);
  const Eigen::Index d = p.mean.size();
  const Eigen::Index n = group.rows();
  const SourceSpectrum src = regularized_source(p);

  const Eigen::Index nvar = d + 1;  // mean, then the scale
  ConvexProblem prob;
  prob.hessian = Matrix::Zero(nvar, nvar);
  prob.linear = Vector::Zero(nvar);
  prob.hessian.topLeftCorner(d, d) = 2.0 * Matrix::Identity(d, d);
  prob.hessian(d, d) = 2.0 * src.trace;
  prob.linear.head(d) = -2.0 * p.mean;
  prob.linear(d) = -2.0 * src.trace;

  prob.sets.push_back({contiguous_scope(d, 1), [lo, upper](Vector& v) {
                         v(0) = std::clamp(v(0), lo, upper);
                       }});
  if (hs) {
    const double c = threshold(*hs);
    prob.ineq_coeffs = Matrix::Zero(n, nvar);
    prob.ineq_bounds = Vector::Constant(n, c);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Vector z = group.row(i).transpose() - p.mean;
      prob.ineq_coeffs.row(i).head(d) = hs->normal.transpose();
      prob.ineq_coeffs(i, d) = hs->normal.dot(z);
    }
  }

  SplitResult s = solve_operator_splitting(prob, opts);
  const double r_scale = std::clamp(s.x(d), lo, upper);
  const Vector mu_q = polish_target_mean(
      p.mean,
      [&](Eigen::Index i) {
        return r_scale * hs->normal.dot(group.row(i).transpose() - p.mean);
      },
      n, hs);

  const Matrix a = r_scale * Matrix::Identity(d, d);
  const Matrix cov_q = r_scale * r_scale * src.cov;
  const double w2 =
      (p.mean - mu_q).squaredNorm() + (r_scale - 1.0) * (r_scale - 1.0) * src.trace;
  return finish_gaussian(s, sw, p, mu_q, a, cov_q, w2, maps::MapStructure::Scaled, n);
}

}  // namespace otcf::solvers
