#include "otcf/classifier.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace otcf::classifier {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

void check_data(const Matrix& X, const Labels& y) {
  require(X.rows() == y.size(), ErrorKind::DimensionMismatch, "rows of X must match labels");
  require(X.rows() >= 1, ErrorKind::EmptyInput, "no training rows");
  require(X.allFinite(), ErrorKind::InvalidInput, "non-finite feature values");
  for (Eigen::Index i = 0; i < y.size(); ++i)
    require(y(i) == 0 || y(i) == 1, ErrorKind::NonBinaryLabel, "labels must be 0/1");
}

struct Objective {
  const Matrix& X;
  const Labels& y;
  double l2;

  // theta = (w, c)
  double value(const Vector& theta) const {
    const Eigen::Index n = X.rows(), d = X.cols();
    const Vector w = theta.head(d);
    const double c = theta(d);
    double ce = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double z = X.row(i).dot(w) + c;
      ce += (y(i) == 1) ? softplus(-z) : softplus(z);
    }
    return ce / static_cast<double>(n) + 0.5 * l2 * w.squaredNorm();
  }

  Vector gradient(const Vector& theta, Vector* probs = nullptr) const {
    const Eigen::Index n = X.rows(), d = X.cols();
    const Vector w = theta.head(d);
    const double c = theta(d);
    Vector g = Vector::Zero(d + 1);
    if (probs) probs->resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double p = sigmoid(X.row(i).dot(w) + c);
      if (probs) (*probs)(i) = p;
      const double r = p - static_cast<double>(y(i));
      g.head(d) += r * X.row(i).transpose();
      g(d) += r;
    }
    g /= static_cast<double>(n);
    g.head(d) += l2 * w;
    return g;
  }

  Matrix hessian(const Vector& probs) const {
    const Eigen::Index n = X.rows(), d = X.cols();
    Matrix h = Matrix::Zero(d + 1, d + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double s = probs(i) * (1.0 - probs(i));
      Vector xi(d + 1);
      xi.head(d) = X.row(i).transpose();
      xi(d) = 1.0;
      h.noalias() += s * xi * xi.transpose();
    }
    h /= static_cast<double>(n);
    for (Eigen::Index j = 0; j < d; ++j) h(j, j) += l2;
    return h;
  }
};

}  // namespace

LinearModel fit_logistic(const Matrix& X, const Labels& y, double l2_penalty,
                         const FitOptions& opts) {
  check_data(X, y);
  require(l2_penalty >= 0.0, ErrorKind::InvalidInput, "penalty must be nonnegative");

  const Eigen::Index d = X.cols();
  const Objective obj{X, y, l2_penalty};
  Vector theta = Vector::Zero(d + 1);
  double fval = obj.value(theta);

  LinearModel m;
  m.l2_penalty = l2_penalty;
  int it = 0;
  double gnorm = 0.0;
  for (; it < opts.max_iter; ++it) {
    Vector probs;
    const Vector g = obj.gradient(theta, &probs);
    gnorm = g.norm();
    if (gnorm <= opts.grad_tol) break;

    Vector step;
    const Matrix h = obj.hessian(probs);
    Eigen::LDLT<Matrix> ldlt(h);
    bool newton_ok = (ldlt.info() == Eigen::Success);
    if (newton_ok) {
      step = ldlt.solve(-g);
      newton_ok = step.allFinite() && -step.dot(g) > 0.0;
    }
    if (!newton_ok) step = -g;  // gradient fallback when the Hessian is unusable

    // Step halving until the objective decreases.
    double t = 1.0;
    bool accepted = false;
    for (int half = 0; half < 60; ++half) {
      const Vector cand = theta + t * step;
      const double fcand = obj.value(cand);
      if (fcand < fval) {
        theta = cand;
        fval = fcand;
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;  // stationary up to line-search resolution
  }

  m.weights = theta.head(d);
  m.intercept = theta(d);
  m.iterations = it;
  m.grad_norm = obj.gradient(theta).norm();
  m.train_cross_entropy = fval - 0.5 * l2_penalty * m.weights.squaredNorm();
  m.converged = m.grad_norm <= opts.grad_tol;
  // An unpenalized fit that drives the training loss to numerical zero has
  // separated the classes; the true minimizer sits at infinity, so a tiny
  // gradient at finite weights is vacuous stationarity. Flag it.
  if (l2_penalty == 0.0 && m.train_cross_entropy < 1e-6) m.converged = false;
  return m;
}

GridSearchResult grid_search_cv(const Matrix& X, const Labels& y, int folds, uint64_t seed) {
  check_data(X, y);
  require(folds >= 2, ErrorKind::InvalidInput, "need at least 2 folds");
  require(X.rows() >= folds, ErrorKind::InvalidInput, "fewer samples than folds");

  GridSearchResult out;
  out.grid.push_back(0.0);
  for (int i = 0; i < 9; ++i) out.grid.push_back(std::pow(10.0, -2.0 + 4.0 * i / 8.0));

  const Eigen::Index n = X.rows();
  std::vector<Eigen::Index> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 g(seed);
  std::shuffle(idx.begin(), idx.end(), g);

  // Shuffled contiguous blocks as folds.
  std::vector<int> fold_of(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i)
    fold_of[static_cast<size_t>(idx[static_cast<size_t>(i)])] =
        static_cast<int>((static_cast<long long>(i) * folds) / n);

  double best_ce = std::numeric_limits<double>::infinity();
  double best_pen = 0.0;
  for (double pen : out.grid) {
    double ce_sum = 0.0;
    int ce_count = 0;
    for (int f = 0; f < folds; ++f) {
      std::vector<Eigen::Index> tr, va;
      for (Eigen::Index i = 0; i < n; ++i)
        (fold_of[static_cast<size_t>(i)] == f ? va : tr).push_back(i);
      if (va.empty() || tr.empty()) continue;

      Matrix Xtr(tr.size(), X.cols()), Xva(va.size(), X.cols());
      Labels ytr(tr.size()), yva(va.size());
      for (size_t i = 0; i < tr.size(); ++i) {
        Xtr.row(static_cast<Eigen::Index>(i)) = X.row(tr[i]);
        ytr(static_cast<Eigen::Index>(i)) = y(tr[i]);
      }
      for (size_t i = 0; i < va.size(); ++i) {
        Xva.row(static_cast<Eigen::Index>(i)) = X.row(va[i]);
        yva(static_cast<Eigen::Index>(i)) = y(va[i]);
      }
      const LinearModel m = fit_logistic(Xtr, ytr, pen);
      ce_sum += mean_cross_entropy(m, Xva, yva);
      ++ce_count;
    }
    const double ce = ce_sum / std::max(ce_count, 1);
    out.grid_ce.push_back(ce);
    if (ce < best_ce || (ce == best_ce && pen > best_pen)) {
      best_ce = ce;
      best_pen = pen;
    }
  }
  out.best_penalty = best_pen;
  out.cv_cross_entropy = best_ce;
  return out;
}

double predict_probability(const LinearModel& m, const Vector& x) {
  require(x.size() == m.weights.size(), ErrorKind::DimensionMismatch,
          "feature dimension mismatch");
  return sigmoid(m.weights.dot(x) + m.intercept);
}

double score(const LinearModel& m, const Vector& x, int target_class) {
  require(target_class == 0 || target_class == 1, ErrorKind::InvalidInput,
          "target class must be 0 or 1");
  const double p = predict_probability(m, x);
  return target_class == 1 ? p : 1.0 - p;
}

int predict_label(const LinearModel& m, const Vector& x) {
  return predict_probability(m, x) >= 0.5 ? 1 : 0;
}

Halfspace halfspace(const LinearModel& m, int target_class, double alpha) {
  require(target_class == 0 || target_class == 1, ErrorKind::InvalidInput,
          "target class must be 0 or 1");
  require(alpha > 0.0 && alpha < 1.0, ErrorKind::InvalidInput, "alpha must be in (0,1)");
  require(m.weights.norm() > 0.0, ErrorKind::NoDecisionBoundary,
          "zero weights define no decision boundary");

  const double logit_alpha = std::log(alpha / (1.0 - alpha));
  Halfspace h;
  h.target_class = target_class;
  h.alpha = alpha;
  if (target_class == 1) {
    h.normal = m.weights;
    h.offset = logit_alpha - m.intercept;
  } else {
    h.normal = -m.weights;
    h.offset = logit_alpha + m.intercept;
  }
  return h;
}

double mean_cross_entropy(const LinearModel& m, const Matrix& X, const Labels& y) {
  require(X.rows() == y.size(), ErrorKind::DimensionMismatch, "rows of X must match labels");
  double ce = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const double z = m.weights.dot(X.row(i)) + m.intercept;
    ce += (y(i) == 1) ? softplus(-z) : softplus(z);
  }
  return ce / static_cast<double>(X.rows());
}

}  // namespace otcf::classifier
