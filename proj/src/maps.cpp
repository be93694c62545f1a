#include "otcf/maps.hpp"

#include <cmath>
#include <limits>

namespace otcf::maps {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Eigenvalue floor used when inverting covariances for densities.
constexpr double kDensityFloor = 1e-12;

// Smallest eigenvalue tolerated in a source covariance, also the ridge target.
constexpr double kCovRidge = 1e-8;

void require_same_dim(const Vector& a, const Vector& b, const char* what) {
  require(a.size() == b.size(), ErrorKind::DimensionMismatch, what);
}

}  // namespace

Vector apply(const TransportMap& map, const Vector& x) {
  return std::visit(
      [&x](const auto& m) -> Vector {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, PointwiseMap>) {
          require(m.sources.cols() == x.size(), ErrorKind::DimensionMismatch,
                  "pointwise map dimension does not match input");
          for (Eigen::Index i = 0; i < m.sources.rows(); ++i) {
            if ((m.sources.row(i).transpose().array() == x.array()).all())
              return m.targets.row(i).transpose();
          }
          fail(ErrorKind::NotGeneralizable,
               "pointwise map is only defined on its fitting group");
        } else if constexpr (std::is_same_v<T, AffineMap>) {
          require(m.A.cols() == x.size(), ErrorKind::DimensionMismatch,
                  "affine map dimension does not match input");
          return m(x);
        } else if constexpr (std::is_same_v<T, GaussianPairMap>) {
          require(m.map.A.cols() == x.size(), ErrorKind::DimensionMismatch,
                  "affine map dimension does not match input");
          return m.map(x);
        } else {
          const Eigen::Index j = responsibility_argmax(m.source, x);
          return m.components[static_cast<size_t>(j)](x);
        }
      },
      map);
}

Eigen::Index responsibility_argmax(const GmmModel& model, const Vector& x) {
  require(model.size() >= 1, ErrorKind::InvalidInput, "mixture has no components");
  Eigen::Index best = 0;
  double best_log = -std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < model.size(); ++j) {
    const double w = model.weights(j);
    if (w <= 0.0) continue;
    const double lp = std::log(w) + gaussian_log_density(model.components[static_cast<size_t>(j)], x);
    if (lp > best_log) {
      best_log = lp;
      best = j;
    }
  }
  return best;
}

double gaussian_log_density(const GaussianMoments& g, const Vector& x) {
  require_same_dim(g.mean, x, "density evaluated at wrong dimension");
  const numerics::Spectrum s = numerics::sym_eig(g.cov);
  const Vector centered = numerics::Matrix(s.vectors.transpose()) * (x - g.mean);
  double logdet = 0.0;
  double quad = 0.0;
  for (Eigen::Index i = 0; i < s.values.size(); ++i) {
    const double lambda = std::max(s.values(i), kDensityFloor);
    logdet += std::log(lambda);
    quad += centered(i) * centered(i) / lambda;
  }
  return -0.5 * (static_cast<double>(x.size()) * kLog2Pi + logdet + quad);
}

GaussianMoments estimate_moments(const Matrix& points) {
  require(points.rows() >= 2, ErrorKind::InvalidInput,
          "moment estimation needs at least two points");
  const Eigen::Index n = points.rows();
  GaussianMoments out;
  out.mean = points.colwise().mean().transpose();
  const Matrix centered = points.rowwise() - out.mean.transpose();
  Matrix cov = centered.transpose() * centered / static_cast<double>(n);
  const numerics::SymMatrix sym(cov);
  const numerics::Spectrum s = numerics::sym_eig(sym);
  const double lambda_min = s.values(s.values.size() - 1);
  out.ridge = std::max(0.0, kCovRidge - lambda_min);
  if (out.ridge > 0.0)
    cov += out.ridge * Matrix::Identity(cov.rows(), cov.cols());
  out.cov = numerics::SymMatrix(cov);
  return out;
}

AffineMap gaussian_to_affine(const GaussianMoments& p, const GaussianMoments& q) {
  require_same_dim(p.mean, q.mean, "moment pair dimensions differ");
  require(p.cov.dim() == p.mean.size() && q.cov.dim() == q.mean.size(),
          ErrorKind::DimensionMismatch, "covariance does not match mean dimension");

  numerics::Spectrum sp = numerics::sym_eig(p.cov);
  const double lambda_min = sp.values(sp.values.size() - 1);
  require(lambda_min > -1e-6, ErrorKind::NotPsd, "source covariance is not PSD");
  const double ridge = std::max(0.0, kCovRidge - lambda_min);
  for (Eigen::Index i = 0; i < sp.values.size(); ++i)
    sp.values(i) = std::max(sp.values(i) + ridge, kCovRidge);
  require(sp.values(sp.values.size() - 1) >= 1e-14 * sp.values(0),
          ErrorKind::SingularMatrix, "source covariance is singular beyond repair");

  Vector sqrt_vals = sp.values.array().sqrt();
  const Matrix p_half = sp.vectors * sqrt_vals.asDiagonal() * sp.vectors.transpose();
  const Matrix p_half_inv =
      sp.vectors * sqrt_vals.cwiseInverse().asDiagonal() * sp.vectors.transpose();

  const numerics::SymMatrix inner(p_half * q.cov.mat() * p_half);
  const numerics::SymMatrix inner_sqrt = numerics::psd_sqrt(inner);

  AffineMap out;
  out.A = numerics::SymMatrix(p_half_inv * inner_sqrt.mat() * p_half_inv).mat();
  out.b = q.mean - out.A * p.mean;
  out.structure = MapStructure::Psd;
  return out;
}

double closed_form_w2(const GaussianMoments& p, const GaussianMoments& q) {
  require_same_dim(p.mean, q.mean, "moment pair dimensions differ");
  const numerics::SymMatrix q_half = numerics::psd_sqrt(q.cov);
  const numerics::SymMatrix mixed(q_half.mat() * p.cov.mat() * q_half.mat());
  const double cross = numerics::psd_sqrt(mixed).trace();
  const double value = (p.mean - q.mean).squaredNorm() + p.cov.trace() +
                       q.cov.trace() - 2.0 * cross;
  return std::max(value, 0.0);
}

BiLipschitzBounds analytic_bilipschitz(const AffineMap& map) {
  require(map.A.allFinite(), ErrorKind::InvalidInput, "map coefficients must be finite");
  const Vector sigma = numerics::singular_values(map.A);
  BiLipschitzBounds out;
  out.upper = sigma(0);
  const double smallest = sigma(sigma.size() - 1);
  if (smallest <= 0.0) {
    out.singular = true;
    out.lower = std::numeric_limits<double>::infinity();
  } else {
    out.lower = 1.0 / smallest;
    out.singular = !std::isfinite(out.lower);
  }
  return out;
}

PairRatioBounds pairwise_ratio_bounds(const Matrix& before, const Matrix& after) {
  require(before.rows() == after.rows(), ErrorKind::DimensionMismatch,
          "point sets must pair rows one to one");
  PairRatioBounds out;
  out.upper = 0.0;
  out.lower = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < before.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < before.rows(); ++j) {
      const double d0 = (before.row(i) - before.row(j)).norm();
      if (d0 == 0.0) continue;
      const double ratio = (after.row(i) - after.row(j)).norm() / d0;
      out.upper = std::max(out.upper, ratio);
      out.lower = std::min(out.lower, ratio);
      out.defined = true;
    }
  }
  if (!out.defined) {
    out.upper = 0.0;
    out.lower = 0.0;
  }
  return out;
}

bool satisfies_bilipschitz(const Matrix& before, const Matrix& after, double upper,
                           double lower, double tol) {
  const PairRatioBounds r = pairwise_ratio_bounds(before, after);
  if (!r.defined) return true;
  return r.upper <= upper + tol && r.lower >= 1.0 / lower - tol;
}

}  // namespace otcf::maps
