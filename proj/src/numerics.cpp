#include "otcf/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace otcf::numerics {

namespace {

void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) fail(ErrorKind::InvalidInput, std::string(what) + ": non-finite entries");
}

double offdiag_norm(const Matrix& a) {
  double s = 0.0;
  for (Eigen::Index p = 0; p + 1 < a.rows(); ++p)
    for (Eigen::Index q = p + 1; q < a.cols(); ++q) s += a(p, q) * a(p, q);
  return std::sqrt(2.0 * s);
}

}  // namespace

SymMatrix::SymMatrix(const Matrix& m) {
  require(m.rows() == m.cols(), ErrorKind::DimensionMismatch, "SymMatrix: matrix not square");
  require(m.rows() >= 1, ErrorKind::InvalidInput, "SymMatrix: empty matrix");
  check_finite(m, "SymMatrix");
  m_ = 0.5 * (m + m.transpose());
  // Mirror the lower triangle so equality across the diagonal is exact, not
  // merely up to rounding of (m + m^T)/2.
  for (Eigen::Index i = 0; i < m_.rows(); ++i)
    for (Eigen::Index j = 0; j < i; ++j) m_(j, i) = m_(i, j);
}

SymMatrix SymMatrix::identity(Eigen::Index dim) { return SymMatrix(Matrix::Identity(dim, dim)); }

SymMatrix SymMatrix::zero(Eigen::Index dim) { return SymMatrix(Matrix::Zero(dim, dim)); }

Spectrum sym_eig(const SymMatrix& m) {
  const Eigen::Index n = m.dim();
  Matrix a = m.mat();
  check_finite(a, "sym_eig");
  Matrix v = Matrix::Identity(n, n);

  const double scale = std::max(a.norm(), 1e-300);
  const double tol = 1e-12 * scale;
  const int max_sweeps = 100;

  for (int sweep = 0; sweep < max_sweeps && offdiag_norm(a) > tol; ++sweep) {
    for (Eigen::Index p = 0; p + 1 < n; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::abs(apq) <= 1e-300) continue;
        const double app = a(p, p);
        const double aqq = a(q, q);
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0) ? 1.0 / (theta + std::sqrt(theta * theta + 1.0))
                                        : -1.0 / (-theta + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        for (Eigen::Index i = 0; i < n; ++i) {
          if (i == p || i == q) continue;
          const double aip = a(i, p);
          const double aiq = a(i, q);
          a(i, p) = a(p, i) = c * aip - s * aiq;
          a(i, q) = a(q, i) = s * aip + c * aiq;
        }
        a(p, p) = app - t * apq;
        a(q, q) = aqq + t * apq;
        a(p, q) = a(q, p) = 0.0;

        for (Eigen::Index i = 0; i < n; ++i) {
          const double vip = v(i, p);
          const double viq = v(i, q);
          v(i, p) = c * vip - s * viq;
          v(i, q) = s * vip + c * viq;
        }
      }
    }
  }

  std::vector<Eigen::Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index i, Eigen::Index j) { return a(i, i) > a(j, j); });

  Spectrum out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values(k) = a(order[static_cast<size_t>(k)], order[static_cast<size_t>(k)]);
    out.vectors.col(k) = v.col(order[static_cast<size_t>(k)]);
    // Deterministic sign: largest-magnitude component made positive.
    Eigen::Index imax = 0;
    out.vectors.col(k).cwiseAbs().maxCoeff(&imax);
    if (out.vectors(imax, k) < 0.0) out.vectors.col(k) = -out.vectors.col(k);
  }
  return out;
}

SymMatrix spectral_apply(const SymMatrix& m, const std::function<double(double)>& f) {
  Spectrum sp = sym_eig(m);
  Vector vals = sp.values;
  for (Eigen::Index i = 0; i < vals.size(); ++i) vals(i) = f(vals(i));
  return SymMatrix(sp.vectors * vals.asDiagonal() * sp.vectors.transpose());
}

SymMatrix psd_sqrt(const SymMatrix& m) {
  Spectrum sp = sym_eig(m);
  require(sp.values.minCoeff() >= -1e-6, ErrorKind::NotPsd,
          "psd_sqrt: eigenvalue below -1e-6, matrix is not PSD");
  Vector vals = sp.values.cwiseMax(0.0).cwiseSqrt();
  return SymMatrix(sp.vectors * vals.asDiagonal() * sp.vectors.transpose());
}

SymMatrix project_spectral_box(const SymMatrix& m, double lo, double hi) {
  require(!std::isnan(lo) && !std::isnan(hi) && lo >= 0.0 && lo <= hi, ErrorKind::InvalidBox,
          "project_spectral_box: requires 0 <= lo <= hi");
  return spectral_apply(m, [&](double x) { return std::clamp(x, lo, hi); });
}

SymMatrix project_psd(const SymMatrix& m) {
  return spectral_apply(m, [](double x) { return std::max(x, 0.0); });
}

Vector singular_values(const Matrix& a) {
  require(a.rows() == a.cols(), ErrorKind::InvalidInput, "singular_values: matrix not square");
  check_finite(a, "singular_values");
  SymMatrix gram(Matrix(a.transpose() * a));
  Spectrum sp = sym_eig(gram);
  return sp.values.cwiseMax(0.0).cwiseSqrt();
}

Eigen::Index svec_dim(Eigen::Index d) { return d * (d + 1) / 2; }

Vector svec(const SymMatrix& m) {
  const Eigen::Index d = m.dim();
  Vector v(svec_dim(d));
  const double r2 = std::sqrt(2.0);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = j; i < d; ++i) v(k++) = (i == j) ? m(i, j) : r2 * m(i, j);
  return v;
}

SymMatrix sunvec(const Vector& v) {
  const double len = static_cast<double>(v.size());
  const Eigen::Index d = static_cast<Eigen::Index>(std::llround((std::sqrt(8.0 * len + 1.0) - 1.0) / 2.0));
  require(svec_dim(d) == v.size(), ErrorKind::DimensionMismatch,
          "sunvec: length is not a triangular number");
  Matrix m(d, d);
  const double inv_r2 = 1.0 / std::sqrt(2.0);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < d; ++j)
    for (Eigen::Index i = j; i < d; ++i) {
      const double x = (i == j) ? v(k) : inv_r2 * v(k);
      m(i, j) = x;
      m(j, i) = x;
      ++k;
    }
  return SymMatrix(m);
}

}  // namespace otcf::numerics
