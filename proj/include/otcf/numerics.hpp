#pragma once

#include <Eigen/Core>
#include <functional>

#include "otcf/error.hpp"

namespace otcf::numerics {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Dense symmetric matrix. Symmetry is enforced on construction by storing
// (M + M^T)/2, so entries(i,j) == entries(j,i) holds exactly afterwards.
class SymMatrix {
public:
  SymMatrix() = default;
  explicit SymMatrix(const Matrix& m);

  static SymMatrix identity(Eigen::Index dim);
  static SymMatrix zero(Eigen::Index dim);

  const Matrix& mat() const { return m_; }
  Eigen::Index dim() const { return m_.rows(); }
  double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }
  double trace() const { return m_.trace(); }

private:
  Matrix m_;
};

// Eigenvalues sorted descending; eigenvector columns paired with them.
struct Spectrum {
  Vector values;
  Matrix vectors;

  Matrix reconstruct() const { return vectors * values.asDiagonal() * vectors.transpose(); }
};

// Cyclic Jacobi eigendecomposition. Off-diagonal tolerance 1e-12 (relative to
// the Frobenius norm of the input), at most 100 sweeps. Deterministic.
Spectrum sym_eig(const SymMatrix& m);

// Symmetric PSD square root. Eigenvalues in [-1e-10, 0) are clamped to zero;
// an eigenvalue below -1e-6 is a genuine violation and throws NotPsd.
SymMatrix psd_sqrt(const SymMatrix& m);

// U diag(f(lambda)) U^T for an arbitrary per-eigenvalue transform.
SymMatrix spectral_apply(const SymMatrix& m, const std::function<double(double)>& f);

// Frobenius-nearest matrix with all eigenvalues in [lo, hi]. Requires 0 <= lo <= hi.
SymMatrix project_spectral_box(const SymMatrix& m, double lo, double hi);

// Frobenius-nearest PSD matrix (negative eigenvalues clamped to zero).
SymMatrix project_psd(const SymMatrix& m);

// Singular values of a square matrix, descending. Computed as the square roots
// of the eigenvalues of A^T A, which is adequate at the tolerances used here.
Vector singular_values(const Matrix& a);

// Isometric half-vectorization of a symmetric matrix: lower triangle stacked
// column by column with off-diagonal entries scaled by sqrt(2), so that
// dot(svec(A), svec(B)) equals the Frobenius inner product <A, B>.
Eigen::Index svec_dim(Eigen::Index d);
Vector svec(const SymMatrix& m);
SymMatrix sunvec(const Vector& v);

}  // namespace otcf::numerics
