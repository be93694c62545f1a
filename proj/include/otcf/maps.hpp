#pragma once

#include <Eigen/Core>
#include <string>
#include <variant>
#include <vector>

#include "otcf/error.hpp"
#include "otcf/numerics.hpp"

namespace otcf::maps {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// How the coefficient matrix of an affine map is constrained. The tag is
// descriptive metadata set by whichever routine produced the map; apply()
// treats all of them identically.
enum class MapStructure { Full, Psd, Diagonal, Scaled };

struct AffineMap {
  Matrix A;
  Vector b;
  MapStructure structure = MapStructure::Full;

  Vector operator()(const Vector& x) const { return A * x + b; }
};

struct GaussianMoments {
  Vector mean;
  numerics::SymMatrix cov;
  double ridge = 0.0;  // diagonal added to the sample covariance, 0 if none
};

struct GmmModel {
  Vector weights;  // nonnegative, sums to 1
  std::vector<GaussianMoments> components;
  // Posterior responsibilities of the fitting sample, n x m. May be empty
  // when the model was constructed from moments rather than fitted.
  Matrix responsibilities;

  Eigen::Index size() const { return static_cast<Eigen::Index>(components.size()); }
};

// A per-point lookup table: row i of `sources` is sent to row i of `targets`.
// Defined only on its fitting group; see apply().
struct PointwiseMap {
  Matrix sources;
  Matrix targets;
};

struct GaussianPairMap {
  GaussianMoments source;
  GaussianMoments target;
  AffineMap map;
};

struct GmmMap {
  GmmModel source;
  std::vector<GaussianMoments> targets;  // pushforward moments, one per component
  std::vector<AffineMap> components;     // one per mixture component
};

using TransportMap = std::variant<PointwiseMap, AffineMap, GaussianPairMap, GmmMap>;

// Fitting context carried alongside a map when it is saved or reported.
struct MapMetadata {
  double upper_bound = 0.0;  // K used when fitting, 0 when unconstrained
  double lower_bound = 0.0;  // k used when fitting, 0 when unconstrained
  double alpha = 0.5;
  std::string group_id;
};

// Evaluates the map at x. Pointwise maps only know their fitting points and
// throw NotGeneralizable for any other input; GMM maps route x through the
// component with the largest posterior responsibility (ties to the lowest
// component index).
Vector apply(const TransportMap& map, const Vector& x);

// Index of the mixture component with maximal posterior responsibility at x.
Eigen::Index responsibility_argmax(const GmmModel& model, const Vector& x);

// Log density of N(mean, cov) at x. Near-singular covariances are handled by
// flooring eigenvalues at 1e-12 in the inverse and the determinant.
double gaussian_log_density(const GaussianMoments& g, const Vector& x);

// Sample mean and covariance (1/n normalization) of the rows of `points`,
// with just enough ridge added to make the covariance eigenvalues >= 1e-8.
GaussianMoments estimate_moments(const Matrix& points);

// The optimal-transport map between two Gaussians: A is symmetric PSD and
// pushes N(mean_P, cov_P) forward onto N(mean_Q, cov_Q). cov_P must be
// nonsingular after at most 1e-8 of ridge.
AffineMap gaussian_to_affine(const GaussianMoments& p, const GaussianMoments& q);

// Squared 2-Wasserstein distance between two Gaussians, in closed form.
double closed_form_w2(const GaussianMoments& p, const GaussianMoments& q);

struct BiLipschitzBounds {
  double upper = 0.0;  // largest singular value of A
  double lower = 0.0;  // 1 / smallest singular value, +inf when singular
  bool singular = false;
};

// Tightest (K, k) for which the affine map is K-upper, 1/k-lower Lipschitz.
BiLipschitzBounds analytic_bilipschitz(const AffineMap& map);

struct PairRatioBounds {
  double upper = 0.0;
  double lower = 0.0;
  bool defined = false;  // false when no pair of distinct inputs exists
};

// Extremes of ||x'_i - x'_j|| / ||x_i - x_j|| over all pairs with distinct
// inputs. Rows of `before` and `after` are paired by index.
PairRatioBounds pairwise_ratio_bounds(const Matrix& before, const Matrix& after);

// True when every pairwise ratio lies in [1/lower - tol, upper + tol], i.e.
// the mapped points contract by at most `lower` and expand by at most `upper`.
bool satisfies_bilipschitz(const Matrix& before, const Matrix& after, double upper,
                           double lower, double tol = 1e-9);

}  // namespace otcf::maps
