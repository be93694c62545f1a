#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "otcf/classifier.hpp"
#include "otcf/error.hpp"

namespace otcf::dataio {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Labels = Eigen::VectorXi;

struct Dataset {
  std::vector<std::string> feature_names;
  Matrix X;   // n x d, standardized units once standardize() ran
  Labels y;   // {0,1}

  // Per-feature transform recorded by standardize(): raw = std * x + mean.
  Vector feat_mean;
  Vector feat_std;
  bool standardized = false;

  std::vector<std::string> warnings;

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index d() const { return X.cols(); }
};

// Comma-separated, header row required, '.' decimal point. Rows with missing
// or non-finite values are rejected with their file line number. The label
// column must contain exactly two distinct numeric values (mapped to 0/1).
Dataset load_csv(const std::string& path, const std::string& label_column);

// Recenters and rescales every feature to mean 0, std 1 (population std, /n).
// Constant features are dropped with a warning. Records the inverse transform.
Dataset standardize(const Dataset& ds);

Vector to_raw_units(const Dataset& ds, const Vector& x_std);
Vector to_standardized_units(const Dataset& ds, const Vector& x_raw);

// Deterministic shuffled split; train gets floor(train_fraction * n) rows.
std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction, uint64_t seed);

struct KMedoidsResult {
  std::vector<Eigen::Index> medoids;  // indices into the point set
  std::vector<int> assignment;        // point -> position in medoids
  double cost = 0.0;                  // total within-cluster Euclidean distance
  int swap_rounds = 0;
};

// PAM: greedy BUILD initialization, then best-improvement SWAP until no
// improving swap remains (at most max_rounds rounds). All ties break toward
// the lowest index, which makes the procedure fully deterministic; the seed
// parameter is accepted for interface stability but never consulted.
KMedoidsResult kmedoids(const Matrix& points, int k, uint64_t seed, int max_rounds = 100);

struct Group {
  std::string id;
  int label = 0;                      // shared predicted class
  std::vector<Eigen::Index> indices;  // rows of the originating dataset
  Matrix points;
};

struct GroupingResult {
  std::vector<Group> groups;
  std::vector<std::string> warnings;
};

// Per predicted label: k-medoids into clusters_per_label clusters, each cluster
// downsampled to cap (uniform, seeded) or topped up to min_size with the
// nearest same-label points.
GroupingResult build_groups(const Dataset& test, const classifier::LinearModel& model,
                            int clusters_per_label = 10, int cap = 200, int min_size = 20,
                            uint64_t seed = 0);

}  // namespace otcf::dataio
