#include "otcf/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

namespace otcf::dataio {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::stringstream ss(line);
  while (std::getline(ss, cur, ',')) {
    // Trim surrounding whitespace and a trailing CR from Windows line endings.
    const auto b = cur.find_first_not_of(" \t\r");
    const auto e = cur.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? "" : cur.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_cell(const std::string& cell, int line_no, const std::string& col) {
  if (cell.empty())
    fail(ErrorKind::ParseError, "missing value in column '" + col + "' at line " +
                                    std::to_string(line_no));
  char* end = nullptr;
  const double v = std::strtod(cell.c_str(), &end);
  if (end != cell.c_str() + cell.size() || !std::isfinite(v))
    fail(ErrorKind::ParseError, "unparseable or non-finite value '" + cell + "' in column '" +
                                    col + "' at line " + std::to_string(line_no));
  return v;
}

}  // namespace

Dataset load_csv(const std::string& path, const std::string& label_column) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::IoError, "cannot open " + path);

  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::EmptyInput,
          "empty file: " + path);
  const std::vector<std::string> header = split_line(line);
  Eigen::Index label_col = -1;
  for (size_t j = 0; j < header.size(); ++j)
    if (header[j] == label_column) label_col = static_cast<Eigen::Index>(j);
  require(label_col >= 0, ErrorKind::ParseError,
          "label column '" + label_column + "' not found in header");

  std::vector<std::vector<double>> rows;
  std::vector<double> labels_raw;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::vector<std::string> cells = split_line(line);
    require(cells.size() == header.size(), ErrorKind::ParseError,
            "line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                " fields, expected " + std::to_string(header.size()));
    std::vector<double> row;
    for (size_t j = 0; j < cells.size(); ++j) {
      const double v = parse_cell(cells[j], line_no, header[j]);
      if (static_cast<Eigen::Index>(j) == label_col)
        labels_raw.push_back(v);
      else
        row.push_back(v);
    }
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), ErrorKind::EmptyInput, "no data rows in " + path);
  require(rows.size() >= 2, ErrorKind::InvalidInput, "need at least 2 rows");

  std::set<double> distinct(labels_raw.begin(), labels_raw.end());
  require(distinct.size() == 2, ErrorKind::NonBinaryLabel,
          "label column has " + std::to_string(distinct.size()) + " distinct values, need 2");
  const double lo = *distinct.begin();

  Dataset ds;
  for (size_t j = 0; j < header.size(); ++j)
    if (static_cast<Eigen::Index>(j) != label_col) ds.feature_names.push_back(header[j]);
  const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index d = static_cast<Eigen::Index>(ds.feature_names.size());
  require(d >= 1, ErrorKind::InvalidInput, "no feature columns");
  ds.X.resize(n, d);
  ds.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) ds.X(i, j) = rows[static_cast<size_t>(i)][static_cast<size_t>(j)];
    ds.y(i) = labels_raw[static_cast<size_t>(i)] == lo ? 0 : 1;
  }
  return ds;
}

Dataset standardize(const Dataset& ds) {
  const Eigen::Index n = ds.n(), d = ds.d();
  std::vector<Eigen::Index> keep;
  Vector mean(d), stdev(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    mean(j) = ds.X.col(j).mean();
    stdev(j) = std::sqrt((ds.X.col(j).array() - mean(j)).square().sum() / static_cast<double>(n));
    if (stdev(j) > 1e-12) keep.push_back(j);
  }

  Dataset out;
  out.y = ds.y;
  out.warnings = ds.warnings;
  out.standardized = true;
  const Eigen::Index dk = static_cast<Eigen::Index>(keep.size());
  require(dk >= 1, ErrorKind::InvalidInput, "all features constant");
  out.X.resize(n, dk);
  out.feat_mean.resize(dk);
  out.feat_std.resize(dk);
  for (Eigen::Index jj = 0; jj < dk; ++jj) {
    const Eigen::Index j = keep[static_cast<size_t>(jj)];
    out.feature_names.push_back(ds.feature_names[static_cast<size_t>(j)]);
    out.feat_mean(jj) = mean(j);
    out.feat_std(jj) = stdev(j);
    out.X.col(jj) = (ds.X.col(j).array() - mean(j)) / stdev(j);
  }
  if (dk < d)
    for (Eigen::Index j = 0; j < d; ++j)
      if (std::find(keep.begin(), keep.end(), j) == keep.end())
        out.warnings.push_back("dropped constant feature '" +
                               ds.feature_names[static_cast<size_t>(j)] + "'");
  // Composition with an earlier transform keeps the raw-unit round trip exact.
  if (ds.standardized && ds.feat_mean.size() == d) {
    for (Eigen::Index jj = 0; jj < dk; ++jj) {
      const Eigen::Index j = keep[static_cast<size_t>(jj)];
      out.feat_mean(jj) = ds.feat_mean(j) + ds.feat_std(j) * mean(j);
      out.feat_std(jj) = ds.feat_std(j) * stdev(j);
    }
  }
  return out;
}

Vector to_raw_units(const Dataset& ds, const Vector& x_std) {
  require(ds.standardized, ErrorKind::InvalidInput, "dataset is not standardized");
  require(x_std.size() == ds.d(), ErrorKind::DimensionMismatch, "dimension mismatch");
  return (x_std.array() * ds.feat_std.array() + ds.feat_mean.array()).matrix();
}

Vector to_standardized_units(const Dataset& ds, const Vector& x_raw) {
  require(ds.standardized, ErrorKind::InvalidInput, "dataset is not standardized");
  require(x_raw.size() == ds.d(), ErrorKind::DimensionMismatch, "dimension mismatch");
  return ((x_raw - ds.feat_mean).array() / ds.feat_std.array()).matrix();
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction, uint64_t seed) {
  require(train_fraction > 0.0 && train_fraction < 1.0, ErrorKind::InvalidInput,
          "train fraction must be in (0,1)");
  const Eigen::Index n = ds.n();
  std::vector<Eigen::Index> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 g(seed);
  std::shuffle(idx.begin(), idx.end(), g);
  const Eigen::Index ntr = static_cast<Eigen::Index>(train_fraction * static_cast<double>(n));

  auto take = [&](Eigen::Index from, Eigen::Index count) {
    Dataset out;
    out.feature_names = ds.feature_names;
    out.feat_mean = ds.feat_mean;
    out.feat_std = ds.feat_std;
    out.standardized = ds.standardized;
    out.X.resize(count, ds.d());
    out.y.resize(count);
    for (Eigen::Index i = 0; i < count; ++i) {
      out.X.row(i) = ds.X.row(idx[static_cast<size_t>(from + i)]);
      out.y(i) = ds.y(idx[static_cast<size_t>(from + i)]);
    }
    return out;
  };
  return {take(0, ntr), take(ntr, n - ntr)};
}

KMedoidsResult kmedoids(const Matrix& points, int k, uint64_t seed, int max_rounds) {
  (void)seed;
  const Eigen::Index n = points.rows();
  require(k >= 1 && k <= n, ErrorKind::InvalidK, "k must be in [1, n]");

  Matrix dist(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    dist(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j)
      dist(i, j) = dist(j, i) = (points.row(i) - points.row(j)).norm();
  }

  auto total_cost = [&](const std::vector<Eigen::Index>& med) {
    double c = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (Eigen::Index m : med) best = std::min(best, dist(i, m));
      c += best;
    }
    return c;
  };

  // BUILD: start from the 1-medoid optimum, then greedily add the point with
  // the largest cost reduction; ties toward the lowest index.
  std::vector<Eigen::Index> medoids;
  std::vector<bool> is_medoid(static_cast<size_t>(n), false);
  {
    Eigen::Index best = 0;
    double best_c = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
      const double c = dist.col(i).sum();
      if (c < best_c) {
        best_c = c;
        best = i;
      }
    }
    medoids.push_back(best);
    is_medoid[static_cast<size_t>(best)] = true;
  }
  Vector nearest = dist.col(medoids[0]);
  while (static_cast<int>(medoids.size()) < k) {
    Eigen::Index best = -1;
    double best_gain = -1.0;
    for (Eigen::Index h = 0; h < n; ++h) {
      if (is_medoid[static_cast<size_t>(h)]) continue;
      double gain = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) gain += std::max(0.0, nearest(i) - dist(i, h));
      if (gain > best_gain) {
        best_gain = gain;
        best = h;
      }
    }
    medoids.push_back(best);
    is_medoid[static_cast<size_t>(best)] = true;
    nearest = nearest.cwiseMin(dist.col(best));
  }

  // SWAP: best-improvement passes until fixpoint.
  double cost = total_cost(medoids);
  int round = 0;
  for (; round < max_rounds; ++round) {
    double best_cost = cost;
    int best_mi = -1;
    Eigen::Index best_h = -1;
    for (size_t mi = 0; mi < medoids.size(); ++mi) {
      const Eigen::Index saved = medoids[mi];
      for (Eigen::Index h = 0; h < n; ++h) {
        if (is_medoid[static_cast<size_t>(h)]) continue;
        medoids[mi] = h;
        const double c = total_cost(medoids);
        if (c < best_cost - 1e-12) {
          best_cost = c;
          best_mi = static_cast<int>(mi);
          best_h = h;
        }
      }
      medoids[mi] = saved;
    }
    if (best_mi < 0) break;
    is_medoid[static_cast<size_t>(medoids[static_cast<size_t>(best_mi)])] = false;
    is_medoid[static_cast<size_t>(best_h)] = true;
    medoids[static_cast<size_t>(best_mi)] = best_h;
    require(best_cost <= cost, ErrorKind::InvalidInput, "k-medoids cost increased");
    cost = best_cost;
  }

  KMedoidsResult out;
  out.medoids = medoids;
  out.cost = cost;
  out.swap_rounds = round;
  out.assignment.resize(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (size_t m = 0; m < medoids.size(); ++m) {
      const double dmi = dist(i, medoids[m]);
      // Ties go to the medoid with the lowest point index.
      if (dmi < best_d - 1e-15 ||
          (std::abs(dmi - best_d) <= 1e-15 && medoids[m] < medoids[static_cast<size_t>(best)])) {
        best_d = dmi;
        best = static_cast<int>(m);
      }
    }
    out.assignment[static_cast<size_t>(i)] = best;
  }
  return out;
}

GroupingResult build_groups(const Dataset& test, const classifier::LinearModel& model,
                            int clusters_per_label, int cap, int min_size, uint64_t seed) {
  require(model.weights.size() == test.d(), ErrorKind::DimensionMismatch,
          "model feature space does not match dataset");
  require(clusters_per_label >= 1 && cap >= 1 && min_size >= 1, ErrorKind::InvalidInput,
          "grouping parameters must be positive");

  GroupingResult out;
  std::mt19937_64 rng(seed);

  for (int label = 0; label <= 1; ++label) {
    std::vector<Eigen::Index> pool;
    for (Eigen::Index i = 0; i < test.n(); ++i)
      if (classifier::predict_label(model, test.X.row(i).transpose()) == label)
        pool.push_back(i);
    if (pool.empty()) {
      out.warnings.push_back("no points predicted as class " + std::to_string(label));
      continue;
    }

    const int k = std::min<int>(clusters_per_label, static_cast<int>(pool.size()));
    if (k < clusters_per_label)
      out.warnings.push_back("class " + std::to_string(label) + " has only " +
                             std::to_string(pool.size()) + " points; built " +
                             std::to_string(k) + " clusters");

    Matrix pts(static_cast<Eigen::Index>(pool.size()), test.d());
    for (size_t i = 0; i < pool.size(); ++i) pts.row(static_cast<Eigen::Index>(i)) = test.X.row(pool[i]);
    const KMedoidsResult km = kmedoids(pts, k, seed);

    for (int c = 0; c < k; ++c) {
      std::vector<Eigen::Index> members;  // positions within pool
      for (size_t i = 0; i < pool.size(); ++i)
        if (km.assignment[i] == c) members.push_back(static_cast<Eigen::Index>(i));

      if (static_cast<int>(members.size()) > cap) {
        std::shuffle(members.begin(), members.end(), rng);
        members.resize(static_cast<size_t>(cap));
        std::sort(members.begin(), members.end());
      } else if (static_cast<int>(members.size()) < min_size) {
        // Top up with the nearest same-label points (by distance to the medoid).
        const Eigen::Index med = km.medoids[static_cast<size_t>(c)];
        std::vector<std::pair<double, Eigen::Index>> cand;
        for (size_t i = 0; i < pool.size(); ++i) {
          const Eigen::Index pi = static_cast<Eigen::Index>(i);
          if (std::find(members.begin(), members.end(), pi) != members.end()) continue;
          cand.emplace_back((pts.row(pi) - pts.row(med)).norm(), pi);
        }
        std::sort(cand.begin(), cand.end());
        for (const auto& [d, pi] : cand) {
          (void)d;
          if (static_cast<int>(members.size()) >= min_size) break;
          members.push_back(pi);
        }
        std::sort(members.begin(), members.end());
        if (static_cast<int>(members.size()) < min_size)
          out.warnings.push_back("class " + std::to_string(label) +
                                 " has too few points to reach the minimum group size");
      }

      Group g;
      g.id = "label" + std::to_string(label) + "_cluster" + std::to_string(c);
      g.label = label;
      g.points.resize(static_cast<Eigen::Index>(members.size()), test.d());
      for (size_t i = 0; i < members.size(); ++i) {
        g.indices.push_back(pool[static_cast<size_t>(members[i])]);
        g.points.row(static_cast<Eigen::Index>(i)) = pts.row(members[i]);
      }
      out.groups.push_back(std::move(g));
    }
  }
  return out;
}

}  // namespace otcf::dataio
