#include "otcf/bench.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <utility>

#include "otcf/classifier.hpp"
#include "otcf/error.hpp"
#include "otcf/serialize.hpp"

namespace otcf::bench {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double unit_draw(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

double normal_draw(std::mt19937_64& g) {
  const double u1 = 1.0 - unit_draw(g);  // keep the log argument positive
  const double u2 = unit_draw(g);
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> parts;
  std::string item;
  std::istringstream in(value);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    require(pos == value.size(), ErrorKind::ParseError,
            "trailing characters in value for key '" + key + "'");
    return v;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    fail(ErrorKind::ParseError,
         "key '" + key + "' needs a real number, got '" + value + "'");
  }
}

long long parse_integer(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(value, &pos);
    require(pos == value.size(), ErrorKind::ParseError,
            "trailing characters in value for key '" + key + "'");
    return v;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    fail(ErrorKind::ParseError,
         "key '" + key + "' needs an integer, got '" + value + "'");
  }
}

int parse_int(const std::string& key, const std::string& value) {
  return static_cast<int>(parse_integer(key, value));
}

// Group ids and method names become file name fragments.
std::string sanitize(const std::string& s) {
  std::string out = s;
  for (char& c : out) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '.' && c != '-')
      c = '_';
  }
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const std::vector<metrics::Method>& experiment_methods() {
  using metrics::Method;
  static const std::vector<Method> rows = {
      Method::Independent,    Method::Lipschitz,
      Method::Bilipschitz,    Method::AffinePsd,
      Method::AffineDiag,     Method::GaussianFull,
      Method::GaussianCommutative, Method::GaussianScaled,
      Method::Gmm};
  return rows;
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  bool grid_seen = false;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::ParseError,
            "line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    require(!key.empty() && !value.empty(), ErrorKind::ParseError,
            "line " + std::to_string(lineno) + ": empty key or value");

    if (key == "dataset") {
      for (const auto& part : split_list(value)) cfg.datasets.push_back(part);
    } else if (key == "label_column") {
      cfg.label_column = value;
    } else if (key == "seed") {
      cfg.seed = static_cast<std::uint64_t>(parse_integer(key, value));
    } else if (key == "alpha") {
      cfg.alpha = parse_double(key, value);
    } else if (key == "k_grid") {
      if (!grid_seen) cfg.k_grid.clear();
      grid_seen = true;
      for (const auto& part : split_list(value))
        cfg.k_grid.push_back(parse_double(key, part));
    } else if (key == "methods") {
      for (const auto& part : split_list(value))
        cfg.methods.push_back(metrics::method_from_name(part));
    } else if (key == "folds") {
      cfg.folds = parse_int(key, value);
    } else if (key == "train_fraction") {
      cfg.train_fraction = parse_double(key, value);
    } else if (key == "clusters_per_label") {
      cfg.clusters_per_label = parse_int(key, value);
    } else if (key == "group_cap") {
      cfg.group_cap = parse_int(key, value);
    } else if (key == "group_min_size") {
      cfg.group_min_size = parse_int(key, value);
    } else if (key == "mixture_components") {
      cfg.mixture_components = parse_int(key, value);
    } else if (key == "tol_primal") {
      cfg.tol_primal = parse_double(key, value);
    } else if (key == "tol_dual") {
      cfg.tol_dual = parse_double(key, value);
    } else if (key == "max_iter") {
      cfg.max_iter = parse_int(key, value);
    } else if (key == "restarts") {
      cfg.restarts = parse_int(key, value);
    } else if (key == "time_cap") {
      cfg.time_cap = parse_double(key, value);
    } else if (key == "output_dir") {
      cfg.output_dir = value;
    } else {
      fail(ErrorKind::ParseError, "unknown configuration key: " + key);
    }
  }
  if (cfg.methods.empty()) cfg.methods = experiment_methods();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::IoError, "cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

void validate_config(const ExperimentConfig& config) {
  require(!config.datasets.empty(), ErrorKind::InvalidInput,
          "at least one dataset is required");
  require(config.alpha > 0.0 && config.alpha < 1.0, ErrorKind::InvalidInput,
          "alpha must lie strictly inside (0, 1)");
  require(!config.k_grid.empty(), ErrorKind::InvalidInput,
          "the K grid cannot be empty");
  for (const double k : config.k_grid)
    require(k >= 1.0, ErrorKind::InvalidInput, "every K must be at least 1");
  const auto& allowed = experiment_methods();
  require(!config.methods.empty(), ErrorKind::InvalidInput,
          "the methods list cannot be empty");
  for (const auto m : config.methods)
    require(std::find(allowed.begin(), allowed.end(), m) != allowed.end(),
            ErrorKind::InvalidInput,
            "method not part of the experiment protocol: " +
                metrics::method_name(m));
  require(config.folds >= 2, ErrorKind::InvalidInput,
          "cross validation needs at least two folds");
  require(config.train_fraction > 0.0 && config.train_fraction < 1.0,
          ErrorKind::InvalidInput, "train_fraction must lie in (0, 1)");
  require(config.clusters_per_label >= 1, ErrorKind::InvalidInput,
          "clusters_per_label must be positive");
  require(config.group_min_size >= 2 &&
              config.group_min_size <= config.group_cap,
          ErrorKind::InvalidInput,
          "group sizes need 2 <= group_min_size <= group_cap");
  require(config.mixture_components >= 1, ErrorKind::InvalidInput,
          "mixture_components must be positive");
  require(config.tol_primal > 0.0 && config.tol_dual > 0.0,
          ErrorKind::InvalidInput, "solver tolerances must be positive");
  require(config.max_iter >= 1, ErrorKind::InvalidInput,
          "max_iter must be positive");
  require(config.restarts >= 0, ErrorKind::InvalidInput,
          "restarts cannot be negative");
  require(config.time_cap > 0.0, ErrorKind::InvalidInput,
          "time_cap must be positive");
}

namespace {

constexpr const char* kMetricsHeader =
    "dataset,group,label,target_class,method,K,fold,seed,converged,n_eval,"
    "w2_sq,validity,emp_upper,emp_lower,distortion,has_bounds,collapsed,"
    "trivial_validity\n";
constexpr const char* kTimingsHeader =
    "dataset,group,method,K,fold,seed,wall_time\n";

void write_metrics_row(std::ofstream& out, const std::string& dataset,
                       const dataio::Group& group, const std::string& method,
                       double k, int fold, std::uint64_t seed,
                       bool converged, const metrics::MetricsRecord& m) {
  out << dataset << ',' << group.id << ',' << group.label << ','
      << (1 - group.label) << ',' << method << ',' << format_double(k) << ','
      << fold << ',' << seed << ',' << (converged ? 1 : 0) << ',' << m.n_eval
      << ',' << format_double(m.w2_sq) << ',' << format_double(m.validity)
      << ',' << format_double(m.emp_upper) << ','
      << format_double(m.emp_lower) << ',' << format_double(m.distortion)
      << ',' << (m.has_bounds ? 1 : 0) << ',' << (m.collapsed ? 1 : 0) << ','
      << (m.trivial_validity ? 1 : 0) << '\n';
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& config) {
  validate_config(config);
  namespace fs = std::filesystem;
  const fs::path out_dir(config.output_dir);
  const fs::path map_dir = out_dir / "maps";
  std::error_code ec;
  fs::create_directories(map_dir, ec);
  require(!ec, ErrorKind::IoError,
          "cannot create output directory: " + map_dir.string());

  ExperimentReport report;
  report.metrics_path = (out_dir / "metrics.csv").string();
  report.timings_path = (out_dir / "timings.csv").string();
  std::ofstream mcsv(report.metrics_path);
  std::ofstream tcsv(report.timings_path);
  require(mcsv.good() && tcsv.good(), ErrorKind::IoError,
          "cannot open output CSV files under " + out_dir.string());
  mcsv << kMetricsHeader;
  tcsv << kTimingsHeader;

  solvers::SplitOptions split = solvers::fit_split_options();
  split.tol_primal = config.tol_primal;
  split.tol_dual = config.tol_dual;
  split.max_iter = config.max_iter;
  solvers::BilipschitzOptions bilipschitz;
  bilipschitz.restarts = config.restarts;
  bilipschitz.time_cap = config.time_cap;

  for (const auto& path : config.datasets) {
    classifier::LinearModel model;
    dataio::GroupingResult grouping;
    try {
      const auto raw = dataio::load_csv(path, config.label_column);
      const auto ds = dataio::standardize(raw);
      const auto [train, test] =
          dataio::split(ds, config.train_fraction, config.seed);
      const auto gs =
          classifier::grid_search_cv(train.X, train.y, 10, config.seed);
      model = classifier::fit_logistic(train.X, train.y, gs.best_penalty);
      grouping = dataio::build_groups(test, model, config.clusters_per_label,
                                      config.group_cap, config.group_min_size,
                                      config.seed);
    } catch (const Error& e) {
      report.skipped.push_back(path + ": " + e.what());
      continue;
    }
    const std::string stem = sanitize(fs::path(path).stem().string());

    for (const auto& group : grouping.groups) {
      for (const auto method : config.methods) {
        const std::string name = metrics::method_name(method);
        for (const double k : config.k_grid) {
          metrics::EvalConfig cfg;
          cfg.model = model;
          cfg.target_class = 1 - group.label;
          cfg.alpha = config.alpha;
          cfg.upper = k;
          cfg.lower = k;
          cfg.mixture_components = config.mixture_components;
          cfg.seed = config.seed;
          cfg.split = split;
          cfg.bilipschitz = bilipschitz;

          bool cell_ok = true;
          metrics::CrossvalResult cv;
          try {
            cv = metrics::crossval_evaluate(group.points, method, cfg,
                                            config.folds, config.seed);
          } catch (const Error&) {
            cell_ok = false;
          }
          if (cell_ok) {
            for (const auto& fr : cv.folds) {
              write_metrics_row(mcsv, stem, group, name, k, fr.fold,
                                config.seed, fr.converged, fr.metrics);
              tcsv << stem << ',' << group.id << ',' << name << ','
                   << format_double(k) << ',' << fr.fold << ',' << config.seed
                   << ',' << format_double(fr.wall_time) << '\n';
              ++report.rows;
            }
          } else {
            // The whole cell was unevaluable (for example a protocol
            // violation inside a sub-solver); record a single sentinel row.
            write_metrics_row(mcsv, stem, group, name, k, -1, config.seed,
                              false, metrics::MetricsRecord{});
            tcsv << stem << ',' << group.id << ',' << name << ','
                 << format_double(k) << ",-1," << config.seed << ",0\n";
            ++report.rows;
          }

          try {
            const auto fit = metrics::fit_method(method, group.points, cfg);
            maps::MapMetadata meta;
            meta.upper_bound = k;
            meta.lower_bound = k;
            meta.alpha = config.alpha;
            meta.group_id = group.id;
            char kbuf[32];
            std::snprintf(kbuf, sizeof kbuf, "%g", k);
            const fs::path map_path =
                map_dir / (stem + "_" + sanitize(group.id) + "_" + name +
                           "_K" + kbuf + ".json");
            serialize::save_json(serialize::map_to_json(fit.map, meta),
                                 map_path.string());
            ++report.maps_written;
          } catch (const Error&) {
            // Already visible in the CSV through the fold rows.
          }
        }
      }
    }
  }
  return report;
}

ProfileResult performance_profile(const Matrix& costs,
                                  const std::vector<std::string>& methods,
                                  int grid_points, double theta_max) {
  require(costs.rows() >= 1 && costs.cols() >= 1, ErrorKind::EmptyInput,
          "the cost matrix cannot be empty");
  require(static_cast<Eigen::Index>(methods.size()) == costs.cols(),
          ErrorKind::DimensionMismatch,
          "one method name per cost column is required");
  require(grid_points >= 2, ErrorKind::InvalidInput,
          "the threshold grid needs at least two points");
  for (Eigen::Index p = 0; p < costs.rows(); ++p)
    for (Eigen::Index m = 0; m < costs.cols(); ++m)
      require(costs(p, m) > 0.0, ErrorKind::InvalidInput,
              "costs must be positive (+inf for failures)");

  ProfileResult result;
  std::vector<Eigen::Index> kept;
  for (Eigen::Index p = 0; p < costs.rows(); ++p) {
    double best = kInf;
    for (Eigen::Index m = 0; m < costs.cols(); ++m)
      if (std::isfinite(costs(p, m))) best = std::min(best, costs(p, m));
    if (std::isfinite(best)) {
      kept.push_back(p);
    } else {
      ++result.excluded;
    }
  }

  Matrix ratios(static_cast<Eigen::Index>(kept.size()), costs.cols());
  double widest = 1.0;
  for (Eigen::Index r = 0; r < ratios.rows(); ++r) {
    const Eigen::Index p = kept[static_cast<std::size_t>(r)];
    const double best = costs.row(p).minCoeff();
    for (Eigen::Index m = 0; m < costs.cols(); ++m) {
      ratios(r, m) = costs(p, m) / best;
      if (std::isfinite(ratios(r, m))) widest = std::max(widest, ratios(r, m));
    }
  }
  if (theta_max <= 0.0) theta_max = std::max(widest, 2.0);
  require(theta_max >= 1.0, ErrorKind::InvalidInput,
          "theta_max must be at least 1");

  std::vector<double> thetas(static_cast<std::size_t>(grid_points));
  thetas.front() = 1.0;
  thetas.back() = theta_max;
  const double log_hi = std::log(theta_max);
  for (int t = 1; t + 1 < grid_points; ++t)
    thetas[static_cast<std::size_t>(t)] =
        std::exp(log_hi * static_cast<double>(t) /
                 static_cast<double>(grid_points - 1));

  for (Eigen::Index m = 0; m < costs.cols(); ++m) {
    ProfileCurve curve;
    curve.method = methods[static_cast<std::size_t>(m)];
    curve.points.reserve(thetas.size());
    for (const double theta : thetas) {
      Eigen::Index solved = 0;
      for (Eigen::Index r = 0; r < ratios.rows(); ++r)
        if (ratios(r, m) <= theta) ++solved;
      const double frac =
          ratios.rows() > 0
              ? static_cast<double>(solved) / static_cast<double>(ratios.rows())
              : 0.0;
      curve.points.emplace_back(theta, frac);
    }
    result.curves.push_back(std::move(curve));
  }
  return result;
}

dataio::Dataset synth_dataset(const SynthOptions& options) {
  require(options.per_class >= 1 && options.dims >= 1 &&
              options.components >= 1,
          ErrorKind::InvalidInput,
          "synthetic data needs positive sizes and component counts");
  require(options.separation >= 0.0, ErrorKind::InvalidInput,
          "class separation cannot be negative");
  std::mt19937_64 g(options.seed);
  const Eigen::Index n = 2 * options.per_class;
  const Eigen::Index d = options.dims;

  dataio::Dataset ds;
  ds.X = Matrix(n, d);
  ds.y = dataio::Labels(n);
  for (Eigen::Index j = 0; j < d; ++j)
    ds.feature_names.push_back("f" + std::to_string(j));

  for (int label = 0; label < 2; ++label) {
    Vector base = Vector::Zero(d);
    base(0) = (label == 0 ? -0.5 : 0.5) * options.separation;
    // One mildly anisotropic shape per class, plus component centers when a
    // mixture was requested.
    Matrix half = Matrix::Identity(d, d);
    for (Eigen::Index r = 0; r < d; ++r)
      for (Eigen::Index c = 0; c < d; ++c)
        half(r, c) += 0.3 * (2.0 * unit_draw(g) - 1.0);
    Matrix centers(options.components, d);
    centers.setZero();
    if (options.components > 1) {
      for (Eigen::Index c = 0; c < options.components; ++c)
        for (Eigen::Index j = 0; j < d; ++j)
          centers(c, j) = 2.0 * (2.0 * unit_draw(g) - 1.0);
    }
    for (Eigen::Index i = 0; i < options.per_class; ++i) {
      const auto row = label * options.per_class + i;
      const Eigen::Index comp =
          options.components > 1
              ? static_cast<Eigen::Index>(unit_draw(g) *
                                          static_cast<double>(
                                              options.components)) %
                    options.components
              : 0;
      Vector z(d);
      for (Eigen::Index j = 0; j < d; ++j) z(j) = normal_draw(g);
      ds.X.row(row) =
          (base + centers.row(comp).transpose() + half * z).transpose();
      ds.y(row) = label;
    }
  }
  return ds;
}

void write_dataset_csv(const dataio::Dataset& ds, const std::string& path) {
  require(ds.X.rows() == ds.y.size() &&
              static_cast<Eigen::Index>(ds.feature_names.size()) ==
                  ds.X.cols(),
          ErrorKind::DimensionMismatch,
          "dataset fields disagree about their shape");
  std::ofstream out(path);
  require(out.good(), ErrorKind::IoError, "cannot write dataset: " + path);
  for (const auto& name : ds.feature_names) out << name << ',';
  out << "label\n";
  for (Eigen::Index i = 0; i < ds.X.rows(); ++i) {
    for (Eigen::Index j = 0; j < ds.X.cols(); ++j)
      out << format_double(ds.X(i, j)) << ',';
    out << ds.y(i) << '\n';
  }
  require(out.good(), ErrorKind::IoError, "write failed: " + path);
}

}  // namespace otcf::bench
