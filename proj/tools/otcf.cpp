// Command-line front end: dataset preparation, model training, group
// construction, map fitting, evaluation, multiobjective search, and
// performance profiles.  Exit codes: 0 success, 1 runtime failure, 2 usage.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "otcf/bench.hpp"
#include "otcf/classifier.hpp"
#include "otcf/dataio.hpp"
#include "otcf/error.hpp"
#include "otcf/maps.hpp"
#include "otcf/metrics.hpp"
#include "otcf/moo.hpp"
#include "otcf/serialize.hpp"

namespace {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using otcf::Error;
using otcf::ErrorKind;
using otcf::fail;
using otcf::require;
using json = nlohmann::json;
namespace fs = std::filesystem;

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& cell, const std::string& where) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(cell, &pos);
    require(pos == cell.size(), ErrorKind::ParseError,
            "not a number at " + where + ": '" + cell + "'");
    return v;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    fail(ErrorKind::ParseError, "not a number at " + where + ": '" + cell + "'");
  }
}

// Feature-only CSV: a header naming the columns, then numeric rows.
struct PointsFile {
  std::vector<std::string> names;
  Matrix points;
};

PointsFile load_points_csv(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::IoError, "cannot open points file: " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::EmptyInput,
          "points file is empty: " + path);
  PointsFile out;
  out.names = split_csv_line(line);
  require(!out.names.empty(), ErrorKind::ParseError, "missing header: " + path);

  std::vector<std::vector<double>> rows;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    require(cells.size() == out.names.size(), ErrorKind::ParseError,
            "row " + std::to_string(lineno) + " has " +
                std::to_string(cells.size()) + " cells, expected " +
                std::to_string(out.names.size()));
    std::vector<double> row;
    row.reserve(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c)
      row.push_back(parse_cell(cells[c],
                               "line " + std::to_string(lineno) + ", column " +
                                   std::to_string(c + 1)));
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), ErrorKind::EmptyInput, "no data rows in " + path);
  out.points = Matrix(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(out.names.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      out.points(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows[i][j];
  return out;
}

json group_to_json(const otcf::dataio::Group& g) {
  json j;
  j["id"] = g.id;
  j["label"] = g.label;
  j["indices"] = json::array();
  for (const auto idx : g.indices) j["indices"].push_back(idx);
  j["points"] = otcf::serialize::matrix_to_json(g.points);
  return j;
}

otcf::dataio::Group group_from_json(const json& j) {
  otcf::dataio::Group g;
  g.id = j.at("id").get<std::string>();
  g.label = j.at("label").get<int>();
  for (const auto& idx : j.at("indices"))
    g.indices.push_back(idx.get<Eigen::Index>());
  g.points = otcf::serialize::matrix_from_json(j.at("points"));
  return g;
}

std::vector<otcf::dataio::Group> load_groups(const std::string& path) {
  const json j = otcf::serialize::load_json(path);
  require(j.contains("groups") && j.at("groups").is_array(),
          ErrorKind::ParseError, "not a groups file: " + path);
  std::vector<otcf::dataio::Group> groups;
  for (const auto& gj : j.at("groups")) groups.push_back(group_from_json(gj));
  return groups;
}

otcf::dataio::Group find_group(const std::vector<otcf::dataio::Group>& groups,
                               const std::string& id) {
  for (const auto& g : groups)
    if (g.id == id) return g;
  fail(ErrorKind::InvalidInput, "no group with id '" + id + "'");
}

Matrix apply_rows(const otcf::maps::TransportMap& map, const Matrix& pts) {
  Matrix out(pts.rows(), pts.cols());
  for (Eigen::Index i = 0; i < pts.rows(); ++i)
    out.row(i) = otcf::maps::apply(map, pts.row(i).transpose()).transpose();
  return out;
}

// Shared preprocessing: load, standardize, split.  Every subcommand that
// touches a dataset goes through here so the same seed yields the same
// train/test partition across commands.
std::pair<otcf::dataio::Dataset, otcf::dataio::Dataset> prepare(
    const std::string& data, const std::string& label_column,
    double train_fraction, std::uint64_t seed) {
  const auto raw = otcf::dataio::load_csv(data, label_column);
  const auto ds = otcf::dataio::standardize(raw);
  return otcf::dataio::split(ds, train_fraction, seed);
}

int cmd_train(const std::string& data, const std::string& label_column,
              double train_fraction, std::uint64_t seed,
              const std::string& out) {
  const auto [train, test] = prepare(data, label_column, train_fraction, seed);
  const auto gs = otcf::classifier::grid_search_cv(train.X, train.y, 10, seed);
  auto model = otcf::classifier::fit_logistic(train.X, train.y, gs.best_penalty);
  model.feature_names = train.feature_names;
  model.feat_mean = train.feat_mean;
  model.feat_std = train.feat_std;
  otcf::serialize::save_json(otcf::serialize::model_to_json(model), out);

  json summary;
  summary["model"] = out;
  summary["train_rows"] = train.X.rows();
  summary["test_rows"] = test.X.rows();
  summary["best_penalty"] = gs.best_penalty;
  summary["cv_cross_entropy"] = gs.cv_cross_entropy;
  summary["converged"] = model.converged;
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_groups(const std::string& data, const std::string& label_column,
               const std::string& model_path, int clusters, int cap,
               int min_size, double train_fraction, std::uint64_t seed,
               const std::string& out) {
  const auto [train, test] = prepare(data, label_column, train_fraction, seed);
  const auto model =
      otcf::serialize::model_from_json(otcf::serialize::load_json(model_path));
  const auto grouping =
      otcf::dataio::build_groups(test, model, clusters, cap, min_size, seed);

  json j;
  j["groups"] = json::array();
  for (const auto& g : grouping.groups) j["groups"].push_back(group_to_json(g));
  j["warnings"] = grouping.warnings;
  otcf::serialize::save_json(j, out);

  json summary;
  summary["groups"] = grouping.groups.size();
  summary["warnings"] = grouping.warnings.size();
  summary["out"] = out;
  std::cout << summary.dump(2) << "\n";
  return 0;
}

json explain_metrics(const otcf::classifier::LinearModel& model,
                     int target_class, double alpha, const Matrix& group,
                     const Matrix& mapped) {
  const auto rec = otcf::metrics::evaluate_pairs(group, mapped);
  Eigen::Index valid = 0;
  for (Eigen::Index i = 0; i < mapped.rows(); ++i)
    if (otcf::classifier::score(model, mapped.row(i).transpose(),
                                target_class) > alpha)
      ++valid;
  json m;
  m["w2_sq"] = rec.w2_sq;
  m["validity"] =
      static_cast<double>(valid) / static_cast<double>(mapped.rows());
  m["has_bounds"] = rec.has_bounds;
  if (rec.has_bounds) {
    m["emp_upper"] = rec.emp_upper;
    m["emp_lower"] = rec.emp_lower;
    m["distortion"] = rec.distortion;
  }
  return m;
}

int cmd_explain(const std::string& groups_path, const std::string& group_id,
                const std::string& model_path, const std::string& method_name,
                double upper, double lower, double alpha,
                Eigen::Index mixture_components, std::uint64_t seed,
                const std::string& out) {
  const auto group = find_group(load_groups(groups_path), group_id);
  const auto model =
      otcf::serialize::model_from_json(otcf::serialize::load_json(model_path));
  const auto method = otcf::metrics::method_from_name(method_name);

  otcf::metrics::EvalConfig cfg;
  cfg.model = model;
  cfg.target_class = 1 - group.label;
  cfg.alpha = alpha;
  cfg.upper = upper;
  cfg.lower = lower > 0.0 ? lower : upper;
  cfg.mixture_components = mixture_components;
  cfg.seed = seed;
  const auto report = otcf::metrics::fit_method(method, group.points, cfg);

  otcf::maps::MapMetadata meta;
  meta.upper_bound = cfg.upper;
  meta.lower_bound = cfg.lower;
  meta.alpha = alpha;
  meta.group_id = group.id;
  otcf::serialize::save_json(otcf::serialize::map_to_json(report.map, meta),
                             out);

  const Matrix mapped = apply_rows(report.map, group.points);
  json summary =
      explain_metrics(model, cfg.target_class, alpha, group.points, mapped);
  summary["method"] = method_name;
  summary["group"] = group.id;
  summary["objective"] = report.objective;
  summary["converged"] = report.converged;
  summary["iterations"] = report.iterations;
  summary["map"] = out;
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_apply(const std::string& map_path, const std::string& points_path,
              const std::string& out) {
  const auto map =
      otcf::serialize::map_from_json(otcf::serialize::load_json(map_path));
  require(!std::holds_alternative<otcf::maps::PointwiseMap>(map),
          ErrorKind::NotGeneralizable,
          "pointwise baselines do not generalize beyond their fitting group");
  const auto pf = load_points_csv(points_path);
  const Matrix mapped = apply_rows(map, pf.points);

  std::ofstream os(out);
  require(os.good(), ErrorKind::IoError, "cannot write " + out);
  for (std::size_t j = 0; j < pf.names.size(); ++j)
    os << pf.names[j] << (j + 1 < pf.names.size() ? ',' : '\n');
  for (Eigen::Index i = 0; i < mapped.rows(); ++i)
    for (Eigen::Index j = 0; j < mapped.cols(); ++j)
      os << otcf::bench::format_double(mapped(i, j))
         << (j + 1 < mapped.cols() ? ',' : '\n');
  require(os.good(), ErrorKind::IoError, "write failed: " + out);

  json summary;
  summary["rows"] = mapped.rows();
  summary["out"] = out;
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_evaluate(const otcf::bench::ExperimentConfig& config) {
  const auto report = otcf::bench::run_experiment(config);
  json summary;
  summary["metrics"] = report.metrics_path;
  summary["timings"] = report.timings_path;
  summary["rows"] = report.rows;
  summary["maps_written"] = report.maps_written;
  summary["skipped"] = report.skipped;
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_pareto(const std::string& groups_path, const std::string& group_id,
               const std::string& model_path, const std::string& method_name,
               int population, int generations, double alpha,
               std::uint64_t seed, const std::string& out_dir) {
  const auto group = find_group(load_groups(groups_path), group_id);
  const auto model =
      otcf::serialize::model_from_json(otcf::serialize::load_json(model_path));
  const auto method = otcf::metrics::method_from_name(method_name);
  const int target_class = 1 - group.label;

  auto score = [model, target_class](const Vector& x) {
    return otcf::classifier::score(model, x, target_class);
  };
  const auto problem =
      otcf::moo::make_problem(method, group.points, score, alpha);
  const auto front = otcf::moo::nsga2(problem, population, generations, seed);

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  require(!ec, ErrorKind::IoError, "cannot create " + out_dir);

  const std::string front_path = (fs::path(out_dir) / "front.csv").string();
  std::ofstream fcsv(front_path);
  require(fcsv.good(), ErrorKind::IoError, "cannot write " + front_path);
  fcsv << "f1,f2,feasible";
  const Eigen::Index nvar = problem.lower_bounds.size();
  for (Eigen::Index v = 0; v < nvar; ++v) fcsv << ",p" << v;
  fcsv << "\n";
  for (const auto& m : front.members) {
    fcsv << otcf::bench::format_double(m.f1) << ','
         << otcf::bench::format_double(m.f2) << ',' << (m.feasible ? 1 : 0);
    for (Eigen::Index v = 0; v < nvar; ++v)
      fcsv << ',' << otcf::bench::format_double(m.parameters(v));
    fcsv << "\n";
  }

  const std::string trace_path =
      (fs::path(out_dir) / "hv_trace.csv").string();
  std::ofstream tcsv(trace_path);
  require(tcsv.good(), ErrorKind::IoError, "cannot write " + trace_path);
  tcsv << "generation,hypervolume\n";
  for (std::size_t gen = 0; gen < front.hypervolume_trace.size(); ++gen)
    tcsv << gen << ','
         << otcf::bench::format_double(front.hypervolume_trace[gen]) << "\n";

  int feasible = 0;
  for (const auto& m : front.members) feasible += m.feasible ? 1 : 0;
  json summary;
  summary["front"] = front_path;
  summary["trace"] = trace_path;
  summary["members"] = front.members.size();
  summary["feasible"] = feasible;
  summary["final_hypervolume"] = front.hypervolume_trace.back();
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_profile(const std::string& metrics_path, const std::string& out,
                int grid_points, double theta_max) {
  std::ifstream in(metrics_path);
  require(in.good(), ErrorKind::IoError, "cannot open " + metrics_path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), ErrorKind::EmptyInput,
          "metrics file is empty");
  const auto header = split_csv_line(line);
  auto column = [&](const std::string& name) {
    const auto it = std::find(header.begin(), header.end(), name);
    require(it != header.end(), ErrorKind::ParseError,
            "metrics file lacks column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto c_dataset = column("dataset");
  const auto c_group = column("group");
  const auto c_method = column("method");
  const auto c_k = column("K");
  const auto c_converged = column("converged");
  const auto c_w2 = column("w2_sq");

  // Problem = one (dataset, group, K) cell; the cost of a method on it is
  // its mean squared transport cost over converged folds, +inf when no fold
  // converged.  The tiny floor keeps legitimately zero costs positive.
  struct Cell {
    double sum = 0.0;
    int folds = 0;
  };
  std::map<std::string, std::map<std::string, Cell>> table;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    require(cells.size() == header.size(), ErrorKind::ParseError,
            "metrics row " + std::to_string(lineno) + " is ragged");
    const std::string problem =
        cells[c_dataset] + "|" + cells[c_group] + "|" + cells[c_k];
    auto& cell = table[problem][cells[c_method]];
    if (cells[c_converged] == "1") {
      cell.sum += parse_cell(cells[c_w2], "row " + std::to_string(lineno));
      ++cell.folds;
    }
  }
  require(!table.empty(), ErrorKind::EmptyInput, "no metrics rows found");

  std::vector<std::string> methods;
  for (const auto& [problem, row] : table)
    for (const auto& [method, cell] : row)
      if (std::find(methods.begin(), methods.end(), method) == methods.end())
        methods.push_back(method);
  std::sort(methods.begin(), methods.end());

  Matrix costs(static_cast<Eigen::Index>(table.size()),
               static_cast<Eigen::Index>(methods.size()));
  costs.setConstant(std::numeric_limits<double>::infinity());
  Eigen::Index p = 0;
  for (const auto& [problem, row] : table) {
    for (const auto& [method, cell] : row) {
      if (cell.folds == 0) continue;
      const auto m = static_cast<Eigen::Index>(
          std::find(methods.begin(), methods.end(), method) -
          methods.begin());
      costs(p, m) = cell.sum / cell.folds + 1e-12;
    }
    ++p;
  }

  const auto prof =
      otcf::bench::performance_profile(costs, methods, grid_points, theta_max);
  std::ofstream os(out);
  require(os.good(), ErrorKind::IoError, "cannot write " + out);
  os << "method,theta,fraction\n";
  for (const auto& curve : prof.curves)
    for (const auto& [theta, frac] : curve.points)
      os << curve.method << ',' << otcf::bench::format_double(theta) << ','
         << otcf::bench::format_double(frac) << "\n";

  json summary;
  summary["out"] = out;
  summary["problems"] = table.size();
  summary["methods"] = methods;
  summary["excluded"] = prof.excluded;
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_synth(const std::string& kind, Eigen::Index per_class,
              Eigen::Index dims, double separation, Eigen::Index components,
              std::uint64_t seed, const std::string& out) {
  require(kind == "gaussian" || kind == "gmm", ErrorKind::InvalidInput,
          "kind must be 'gaussian' or 'gmm'");
  otcf::bench::SynthOptions opt;
  opt.per_class = per_class;
  opt.dims = dims;
  opt.separation = separation;
  opt.components = kind == "gaussian" ? 1 : std::max<Eigen::Index>(2, components);
  opt.seed = seed;
  const auto ds = otcf::bench::synth_dataset(opt);
  otcf::bench::write_dataset_csv(ds, out);

  json summary;
  summary["out"] = out;
  summary["rows"] = ds.X.rows();
  summary["features"] = ds.X.cols();
  std::cout << summary.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Group counterfactual transport maps for linear classifiers"};
  app.require_subcommand(1);

  // train
  auto* train = app.add_subcommand("train", "Fit a logistic model with CV grid search");
  std::string t_data, t_label = "label", t_out;
  double t_frac = 0.8;
  std::uint64_t t_seed = 0;
  train->add_option("--data", t_data, "dataset CSV")->required();
  train->add_option("--label", t_label, "label column name");
  train->add_option("--train-fraction", t_frac, "training share");
  train->add_option("--seed", t_seed, "split seed");
  train->add_option("--out", t_out, "model JSON path")->required();

  // groups
  auto* groups = app.add_subcommand("groups", "Cluster the test split into groups");
  std::string g_data, g_label = "label", g_model, g_out;
  int g_clusters = 10, g_cap = 200, g_min = 20;
  double g_frac = 0.8;
  std::uint64_t g_seed = 0;
  groups->add_option("--data", g_data, "dataset CSV")->required();
  groups->add_option("--label", g_label, "label column name");
  groups->add_option("--model", g_model, "model JSON")->required();
  groups->add_option("--clusters", g_clusters, "clusters per label");
  groups->add_option("--cap", g_cap, "largest group size");
  groups->add_option("--min-size", g_min, "smallest group size");
  groups->add_option("--train-fraction", g_frac, "training share");
  groups->add_option("--seed", g_seed, "split seed");
  groups->add_option("--out", g_out, "groups JSON path")->required();

  // explain
  auto* explain = app.add_subcommand("explain", "Fit one transport map for one group");
  std::string e_groups, e_group, e_model, e_method, e_out;
  double e_upper = 0.0, e_lower = -1.0, e_alpha = 0.8;
  Eigen::Index e_mix = 3;
  std::uint64_t e_seed = 0;
  explain->add_option("--groups", e_groups, "groups JSON")->required();
  explain->add_option("--group", e_group, "group id")->required();
  explain->add_option("--model", e_model, "model JSON")->required();
  explain->add_option("--method", e_method, "map family name")->required();
  explain->add_option("--upper", e_upper, "dispersion bound K")->required();
  explain->add_option("--lower", e_lower, "compression bound k (defaults to K)");
  explain->add_option("--alpha", e_alpha, "score threshold");
  explain->add_option("--mixture-components", e_mix, "components for the mixture family");
  explain->add_option("--seed", e_seed, "solver seed");
  explain->add_option("--out", e_out, "map JSON path")->required();

  // apply
  auto* apply = app.add_subcommand("apply", "Map new points through a saved map");
  std::string a_map, a_points, a_out;
  apply->add_option("--map", a_map, "map JSON")->required();
  apply->add_option("--points", a_points, "feature CSV")->required();
  apply->add_option("--out", a_out, "mapped CSV path")->required();

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Run the full cross-validated protocol");
  std::string v_config;
  std::string v_out;
  std::vector<double> v_kgrid;
  std::vector<std::string> v_methods;
  std::uint64_t v_seed = 0;
  double v_alpha = -1.0, v_time_cap = -1.0;
  int v_folds = -1;
  evaluate->add_option("--config", v_config, "experiment config file")->required();
  evaluate->add_option("--out", v_out, "override output directory");
  evaluate->add_option("--k-grid", v_kgrid, "override K grid")->delimiter(',');
  evaluate->add_option("--methods", v_methods, "override methods")->delimiter(',');
  auto* seed_opt = evaluate->add_option("--seed", v_seed, "override seed");
  evaluate->add_option("--alpha", v_alpha, "override alpha");
  evaluate->add_option("--folds", v_folds, "override fold count");
  evaluate->add_option("--time-cap", v_time_cap, "override solver time cap");

  // pareto
  auto* pareto = app.add_subcommand("pareto", "Multiobjective search over one map family");
  std::string p_groups, p_group, p_model, p_method = "affine_diag", p_out;
  int p_pop = 100, p_gens = 200;
  double p_alpha = 0.8;
  std::uint64_t p_seed = 0;
  pareto->add_option("--groups", p_groups, "groups JSON")->required();
  pareto->add_option("--group", p_group, "group id")->required();
  pareto->add_option("--model", p_model, "model JSON")->required();
  pareto->add_option("--method", p_method, "map family name");
  pareto->add_option("--pop", p_pop, "population size");
  pareto->add_option("--generations", p_gens, "generation count");
  pareto->add_option("--alpha", p_alpha, "score threshold");
  pareto->add_option("--seed", p_seed, "search seed");
  pareto->add_option("--out-dir", p_out, "output directory")->required();

  // profile
  auto* profile = app.add_subcommand("profile", "Performance profiles from a metrics CSV");
  std::string f_metrics, f_out;
  int f_points = 50;
  double f_theta = 0.0;
  profile->add_option("--metrics", f_metrics, "metrics CSV")->required();
  profile->add_option("--out", f_out, "profiles CSV path")->required();
  profile->add_option("--grid-points", f_points, "threshold grid size");
  profile->add_option("--theta-max", f_theta, "largest threshold (0 = auto)");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a seeded synthetic dataset");
  std::string s_kind = "gaussian", s_out;
  Eigen::Index s_per = 200, s_dims = 2, s_comp = 2;
  double s_sep = 3.0;
  std::uint64_t s_seed = 0;
  synth->add_option("--kind", s_kind, "gaussian or gmm");
  synth->add_option("--per-class", s_per, "points per class");
  synth->add_option("--dims", s_dims, "feature count");
  synth->add_option("--separation", s_sep, "class separation");
  synth->add_option("--components", s_comp, "mixture components per class");
  synth->add_option("--seed", s_seed, "generator seed");
  synth->add_option("--out", s_out, "dataset CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (train->parsed())
      return cmd_train(t_data, t_label, t_frac, t_seed, t_out);
    if (groups->parsed())
      return cmd_groups(g_data, g_label, g_model, g_clusters, g_cap, g_min,
                        g_frac, g_seed, g_out);
    if (explain->parsed())
      return cmd_explain(e_groups, e_group, e_model, e_method, e_upper,
                         e_lower, e_alpha, e_mix, e_seed, e_out);
    if (apply->parsed()) return cmd_apply(a_map, a_points, a_out);
    if (evaluate->parsed()) {
      auto config = otcf::bench::load_config(v_config);
      if (!v_out.empty()) config.output_dir = v_out;
      if (!v_kgrid.empty()) config.k_grid = v_kgrid;
      if (!v_methods.empty()) {
        config.methods.clear();
        for (const auto& name : v_methods)
          config.methods.push_back(otcf::metrics::method_from_name(name));
      }
      if (seed_opt->count() > 0) config.seed = v_seed;
      if (v_alpha > 0.0) config.alpha = v_alpha;
      if (v_folds > 0) config.folds = v_folds;
      if (v_time_cap > 0.0) config.time_cap = v_time_cap;
      return cmd_evaluate(config);
    }
    if (pareto->parsed())
      return cmd_pareto(p_groups, p_group, p_model, p_method, p_pop, p_gens,
                        p_alpha, p_seed, p_out);
    if (profile->parsed())
      return cmd_profile(f_metrics, f_out, f_points, f_theta);
    if (synth->parsed())
      return cmd_synth(s_kind, s_per, s_dims, s_sep, s_comp, s_seed, s_out);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
