#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "otcf/bench.hpp"
#include "otcf/error.hpp"
#include "otcf/serialize.hpp"
#include "test_util.hpp"

using Matrix = Eigen::MatrixXd;
using otcf::Error;
using otcf::ErrorKind;
using otcf::metrics::Method;
namespace bench = otcf::bench;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::InvalidInput;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::size_t line_count(const std::string& text) {
  std::size_t lines = 0;
  for (const char c : text)
    if (c == '\n') ++lines;
  return lines;
}

}  // namespace

TEST_CASE("config files parse into typed fields") {
  const std::string text =
      "# experiment setup\n"
      "dataset = a.csv, b.csv\n"
      "dataset = c.csv\n"
      "label_column = outcome\n"
      "seed = 42\n"
      "alpha = 0.7   # inline comment\n"
      "k_grid = 1.01, 2\n"
      "k_grid = 3.5\n"
      "methods = independent, gaussian_scaled\n"
      "folds = 5\n"
      "train_fraction = 0.75\n"
      "clusters_per_label = 3\n"
      "group_cap = 50\n"
      "group_min_size = 10\n"
      "mixture_components = 2\n"
      "tol_primal = 1e-8\n"
      "tol_dual = 1e-8\n"
      "max_iter = 5000\n"
      "restarts = 2\n"
      "time_cap = 60\n"
      "output_dir = /tmp/somewhere\n";
  const auto cfg = bench::parse_config(text);
  CHECK(cfg.datasets ==
        std::vector<std::string>{"a.csv", "b.csv", "c.csv"});
  CHECK(cfg.label_column == "outcome");
  CHECK(cfg.seed == 42);
  CHECK(cfg.alpha == 0.7);
  CHECK(cfg.k_grid == std::vector<double>{1.01, 2.0, 3.5});
  CHECK(cfg.methods ==
        std::vector<Method>{Method::Independent, Method::GaussianScaled});
  CHECK(cfg.folds == 5);
  CHECK(cfg.train_fraction == 0.75);
  CHECK(cfg.clusters_per_label == 3);
  CHECK(cfg.group_cap == 50);
  CHECK(cfg.group_min_size == 10);
  CHECK(cfg.mixture_components == 2);
  CHECK(cfg.tol_primal == 1e-8);
  CHECK(cfg.max_iter == 5000);
  CHECK(cfg.restarts == 2);
  CHECK(cfg.time_cap == 60.0);
  CHECK(cfg.output_dir == "/tmp/somewhere");

  SUBCASE("omitted keys keep their defaults") {
    const auto defaults = bench::parse_config("dataset = only.csv\n");
    CHECK(defaults.alpha == 0.8);
    CHECK(defaults.k_grid == std::vector<double>{1.01, 1.5, 2.0, 3.5, 5.0});
    CHECK(defaults.methods == bench::experiment_methods());
    CHECK(defaults.methods.size() == 9);
    CHECK(defaults.folds == 10);
  }

  SUBCASE("malformed input is rejected with a parse error") {
    CHECK(kind_of([] { (void)bench::parse_config("mystery = 3\n"); }) ==
          ErrorKind::ParseError);
    CHECK(kind_of([] { (void)bench::parse_config("alpha 0.5\n"); }) ==
          ErrorKind::ParseError);
    CHECK(kind_of([] { (void)bench::parse_config("alpha = zero\n"); }) ==
          ErrorKind::ParseError);
    CHECK(kind_of([] { (void)bench::parse_config("folds = 5x\n"); }) ==
          ErrorKind::ParseError);
    CHECK(kind_of([] { (void)bench::parse_config("methods = sorcery\n"); }) ==
          ErrorKind::ParseError);
  }

  SUBCASE("loading a missing file reports an io error") {
    CHECK(kind_of([] { (void)bench::load_config("/tmp/otcf_no_such.conf"); }) ==
          ErrorKind::IoError);
  }
}

TEST_CASE("config validation enforces the protocol invariants") {
  bench::ExperimentConfig base;
  base.datasets = {"x.csv"};
  base.methods = bench::experiment_methods();
  CHECK_NOTHROW(bench::validate_config(base));

  auto expect_invalid = [](bench::ExperimentConfig cfg) {
    CHECK_THROWS_AS(bench::validate_config(cfg), Error);
  };
  {
    auto c = base;
    c.datasets.clear();
    expect_invalid(c);
  }
  {
    auto c = base;
    c.alpha = 0.0;
    expect_invalid(c);
    c.alpha = 1.0;
    expect_invalid(c);
  }
  {
    auto c = base;
    c.k_grid = {0.99};
    expect_invalid(c);
    c.k_grid.clear();
    expect_invalid(c);
  }
  {
    auto c = base;
    c.methods = {Method::AffineTied};  // not one of the nine protocol rows
    expect_invalid(c);
    c.methods = {Method::AffineFull};
    expect_invalid(c);
  }
  {
    auto c = base;
    c.folds = 1;
    expect_invalid(c);
  }
  {
    auto c = base;
    c.train_fraction = 1.0;
    expect_invalid(c);
  }
  {
    auto c = base;
    c.group_min_size = 300;  // above the cap
    expect_invalid(c);
  }
  {
    auto c = base;
    c.time_cap = 0.0;
    expect_invalid(c);
  }
}

TEST_CASE("performance profiles count cost ratios against the best") {
  SUBCASE("a single method is flat at one") {
    Matrix costs(3, 1);
    costs << 2.0, 3.0, 4.0;
    const auto prof = bench::performance_profile(costs, {"only"}, 10);
    REQUIRE(prof.curves.size() == 1);
    CHECK(prof.excluded == 0);
    for (const auto& [theta, frac] : prof.curves[0].points) {
      CHECK(theta >= 1.0);
      CHECK(frac == 1.0);
    }
  }

  SUBCASE("two methods step at their cost ratios") {
    Matrix costs(1, 2);
    costs << 1.0, 2.0;
    const auto prof = bench::performance_profile(costs, {"a", "b"}, 16);
    REQUIRE(prof.curves.size() == 2);
    CHECK(prof.curves[0].points.front().second == 1.0);
    CHECK(prof.curves[1].points.front().second == 0.0);
    // The second method only reaches the ratio 2 at the final threshold.
    CHECK(prof.curves[1].points.back().first == 2.0);
    CHECK(prof.curves[1].points.back().second == 1.0);
    const auto& next_to_last =
        prof.curves[1].points[prof.curves[1].points.size() - 2];
    CHECK(next_to_last.second == 0.0);
  }

  SUBCASE("random matrices match direct counting") {
    auto g = testutil::rng(17);
    const Matrix costs = testutil::random_matrix(5, 3, g, 0.5, 4.0);
    const auto prof =
        bench::performance_profile(costs, {"m0", "m1", "m2"}, 25);
    for (int m = 0; m < 3; ++m) {
      double prev = 0.0;
      for (const auto& [theta, frac] : prof.curves[m].points) {
        int solved = 0;
        for (int p = 0; p < 5; ++p) {
          const double best = costs.row(p).minCoeff();
          if (costs(p, m) / best <= theta) ++solved;
        }
        CHECK(frac == doctest::Approx(solved / 5.0).epsilon(1e-15));
        CHECK(frac >= prev);  // monotone non-decreasing
        CHECK(frac <= 1.0);
        prev = frac;
      }
    }
  }

  SUBCASE("failures stay below one and dead problems are excluded") {
    Matrix costs(3, 2);
    costs << 1.0, kInf, kInf, kInf, 2.0, 4.0;
    const auto prof =
        bench::performance_profile(costs, {"a", "b"}, 12, 100.0);
    CHECK(prof.excluded == 1);
    // Method b converged on one of the two surviving problems.
    CHECK(prof.curves[1].points.back().second == doctest::Approx(0.5));
    CHECK(prof.curves[0].points.back().second == doctest::Approx(1.0));
  }

  SUBCASE("bad inputs are rejected") {
    Matrix costs(1, 1);
    costs << 1.0;
    CHECK_THROWS_AS(bench::performance_profile(costs, {"a", "b"}), Error);
    CHECK_THROWS_AS(bench::performance_profile(costs, {"a"}, 1), Error);
    CHECK_THROWS_AS(bench::performance_profile(Matrix(0, 0), {}), Error);
    Matrix bad(1, 1);
    bad << -1.0;
    CHECK_THROWS_AS(bench::performance_profile(bad, {"a"}), Error);
    bad << 0.0;
    CHECK_THROWS_AS(bench::performance_profile(bad, {"a"}), Error);
  }
}

TEST_CASE("synthetic datasets are seeded and loadable") {
  bench::SynthOptions opt;
  opt.per_class = 300;
  opt.dims = 3;
  opt.separation = 6.0;
  opt.seed = 5;
  const auto ds = bench::synth_dataset(opt);
  CHECK(ds.X.rows() == 600);
  CHECK(ds.X.cols() == 3);
  CHECK(ds.y.size() == 600);
  CHECK(ds.feature_names == std::vector<std::string>{"f0", "f1", "f2"});
  CHECK(ds.y.head(300).sum() == 0);
  CHECK(ds.y.tail(300).sum() == 300);

  // Classes sit a separation apart along the first feature.
  const double m0 = ds.X.topRows(300).col(0).mean();
  const double m1 = ds.X.bottomRows(300).col(0).mean();
  CHECK(m1 - m0 == doctest::Approx(6.0).epsilon(0.15));

  const auto again = bench::synth_dataset(opt);
  CHECK((again.X - ds.X).norm() == 0.0);
  auto other = opt;
  other.seed = 6;
  CHECK((bench::synth_dataset(other).X - ds.X).norm() != 0.0);

  SUBCASE("mixture classes produce more spread") {
    auto mix = opt;
    mix.components = 3;
    const auto gm = bench::synth_dataset(mix);
    CHECK(gm.X.rows() == 600);
    CHECK(gm.X.allFinite());
  }

  SUBCASE("written files load back exactly") {
    const std::string path = "/tmp/otcf_test_synth.csv";
    bench::write_dataset_csv(ds, path);
    const auto back = otcf::dataio::load_csv(path, "label");
    CHECK(back.X.rows() == ds.X.rows());
    CHECK((back.X - ds.X).norm() == 0.0);  // %.17g round-trips exactly
    CHECK((back.y - ds.y).norm() == 0);
    std::remove(path.c_str());
  }

  SUBCASE("bad options are rejected") {
    auto c = opt;
    c.per_class = 0;
    CHECK_THROWS_AS(bench::synth_dataset(c), Error);
    c = opt;
    c.separation = -1.0;
    CHECK_THROWS_AS(bench::synth_dataset(c), Error);
  }
}

TEST_CASE("experiments emit per-fold rows and rerun byte-identically") {
  bench::SynthOptions opt;
  opt.per_class = 150;
  opt.dims = 2;
  opt.separation = 4.0;
  opt.seed = 11;
  const auto ds = bench::synth_dataset(opt);
  const std::string data_path = "/tmp/otcf_test_bench_data.csv";
  bench::write_dataset_csv(ds, data_path);

  bench::ExperimentConfig cfg;
  cfg.datasets = {data_path};
  cfg.seed = 3;
  cfg.alpha = 0.6;
  cfg.k_grid = {1.5};
  cfg.methods = {Method::Independent, Method::GaussianScaled};
  cfg.folds = 5;
  cfg.clusters_per_label = 2;
  cfg.group_min_size = 20;
  cfg.output_dir = "/tmp/otcf_test_bench_out1";

  const auto report = bench::run_experiment(cfg);
  CHECK(report.skipped.empty());
  // Four groups (two clusters per label), one K: the pointwise baseline
  // writes its single fitting-data row, the functional method one per fold.
  CHECK(report.rows == 4 * (1 + 5));
  CHECK(report.maps_written == 8);

  const std::string metrics = slurp(report.metrics_path);
  CHECK(line_count(metrics) == 1 + 4 * (1 + 5));
  CHECK(metrics.rfind("dataset,group,label,target_class,method,K,fold,seed,"
                      "converged,n_eval,w2_sq,validity,emp_upper,emp_lower,"
                      "distortion,has_bounds,collapsed,trivial_validity\n",
                      0) == 0);
  CHECK(metrics.find("independent") != std::string::npos);
  CHECK(metrics.find("gaussian_scaled") != std::string::npos);
  CHECK(metrics.find("wall") == std::string::npos);

  const std::string timings = slurp(report.timings_path);
  CHECK(line_count(timings) == 1 + 4 * (1 + 5));

  SUBCASE("a rerun reproduces the metrics file byte for byte") {
    auto cfg2 = cfg;
    cfg2.output_dir = "/tmp/otcf_test_bench_out2";
    const auto report2 = bench::run_experiment(cfg2);
    CHECK(slurp(report2.metrics_path) == metrics);
    std::filesystem::remove_all(cfg2.output_dir);
  }

  SUBCASE("saved maps load back") {
    int loaded = 0;
    for (const auto& entry : std::filesystem::directory_iterator(
             std::filesystem::path(cfg.output_dir) / "maps")) {
      const auto j = otcf::serialize::load_json(entry.path().string());
      (void)otcf::serialize::map_from_json(j);
      const auto meta = otcf::serialize::metadata_from_json(j);
      CHECK(meta.upper_bound == 1.5);
      ++loaded;
    }
    CHECK(loaded == 8);
  }

  SUBCASE("unloadable datasets are skipped but the run continues") {
    auto cfg3 = cfg;
    cfg3.datasets = {"/tmp/otcf_test_absent.csv", data_path};
    cfg3.output_dir = "/tmp/otcf_test_bench_out3";
    const auto report3 = bench::run_experiment(cfg3);
    REQUIRE(report3.skipped.size() == 1);
    CHECK(report3.skipped[0].find("absent") != std::string::npos);
    CHECK(report3.rows == report.rows);
    std::filesystem::remove_all(cfg3.output_dir);
  }

  SUBCASE("invalid configs fail before any work starts") {
    auto broken = cfg;
    broken.alpha = 2.0;
    CHECK_THROWS_AS(bench::run_experiment(broken), Error);
  }

  std::filesystem::remove_all(cfg.output_dir);
  std::remove(data_path.c_str());
}
