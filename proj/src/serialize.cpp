#include "otcf/serialize.hpp"

#include <fstream>

namespace otcf::serialize {

namespace {

const char* structure_name(maps::MapStructure s) {
  switch (s) {
    case maps::MapStructure::Full: return "full";
    case maps::MapStructure::Psd: return "psd";
    case maps::MapStructure::Diagonal: return "diagonal";
    case maps::MapStructure::Scaled: return "scaled";
  }
  fail(ErrorKind::InvalidInput, "unknown map structure");
}

maps::MapStructure structure_from_name(const std::string& s) {
  if (s == "full") return maps::MapStructure::Full;
  if (s == "psd") return maps::MapStructure::Psd;
  if (s == "diagonal") return maps::MapStructure::Diagonal;
  if (s == "scaled") return maps::MapStructure::Scaled;
  fail(ErrorKind::ParseError, "unknown map structure '" + s + "'");
}

json affine_to_json(const maps::AffineMap& m) {
  return json{{"A", matrix_to_json(m.A)},
              {"b", vector_to_json(m.b)},
              {"structure", structure_name(m.structure)}};
}

maps::AffineMap affine_from_json(const json& j) {
  maps::AffineMap m;
  m.A = matrix_from_json(j.at("A"));
  m.b = vector_from_json(j.at("b"));
  m.structure = structure_from_name(j.at("structure").get<std::string>());
  return m;
}

json moments_to_json(const maps::GaussianMoments& g) {
  return json{{"mean", vector_to_json(g.mean)},
              {"cov", matrix_to_json(g.cov.mat())},
              {"ridge", g.ridge}};
}

maps::GaussianMoments moments_from_json(const json& j) {
  maps::GaussianMoments g;
  g.mean = vector_from_json(j.at("mean"));
  g.cov = numerics::SymMatrix(matrix_from_json(j.at("cov")));
  g.ridge = j.at("ridge").get<double>();
  return g;
}

}  // namespace

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  require(j.is_array(), ErrorKind::ParseError, "matrix must be an array of rows");
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  if (rows == 0) return Eigen::MatrixXd(0, 0);
  const Eigen::Index cols = static_cast<Eigen::Index>(j.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    require(static_cast<Eigen::Index>(j.at(i).size()) == cols, ErrorKind::ParseError,
            "matrix rows have unequal lengths");
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = j.at(i).at(k).get<double>();
  }
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Eigen::VectorXd vector_from_json(const json& j) {
  require(j.is_array(), ErrorKind::ParseError, "vector must be an array");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j.at(i).get<double>();
  return v;
}

json model_to_json(const classifier::LinearModel& m) {
  return json{{"feature_names", m.feature_names},
              {"weights", vector_to_json(m.weights)},
              {"intercept", m.intercept},
              {"l2_penalty", m.l2_penalty},
              {"converged", m.converged},
              {"iterations", m.iterations},
              {"feat_mean", vector_to_json(m.feat_mean)},
              {"feat_std", vector_to_json(m.feat_std)}};
}

classifier::LinearModel model_from_json(const json& j) {
  classifier::LinearModel m;
  m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  m.weights = vector_from_json(j.at("weights"));
  m.intercept = j.at("intercept").get<double>();
  m.l2_penalty = j.at("l2_penalty").get<double>();
  m.converged = j.at("converged").get<bool>();
  m.iterations = j.at("iterations").get<int>();
  m.feat_mean = vector_from_json(j.at("feat_mean"));
  m.feat_std = vector_from_json(j.at("feat_std"));
  return m;
}

json map_to_json(const maps::TransportMap& map, const maps::MapMetadata& meta) {
  json j;
  j["meta"] = json{{"upper", meta.upper_bound},
                   {"lower", meta.lower_bound},
                   {"alpha", meta.alpha},
                   {"group", meta.group_id}};
  std::visit(
      [&j](const auto& m) {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, maps::PointwiseMap>) {
          j["tag"] = "pointwise";
          j["sources"] = matrix_to_json(m.sources);
          j["targets"] = matrix_to_json(m.targets);
        } else if constexpr (std::is_same_v<T, maps::AffineMap>) {
          j["tag"] = "affine";
          j["map"] = affine_to_json(m);
        } else if constexpr (std::is_same_v<T, maps::GaussianPairMap>) {
          j["tag"] = "gaussian_pair";
          j["source"] = moments_to_json(m.source);
          j["target"] = moments_to_json(m.target);
          j["map"] = affine_to_json(m.map);
        } else {
          j["tag"] = "gmm";
          j["weights"] = vector_to_json(m.source.weights);
          json comps = json::array();
          for (const auto& g : m.source.components) comps.push_back(moments_to_json(g));
          j["source_components"] = std::move(comps);
          json tgts = json::array();
          for (const auto& g : m.targets) tgts.push_back(moments_to_json(g));
          j["target_components"] = std::move(tgts);
          json affines = json::array();
          for (const auto& a : m.components) affines.push_back(affine_to_json(a));
          j["component_maps"] = std::move(affines);
        }
      },
      map);
  return j;
}

maps::TransportMap map_from_json(const json& j) {
  const std::string tag = j.at("tag").get<std::string>();
  if (tag == "pointwise") {
    maps::PointwiseMap m;
    m.sources = matrix_from_json(j.at("sources"));
    m.targets = matrix_from_json(j.at("targets"));
    return m;
  }
  if (tag == "affine") return affine_from_json(j.at("map"));
  if (tag == "gaussian_pair") {
    maps::GaussianPairMap m;
    m.source = moments_from_json(j.at("source"));
    m.target = moments_from_json(j.at("target"));
    m.map = affine_from_json(j.at("map"));
    return m;
  }
  if (tag == "gmm") {
    maps::GmmMap m;
    m.source.weights = vector_from_json(j.at("weights"));
    for (const auto& g : j.at("source_components")) m.source.components.push_back(moments_from_json(g));
    for (const auto& g : j.at("target_components")) m.targets.push_back(moments_from_json(g));
    for (const auto& a : j.at("component_maps")) m.components.push_back(affine_from_json(a));
    return m;
  }
  fail(ErrorKind::ParseError, "unknown transport map tag '" + tag + "'");
}

maps::MapMetadata metadata_from_json(const json& j) {
  maps::MapMetadata meta;
  const json& m = j.at("meta");
  meta.upper_bound = m.at("upper").get<double>();
  meta.lower_bound = m.at("lower").get<double>();
  meta.alpha = m.at("alpha").get<double>();
  meta.group_id = m.at("group").get<std::string>();
  return meta;
}

void save_json(const json& j, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::IoError, "cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
  require(out.good(), ErrorKind::IoError, "failed writing '" + path + "'");
}

json load_json(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::IoError, "cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::ParseError, std::string("invalid JSON in '") + path + "': " + e.what());
  }
}

}  // namespace otcf::serialize
