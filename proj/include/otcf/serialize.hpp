#pragma once

#include <json.hpp>
#include <string>

#include "otcf/classifier.hpp"
#include "otcf/maps.hpp"

namespace otcf::serialize {

using json = nlohmann::json;

// Matrices are stored row-major as arrays of row arrays, vectors as flat
// arrays. Doubles survive the round trip exactly (nlohmann keeps binary64).
json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const json& j);
json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const json& j);

json model_to_json(const classifier::LinearModel& m);
classifier::LinearModel model_from_json(const json& j);

json map_to_json(const maps::TransportMap& map, const maps::MapMetadata& meta);
maps::TransportMap map_from_json(const json& j);
maps::MapMetadata metadata_from_json(const json& j);

// File helpers; both throw IoError on filesystem failure and ParseError on
// malformed content.
void save_json(const json& j, const std::string& path);
json load_json(const std::string& path);

}  // namespace otcf::serialize
