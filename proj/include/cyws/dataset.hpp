#pragma once

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cyws/geometry.hpp"

namespace cyws::dataset {

using Json = nlohmann::json;

/// One line of pairs.jsonl. Image paths are relative to the dataset root.
struct PairRecord {
  std::string id;
  std::string image1;
  std::string image2;
  std::vector<Bbox> boxes1;
  std::vector<Bbox> boxes2;
  Json provenance = Json::object();
};

Json box_to_json(const Bbox& b);
Bbox box_from_json(const Json& j);
Json to_json(const PairRecord& r);
PairRecord record_from_json(const Json& j);

/// Parses a JSONL index; throws DataError naming the offending line.
std::vector<PairRecord> read_index(const std::filesystem::path& path);
void write_index(const std::filesystem::path& path, const std::vector<PairRecord>& records);

/// Dataset root for an index path or a directory (which must contain the
/// given index file name).
std::filesystem::path index_path(const std::filesystem::path& data, const std::string& name = "pairs.jsonl");

struct PairPredictions {
  std::vector<Detection> image1;
  std::vector<Detection> image2;
};

/// Keyed by pair id. Serialized as
/// {"<id>": {"image1": [{"bbox": [x1,y1,x2,y2], "score": s}, ...], "image2": [...]}}.
using PredictionSet = std::map<std::string, PairPredictions>;

Json to_json(const std::vector<Detection>& detections);
std::vector<Detection> detections_from_json(const Json& j);
Json to_json(const PredictionSet& set);
PredictionSet predictions_from_json(const Json& j);
PredictionSet read_predictions(const std::filesystem::path& path);
Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& j);

}  // namespace cyws::dataset
