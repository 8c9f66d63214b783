#include "cyws/dataset.hpp"

#include <algorithm>
#include <fstream>

#include "cyws/error.hpp"

namespace cyws::dataset {

Json box_to_json(const Bbox& b) { return Json::array({b.x1, b.y1, b.x2, b.y2}); }

Bbox box_from_json(const Json& j) {
  if (!j.is_array() || j.size() != 4) throw DataError("box must be a 4-element array [x1, y1, x2, y2]");
  Bbox b{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  if (!b.valid()) throw DataError("box has x2 < x1 or y2 < y1");
  return b;
}

namespace {

Json boxes_to_json(const std::vector<Bbox>& boxes) {
  Json out = Json::array();
  for (const auto& b : boxes) out.push_back(box_to_json(b));
  return out;
}

std::vector<Bbox> boxes_from_json(const Json& j) {
  std::vector<Bbox> out;
  for (const auto& b : j) out.push_back(box_from_json(b));
  return out;
}

}  // namespace

Json to_json(const PairRecord& r) {
  return Json{{"id", r.id},
              {"image1", r.image1},
              {"image2", r.image2},
              {"boxes1", boxes_to_json(r.boxes1)},
              {"boxes2", boxes_to_json(r.boxes2)},
              {"provenance", r.provenance}};
}

PairRecord record_from_json(const Json& j) {
  PairRecord r;
  r.id = j.at("id").get<std::string>();
  r.image1 = j.at("image1").get<std::string>();
  r.image2 = j.at("image2").get<std::string>();
  r.boxes1 = boxes_from_json(j.at("boxes1"));
  r.boxes2 = boxes_from_json(j.at("boxes2"));
  if (j.contains("provenance")) r.provenance = j.at("provenance");
  return r;
}

std::vector<PairRecord> read_index(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open index '" + path.string() + "'");
  std::vector<PairRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) continue;
    try {
      out.push_back(record_from_json(Json::parse(line)));
    } catch (const Json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

void write_index(const std::filesystem::path& path, const std::vector<PairRecord>& records) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write index '" + path.string() + "'");
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

std::filesystem::path index_path(const std::filesystem::path& data, const std::string& name) {
  if (std::filesystem::is_directory(data)) return data / name;
  return data;
}

Json to_json(const std::vector<Detection>& detections) {
  Json out = Json::array();
  for (const auto& d : detections) out.push_back(Json{{"bbox", box_to_json(d.bbox)}, {"score", d.score}});
  return out;
}

std::vector<Detection> detections_from_json(const Json& j) {
  std::vector<Detection> out;
  for (const auto& d : j) out.push_back({box_from_json(d.at("bbox")), d.at("score").get<double>()});
  return out;
}

Json to_json(const PredictionSet& set) {
  Json out = Json::object();
  for (const auto& [id, p] : set) out[id] = Json{{"image1", to_json(p.image1)}, {"image2", to_json(p.image2)}};
  return out;
}

PredictionSet predictions_from_json(const Json& j) {
  if (!j.is_object()) throw DataError("predictions must be a JSON object keyed by pair id");
  PredictionSet out;
  for (const auto& [id, p] : j.items()) {
    out[id] = PairPredictions{detections_from_json(p.at("image1")), detections_from_json(p.at("image2"))};
  }
  return out;
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

PredictionSet read_predictions(const std::filesystem::path& path) {
  const Json j = read_json(path);
  try {
    return predictions_from_json(j);
  } catch (const Json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const Json& j) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << j.dump(2) << '\n';
}

}  // namespace cyws::dataset
