#include "refrec/dataset_io.hpp"

#include <fstream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "refrec/errors.hpp"

namespace refrec {

namespace {

using nlohmann::json;

const json& require(const json& j, const char* field) {
  if (!j.is_object() || !j.contains(field)) {
    throw SchemaError(std::string("missing field '") + field + "'", field);
  }
  return j.at(field);
}

std::string require_string(const json& j, const char* field) {
  const json& v = require(j, field);
  if (!v.is_string()) throw SchemaError(std::string("field '") + field + "' must be a string", field);
  return v.get<std::string>();
}

int require_int(const json& j, const char* field) {
  const json& v = require(j, field);
  if (!v.is_number_integer()) throw SchemaError(std::string("field '") + field + "' must be an integer", field);
  return v.get<int>();
}

Box box_from_json(const json& v, const char* field) {
  if (!v.is_array() || v.size() != 4) {
    throw SchemaError(std::string("field '") + field + "' must be [x1, y1, x2, y2]", field);
  }
  for (const auto& x : v) {
    if (!x.is_number()) throw SchemaError(std::string("field '") + field + "' must hold numbers", field);
  }
  return Box{v[0].get<double>(), v[1].get<double>(), v[2].get<double>(), v[3].get<double>()};
}

template <typename Fn>
void for_each_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      fn(json::parse(line));
    } catch (const json::exception& e) {
      throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": invalid JSON: " + e.what());
    } catch (const SchemaError& e) {
      throw SchemaError(path.string() + ":" + std::to_string(line_no) + ": " + e.what(), e.field());
    }
  }
}

}  // namespace

Sample sample_from_json(const json& j) {
  Sample s;
  s.id = require_string(j, "id");
  s.image_ref = require_string(j, "image_ref");
  const json& dims = require(j, "image_dims");
  s.image_dims = ImageDims{require_int(dims, "width"), require_int(dims, "height")};
  s.expression = require_string(j, "expression");
  try {
    s.task = parse_task(require_string(j, "task"));
  } catch (const InvalidInput& e) {
    throw SchemaError(e.what(), "task");
  }
  if (j.contains("coord_units") && !j.at("coord_units").is_null()) {
    const std::string units = j.at("coord_units").is_string() ? j.at("coord_units").get<std::string>() : "";
    if (units == "pixel") {
      s.coord_units = CoordUnits::kPixel;
    } else if (units == "normalized") {
      s.coord_units = CoordUnits::kNormalized;
    } else {
      throw SchemaError("field 'coord_units' must be \"pixel\" or \"normalized\"", "coord_units");
    }
  }
  if (j.contains("gt") && !j.at("gt").is_null()) {
    Box b = box_from_json(j.at("gt"), "gt");
    if (s.coord_units == CoordUnits::kNormalized) {
      b = Box{b.x1 * s.image_dims.width, b.y1 * s.image_dims.height, b.x2 * s.image_dims.width,
              b.y2 * s.image_dims.height};
      s.coord_units = CoordUnits::kPixel;
    }
    s.gt = b;
  }
  if (j.contains("meta") && !j.at("meta").is_null()) {
    const json& m = j.at("meta");
    if (!m.is_object()) throw SchemaError("field 'meta' must be an object", "meta");
    if (m.contains("distractor_count") && !m.at("distractor_count").is_null()) {
      s.meta.distractor_count = require_int(m, "distractor_count");
    }
    if (m.contains("hop_count") && !m.at("hop_count").is_null()) s.meta.hop_count = require_int(m, "hop_count");
    if (m.contains("area_ratio") && !m.at("area_ratio").is_null()) {
      if (!m.at("area_ratio").is_number()) throw SchemaError("field 'area_ratio' must be a number", "area_ratio");
      s.meta.area_ratio = m.at("area_ratio").get<double>();
    }
  }
  try {
    s.validate();
  } catch (const InvalidInput& e) {
    throw SchemaError(e.what(), s.gt ? "gt" : "task");
  }
  return s;
}

json to_json(const Sample& s) {
  json j;
  j["id"] = s.id;
  j["image_ref"] = s.image_ref;
  j["image_dims"] = {{"width", s.image_dims.width}, {"height", s.image_dims.height}};
  j["expression"] = s.expression;
  j["task"] = std::string(to_string(s.task));
  j["gt"] = s.gt ? json{s.gt->x1, s.gt->y1, s.gt->x2, s.gt->y2} : json(nullptr);
  json meta = json::object();
  if (s.meta.distractor_count) meta["distractor_count"] = *s.meta.distractor_count;
  if (s.meta.hop_count) meta["hop_count"] = *s.meta.hop_count;
  if (s.meta.area_ratio) meta["area_ratio"] = *s.meta.area_ratio;
  j["meta"] = std::move(meta);
  j["coord_units"] = s.coord_units == CoordUnits::kPixel ? "pixel" : "normalized";
  return j;
}

std::vector<Sample> load_samples_jsonl(const std::filesystem::path& path) {
  std::vector<Sample> out;
  for_each_line(path, [&](const json& j) { out.push_back(sample_from_json(j)); });
  return out;
}

void write_samples_jsonl(std::ostream& os, const std::vector<Sample>& samples) {
  for (const auto& s : samples) os << to_json(s).dump() << '\n';
}

std::map<std::string, std::string> load_predictions_jsonl(const std::filesystem::path& path) {
  std::map<std::string, std::string> out;
  for_each_line(path, [&](const json& j) {
    std::string id = require_string(j, "id");
    std::string text = require_string(j, "response_text");
    if (!out.emplace(id, std::move(text)).second) {
      throw SchemaError("duplicate prediction id '" + id + "'", "id");
    }
  });
  return out;
}

}  // namespace refrec
