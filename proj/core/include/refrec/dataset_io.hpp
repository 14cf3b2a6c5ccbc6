#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "refrec/eval.hpp"

namespace refrec {

/// Sample JSONL schema:
///   {"id", "image_ref", "image_dims": {"width", "height"}, "expression",
///    "task", "gt": [x1, y1, x2, y2] | null, "meta"?: {"distractor_count"?,
///    "hop_count"?, "area_ratio"?}, "coord_units"?: "pixel" | "normalized"}
/// Normalized coordinates are scaled to pixels on load.
Sample sample_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Sample& sample);

/// Throws SchemaError naming the line and field on any violation.
std::vector<Sample> load_samples_jsonl(const std::filesystem::path& path);
void write_samples_jsonl(std::ostream& os, const std::vector<Sample>& samples);

/// Prediction JSONL: {"id", "response_text"} per line. Duplicate ids are a
/// schema error.
std::map<std::string, std::string> load_predictions_jsonl(const std::filesystem::path& path);

}  // namespace refrec
