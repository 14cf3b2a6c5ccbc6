#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "refrec/clients.hpp"
#include "refrec/eval.hpp"
#include "refrec/geometry.hpp"

namespace refrec {

struct Relation {
  std::string predicate;
  int anchor = -1;  // index of the anchor object within the image

  bool operator==(const Relation&) const = default;
};

struct ObjectRecord {
  int index = 0;  // position in the parser's object list
  std::vector<std::string> attributes;
  Box box;
  std::string category;
  std::string description;
  std::vector<Relation> relations;
  std::string function_tag;  // empty when the object has no salient function
  double grounding_score = 0.0;
};

struct ImageRecord {
  std::string image_ref;
  ImageDims dims;
  std::vector<ObjectRecord> objects;

  const ObjectRecord* find(int index) const;
};

struct ManifestEntry {
  std::string image_ref;
  ImageDims dims;
};

/// JSONL lines {"image_ref": "...", "width": W, "height": H}.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path);

struct PipelineConfig {
  int min_categories = 2;
  int min_objects = 5;
  int min_side = 1024;
  int max_side = 2048;
  double s_min = 0.35;
  double uniqueness_iou = 0.5;
  int candidates_per_object = 3;
  int max_inflight = 8;
  int threads = 4;
  RetryPolicy retry;
  PromptAssets prompts;

  void validate() const;
};

enum class FilterRule { kResolution, kCategoryDiversity, kObjectCount };

std::string_view to_string(FilterRule rule) noexcept;

struct FilterDecision {
  bool keep = true;
  std::optional<FilterRule> violated;
};

bool resolution_ok(ImageDims dims, const PipelineConfig& cfg);

FilterDecision filter_image(ImageDims dims, const std::vector<ObjectRecord>& objects,
                            const PipelineConfig& cfg = {});

struct ObjectDrop {
  int object_index = 0;
  std::string reason;
};

struct ParseResult {
  ImageRecord record;
  std::vector<ObjectDrop> dropped;
  int objects_reported = 0;
  int parser_attempts = 0;
  int max_grounder_attempts = 0;
};

/// Throws RetriesExhausted when the parser never answers and SchemaError when
/// its payload is malformed. Per-object grounding problems become drops.
ParseResult parse_image(const ManifestEntry& image, const ClientSuite& suite, const PipelineConfig& cfg = {},
                        RequestGate* gate = nullptr);

struct ChecklistVerdict {
  bool category = false;
  bool attributes = false;
  bool relations = false;
  bool description = false;

  bool all_pass() const noexcept { return category && attributes && relations && description; }
  /// Failed item names joined with '+', e.g. "relations" or "category+description".
  std::string failures() const;
};

ChecklistVerdict verify_object(const ObjectRecord& obj, const ImageRecord& context, const ClientSuite& suite,
                               const PipelineConfig& cfg = {}, RequestGate* gate = nullptr);

TaskCategory select_task(const ObjectRecord& target, const ImageRecord& context);

/// Reasoning hops implied by the selected rule (anchored tasks need one).
int hop_count_for(TaskCategory task) noexcept;

struct CandidateExpression {
  int object_index = 0;
  int candidate_index = 0;
  TaskCategory task = TaskCategory::kAttribute;
  std::string text;
  std::optional<bool> consistency;
  std::optional<bool> uniqueness;

  bool accepted() const noexcept { return consistency.value_or(false) && uniqueness.value_or(false); }
};

std::vector<CandidateExpression> generate_expressions(const ObjectRecord& target, TaskCategory task,
                                                      const ImageRecord& context, const ClientSuite& suite,
                                                      const PipelineConfig& cfg = {}, RequestGate* gate = nullptr);

/// For Reject candidates uniqueness means the grounder finds nothing above s_min.
CandidateExpression correct_expression(CandidateExpression cand, const ObjectRecord& target,
                                       const std::string& image_ref, const ClientSuite& suite,
                                       const PipelineConfig& cfg = {}, RequestGate* gate = nullptr);

struct AuditRecord {
  std::string image_ref;
  int object_index = -1;  // -1 for image-level records
  std::optional<int> candidate_index;
  std::string stage;
  std::string verdict;  // "drop" or "emit"
  std::string reason;
  std::optional<std::string> sample_id;

  nlohmann::json to_json() const;
};

struct PipelineStats {
  int images = 0;
  int images_kept = 0;
  int images_dropped = 0;
  int objects = 0;
  int objects_dropped = 0;
  int objects_generated = 0;
  int candidates = 0;
  int candidates_dropped = 0;
  int samples = 0;

  nlohmann::json to_json() const;
};

struct PipelineResult {
  std::vector<Sample> samples;
  std::vector<AuditRecord> audit;
  PipelineStats stats;
};

PipelineResult run_pipeline(const std::vector<ManifestEntry>& manifest, const ClientSuite& suite,
                            const PipelineConfig& cfg = {});

/// Writes samples.jsonl and audit.jsonl into `dir`.
void write_pipeline_outputs(const PipelineResult& result, const std::filesystem::path& dir);

}  // namespace refrec
