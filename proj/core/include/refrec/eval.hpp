#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "refrec/geometry.hpp"
#include "refrec/response.hpp"
#include "refrec/rewards.hpp"

namespace refrec {

enum class TaskCategory { kAttribute, kPosition, kInteraction, kRelation, kCommonsense, kReject };

inline constexpr std::array<TaskCategory, 6> kAllTasks{
    TaskCategory::kAttribute, TaskCategory::kPosition,    TaskCategory::kInteraction,
    TaskCategory::kRelation,  TaskCategory::kCommonsense, TaskCategory::kReject};

std::string_view to_string(TaskCategory task) noexcept;
/// Case-insensitive; throws InvalidInput on unknown names.
TaskCategory parse_task(std::string_view name);
inline std::size_t index_of(TaskCategory task) noexcept { return static_cast<std::size_t>(task); }

enum class CoordUnits { kPixel, kNormalized };

struct SampleMeta {
  std::optional<int> distractor_count;
  std::optional<int> hop_count;
  std::optional<double> area_ratio;

  friend bool operator==(const SampleMeta&, const SampleMeta&) = default;
};

struct Sample {
  std::string id;
  std::string image_ref;
  ImageDims image_dims;
  std::string expression;
  TaskCategory task = TaskCategory::kAttribute;
  GroundTruth gt;
  SampleMeta meta;
  CoordUnits coord_units = CoordUnits::kPixel;

  /// Throws InvalidInput on a violated invariant (Reject <=> no box, box
  /// inside the image, meta.area_ratio consistent with the box).
  void validate() const;

  friend bool operator==(const Sample&, const Sample&) = default;
};

/// The nine evaluation thresholds 0.50, 0.55, ..., 0.90.
const std::array<double, 9>& iou_thresholds() noexcept;

struct GroundingOutcome {
  Box gt;
  std::optional<Box> predicted;  // nullopt for abstained or malformed output
};

/// Mean over the nine thresholds of the fraction of samples with IoU >= tau,
/// as a percentage. std::nullopt marks an empty task.
std::optional<double> macc(std::span<const GroundingOutcome> outcomes);

enum class RejectionMode {
  kGrounding,       // correct when no box is produced or absence is stated
  kClassification,  // model answers "yes"/"no" to "is the target present?"
};

std::string_view to_string(RejectionMode mode) noexcept;
RejectionMode parse_rejection_mode(std::string_view name);

struct RejectionOutcome {
  TaskCategory task = TaskCategory::kReject;
  std::string response_text;
};

/// Reads a yes/no presence answer. Returns true for "yes", false for "no",
/// std::nullopt when the text is neither.
std::optional<bool> read_presence_answer(std::string_view text);

/// Percentage of Reject queries answered correctly. Throws InvalidInput if a
/// non-Reject outcome is passed. std::nullopt when empty.
std::optional<double> rej_acc(std::span<const RejectionOutcome> outcomes, const RejectionLexicon& lexicon,
                              RejectionMode mode = RejectionMode::kGrounding);

enum class DifficultyFactor { kDistractors, kArea, kHops };

std::string_view to_string(DifficultyFactor factor) noexcept;
DifficultyFactor parse_factor(std::string_view name);

struct BucketRow {
  double lower = 0.0;
  double upper = 0.0;  // exclusive; +inf for an open last bucket
  std::size_t count = 0;
  std::optional<double> macc;  // nullopt for an empty bucket
};

struct BucketTable {
  DifficultyFactor factor = DifficultyFactor::kDistractors;
  std::vector<BucketRow> rows;
  std::size_t unbucketed = 0;
};

/// A sample paired with the raw model text and its parse.
struct EvaluatedSample {
  Sample sample;
  std::string response_text;
  ParsedResponse parsed;
};

/// Per-bucket mAcc over grounded (non-Reject) samples using half-open
/// intervals [edges[i], edges[i+1]). Samples without the factor's meta field,
/// or outside every interval, count as unbucketed.
BucketTable bucketize(std::span<const EvaluatedSample> samples, DifficultyFactor factor,
                      std::span<const double> edges);

using TaskScores = std::array<std::optional<double>, 6>;

struct MetricsReport {
  TaskScores task_scores{};
  std::array<std::size_t, 6> counts{};
  std::optional<double> acc_p;
  std::optional<double> acc_o;
  std::optional<double> acc_api;
  std::optional<double> acc_rc;
  RejectionMode rejection_mode = RejectionMode::kGrounding;
  std::vector<BucketTable> buckets;

  std::optional<double> score(TaskCategory task) const { return task_scores[index_of(task)]; }
};

/// Unweighted means of the available task scores; an aggregate that depends
/// on a missing task score is left unavailable.
MetricsReport aggregate(const TaskScores& scores);

struct BucketSpec {
  DifficultyFactor factor = DifficultyFactor::kDistractors;
  std::vector<double> edges;
};

struct EvalOptions {
  RejectionMode rejection_mode = RejectionMode::kGrounding;
  std::vector<BucketSpec> buckets;
};

/// Joins predictions to samples by id. Throws SchemaError when a sample has no
/// prediction or an id repeats.
std::vector<EvaluatedSample> join_predictions(std::span<const Sample> samples,
                                              const std::map<std::string, std::string>& predictions,
                                              const RejectionLexicon& lexicon);

MetricsReport evaluate(std::span<const EvaluatedSample> samples, const RejectionLexicon& lexicon,
                       const EvalOptions& options);

enum class ReportFormat { kMarkdown, kCsv, kJson };

ReportFormat parse_report_format(std::string_view name);
std::string_view extension(ReportFormat format) noexcept;

/// Deterministic serialisation. Markdown rounds to one decimal; CSV and JSON
/// carry full precision.
std::string render_report(const MetricsReport& report, ReportFormat format);

}  // namespace refrec
