#include "refrec/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <set>

#include "refrec/errors.hpp"

namespace refrec {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::optional<double> mean_of(std::initializer_list<std::optional<double>> values) {
  double sum = 0.0;
  for (const auto& v : values) {
    if (!v) return std::nullopt;
    sum += *v;
  }
  return sum / static_cast<double>(values.size());
}

std::optional<double> factor_value(const Sample& s, DifficultyFactor factor) {
  switch (factor) {
    case DifficultyFactor::kDistractors:
      if (s.meta.distractor_count) return static_cast<double>(*s.meta.distractor_count);
      return std::nullopt;
    case DifficultyFactor::kArea:
      return s.meta.area_ratio;
    case DifficultyFactor::kHops:
      if (s.meta.hop_count) return static_cast<double>(*s.meta.hop_count);
      return std::nullopt;
  }
  return std::nullopt;
}

GroundingOutcome outcome_of(const EvaluatedSample& s) { return GroundingOutcome{*s.sample.gt, s.parsed.box()}; }

}  // namespace

std::string_view to_string(TaskCategory task) noexcept {
  switch (task) {
    case TaskCategory::kAttribute: return "Attribute";
    case TaskCategory::kPosition: return "Position";
    case TaskCategory::kInteraction: return "Interaction";
    case TaskCategory::kRelation: return "Relation";
    case TaskCategory::kCommonsense: return "Commonsense";
    case TaskCategory::kReject: return "Reject";
  }
  return "Unknown";
}

TaskCategory parse_task(std::string_view name) {
  const std::string l = lower(name);
  for (TaskCategory t : kAllTasks) {
    if (l == lower(to_string(t))) return t;
  }
  throw InvalidInput("unknown task category '" + std::string(name) + "'");
}

void Sample::validate() const {
  if (id.empty()) throw InvalidInput("sample id must be non-empty");
  refrec::validate(image_dims);
  const bool reject = task == TaskCategory::kReject;
  if (reject && gt) throw InvalidInput("sample " + id + ": Reject samples must not carry a box");
  if (!reject && !gt) throw InvalidInput("sample " + id + ": grounded samples need a box");
  if (gt) {
    refrec::validate(*gt);
    if (!contains(image_dims, *gt)) {
      throw InvalidInput("sample " + id + ": box " + to_string(*gt) + " exceeds the image");
    }
    if (meta.area_ratio && std::abs(*meta.area_ratio - area_ratio(*gt, image_dims)) > 1e-6) {
      throw InvalidInput("sample " + id + ": meta.area_ratio disagrees with the box");
    }
  }
}

const std::array<double, 9>& iou_thresholds() noexcept {
  // Built from integer percentages so each threshold is the nearest double to its decimal.
  static const std::array<double, 9> thresholds = [] {
    std::array<double, 9> t{};
    for (int i = 0; i < 9; ++i) t[static_cast<std::size_t>(i)] = (50 + 5 * i) / 100.0;
    return t;
  }();
  return thresholds;
}

std::optional<double> macc(std::span<const GroundingOutcome> outcomes) {
  if (outcomes.empty()) return std::nullopt;
  std::vector<double> ious;
  ious.reserve(outcomes.size());
  for (const auto& o : outcomes) ious.push_back(o.predicted ? iou(*o.predicted, o.gt) : -1.0);

  const auto& thresholds = iou_thresholds();
  double acc_sum = 0.0;
  for (double tau : thresholds) {
    std::size_t hits = 0;
    for (double v : ious) {
      if (v >= tau) ++hits;
    }
    acc_sum += static_cast<double>(hits) / static_cast<double>(ious.size());
  }
  return 100.0 * acc_sum / static_cast<double>(thresholds.size());
}

std::string_view to_string(RejectionMode mode) noexcept {
  return mode == RejectionMode::kGrounding ? "grounding" : "classification";
}

RejectionMode parse_rejection_mode(std::string_view name) {
  if (name == "grounding") return RejectionMode::kGrounding;
  if (name == "classification") return RejectionMode::kClassification;
  throw InvalidInput("unknown rejection mode '" + std::string(name) + "'");
}

std::optional<bool> read_presence_answer(std::string_view text) {
  std::string_view body = text;
  const auto open = body.find("<answer>");
  const auto close = body.find("</answer>");
  if (open != std::string_view::npos && close != std::string_view::npos && open < close) {
    body = body.substr(open + 8, close - open - 8);
  }
  std::size_t i = 0;
  while (i < body.size() && !std::isalpha(static_cast<unsigned char>(body[i]))) ++i;
  std::size_t j = i;
  while (j < body.size() && std::isalpha(static_cast<unsigned char>(body[j]))) ++j;
  const std::string word = lower(body.substr(i, j - i));
  if (word == "yes") return true;
  if (word == "no") return false;
  return std::nullopt;
}

std::optional<double> rej_acc(std::span<const RejectionOutcome> outcomes, const RejectionLexicon& lexicon,
                              RejectionMode mode) {
  for (const auto& o : outcomes) {
    if (o.task != TaskCategory::kReject) {
      throw InvalidInput("rejection accuracy received a " + std::string(to_string(o.task)) + " sample");
    }
  }
  if (outcomes.empty()) return std::nullopt;
  std::size_t correct = 0;
  for (const auto& o : outcomes) {
    const bool ok = mode == RejectionMode::kGrounding
                        ? detect_rejection(o.response_text, lexicon)
                        : read_presence_answer(o.response_text) == std::optional<bool>(false);
    if (ok) ++correct;
  }
  return 100.0 * static_cast<double>(correct) / static_cast<double>(outcomes.size());
}

std::string_view to_string(DifficultyFactor factor) noexcept {
  switch (factor) {
    case DifficultyFactor::kDistractors: return "distractors";
    case DifficultyFactor::kArea: return "area";
    case DifficultyFactor::kHops: return "hops";
  }
  return "unknown";
}

DifficultyFactor parse_factor(std::string_view name) {
  for (DifficultyFactor f : {DifficultyFactor::kDistractors, DifficultyFactor::kArea, DifficultyFactor::kHops}) {
    if (name == to_string(f)) return f;
  }
  throw InvalidInput("unknown difficulty factor '" + std::string(name) + "'");
}

BucketTable bucketize(std::span<const EvaluatedSample> samples, DifficultyFactor factor,
                      std::span<const double> edges) {
  if (edges.size() < 2) throw InvalidInput("bucket edges need at least two values");
  for (std::size_t i = 1; i < edges.size(); ++i) {
    if (!(edges[i - 1] < edges[i])) throw InvalidInput("bucket edges must be strictly increasing");
  }
  BucketTable table;
  table.factor = factor;
  std::vector<std::vector<GroundingOutcome>> members(edges.size() - 1);
  for (const auto& s : samples) {
    if (s.sample.task == TaskCategory::kReject) continue;
    const auto v = factor_value(s.sample, factor);
    if (!v) {
      ++table.unbucketed;
      continue;
    }
    const auto it = std::upper_bound(edges.begin(), edges.end(), *v);
    if (it == edges.begin() || it == edges.end()) {
      ++table.unbucketed;
      continue;
    }
    members[static_cast<std::size_t>(std::distance(edges.begin(), it)) - 1].push_back(outcome_of(s));
  }
  for (std::size_t b = 0; b + 1 < edges.size(); ++b) {
    table.rows.push_back(BucketRow{edges[b], edges[b + 1], members[b].size(), macc(members[b])});
  }
  return table;
}

MetricsReport aggregate(const TaskScores& scores) {
  MetricsReport r;
  r.task_scores = scores;
  const auto s = [&](TaskCategory t) { return scores[index_of(t)]; };
  r.acc_api = mean_of({s(TaskCategory::kAttribute), s(TaskCategory::kPosition), s(TaskCategory::kInteraction)});
  r.acc_rc = mean_of({s(TaskCategory::kRelation), s(TaskCategory::kCommonsense)});
  r.acc_p = mean_of({s(TaskCategory::kAttribute), s(TaskCategory::kPosition), s(TaskCategory::kInteraction),
                     s(TaskCategory::kRelation), s(TaskCategory::kCommonsense)});
  r.acc_o = mean_of({s(TaskCategory::kAttribute), s(TaskCategory::kPosition), s(TaskCategory::kInteraction),
                     s(TaskCategory::kRelation), s(TaskCategory::kCommonsense), s(TaskCategory::kReject)});
  return r;
}

std::vector<EvaluatedSample> join_predictions(std::span<const Sample> samples,
                                              const std::map<std::string, std::string>& predictions,
                                              const RejectionLexicon& lexicon) {
  std::set<std::string> seen;
  std::vector<EvaluatedSample> out;
  out.reserve(samples.size());
  for (const Sample& s : samples) {
    if (!seen.insert(s.id).second) {
      throw SchemaError("duplicate sample id '" + s.id + "' in dataset", "id");
    }
    const auto it = predictions.find(s.id);
    if (it == predictions.end()) {
      throw SchemaError("no prediction for sample '" + s.id + "'", "id");
    }
    out.push_back(EvaluatedSample{s, it->second, parse(it->second, lexicon)});
  }
  return out;
}

MetricsReport evaluate(std::span<const EvaluatedSample> samples, const RejectionLexicon& lexicon,
                       const EvalOptions& options) {
  std::array<std::vector<GroundingOutcome>, 6> grounded;
  std::vector<RejectionOutcome> rejects;
  std::array<std::size_t, 6> counts{};
  for (const auto& s : samples) {
    ++counts[index_of(s.sample.task)];
    if (s.sample.task == TaskCategory::kReject) {
      rejects.push_back(RejectionOutcome{s.sample.task, s.response_text});
    } else {
      grounded[index_of(s.sample.task)].push_back(outcome_of(s));
    }
  }
  TaskScores scores{};
  for (TaskCategory t : kAllTasks) {
    if (t != TaskCategory::kReject) scores[index_of(t)] = macc(grounded[index_of(t)]);
  }
  scores[index_of(TaskCategory::kReject)] = rej_acc(rejects, lexicon, options.rejection_mode);

  MetricsReport report = aggregate(scores);
  report.counts = counts;
  report.rejection_mode = options.rejection_mode;
  for (const auto& spec : options.buckets) {
    report.buckets.push_back(bucketize(samples, spec.factor, spec.edges));
  }
  return report;
}

}  // namespace refrec
