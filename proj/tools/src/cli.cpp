#include "refrec/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "refrec/config.hpp"
#include "refrec/dataset_io.hpp"
#include "refrec/errors.hpp"
#include "refrec/eval.hpp"
#include "refrec/grpo.hpp"
#include "refrec/pipeline.hpp"
#include "refrec/response.hpp"
#include "refrec/rewards.hpp"
#include "refrec/toytrainer.hpp"

namespace refrec::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kVersion = "refrec 0.1.0";

const std::vector<std::string>& subcommand_names() {
  static const std::vector<std::string> names{"eval", "train-toy", "compare-schedules", "pipeline", "score-group"};
  return names;
}

std::shared_ptr<spdlog::logger> logger() {
  static const std::shared_ptr<spdlog::logger> log = [] {
    auto l = spdlog::stderr_color_mt("refrec");
    l->set_pattern("[%l] %v");
    return l;
  }();
  const char* level = std::getenv("REFREC_LOG");
  log->set_level(level ? spdlog::level::from_str(level) : spdlog::level::warn);
  return log;
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1);
  std::vector<std::size_t> cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is(text);
  while (std::getline(is, item, sep)) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    out.push_back(b == std::string::npos ? std::string() : item.substr(b, e - b + 1));
  }
  return out;
}

double parse_number(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw InvalidInput(what + ": '" + text + "' is not a number");
  }
  if (used != text.size() || !std::isfinite(v)) throw InvalidInput(what + ": '" + text + "' is not a finite number");
  return v;
}

std::vector<double> parse_numbers(const std::string& text, const std::string& what) {
  std::vector<double> out;
  for (const std::string& item : split(text, ',')) out.push_back(parse_number(item, what));
  if (out.empty()) throw InvalidInput(what + ": expected a comma-separated list");
  return out;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError(path.string() + " is not valid JSON: " + e.what());
  }
}

/// The run config file: --config, else $REFREC_CONFIG, else empty.
json load_run_config(const std::string& flag_path) {
  std::string path = flag_path;
  if (path.empty()) {
    if (const char* env = std::getenv("REFREC_CONFIG"); env && *env) path = env;
  }
  if (path.empty()) return json::object();
  json doc = read_json_file(path);
  if (!doc.is_object()) throw SchemaError("config file must hold a JSON object");
  for (const auto& item : doc.items()) {
    static const std::vector<std::string> known{"command", "reward", "grpo", "train", "pipeline", "eval"};
    if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
      throw SchemaError("unknown top-level key '" + item.key() + "' in config file", item.key());
    }
  }
  logger()->info("loaded config {}", path);
  return doc;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

void write_resolved(const fs::path& dir, const json& resolved) {
  fs::create_directories(dir);
  write_text(dir / "config.resolved.json", resolved.dump(2) + "\n");
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

// ---- reward / training flags ----------------------------------------------

struct RewardFlags {
  std::optional<double> alpha;
  std::optional<double> beta_end;
  std::optional<double> d_max;
  std::optional<double> p;
  std::optional<std::int64_t> total_steps;
  std::optional<double> tau_q_start;
  std::optional<double> tau_q_end;
  std::optional<int> group_size;
  std::optional<double> kl_beta;
};

void add_reward_flags(CLI::App* app, RewardFlags& f) {
  app->add_option("--alpha", f.alpha, "Starting IoU threshold");
  app->add_option("--beta-end", f.beta_end, "Final IoU threshold");
  app->add_option("--d-max", f.d_max, "Largest small-target threshold relief");
  app->add_option("--p", f.p, "Group quality reward weight");
  app->add_option("--total-steps", f.total_steps, "Schedule horizon T");
  app->add_option("--tau-q-start", f.tau_q_start, "Quality threshold at step 0");
  app->add_option("--tau-q-end", f.tau_q_end, "Quality threshold at step T");
  app->add_option("--group-size", f.group_size, "Responses per group (tau_q endpoints follow 0.25n and 0.5n)");
  app->add_option("--kl-beta", f.kl_beta, "KL penalty coefficient");
}

void apply_reward_flags(const RewardFlags& f, RewardConfig& r, GrpoConfig& g) {
  if (f.group_size) {
    const RewardConfig scaled = RewardConfig::with_group_size(*f.group_size);
    r.group_size = scaled.group_size;
    r.tau_q_start = scaled.tau_q_start;
    r.tau_q_end = scaled.tau_q_end;
  }
  if (f.alpha) r.alpha = *f.alpha;
  if (f.beta_end) r.beta_end = *f.beta_end;
  if (f.d_max) r.d_max = *f.d_max;
  if (f.p) r.p = *f.p;
  if (f.total_steps) r.total_steps = *f.total_steps;
  if (f.tau_q_start) r.tau_q_start = *f.tau_q_start;
  if (f.tau_q_end) r.tau_q_end = *f.tau_q_end;
  if (f.kl_beta) g.kl_beta = *f.kl_beta;
}

bool file_sets_total_steps(const json& file) {
  const auto has = [](const json& j, const char* section) {
    return j.contains(section) && j.at(section).is_object() && j.at(section).contains("total_steps");
  };
  if (has(file, "reward")) return true;
  return file.contains("train") && file.at("train").is_object() && has(file.at("train"), "reward");
}

struct TrainFlags {
  RewardFlags reward;
  std::optional<std::string> mode;
  std::optional<std::string> quality;
  std::optional<std::string> level;
  bool include_reject = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::int64_t> steps;
  std::optional<double> learning_rate;
  std::optional<int> scenes_per_step;
  std::optional<int> eval_scenes;
  std::optional<int> threads;
  std::string out;
  std::string config;
};

void add_train_flags(CLI::App* app, TrainFlags& f, bool with_mode) {
  if (with_mode) {
    app->add_option("--mode", f.mode, "IoU threshold schedule")->check(CLI::IsMember({"fixed", "dynamic"}));
  }
  app->add_option("--quality-reward", f.quality, "Group quality reward")->check(CLI::IsMember({"on", "off"}));
  app->add_option("--level", f.level, "Scene level")
      ->check(CLI::IsMember({"easy", "medium", "hard", "reject", "mixed"}));
  app->add_flag("--include-reject", f.include_reject, "Interleave absent-target scenes");
  app->add_option("--seed", f.seed, "Run seed");
  app->add_option("--steps", f.steps, "Optimisation steps (>= 1)");
  app->add_option("--learning-rate", f.learning_rate, "Gradient ascent step size");
  app->add_option("--scenes-per-step", f.scenes_per_step, "Groups per step");
  app->add_option("--eval-scenes", f.eval_scenes, "Held-out scenes");
  app->add_option("--threads", f.threads, "Worker threads for rollouts");
  app->add_option("--out", f.out, "Output directory")->required();
  app->add_option("--config", f.config, "Run config JSON (default $REFREC_CONFIG)");
  add_reward_flags(app, f.reward);
}

TrainConfig resolve_train(const TrainFlags& f, TrainConfig cfg) {
  const json file = load_run_config(f.config);
  const bool explicit_horizon = file_sets_total_steps(file) || f.reward.total_steps.has_value();
  if (file.contains("reward")) from_json(file.at("reward"), cfg.reward);
  if (file.contains("grpo")) from_json(file.at("grpo"), cfg.grpo);
  if (file.contains("train")) from_json(file.at("train"), cfg);

  apply_reward_flags(f.reward, cfg.reward, cfg.grpo);
  if (f.mode) cfg.reward.threshold_mode = parse_threshold_mode(*f.mode);
  if (f.quality) cfg.reward.quality_reward = *f.quality == "on";
  if (f.level) {
    cfg.levels = *f.level == "mixed" ? std::vector<Level>{Level::kEasy, Level::kMedium, Level::kHard}
                                     : std::vector<Level>{parse_level(*f.level)};
  }
  if (f.include_reject && std::find(cfg.levels.begin(), cfg.levels.end(), Level::kReject) == cfg.levels.end()) {
    cfg.levels.push_back(Level::kReject);
  }
  if (f.seed) cfg.seed = *f.seed;
  if (f.steps) cfg.steps = *f.steps;
  if (f.learning_rate) cfg.learning_rate = *f.learning_rate;
  if (f.scenes_per_step) cfg.scenes_per_step = *f.scenes_per_step;
  if (f.eval_scenes) cfg.eval_scenes = *f.eval_scenes;
  if (f.threads) cfg.threads = *f.threads;
  if (cfg.steps < 1) throw InvalidInput("--steps must be >= 1");
  if (!explicit_horizon) cfg.reward.total_steps = cfg.steps;
  cfg.validate();
  return cfg;
}

json summary_json(const TrainResult& r) {
  const auto& h = r.held_out;
  json weights = json::array();
  for (double w : r.policy.weights()) weights.push_back(w);
  return json{{"steps_completed", r.log.records.size()},
              {"aborted", r.log.abort_reason ? json(*r.log.abort_reason) : json(nullptr)},
              {"held_out",
               {{"scenes", h.scenes},
                {"mean_iou", h.mean_iou},
                {"fraction_iou_ge_0_8", h.fraction_iou_ge_0_8},
                {"abstain_accuracy", h.abstain_accuracy}}},
              {"weights", weights}};
}

void write_train_outputs(const fs::path& dir, const TrainResult& r) {
  fs::create_directories(dir);
  {
    std::ofstream os(dir / "train_log.jsonl", std::ios::binary);
    write_jsonl(os, r.log);
  }
  {
    std::ofstream os(dir / "train_log.csv", std::ios::binary);
    write_csv(os, r.log);
  }
  write_text(dir / "summary.json", summary_json(r).dump(2) + "\n");
}

bool tau_non_decreasing(const TrainLog& log) {
  for (std::size_t i = 1; i < log.records.size(); ++i) {
    if (log.records[i].tau_iou_at_mean_s < log.records[i - 1].tau_iou_at_mean_s) return false;
  }
  return true;
}

// ---- subcommand runners ----------------------------------------------------

int run_train(const TrainFlags& f, std::ostream& out) {
  const TrainConfig cfg = resolve_train(f, TrainConfig{});
  const fs::path dir = f.out;
  write_resolved(dir, json{{"command", "train-toy"}, {"train", cfg}});
  logger()->info("training {} steps, seed {}", cfg.steps, cfg.seed);
  const TrainResult r = train(cfg);
  write_train_outputs(dir, r);
  out << summary_json(r).dump(2) << '\n';
  if (r.log.abort_reason) {
    logger()->error("training aborted: {}", *r.log.abort_reason);
    return kExitRuntime;
  }
  return kExitOk;
}

int run_compare(const TrainFlags& f, std::ostream& out) {
  TrainConfig defaults;
  defaults.levels = {Level::kHard};
  defaults.steps = 1000;
  const TrainConfig cfg = resolve_train(f, defaults);
  const fs::path dir = f.out;
  write_resolved(dir, json{{"command", "compare-schedules"}, {"train", cfg}});
  const ScheduleComparison c = compare_schedules(cfg);
  write_train_outputs(dir / "fixed", c.fixed);
  write_train_outputs(dir / "dynamic", c.dynamic);
  const json report{
      {"fixed", summary_json(c.fixed)},
      {"dynamic", summary_json(c.dynamic)},
      {"dynamic_fraction_ge_fixed", c.dynamic.held_out.fraction_iou_ge_0_8 >= c.fixed.held_out.fraction_iou_ge_0_8},
      {"dynamic_tau_non_decreasing", tau_non_decreasing(c.dynamic.log)}};
  write_text(dir / "comparison.json", report.dump(2) + "\n");
  out << report.dump(2) << '\n';
  return c.fixed.log.abort_reason || c.dynamic.log.abort_reason ? kExitRuntime : kExitOk;
}

struct EvalFlags {
  std::string dataset;
  std::string predictions;
  std::string out;
  std::optional<std::string> format;
  std::vector<std::string> buckets;
  std::optional<std::string> rejection_mode;
  std::optional<std::string> lexicon;
  std::string config;
};

std::vector<double> default_edges(DifficultyFactor f) {
  switch (f) {
    case DifficultyFactor::kDistractors: return {0, 1, 3, 6};
    case DifficultyFactor::kArea: return {0, 0.01, 0.05, 0.1};
    case DifficultyFactor::kHops: return {0, 1, 2, 3};
  }
  return {};
}

BucketSpec parse_bucket(const std::string& text) {
  const auto eq = text.find('=');
  BucketSpec spec;
  spec.factor = parse_factor(text.substr(0, eq));
  spec.edges = eq == std::string::npos ? default_edges(spec.factor) : parse_numbers(text.substr(eq + 1), "--buckets");
  if (spec.edges.size() < 1) throw InvalidInput("--buckets needs at least one edge");
  if (!std::is_sorted(spec.edges.begin(), spec.edges.end()) ||
      std::adjacent_find(spec.edges.begin(), spec.edges.end()) != spec.edges.end()) {
    throw InvalidInput("--buckets edges must be strictly increasing");
  }
  spec.edges.push_back(std::numeric_limits<double>::infinity());
  return spec;
}

int run_eval(const EvalFlags& f, std::ostream& out) {
  json eval_cfg = json::object();
  const json file = load_run_config(f.config);
  if (file.contains("eval")) eval_cfg = file.at("eval");
  auto from_file = [&](const char* key) -> std::optional<json> {
    if (eval_cfg.is_object() && eval_cfg.contains(key)) return eval_cfg.at(key);
    return std::nullopt;
  };

  std::string format = f.format.value_or(from_file("format").value_or(json("markdown,json")).get<std::string>());
  std::string mode = f.rejection_mode.value_or(from_file("rejection_mode").value_or(json("grounding")).get<std::string>());
  std::optional<std::string> lexicon_path = f.lexicon;
  if (!lexicon_path) {
    if (auto v = from_file("rejection_lexicon")) lexicon_path = v->get<std::string>();
  }
  std::vector<std::string> bucket_args = f.buckets;
  if (bucket_args.empty()) {
    if (auto v = from_file("buckets")) bucket_args = v->get<std::vector<std::string>>();
  }

  EvalOptions options;
  options.rejection_mode = parse_rejection_mode(mode);
  for (const std::string& b : bucket_args) options.buckets.push_back(parse_bucket(b));
  std::vector<ReportFormat> formats;
  for (const std::string& name : split(format, ',')) formats.push_back(parse_report_format(name));

  const RejectionLexicon lexicon =
      lexicon_path ? RejectionLexicon::from_json_file(*lexicon_path) : RejectionLexicon::default_lexicon();
  const std::vector<Sample> samples = load_samples_jsonl(f.dataset);
  const auto predictions = load_predictions_jsonl(f.predictions);
  const auto joined = join_predictions(samples, predictions, lexicon);
  const MetricsReport report = evaluate(joined, lexicon, options);

  const fs::path dir = f.out;
  json resolved{{"command", "eval"},
                {"dataset", fs::absolute(f.dataset).string()},
                {"predictions", fs::absolute(f.predictions).string()},
                {"eval",
                 {{"format", format},
                  {"rejection_mode", mode},
                  {"buckets", bucket_args},
                  {"rejection_lexicon", lexicon.phrases()}}}};
  write_resolved(dir, resolved);
  for (ReportFormat fmt : formats) {
    const fs::path path = dir / ("metrics" + std::string(extension(fmt)));
    write_text(path, render_report(report, fmt));
    out << path.string() << '\n';
  }
  logger()->info("evaluated {} samples", samples.size());
  return kExitOk;
}

int run_aggregate(const std::string& scores_text, const std::string& format, std::ostream& out) {
  TaskScores scores{};
  for (const std::string& item : split(scores_text, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw InvalidInput("--scores entries look like task=value, got '" + item + "'");
    const TaskCategory task = parse_task(item.substr(0, eq));
    const std::string value = item.substr(eq + 1);
    if (value == "-" || value.empty()) continue;
    scores[index_of(task)] = parse_number(value, "--scores");
  }
  const MetricsReport report = aggregate(scores);
  if (format == "markdown" || format == "md") {
    out << render_report(report, ReportFormat::kMarkdown);
    return kExitOk;
  }
  json tasks = json::object();
  for (TaskCategory t : kAllTasks) tasks[std::string(to_string(t))] = optional_number(report.score(t));
  const json j{{"tasks", tasks},
               {"aggregates",
                {{"acc_p", optional_number(report.acc_p)},
                 {"acc_o", optional_number(report.acc_o)},
                 {"acc_api", optional_number(report.acc_api)},
                 {"acc_rc", optional_number(report.acc_rc)}}}};
  out << j.dump(2) << '\n';
  return kExitOk;
}

struct PipelineFlags {
  std::string manifest;
  std::string clients;
  std::string out;
  std::optional<int> min_categories;
  std::optional<double> s_min;
  std::optional<int> max_inflight;
  std::optional<int> threads;
  std::optional<int> candidates;
  std::string config;
};

int run_pipeline_cmd(const PipelineFlags& f, std::ostream& out) {
  PipelineConfig cfg;
  const json file = load_run_config(f.config);
  if (file.contains("pipeline")) from_json(file.at("pipeline"), cfg);
  if (f.min_categories) cfg.min_categories = *f.min_categories;
  if (f.s_min) cfg.s_min = *f.s_min;
  if (f.max_inflight) cfg.max_inflight = *f.max_inflight;
  if (f.threads) cfg.threads = *f.threads;
  if (f.candidates) cfg.candidates_per_object = *f.candidates;
  cfg.validate();

  ClientsConfig clients = load_clients_config(f.clients);
  cfg.prompts = clients.prompts;
  const auto manifest = load_manifest(f.manifest);

  const fs::path dir = f.out;
  write_resolved(dir, json{{"command", "pipeline"},
                           {"manifest", fs::absolute(f.manifest).string()},
                           {"clients", fs::absolute(f.clients).string()},
                           {"pipeline", cfg}});
  const PipelineResult result = run_pipeline(manifest, clients.suite, cfg);
  write_pipeline_outputs(result, dir);
  write_text(dir / "stats.json", result.stats.to_json().dump(2) + "\n");
  out << result.stats.to_json().dump(2) << '\n';
  logger()->info("pipeline emitted {} samples from {} images", result.stats.samples, result.stats.images);
  return kExitOk;
}

struct ScoreGroupFlags {
  std::string rewards;
  std::string responses;
  std::string gt;
  int width = 0;
  int height = 0;
  std::int64_t step = 0;
  std::string mode;
  std::string quality;
  RewardFlags reward;
  std::string config;
};

int run_score_group(const ScoreGroupFlags& f, std::ostream& out) {
  RewardConfig rc;
  GrpoConfig gc;
  const json file = load_run_config(f.config);
  if (file.contains("reward")) from_json(file.at("reward"), rc);
  if (file.contains("grpo")) from_json(file.at("grpo"), gc);
  apply_reward_flags(f.reward, rc, gc);
  if (!f.mode.empty()) rc.threshold_mode = parse_threshold_mode(f.mode);
  if (!f.quality.empty()) rc.quality_reward = f.quality == "on";
  gc.validate();

  if (!f.rewards.empty() == !f.responses.empty()) {
    throw InvalidInput("pass exactly one of --rewards or --responses");
  }
  if (!f.rewards.empty()) {
    const std::vector<double> r = parse_numbers(f.rewards, "--rewards");
    if (r.size() < 2) throw InvalidInput("--rewards needs at least two values");
    out << json{{"rewards", r}, {"advantages", advantages(r, gc.epsilon_std)}}.dump(2) << '\n';
    return kExitOk;
  }

  const json texts = read_json_file(f.responses);
  if (!texts.is_array() || !std::all_of(texts.begin(), texts.end(), [](const json& t) { return t.is_string(); })) {
    throw SchemaError("--responses must be a JSON array of strings", "responses");
  }
  if (f.width < 1 || f.height < 1) throw InvalidInput("--width and --height are required with --responses");
  GroundTruth gt;
  if (f.gt != "absent") {
    const std::vector<double> v = parse_numbers(f.gt, "--gt");
    if (v.size() != 4) throw InvalidInput("--gt takes x1,y1,x2,y2 or 'absent'");
    gt = Box{v[0], v[1], v[2], v[3]};
  }
  std::vector<ParsedResponse> parsed;
  for (const json& t : texts) parsed.push_back(parse(t.get<std::string>()));
  if (!f.reward.group_size) rc = [&] {
    RewardConfig scaled = rc;
    const RewardConfig n = RewardConfig::with_group_size(static_cast<int>(parsed.size()));
    scaled.group_size = n.group_size;
    if (!f.reward.tau_q_start) scaled.tau_q_start = n.tau_q_start;
    if (!f.reward.tau_q_end) scaled.tau_q_end = n.tau_q_end;
    return scaled;
  }();
  const auto breakdown = score_group(parsed, gt, ImageDims{f.width, f.height}, f.step, rc);
  std::vector<double> totals;
  json rows = json::array();
  for (std::size_t i = 0; i < breakdown.size(); ++i) {
    const RewardBreakdown& b = breakdown[i];
    totals.push_back(b.total);
    json row{{"format", b.format},
             {"dyiou", b.dyiou},
             {"iou", b.iou_value},
             {"threshold", b.threshold_used},
             {"quality_adjustment", b.quality_adjustment},
             {"total", b.total},
             {"correct", b.correct}};
    if (parsed[i].is_malformed()) row["malformed"] = std::string(to_string(std::get<Malformed>(parsed[i].answer).reason));
    rows.push_back(row);
  }
  out << json{{"responses", rows}, {"advantages", advantages(totals, gc.epsilon_std)}}.dump(2) << '\n';
  return kExitOk;
}

int usage_error(std::ostream& err, const std::string& message) {
  err << "error: " << message << '\n';
  return kExitUsage;
}

}  // namespace

std::vector<std::string> suggest_subcommands(const std::string& typed) {
  std::vector<std::pair<std::size_t, std::string>> scored;
  for (const std::string& name : subcommand_names()) {
    const std::size_t d = std::min(edit_distance(typed, name), edit_distance(typed, name.substr(0, name.find('-'))));
    const bool prefix = !typed.empty() && name.rfind(typed, 0) == 0;
    if (prefix || d <= std::max<std::size_t>(2, name.size() / 3)) scored.emplace_back(prefix ? 0 : d, name);
  }
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::string> out;
  for (const auto& [d, name] : scored) out.push_back(name);
  return out;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Referring-expression reward, evaluation and annotation engine", "refrec"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  const auto with_version = [](CLI::App* sub) {
    sub->set_version_flag("--version", kVersion);
    return sub;
  };

  EvalFlags ef;
  CLI::App* eval = with_version(app.add_subcommand("eval", "Score model responses against a Sample dataset"));
  eval->add_option("--dataset", ef.dataset, "Sample JSONL");
  eval->add_option("--predictions", ef.predictions, "Prediction JSONL with id and response_text");
  eval->add_option("--out", ef.out, "Report directory");
  eval->add_option("--format", ef.format, "Comma-separated: markdown, json, csv");
  eval->add_option("--buckets", ef.buckets, "factor=edges, e.g. distractors=0,1,3,6 (repeatable)");
  eval->add_option("--rejection-mode", ef.rejection_mode, "grounding or classification")
      ->check(CLI::IsMember({"grounding", "classification"}));
  eval->add_option("--rejection-lexicon", ef.lexicon, "JSON array of absence phrases");
  eval->add_option("--config", ef.config, "Run config JSON (default $REFREC_CONFIG)");

  std::string agg_scores;
  std::string agg_format = "json";
  CLI::App* agg = with_version(eval->add_subcommand("aggregate", "Aggregate columns from per-task scores"));
  agg->add_option("--scores", agg_scores, "task=value list, e.g. attribute=61.7,position=63.0")->required();
  agg->add_option("--format", agg_format, "json or markdown")->check(CLI::IsMember({"json", "markdown", "md"}));

  TrainFlags tf;
  CLI::App* train_cmd = with_version(app.add_subcommand("train-toy", "Train the toy grounding policy"));
  add_train_flags(train_cmd, tf, true);

  TrainFlags cf;
  CLI::App* compare = with_version(
      app.add_subcommand("compare-schedules", "Fixed vs dynamic IoU threshold on a common seed (default: hard, 1000 steps)"));
  add_train_flags(compare, cf, false);

  PipelineFlags pf;
  CLI::App* pipe = with_version(app.add_subcommand("pipeline", "Run the annotation pipeline over a manifest"));
  pipe->add_option("--manifest", pf.manifest, "Manifest JSONL {image_ref, width, height}")->required();
  pipe->add_option("--clients", pf.clients, "Clients config JSON")->required();
  pipe->add_option("--out", pf.out, "Output directory")->required();
  pipe->add_option("--min-categories", pf.min_categories, "Distinct category floor");
  pipe->add_option("--s-min", pf.s_min, "Grounding score floor");
  pipe->add_option("--max-inflight", pf.max_inflight, "Concurrent client request cap");
  pipe->add_option("--threads", pf.threads, "Images processed concurrently");
  pipe->add_option("--candidates", pf.candidates, "Expressions requested per object");
  pipe->add_option("--config", pf.config, "Run config JSON (default $REFREC_CONFIG)");

  ScoreGroupFlags sf;
  CLI::App* score = with_version(app.add_subcommand("score-group", "Inspect rewards and advantages for one group"));
  score->add_option("--rewards", sf.rewards, "Comma-separated rewards");
  score->add_option("--responses", sf.responses, "JSON array of response texts");
  score->add_option("--gt", sf.gt, "x1,y1,x2,y2 or absent")->default_val("absent");
  score->add_option("--width", sf.width, "Image width");
  score->add_option("--height", sf.height, "Image height");
  score->add_option("--step", sf.step, "Training step t");
  score->add_option("--mode", sf.mode, "fixed or dynamic")->check(CLI::IsMember({"fixed", "dynamic"}));
  score->add_option("--quality-reward", sf.quality, "on or off")->check(CLI::IsMember({"on", "off"}));
  score->add_option("--config", sf.config, "Run config JSON (default $REFREC_CONFIG)");
  add_reward_flags(score, sf.reward);

  if (!args.empty() && !args.front().empty() && args.front().front() != '-' &&
      std::find(subcommand_names().begin(), subcommand_names().end(), args.front()) == subcommand_names().end()) {
    std::string message = "unknown subcommand '" + args.front() + "'";
    const auto near = suggest_subcommands(args.front());
    if (!near.empty()) {
      message += "; did you mean";
      for (std::size_t i = 0; i < near.size(); ++i) message += (i ? ", '" : " '") + near[i] + "'";
      message += "?";
    }
    return usage_error(err, message);
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*eval) {
      if (*agg) return run_aggregate(agg_scores, agg_format, out);
      if (ef.dataset.empty() || ef.predictions.empty() || ef.out.empty()) {
        return usage_error(err, "eval needs --dataset, --predictions and --out");
      }
      return run_eval(ef, out);
    }
    if (*train_cmd) return run_train(tf, out);
    if (*compare) return run_compare(cf, out);
    if (*pipe) return run_pipeline_cmd(pf, out);
    if (*score) return run_score_group(sf, out);
  } catch (const InvalidInput& e) {
    return usage_error(err, e.what());
  } catch (const SchemaError& e) {
    return usage_error(err, e.what());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return usage_error(err, "no subcommand given");
}

}  // namespace refrec::cli
