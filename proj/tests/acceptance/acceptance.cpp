// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <nlohmann/json.hpp>

#include "refrec/cli.hpp"
#include "refrec/clients.hpp"
#include "refrec/dataset_io.hpp"
#include "refrec/eval.hpp"
#include "refrec/grpo.hpp"
#include "refrec/pipeline.hpp"
#include "refrec/rewards.hpp"
#include "refrec/toytrainer.hpp"

using namespace refrec;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    if (pass) detail.clear();
    pass = false;
    if (!detail.empty()) detail += "; ";
    detail += why;
  }
  void note(const std::string& what) {
    if (!pass) return;
    if (!detail.empty()) detail += "; ";
    detail += what;
  }
};

struct Criterion {
  int id;
  std::string name;
  double time_limit_s;  // 0: no limit
  std::function<Outcome()> run;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

fs::path fixture(const std::string& rel) { return fs::path(REFREC_FIXTURE_DIR) / rel; }

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("refrec-acceptance-" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * (static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

int uniform_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(rng() % static_cast<std::uint64_t>(hi - lo + 1));
}

// ---- 1 ---------------------------------------------------------------------

Outcome aggregation() {
  Outcome o;
  std::ifstream in(fixture("benchmark_rows.json"));
  const json rows = json::parse(in);
  if (rows.size() < 3) o.fail("fewer than three fixture rows");
  double worst = 0.0;
  for (const json& row : rows) {
    std::string scores;
    for (const auto& [task, value] : row.at("tasks").items()) {
      scores += (scores.empty() ? "" : ",") + task + "=" + value.dump();
    }
    std::ostringstream out, err;
    if (cli::dispatch({"eval", "aggregate", "--scores", scores}, out, err) != cli::kExitOk) {
      o.fail(row.at("model").get<std::string>() + ": " + err.str());
      continue;
    }
    const json got = json::parse(out.str()).at("aggregates");
    for (const auto& [key, printed] : row.at("printed").items()) {
      const double diff = std::abs(got.at(key).get<double>() - printed.get<double>());
      worst = std::max(worst, diff);
      if (diff > 0.05 + 1e-9) o.fail(row.at("model").get<std::string>() + " " + key + " off by " + fmt("%.4f", diff));
    }
  }
  o.note(std::to_string(rows.size()) + " rows, max |diff| " + fmt("%.4f", worst));
  return o;
}

// ---- 2 ---------------------------------------------------------------------

Outcome reward_suite() {
  Outcome o;
  RewardConfig cfg;
  const auto T = cfg.total_steps;
  const struct {
    std::int64_t t;
    double s;
    double expected;
  } points[] = {{0, 1.0, 0.5}, {T, 1.0, 0.8}, {T, 0.0, 0.65}, {T / 2, 0.5, 0.575}};
  for (const auto& p : points) {
    const double got = dyiou_threshold(p.t, p.s, cfg);
    if (std::abs(got - p.expected) > 1e-9) o.fail("threshold(" + std::to_string(p.t) + "," + fmt("%g", p.s) + ")=" + fmt("%.12f", got));
  }

  RewardConfig grid = cfg;
  grid.total_steps = 49;
  for (int t = 0; t < 50; ++t) {
    for (int si = 0; si < 50; ++si) {
      const double s = si / 49.0;
      const double tau = dyiou_threshold(t, s, grid);
      if (t > 0 && tau < dyiou_threshold(t - 1, s, grid)) o.fail("not monotone in t at " + std::to_string(t));
      if (si > 0 && tau < dyiou_threshold(t, (si - 1) / 49.0, grid)) o.fail("not monotone in s at " + std::to_string(si));
    }
  }

  std::mt19937_64 rng(2024);
  const ImageDims dims{640, 480};
  int hard_groups = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = uniform_int(rng, 2, 12);
    RewardConfig rc = RewardConfig::with_group_size(n);
    rc.total_steps = 100;
    rc.p = uniform(rng, 0.1, 2.0);
    const std::int64_t t = uniform_int(rng, 0, 100);
    const double gx = uniform(rng, 0, 500), gy = uniform(rng, 0, 380);
    const Box gt{gx, gy, gx + uniform(rng, 5, 140), gy + uniform(rng, 5, 100)};
    const double hit_rate = uniform(rng, 0.0, 0.6);
    std::vector<ParsedResponse> group;
    for (int i = 0; i < n; ++i) {
      if (uniform(rng, 0, 1) < hit_rate) {
        group.push_back(parse(render_box_response(gt, "t")));
      } else if (uniform(rng, 0, 1) < 0.3) {
        group.push_back(parse(render_abstain_response("t")));
      } else {
        group.push_back(parse(render_box_response(Box{gt.x1, gt.y1, gt.x1 + 2, gt.y1 + 2}, "t")));
      }
    }
    const auto out = score_group(group, gt, dims, t, rc);
    const int k = static_cast<int>(std::count_if(out.begin(), out.end(), [](const auto& b) { return b.correct; }));
    double sum = 0.0;
    for (const auto& b : out) sum += b.quality_adjustment;
    const bool hard = k < quality_threshold(t, rc);
    hard_groups += hard;
    const double expected = hard ? static_cast<double>(k) / n * rc.p * (2 * k - n) : 0.0;
    if (std::abs(sum - expected) > 1e-12) {
      o.fail("adjustment sum " + fmt("%.6f", sum) + " vs " + fmt("%.6f", expected));
      break;
    }
  }
  o.note("4 points, 2500 grid cells, 1000 groups (" + std::to_string(hard_groups) + " hard)");
  return o;
}

// ---- 3 ---------------------------------------------------------------------

double pstd(const std::vector<double>& v) {
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - m) * (x - m);
  return std::sqrt(var / static_cast<double>(v.size()));
}

Outcome advantage_suite() {
  Outcome o;
  const std::vector<double> fixture_rewards{1, 0, 1, 1};
  const std::vector<double> expected{0.57735, -1.73205, 0.57735, 0.57735};
  const auto a = advantages(fixture_rewards);
  for (std::size_t i = 0; i < 4; ++i) {
    if (std::abs(a[i] - expected[i]) > 1e-5) o.fail("fixture advantage " + std::to_string(i) + " = " + fmt("%.6f", a[i]));
  }

  std::mt19937_64 rng(7);
  double worst_mean = 0.0, worst_std = 0.0;
  int narrow = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = uniform_int(rng, 2, 16);
    std::vector<double> r(static_cast<std::size_t>(n));
    for (auto& x : r) x = uniform(rng, -3, 3);
    const auto adv = advantages(r);
    const double mean = std::accumulate(adv.begin(), adv.end(), 0.0) / n;
    double var = 0.0;
    for (double x : adv) var += (x - mean) * (x - mean);
    const double spread = pstd(r);
    worst_mean = std::max(worst_mean, std::abs(mean));
    if (std::abs(std::sqrt(var / n) - spread / (spread + 1e-8)) > 1e-12) o.fail("std(A) departs from s/(s+eps)");
    if (spread < 1e-2) {
      ++narrow;
      continue;
    }
    worst_std = std::max(worst_std, std::abs(std::sqrt(var / n) - 1.0));
  }
  if (worst_mean > 1e-9) o.fail("mean drift " + fmt("%.3g", worst_mean));
  if (worst_std > 1e-6) o.fail("std drift " + fmt("%.3g", worst_std));

  for (double v : {0.0, 1.0, 2.5}) {
    for (double x : advantages(std::vector<double>(8, v))) {
      if (x != 0.0) o.fail("equal group gave nonzero advantage");
    }
  }
  o.note("max |mean| " + fmt("%.2g", worst_mean) + ", max |std-1| " + fmt("%.2g", worst_std) + " (" +
         std::to_string(narrow) + " groups with reward std < 0.01 checked against s/(s+eps) only)");
  return o;
}

// ---- 4 ---------------------------------------------------------------------

double grid_iou(const Box& a, const Box& b, int size) {
  int inter = 0, uni = 0;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const bool in_a = x >= a.x1 && x < a.x2 && y >= a.y1 && y < a.y2;
      const bool in_b = x >= b.x1 && x < b.x2 && y >= b.y1 && y < b.y2;
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  }
  return static_cast<double>(inter) / static_cast<double>(uni);
}

Box random_int_box(std::mt19937_64& rng, int size) {
  const int x1 = uniform_int(rng, 0, size - 1);
  const int y1 = uniform_int(rng, 0, size - 1);
  return Box{double(x1), double(y1), double(uniform_int(rng, x1 + 1, size)), double(uniform_int(rng, y1 + 1, size))};
}

Outcome iou_oracle() {
  Outcome o;
  std::mt19937_64 rng(64);
  int overlapping = 0;
  for (int i = 0; i < 200; ++i) {
    const Box a = random_int_box(rng, 64);
    const Box b = random_int_box(rng, 64);
    const double analytic = iou(a, b);
    overlapping += analytic > 0;
    if (analytic != grid_iou(a, b, 64)) o.fail("pair " + std::to_string(i) + ": " + to_string(a) + " " + to_string(b));
  }
  o.note("200 pairs, " + std::to_string(overlapping) + " overlapping");
  return o;
}

// ---- 5 ---------------------------------------------------------------------

Outcome gradient_check() {
  Outcome o;
  std::mt19937_64 rng(5);
  constexpr Level levels[] = {Level::kEasy, Level::kMedium, Level::kHard, Level::kReject};
  auto random_weights = [&](double scale) {
    std::vector<double> w(kPolicyParameters);
    for (auto& x : w) x = uniform(rng, -scale, scale);
    return w;
  };
  double worst = 0.0;
  for (int point = 0; point < 20; ++point) {
    GrpoConfig cfg;
    cfg.kl_beta = uniform(rng, 0.0, 1.0);
    const auto w = random_weights(2.0);
    const auto old = random_weights(2.0);
    const auto ref = random_weights(2.0);
    std::vector<ScoredGroup> groups;
    for (int g = 0; g < 4; ++g) {
      ScoredGroup sg;
      sg.scene = make_scene(rng(), levels[g]);
      sg.actions = rollout_actions(PolicyState{old}, sg.scene, 8, rng()).actions;
      std::vector<double> rewards(8);
      for (auto& r : rewards) r = uniform(rng, 0, 2.5);
      sg.advantages = advantages(rewards);
      groups.push_back(std::move(sg));
    }
    const auto g = surrogate_gradient(w, old, ref, groups, cfg);
    const double h = 1e-5;
    double diff2 = 0.0, norm2 = 0.0;
    for (std::size_t k = 0; k < kPolicyParameters; ++k) {
      auto plus = w, minus = w;
      plus[k] += h;
      minus[k] -= h;
      const double fd = (surrogate_objective(plus, old, ref, groups, cfg) -
                         surrogate_objective(minus, old, ref, groups, cfg)) / (2 * h);
      diff2 += (g[k] - fd) * (g[k] - fd);
      norm2 += g[k] * g[k];
    }
    const double rel = std::sqrt(diff2) / std::max(std::sqrt(norm2), 1e-12);
    worst = std::max(worst, rel);
    if (rel >= 1e-4) o.fail("point " + std::to_string(point) + " relative error " + fmt("%.3g", rel));
  }
  o.note("20 points, max relative error " + fmt("%.2g", worst));
  return o;
}

// ---- 6 ---------------------------------------------------------------------

Outcome training_efficacy() {
  Outcome o;
  TrainConfig cfg;
  cfg.seed = 1;
  cfg.levels = {Level::kEasy};
  cfg.steps = 300;
  cfg.reward.total_steps = 300;
  cfg.eval_scenes = 100;
  cfg.threads = 4;
  const TrainResult trained = train(cfg);
  if (trained.log.abort_reason) o.fail("aborted: " + *trained.log.abort_reason);
  if (trained.held_out.scenes != 100) o.fail("held-out set has " + std::to_string(trained.held_out.scenes) + " scenes");
  if (trained.held_out.mean_iou < 0.9) o.fail("held-out mean IoU " + fmt("%.4f", trained.held_out.mean_iou));

  // Flat: the two halves of the per-step mean reward agree within three standard errors.
  cfg.learning_rate = 0.0;
  const TrainResult frozen = train(cfg);
  const auto& rec = frozen.log.records;
  const std::size_t half = rec.size() / 2;
  auto stats = [&](std::size_t from, std::size_t to) {
    double m = 0.0;
    for (std::size_t i = from; i < to; ++i) m += rec[i].mean_reward;
    m /= static_cast<double>(to - from);
    double v = 0.0;
    for (std::size_t i = from; i < to; ++i) v += (rec[i].mean_reward - m) * (rec[i].mean_reward - m);
    return std::pair{m, v / static_cast<double>(to - from - 1)};
  };
  const auto [m1, v1] = stats(0, half);
  const auto [m2, v2] = stats(half, rec.size());
  const double se = std::sqrt(v1 / half + v2 / (rec.size() - half));
  if (std::abs(m1 - m2) > 3 * se) {
    o.fail("lr 0 reward drifts " + fmt("%.4f", m1) + " -> " + fmt("%.4f", m2) + " (3se " + fmt("%.4f", 3 * se) + ")");
  }
  for (double w : frozen.policy.weights()) {
    if (w != 0.0) o.fail("lr 0 moved the weights");
  }
  o.note("mean IoU " + fmt("%.4f", trained.held_out.mean_iou) + ", lr 0 halves " + fmt("%.4f", m1) + "/" +
         fmt("%.4f", m2) + " (3se " + fmt("%.4f", 3 * se) + ")");
  return o;
}

// ---- 7 ---------------------------------------------------------------------

Outcome schedule_comparison() {
  Outcome o;
  TrainConfig cfg;
  cfg.seed = 1;
  cfg.levels = {Level::kHard};
  cfg.steps = 1000;
  cfg.reward.total_steps = 1000;
  cfg.threads = 4;
  const ScheduleComparison c = compare_schedules(cfg);
  const double fixed = c.fixed.held_out.fraction_iou_ge_0_8;
  const double dynamic = c.dynamic.held_out.fraction_iou_ge_0_8;
  if (dynamic < fixed) o.fail("dynamic " + fmt("%.3f", dynamic) + " < fixed " + fmt("%.3f", fixed));
  const auto& rec = c.dynamic.log.records;
  for (std::size_t i = 1; i < rec.size(); ++i) {
    if (rec[i].tau_iou_at_mean_s < rec[i - 1].tau_iou_at_mean_s) {
      o.fail("tau decreases at step " + std::to_string(i));
      break;
    }
  }
  o.note("fraction IoU>=0.8: dynamic " + fmt("%.3f", dynamic) + ", fixed " + fmt("%.3f", fixed));
  return o;
}

// ---- 8 ---------------------------------------------------------------------

double oracle_macc(const std::vector<GroundingOutcome>& outcomes) {
  const double thresholds[] = {0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90};
  double total = 0.0;
  for (double tau : thresholds) {
    int hits = 0;
    for (const auto& g : outcomes) {
      if (g.predicted && iou(*g.predicted, g.gt) >= tau) ++hits;
    }
    total += static_cast<double>(hits) / static_cast<double>(outcomes.size());
  }
  return 100.0 * total / 9.0;
}

Outcome macc_oracle() {
  Outcome o;
  std::mt19937_64 rng(8);
  for (int f = 0; f < 500; ++f) {
    std::vector<GroundingOutcome> outcomes;
    const int n = uniform_int(rng, 1, 20);
    for (int i = 0; i < n; ++i) {
      const Box gt = random_int_box(rng, 64);
      GroundingOutcome g{gt, std::nullopt};
      if (uniform_int(rng, 0, 9) > 0) g.predicted = uniform_int(rng, 0, 3) == 0 ? gt : random_int_box(rng, 64);
      outcomes.push_back(g);
    }
    const auto got = macc(outcomes);
    if (!got || *got != oracle_macc(outcomes)) {
      o.fail("fixture " + std::to_string(f) + " differs");
      break;
    }
  }
  // Prediction covering 72% of the gt: IoU 0.72 passes five of nine thresholds.
  const std::vector<GroundingOutcome> single{{Box{0, 0, 100, 100}, Box{0, 0, 72, 100}}};
  const double one = macc(single).value_or(-1.0);
  if (std::abs(one - 55.56) > 0.01) o.fail("single-sample mAcc " + fmt("%.4f", one));
  o.note("500 fixtures exact, IoU 0.72 -> " + fmt("%.4f", one));
  return o;
}

// ---- 9 ---------------------------------------------------------------------

std::string run_and_write(const fs::path& dir, PipelineResult* keep = nullptr) {
  const ClientsConfig clients = load_clients_config(fixture("pipeline/clients.json"));
  PipelineConfig cfg;
  cfg.prompts = clients.prompts;
  PipelineResult r = run_pipeline(load_manifest(fixture("pipeline/manifest.jsonl")), clients.suite, cfg);
  write_pipeline_outputs(r, dir);
  if (keep) *keep = std::move(r);
  return slurp(dir / "samples.jsonl") + slurp(dir / "audit.jsonl");
}

Outcome pipeline_end_to_end() {
  Outcome o;
  PipelineResult r;
  const std::string first = run_and_write(scratch("pipeline-a"), &r);
  const std::string second = run_and_write(scratch("pipeline-b"));
  const std::vector<std::string> traced{"img07.jpg#0-0", "img07.jpg#1-0", "img08.jpg#2-0", "img08.jpg#4-0",
                                        "img09.jpg#0-0", "img09.jpg#3-0", "img10.jpg#2-0"};
  std::vector<std::string> ids;
  for (const auto& s : r.samples) ids.push_back(s.id);
  if (ids != traced) o.fail(std::to_string(ids.size()) + " samples, not the traced seven");
  if (first != second) o.fail("rerun output differs");

  int object_records = 0, candidate_drops = 0, emits = 0;
  for (const auto& a : r.audit) {
    if (a.verdict == "emit") {
      ++emits;
    } else if (a.candidate_index) {
      ++candidate_drops;
    } else if (a.object_index >= 0) {
      ++object_records;
    }
  }
  if (object_records + r.stats.objects_generated != r.stats.objects) o.fail("object accounting does not balance");
  if (candidate_drops + emits != r.stats.candidates) o.fail("candidate accounting does not balance");
  if (emits != static_cast<int>(r.samples.size())) o.fail("emit records do not match samples");

  const ClientsConfig amb = load_clients_config(fixture("pipeline/ambiguous/clients.json"));
  PipelineConfig cfg;
  cfg.prompts = amb.prompts;
  const PipelineResult ar = run_pipeline(load_manifest(fixture("pipeline/ambiguous/manifest.jsonl")), amb.suite, cfg);
  const bool uniqueness = std::any_of(ar.audit.begin(), ar.audit.end(), [](const AuditRecord& a) {
    return a.stage == "correct" && a.reason == "uniqueness";
  });
  if (!uniqueness || !ar.samples.empty()) o.fail("ambiguous expression was not rejected for uniqueness");
  o.note(std::to_string(r.stats.objects) + " objects = " + std::to_string(object_records) + " dropped + " +
         std::to_string(r.stats.objects_generated) + " generated; " + std::to_string(emits) + " samples");
  return o;
}

// ---- 10 --------------------------------------------------------------------

Outcome determinism() {
  Outcome o;
  std::string logs[2];
  for (int i = 0; i < 2; ++i) {
    const fs::path dir = scratch("train-" + std::to_string(i));
    std::ostringstream out, err;
    const int code = cli::dispatch({"train-toy", "--seed", "9", "--steps", "60", "--level", "mixed", "--include-reject",
                                    "--threads", i == 0 ? "1" : "4", "--out", dir.string()},
                                   out, err);
    if (code != cli::kExitOk) o.fail("train-toy exited " + std::to_string(code) + ": " + err.str());
    logs[i] = slurp(dir / "train_log.jsonl");
  }
  if (logs[0].empty()) o.fail("empty log");
  if (logs[0] != logs[1]) o.fail("logs differ");
  o.note(std::to_string(std::count(logs[0].begin(), logs[0].end(), '\n')) + " identical lines");
  return o;
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "aggregation reproduction", 1.0, aggregation},
      {2, "reward formula suite", 5.0, reward_suite},
      {3, "advantage suite", 0.0, advantage_suite},
      {4, "IoU oracle equivalence", 0.0, iou_oracle},
      {5, "gradient check", 0.0, gradient_check},
      {6, "toy training efficacy", 60.0, training_efficacy},
      {7, "schedule comparison", 120.0, schedule_comparison},
      {8, "mAcc oracle", 0.0, macc_oracle},
      {9, "pipeline end to end", 0.0, pipeline_end_to_end},
      {10, "train-toy determinism", 0.0, determinism},
  };
  int failures = 0;
  for (const Criterion& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.fail(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (c.time_limit_s > 0 && secs >= c.time_limit_s) o.fail("took " + fmt("%.2f", secs) + " s");
    failures += !o.pass;
    std::printf("%s  %2d  %-26s %8.3f s  %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name.c_str(), secs, o.detail.c_str());
    std::fflush(stdout);
  }
  std::error_code ec;
  fs::remove_all(fs::temp_directory_path() / ("refrec-acceptance-" + std::to_string(::getpid())), ec);
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
