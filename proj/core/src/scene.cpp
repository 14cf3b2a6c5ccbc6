#include "refrec/scene.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "refrec/errors.hpp"

namespace refrec {

namespace {

constexpr int kCategories = 6;
constexpr int kAttributes = 5;

// Draws straight from the engine's bits; std distributions are
// implementation-defined and would break cross-toolchain reproducibility.
class SceneRng {
 public:
  explicit SceneRng(std::uint64_t seed) : engine_(seed) {}

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  int index(int n) { return std::min(static_cast<int>(uniform() * n), n - 1); }
  int range(int lo, int hi) { return lo + index(hi - lo + 1); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[static_cast<std::size_t>(index(static_cast<int>(i)))]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

struct LevelParams {
  int grid = 2;
  int min_distractors = 2;
  int max_distractors = 3;
  int loose_boxes = 0;
  int hops = 0;
  double min_area = 0.08;
  double max_area = 0.16;
  double same_category_share = 0.3;
  bool absent = false;
};

LevelParams params_for(Level level) {
  switch (level) {
    case Level::kEasy:
      return {2, 2, 3, 0, 0, 0.08, 0.16, 0.3, false};
    case Level::kMedium:
      return {3, 3, 5, 1, 1, 0.03, 0.08, 0.6, false};
    case Level::kHard:
      return {4, 6, 9, 2, 2, 0.005, 0.03, 0.9, false};
    case Level::kReject:
      return {3, 4, 6, 0, 1, 0.03, 0.08, 0.6, true};
  }
  return {};
}

// A box of the requested image-area fraction centred at a random point inside
// the grid cell, leaving room for loose boxes around it.
Box place_box(SceneRng& rng, const ImageDims& dims, int grid, int cell, double area_fraction) {
  const double cw = static_cast<double>(dims.width) / grid;
  const double ch = static_cast<double>(dims.height) / grid;
  const double cx0 = (cell % grid) * cw;
  const double cy0 = (cell / grid) * ch;
  const double area = area_fraction * dims.width * dims.height;
  const double aspect = rng.uniform(0.75, 1.33);
  double w = std::sqrt(area * aspect);
  double h = area / w;
  w = std::min(w, 0.7 * cw);
  h = std::min(h, 0.7 * ch);
  const double x1 = cx0 + rng.uniform(0.15 * cw, cw - w - 0.15 * cw);
  const double y1 = cy0 + rng.uniform(0.15 * ch, ch - h - 0.15 * ch);
  return Box{std::round(x1), std::round(y1), std::round(x1 + w), std::round(y1 + h)};
}

// Grows `inner` about an offset centre until IoU(inner, loose) drops to the
// requested overlap; `inner` stays enclosed.
Box loosen(SceneRng& rng, const ImageDims& dims, const Box& inner, double overlap) {
  const double scale = std::sqrt(1.0 / overlap);
  const double w = inner.width() * scale;
  const double h = inner.height() * scale;
  const double slack_x = w - inner.width();
  const double slack_y = h - inner.height();
  const double x1 = inner.x1 - slack_x * rng.uniform(0.2, 0.8);
  const double y1 = inner.y1 - slack_y * rng.uniform(0.2, 0.8);
  return Box{std::max(0.0, x1), std::max(0.0, y1), std::min<double>(x1 + w, dims.width),
             std::min<double>(y1 + h, dims.height)};
}

double relation_fraction(SceneRng& rng, int hops, bool must_fail) {
  if (hops == 0) return 1.0;
  const int satisfied = must_fail ? rng.range(0, hops - 1) : rng.range(0, hops);
  return static_cast<double>(satisfied) / hops;
}

}  // namespace

std::string_view to_string(Level level) noexcept {
  switch (level) {
    case Level::kEasy: return "easy";
    case Level::kMedium: return "medium";
    case Level::kHard: return "hard";
    case Level::kReject: return "reject";
  }
  return "unknown";
}

Level parse_level(std::string_view name) {
  for (Level l : {Level::kEasy, Level::kMedium, Level::kHard, Level::kReject}) {
    if (name == to_string(l)) return l;
  }
  throw InvalidInput("unknown difficulty level '" + std::string(name) + "'");
}

std::optional<Box> SceneSpec::target_box() const {
  if (!target) return std::nullopt;
  return candidates.at(*target).box;
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) noexcept {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

SceneSpec make_scene(std::uint64_t seed, Level level) {
  const LevelParams lp = params_for(level);
  SceneRng rng(mix_seed(seed, static_cast<std::uint64_t>(level)));

  SceneSpec scene;
  scene.seed = seed;
  scene.level = level;
  scene.dims = ImageDims{rng.range(1024, 2048), rng.range(1024, 2048)};
  scene.expression = ExpressionSpec{rng.index(kCategories), rng.index(kAttributes), lp.hops};
  const ExpressionSpec& expr = scene.expression;

  std::vector<int> cells(static_cast<std::size_t>(lp.grid * lp.grid));
  for (std::size_t i = 0; i < cells.size(); ++i) cells[i] = static_cast<int>(i);
  rng.shuffle(cells);
  std::size_t next_cell = 0;

  const int distractors = rng.range(lp.min_distractors, lp.max_distractors);
  std::vector<Candidate> candidates;
  std::optional<Box> target_box;
  int same_category_distractors = 0;

  if (!lp.absent) {
    Candidate target;
    target.box = place_box(rng, scene.dims, lp.grid, cells[next_cell++],
                           rng.uniform(lp.min_area, lp.max_area));
    target.category = expr.category;
    target.attribute = expr.attribute;
    target.relation_match = 1.0;
    target.tightness = rng.uniform(0.85, 1.0);
    target_box = target.box;
    candidates.push_back(target);
    for (int i = 0; i < lp.loose_boxes; ++i) {
      Candidate loose = target;
      loose.box = loosen(rng, scene.dims, target.box, rng.uniform(0.51, 0.6));
      loose.tightness = rng.uniform(0.3, 0.6);
      candidates.push_back(loose);
    }
  }

  for (int i = 0; i < distractors; ++i) {
    Candidate d;
    d.box = place_box(rng, scene.dims, lp.grid, cells[next_cell++],
                      rng.uniform(lp.min_area, lp.max_area));
    d.tightness = rng.uniform(0.85, 1.0);
    const bool same_category = rng.uniform() < lp.same_category_share;
    if (same_category) {
      ++same_category_distractors;
      d.category = expr.category;
      // Same-category distractors differ in the attribute or in the hop chain,
      // never match both. Absent-target scenes never share the attribute.
      const bool share_attribute = !lp.absent && lp.hops > 0 && rng.uniform() < 0.5;
      d.attribute = share_attribute ? expr.attribute
                                    : (expr.attribute + 1 + rng.index(kAttributes - 1)) % kAttributes;
      d.relation_match = relation_fraction(rng, lp.hops, share_attribute);
    } else {
      d.category = (expr.category + 1 + rng.index(kCategories - 1)) % kCategories;
      d.attribute = rng.index(kAttributes);
      d.relation_match = relation_fraction(rng, lp.hops, false);
    }
    candidates.push_back(d);
  }

  rng.shuffle(candidates);
  scene.candidates = std::move(candidates);

  if (target_box) {
    for (std::size_t i = 0; i < scene.candidates.size(); ++i) {
      if (scene.candidates[i].box == *target_box) {
        scene.target = i;
        break;
      }
    }
  }

  scene.difficulty.distractor_count = same_category_distractors;
  scene.difficulty.hop_count = lp.hops;
  scene.difficulty.target_area_ratio = target_box ? area_ratio(*target_box, scene.dims) : 0.0;
  return scene;
}

nlohmann::json to_json(const SceneSpec& scene) {
  nlohmann::json candidates = nlohmann::json::array();
  for (const auto& c : scene.candidates) {
    candidates.push_back({{"box", {c.box.x1, c.box.y1, c.box.x2, c.box.y2}},
                          {"category", c.category},
                          {"attribute", c.attribute},
                          {"relation_match", c.relation_match},
                          {"tightness", c.tightness}});
  }
  nlohmann::json j;
  j["seed"] = scene.seed;
  j["level"] = std::string(to_string(scene.level));
  j["dims"] = {scene.dims.width, scene.dims.height};
  j["expression"] = {{"category", scene.expression.category},
                     {"attribute", scene.expression.attribute},
                     {"hop_count", scene.expression.hop_count}};
  j["candidates"] = std::move(candidates);
  j["target"] = scene.target ? nlohmann::json(*scene.target) : nlohmann::json(nullptr);
  j["difficulty"] = {{"distractor_count", scene.difficulty.distractor_count},
                     {"target_area_ratio", scene.difficulty.target_area_ratio},
                     {"hop_count", scene.difficulty.hop_count}};
  return j;
}

}  // namespace refrec
