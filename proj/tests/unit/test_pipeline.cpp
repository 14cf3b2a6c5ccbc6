#include <doctest.h>

#include <map>
#include <set>

#include "refrec/dataset_io.hpp"
#include "refrec/errors.hpp"
#include "refrec/pipeline.hpp"
#include "support.hpp"

using namespace refrec;
using nlohmann::json;

namespace {

PipelineConfig fast_config() {
  PipelineConfig cfg;
  cfg.retry.base_delay = std::chrono::milliseconds(1);
  return cfg;
}

ClientSuite scripted_suite(const json& mocks) {
  ClientSuite s;
  s.parser = std::make_shared<ScriptedClient>(ClientRole::kParser, mocks.value("parser", json::object()));
  s.grounder = std::make_shared<ScriptedClient>(ClientRole::kGrounder, mocks.value("grounder", json::object()));
  s.verifier = std::make_shared<ScriptedClient>(ClientRole::kVerifier, mocks.value("verifier", json::object()));
  s.generator = std::make_shared<ScriptedClient>(ClientRole::kGenerator, mocks.value("generator", json::object()));
  return s;
}

json detection(double x1, double y1, double x2, double y2, double score) {
  return {{"box", {x1, y1, x2, y2}}, {"score", score}};
}

json one_detection(double x1, double y1, double x2, double y2, double score) {
  return {{"detections", json::array({detection(x1, y1, x2, y2, score)})}};
}

json six_objects() {
  json objs = json::array();
  const char* cats[] = {"cup", "cup", "table", "chair", "chair", "plant"};
  for (int i = 0; i < 6; ++i) {
    objs.push_back({{"category", cats[i]}, {"description", "object " + std::to_string(i)}, {"attributes", json::array()}});
  }
  return {{"objects", objs}};
}

json grounder_for_six(double score_of_three) {
  json g = json::object();
  for (int i = 0; i < 6; ++i) {
    const double x = 100.0 * (i + 1);
    g["img.jpg|object " + std::to_string(i)] = one_detection(x, 100, x + 80, 180, i == 3 ? score_of_three : 0.95);
  }
  return g;
}

ObjectRecord object(int index, std::string category, std::vector<std::string> attributes, Box box,
                    std::vector<Relation> relations = {}, std::string function = {}) {
  ObjectRecord o;
  o.index = index;
  o.category = std::move(category);
  o.description = o.category + " " + std::to_string(index);
  o.attributes = std::move(attributes);
  o.box = box;
  o.relations = std::move(relations);
  o.function_tag = std::move(function);
  o.grounding_score = 0.9;
  return o;
}

ImageRecord image_of(std::vector<ObjectRecord> objects) { return ImageRecord{"img.jpg", {1600, 1300}, std::move(objects)}; }

const ManifestEntry kImage{"img.jpg", {1600, 1300}};

std::vector<ManifestEntry> fixture_manifest() { return load_manifest(test::fixture("pipeline/manifest.jsonl")); }

std::string jsonl(const PipelineResult& r) {
  std::ostringstream os;
  write_samples_jsonl(os, r.samples);
  for (const auto& a : r.audit) os << a.to_json().dump() << '\n';
  return os.str();
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("filter examples") {
  auto objs = [](std::vector<std::string> cats) {
    std::vector<ObjectRecord> out;
    for (std::size_t i = 0; i < cats.size(); ++i) out.push_back(object(static_cast<int>(i), cats[i], {}, {0, 0, 10, 10}));
    return out;
  };
  CHECK(filter_image({1600, 1300}, objs({"a", "b", "c", "a", "b", "c"})).keep);
  const FilterDecision small = filter_image({800, 800}, objs({"a", "b", "c", "a", "b", "c"}));
  CHECK_FALSE(small.keep);
  CHECK(small.violated == FilterRule::kResolution);
  const FilterDecision mono = filter_image({1500, 1500}, objs(std::vector<std::string>(9, "sheep")));
  CHECK(mono.violated == FilterRule::kCategoryDiversity);
  CHECK(filter_image({1500, 1500}, objs({"a", "b", "a", "b"})).violated == FilterRule::kObjectCount);
  CHECK(filter_image({2500, 1500}, objs({"a", "b", "c", "a", "b"})).violated == FilterRule::kResolution);
  CHECK(filter_image({1024, 2048}, objs({"a", "b", "c", "a", "b"})).keep);
  PipelineConfig three;
  three.min_categories = 3;
  CHECK(filter_image({1600, 1300}, objs({"a", "b", "a", "b", "a"}), three).violated == FilterRule::kCategoryDiversity);
  CHECK(to_string(FilterRule::kObjectCount) == "object-count");
}

TEST_CASE("parse_image grounds every object") {
  const ClientSuite suite = scripted_suite({{"parser", {{"img.jpg", six_objects()}}}, {"grounder", grounder_for_six(0.9)}});
  const ParseResult r = parse_image(kImage, suite, fast_config());
  CHECK(r.objects_reported == 6);
  CHECK(r.record.objects.size() == 6);
  CHECK(r.dropped.empty());
  CHECK(r.parser_attempts == 1);
  CHECK(r.record.objects[1].box == Box{200, 100, 280, 180});
}

TEST_CASE("parse_image drops a weakly grounded object") {
  const ClientSuite suite = scripted_suite({{"parser", {{"img.jpg", six_objects()}}}, {"grounder", grounder_for_six(0.1)}});
  const ParseResult r = parse_image(kImage, suite, fast_config());
  CHECK(r.record.objects.size() == 5);
  REQUIRE(r.dropped.size() == 1);
  CHECK(r.dropped[0].object_index == 3);
  CHECK(r.dropped[0].reason == "grounding-score");
  CHECK(r.record.find(3) == nullptr);
  CHECK(r.record.find(4) != nullptr);
}

TEST_CASE("parse_image retries a timing-out grounder") {
  json g = grounder_for_six(0.9);
  g["img.jpg|object 2"] = json::array({{{"$error", "timeout"}}, {{"$error", "timeout"}}, one_detection(1, 1, 50, 50, 0.8)});
  const ClientSuite suite = scripted_suite({{"parser", {{"img.jpg", six_objects()}}}, {"grounder", g}});
  const ParseResult r = parse_image(kImage, suite, fast_config());
  CHECK(r.record.objects.size() == 6);
  CHECK(r.max_grounder_attempts == 3);
}

TEST_CASE("parse_image failures") {
  const ClientSuite dead = scripted_suite({{"parser", {{"*", {{"$error", "down"}}}}}});
  try {
    parse_image(kImage, dead, fast_config());
    FAIL("expected exhaustion");
  } catch (const RetriesExhausted& e) {
    CHECK(e.attempts() == 3);
  }

  const ClientSuite no_objects = scripted_suite({{"parser", {{"*", {{"things", json::array()}}}}}});
  CHECK_THROWS_AS(parse_image(kImage, no_objects, fast_config()), SchemaError);

  json bad = six_objects();
  bad["objects"][2].erase("category");
  const ClientSuite bad_parser = scripted_suite({{"parser", {{"*", bad}}}, {"grounder", grounder_for_six(0.9)}});
  try {
    parse_image(kImage, bad_parser, fast_config());
    FAIL("expected a schema error");
  } catch (const SchemaError& e) {
    CHECK(e.field() == "objects[2].category");
  }

  json g = grounder_for_six(0.9);
  g["img.jpg|object 0"] = {{"detections", json::array({{{"box", {1, 2, 3}}, {"score", 0.9}}})}};
  g["img.jpg|object 1"] = one_detection(1700, 10, 1800, 50, 0.9);
  g["img.jpg|object 2"] = one_detection(1500, 1200, 1700, 1400, 0.9);
  g["img.jpg|object 4"] = {{"detections", json::array()}};
  g["img.jpg|object 5"] = {{"$error", "timeout"}};
  const ClientSuite mixed = scripted_suite({{"parser", {{"*", six_objects()}}}, {"grounder", g}});
  const ParseResult r = parse_image(kImage, mixed, fast_config());
  std::map<int, std::string> reasons;
  for (const auto& d : r.dropped) reasons[d.object_index] = d.reason;
  CHECK(reasons[0] == "schema:detections[0].box");
  CHECK(reasons[1] == "invalid-box");
  CHECK(reasons[4] == "grounding-score");
  CHECK(reasons[5] == "client-failure");
  REQUIRE(r.record.find(2) != nullptr);
  CHECK(r.record.find(2)->box == Box{1500, 1200, 1600, 1300});
  CHECK(r.record.objects.size() == 2);
}

TEST_CASE("verify_object") {
  const ObjectRecord plain = object(0, "cup", {"red"}, {0, 0, 10, 10});
  const ObjectRecord anchored = object(1, "cup", {}, {20, 0, 30, 10}, {{"left of", 2}});
  const ImageRecord ctx = image_of({plain, anchored, object(2, "plate", {}, {40, 0, 60, 10})});

  const ClientSuite pass = scripted_suite(
      {{"verifier", {{"*", {{"category", true}, {"attributes", true}, {"relations", true}, {"description", true}}}}}});
  CHECK(verify_object(plain, ctx, pass, fast_config()).all_pass());

  const ClientSuite rel_fail = scripted_suite(
      {{"verifier", {{"*", {{"category", true}, {"attributes", true}, {"relations", false}, {"description", true}}}}}});
  const ChecklistVerdict v = verify_object(anchored, ctx, rel_fail, fast_config());
  CHECK_FALSE(v.all_pass());
  CHECK(v.failures() == "relations");
  // No relations to check: the item passes whatever the verifier says.
  CHECK(verify_object(plain, ctx, rel_fail, fast_config()).all_pass());

  const ClientSuite two_fail = scripted_suite(
      {{"verifier", {{"*", {{"category", false}, {"attributes", true}, {"relations", true}, {"description", false}}}}}});
  CHECK(verify_object(plain, ctx, two_fail, fast_config()).failures() == "category+description");

  const ClientSuite malformed = scripted_suite({{"verifier", {{"*", {{"category", "yes"}}}}}});
  CHECK_THROWS_AS(verify_object(plain, ctx, malformed, fast_config()), SchemaError);
}

TEST_CASE("select_task examples") {
  SUBCASE("attribute") {
    const ImageRecord ctx = image_of({object(0, "cup", {"red"}, {0, 0, 10, 10}), object(1, "cup", {"blue"}, {20, 0, 30, 10}),
                                      object(2, "table", {}, {0, 20, 100, 90})});
    CHECK(select_task(ctx.objects[0], ctx) == TaskCategory::kAttribute);
  }
  SUBCASE("interaction") {
    std::vector<ObjectRecord> chairs;
    for (int i = 0; i < 4; ++i) chairs.push_back(object(i, "chair", {}, {100.0 * i, 0, 100.0 * i + 50, 80}));
    chairs.push_back(object(4, "table", {}, {0, 100, 400, 200}));
    const ImageRecord ctx = image_of(chairs);
    CHECK(select_task(ctx.objects[2], ctx) == TaskCategory::kInteraction);
  }
  SUBCASE("position") {
    const ImageRecord ctx = image_of({object(0, "lamp", {}, {0, 0, 10, 10}, {{"on", 2}}),
                                      object(1, "lamp", {}, {0, 0, 10, 10}), object(2, "desk", {}, {0, 20, 100, 90})});
    CHECK(select_task(ctx.objects[0], ctx) == TaskCategory::kPosition);
  }
  SUBCASE("relation") {
    const ImageRecord ctx = image_of({object(0, "ball", {"color:red"}, {0, 0, 10, 10}),
                                      object(1, "box", {"color:blue"}, {20, 0, 30, 10})});
    CHECK(select_task(ctx.objects[0], ctx) == TaskCategory::kRelation);
    const ImageRecord shared = image_of({object(0, "ball", {"striped"}, {0, 0, 10, 10}),
                                         object(1, "box", {"striped"}, {20, 0, 30, 10})});
    CHECK(select_task(shared.objects[0], shared) == TaskCategory::kRelation);
  }
  SUBCASE("commonsense") {
    const ImageRecord ctx = image_of({object(0, "knife", {}, {0, 0, 10, 10}, {}, "used for cutting"),
                                      object(1, "plate", {}, {20, 0, 30, 10})});
    CHECK(select_task(ctx.objects[0], ctx) == TaskCategory::kCommonsense);
  }
  SUBCASE("reject") {
    const ImageRecord ctx = image_of({object(0, "plate", {}, {0, 0, 10, 10}), object(1, "fork", {}, {20, 0, 30, 10})});
    CHECK(select_task(ctx.objects[0], ctx) == TaskCategory::kReject);
  }
  SUBCASE("priority and determinism") {
    // Qualifies for Attribute, Interaction and Commonsense; Attribute wins.
    std::vector<ObjectRecord> objs{object(0, "cup", {"red"}, {0, 0, 10, 10}, {}, "for drinking"),
                                   object(1, "cup", {}, {20, 0, 30, 10}), object(2, "cup", {}, {40, 0, 50, 10})};
    const ImageRecord ctx = image_of(objs);
    CHECK(select_task(ctx.objects[0], ctx) == TaskCategory::kAttribute);
    for (int i = 0; i < 10; ++i) CHECK(select_task(ctx.objects[1], ctx) == select_task(ctx.objects[1], ctx));
  }
  CHECK(hop_count_for(TaskCategory::kPosition) == 1);
  CHECK(hop_count_for(TaskCategory::kAttribute) == 0);
}

TEST_CASE("generate_expressions") {
  const ObjectRecord target = object(0, "cup", {"red"}, {0, 0, 10, 10});
  const ImageRecord ctx = image_of({target, object(1, "cup", {}, {20, 0, 30, 10})});
  PipelineConfig cfg = fast_config();
  cfg.candidates_per_object = 2;
  const ClientSuite suite = scripted_suite(
      {{"generator", {{"img.jpg|cup 0|Attribute", {{"expressions", {"the red cup", "  ", "the cup in red", "extra"}}}}}}});
  const auto cands = generate_expressions(target, TaskCategory::kAttribute, ctx, suite, cfg);
  REQUIRE(cands.size() == 2);
  CHECK(cands[0].text == "the red cup");
  CHECK(cands[1].text == "the cup in red");
  CHECK(cands[1].candidate_index == 1);
  CHECK_FALSE(cands[0].accepted());

  const ClientSuite bad = scripted_suite({{"generator", {{"*", {{"texts", json::array()}}}}}});
  CHECK_THROWS_AS(generate_expressions(target, TaskCategory::kAttribute, ctx, bad, cfg), SchemaError);
  const ClientSuite bad_item = scripted_suite({{"generator", {{"*", {{"expressions", {1, 2}}}}}}});
  CHECK_THROWS_AS(generate_expressions(target, TaskCategory::kAttribute, ctx, bad_item, cfg), SchemaError);
}

TEST_CASE("correct_expression examples") {
  const ObjectRecord target = object(0, "cup", {"red"}, {100, 100, 200, 200});
  const CandidateExpression cand{0, 0, TaskCategory::kAttribute, "the red cup", std::nullopt, std::nullopt};
  const json consistent = {{"*", {{"consistent", true}}}};
  auto run = [&](const json& grounder, const json& verifier = json()) {
    const ClientSuite s = scripted_suite({{"grounder", {{"*", grounder}}}, {"verifier", verifier.is_null() ? consistent : verifier}});
    return correct_expression(cand, target, "img.jpg", s, fast_config());
  };

  const auto two = run({{"detections", {detection(100, 100, 200, 200, 0.9), detection(300, 100, 400, 200, 0.5)}}});
  CHECK(two.consistency == true);
  CHECK(two.uniqueness == false);
  CHECK_FALSE(two.accepted());

  // IoU 0.9: the detection covers 90% of the target and nothing else.
  const auto good = run(one_detection(100, 100, 200, 190, 0.8));
  CHECK(good.uniqueness == true);
  CHECK(good.accepted());

  const auto off = run(one_detection(150, 100, 250, 200, 0.8));
  CHECK(iou(Box{150, 100, 250, 200}, target.box) == doctest::Approx(1.0 / 3));
  CHECK(off.uniqueness == false);

  // Low-score detections do not count against uniqueness.
  const auto weak_extra = run({{"detections", {detection(100, 100, 200, 200, 0.9), detection(300, 100, 400, 200, 0.2)}}});
  CHECK(weak_extra.uniqueness == true);

  const auto inconsistent = run(one_detection(100, 100, 200, 200, 0.9), {{"*", {{"consistent", false}}}});
  CHECK(inconsistent.consistency == false);
  CHECK(inconsistent.uniqueness == true);
  CHECK_FALSE(inconsistent.accepted());

  CandidateExpression reject{0, 0, TaskCategory::kReject, "the purple cup", std::nullopt, std::nullopt};
  const ClientSuite nothing = scripted_suite({{"grounder", {{"*", {{"detections", {detection(1, 1, 5, 5, 0.2)}}}}}},
                                             {"verifier", consistent}});
  CHECK(correct_expression(reject, target, "img.jpg", nothing, fast_config()).accepted());
  const ClientSuite found = scripted_suite({{"grounder", {{"*", one_detection(1, 1, 5, 5, 0.6)}}}, {"verifier", consistent}});
  CHECK(correct_expression(reject, target, "img.jpg", found, fast_config()).uniqueness == false);

  CandidateExpression empty = cand;
  empty.text.clear();
  CHECK_THROWS_AS(correct_expression(empty, target, "img.jpg", nothing, fast_config()), InvalidInput);
}

TEST_CASE("fixture run emits the traced samples") {
  const ClientsConfig clients = load_clients_config(test::fixture("pipeline/clients.json"));
  PipelineConfig cfg;
  cfg.prompts = clients.prompts;
  const PipelineResult r = run_pipeline(fixture_manifest(), clients.suite, cfg);

  std::vector<std::string> ids;
  for (const auto& s : r.samples) ids.push_back(s.id);
  CHECK(ids == std::vector<std::string>{"img07.jpg#0-0", "img07.jpg#1-0", "img08.jpg#2-0", "img08.jpg#4-0",
                                        "img09.jpg#0-0", "img09.jpg#3-0", "img10.jpg#2-0"});
  std::map<std::string, TaskCategory> tasks;
  for (const auto& s : r.samples) tasks[s.id] = s.task;
  CHECK(tasks["img07.jpg#0-0"] == TaskCategory::kAttribute);
  CHECK(tasks["img08.jpg#2-0"] == TaskCategory::kInteraction);
  CHECK(tasks["img08.jpg#4-0"] == TaskCategory::kPosition);
  CHECK(tasks["img09.jpg#0-0"] == TaskCategory::kCommonsense);
  CHECK(tasks["img09.jpg#3-0"] == TaskCategory::kReject);
  CHECK(tasks["img10.jpg#2-0"] == TaskCategory::kRelation);

  CHECK(r.stats.images == 10);
  CHECK(r.stats.images_kept == 4);
  CHECK(r.stats.images_dropped == 6);
  CHECK(r.stats.objects == 43);
  CHECK(r.stats.objects_dropped == 34);
  CHECK(r.stats.objects_generated == 9);
  CHECK(r.stats.candidates == 10);
  CHECK(r.stats.candidates_dropped == 3);
  CHECK(r.stats.samples == 7);
  for (const auto& s : r.samples) CHECK_NOTHROW(s.validate());
}

TEST_CASE("audit accounting and replay") {
  const ClientsConfig clients = load_clients_config(test::fixture("pipeline/clients.json"));
  PipelineConfig cfg;
  cfg.prompts = clients.prompts;
  const PipelineResult r = run_pipeline(fixture_manifest(), clients.suite, cfg);

  int object_records = 0, candidate_drops = 0, emits = 0;
  std::set<std::string> dropped_images;
  std::set<std::pair<std::string, int>> dropped_objects;
  std::map<std::string, std::string> image_reasons;
  for (const auto& a : r.audit) {
    CHECK_FALSE(a.stage.empty());
    CHECK_FALSE(a.reason.empty());
    if (a.verdict == "emit") {
      ++emits;
      CHECK(a.sample_id.has_value());
    } else if (a.candidate_index) {
      ++candidate_drops;
    } else if (a.object_index >= 0) {
      ++object_records;
      dropped_objects.insert({a.image_ref, a.object_index});
    } else {
      dropped_images.insert(a.image_ref);
      image_reasons[a.image_ref] = a.stage + ":" + a.reason;
    }
  }
  CHECK(object_records + r.stats.objects_generated == r.stats.objects);
  CHECK(candidate_drops + emits == r.stats.candidates);
  CHECK(emits == static_cast<int>(r.samples.size()));
  CHECK(image_reasons["img01.jpg"] == "filter:resolution");
  CHECK(image_reasons["img02.jpg"] == "filter:resolution");
  CHECK(image_reasons["img06.jpg"] == "parse:client-failure");

  for (const auto& s : r.samples) {
    CHECK(dropped_images.count(s.image_ref) == 0);
    const int obj = std::stoi(s.id.substr(s.id.find('#') + 1));
    CHECK(dropped_objects.count({s.image_ref, obj}) == 0);
    const bool logged = std::any_of(r.audit.begin(), r.audit.end(), [&](const AuditRecord& a) {
      return a.sample_id == s.id && a.stage == "emit";
    });
    CHECK(logged);
  }

  std::map<std::string, int> reasons;
  for (const auto& a : r.audit) ++reasons[a.stage + ":" + a.reason];
  CHECK(reasons["filter:category-diversity"] == 9);
  CHECK(reasons["correct:uniqueness"] == 2);
  CHECK(reasons["correct:consistency"] == 1);
  CHECK(reasons["verify:checklist:relations"] == 1);
}

TEST_CASE("reruns and thread counts give identical output") {
  PipelineConfig cfg;
  std::string first;
  for (int threads : {1, 4, 8}) {
    const ClientsConfig clients = load_clients_config(test::fixture("pipeline/clients.json"));
    cfg.prompts = clients.prompts;
    cfg.threads = threads;
    cfg.max_inflight = threads == 8 ? 2 : 8;
    const std::string out = jsonl(run_pipeline(fixture_manifest(), clients.suite, cfg));
    if (first.empty()) first = out;
    CHECK(out == first);
  }

  const ClientsConfig clients = load_clients_config(test::fixture("pipeline/clients.json"));
  cfg.prompts = clients.prompts;
  test::TempDir a, b;
  write_pipeline_outputs(run_pipeline(fixture_manifest(), clients.suite, cfg), a.path());
  const ClientsConfig again = load_clients_config(test::fixture("pipeline/clients.json"));
  write_pipeline_outputs(run_pipeline(fixture_manifest(), again.suite, cfg), b.path());
  CHECK(test::slurp(a / "samples.jsonl") == test::slurp(b / "samples.jsonl"));
  CHECK(test::slurp(a / "audit.jsonl") == test::slurp(b / "audit.jsonl"));
  CHECK(load_samples_jsonl(a / "samples.jsonl").size() == 7);
}

TEST_CASE("a permanently failing verifier drops every verified object") {
  ClientsConfig clients = load_clients_config(test::fixture("pipeline/clients.json"));
  clients.suite.verifier = std::make_shared<ScriptedClient>(ClientRole::kVerifier, json{{"*", {{"$error", "down"}}}});
  const PipelineResult r = run_pipeline(fixture_manifest(), clients.suite, fast_config());
  CHECK(r.samples.empty());
  CHECK(r.stats.samples == 0);

  std::set<std::string> kept{"img07.jpg", "img08.jpg", "img09.jpg", "img10.jpg"};
  int verify_records = 0;
  for (const auto& a : r.audit) {
    if (kept.count(a.image_ref) && a.stage != "parse") {
      CHECK(a.stage == "verify");
      CHECK(a.reason == "client-failure");
      ++verify_records;
    }
  }
  CHECK(verify_records > 0);
  int object_records = 0;
  for (const auto& a : r.audit) object_records += a.object_index >= 0 ? 1 : 0;
  CHECK(object_records == r.stats.objects);
}

TEST_CASE("ambiguous expression fails uniqueness") {
  const ClientsConfig clients = load_clients_config(test::fixture("pipeline/ambiguous/clients.json"));
  const auto manifest = load_manifest(test::fixture("pipeline/ambiguous/manifest.jsonl"));
  const PipelineResult r = run_pipeline(manifest, clients.suite, fast_config());
  CHECK(r.samples.empty());
  const bool uniqueness = std::any_of(r.audit.begin(), r.audit.end(), [](const AuditRecord& a) {
    return a.stage == "correct" && a.reason == "uniqueness";
  });
  CHECK(uniqueness);
}

TEST_CASE("manifest errors") {
  test::TempDir dir;
  test::spit(dir / "dup.jsonl", "{\"image_ref\": \"a\", \"width\": 1200, \"height\": 1200}\n"
                                "{\"image_ref\": \"a\", \"width\": 1200, \"height\": 1200}\n");
  CHECK_THROWS_AS(load_manifest(dir / "dup.jsonl"), SchemaError);
  test::spit(dir / "neg.jsonl", "{\"image_ref\": \"a\", \"width\": -3, \"height\": 1200}\n");
  CHECK_THROWS_AS(load_manifest(dir / "neg.jsonl"), SchemaError);
  CHECK_THROWS_AS(load_manifest(dir / "none.jsonl"), SchemaError);
  PipelineConfig cfg;
  cfg.max_inflight = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidInput);
}

TEST_CASE("audit record json") {
  const AuditRecord a{"img.jpg", 3, std::nullopt, "verify", "drop", "checklist:relations", std::nullopt};
  CHECK(a.to_json() == json{{"image_ref", "img.jpg"}, {"object_index", 3}, {"candidate_index", nullptr},
                            {"stage", "verify"}, {"verdict", "drop"}, {"reason", "checklist:relations"}});
}

}
