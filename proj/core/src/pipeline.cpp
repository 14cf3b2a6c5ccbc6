#include "refrec/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "refrec/dataset_io.hpp"
#include "refrec/errors.hpp"
#include "refrec/parallel.hpp"

namespace refrec {

namespace {

using nlohmann::json;

std::string required_string(const json& obj, const std::string& key, const std::string& path) {
  const std::string field = path + "." + key;
  if (!obj.contains(key)) throw SchemaError("missing field '" + field + "'", field);
  if (!obj.at(key).is_string()) throw SchemaError("field '" + field + "' must be a string", field);
  std::string value = obj.at(key).get<std::string>();
  if (value.empty()) throw SchemaError("field '" + field + "' must be non-empty", field);
  return value;
}

std::vector<std::string> string_list(const json& obj, const std::string& key, const std::string& path) {
  std::vector<std::string> out;
  if (!obj.contains(key) || obj.at(key).is_null()) return out;
  const std::string field = path + "." + key;
  if (!obj.at(key).is_array()) throw SchemaError("field '" + field + "' must be an array", field);
  for (std::size_t i = 0; i < obj.at(key).size(); ++i) {
    const json& v = obj.at(key)[i];
    if (!v.is_string()) {
      throw SchemaError("field '" + field + "[" + std::to_string(i) + "]' must be a string",
                        field + "[" + std::to_string(i) + "]");
    }
    out.push_back(v.get<std::string>());
  }
  return out;
}

bool required_bool(const json& obj, const std::string& key, const std::string& path) {
  const std::string field = path + "." + key;
  if (!obj.is_object() || !obj.contains(key) || !obj.at(key).is_boolean()) {
    throw SchemaError("field '" + field + "' must be a boolean", field);
  }
  return obj.at(key).get<bool>();
}

json box_json(const Box& b) { return json::array({b.x1, b.y1, b.x2, b.y2}); }

struct Detection {
  Box box;
  double score = 0.0;
};

std::vector<Detection> read_detections(const json& response) {
  if (!response.is_object() || !response.contains("detections") || !response.at("detections").is_array()) {
    throw SchemaError("grounder response needs a 'detections' array", "detections");
  }
  std::vector<Detection> out;
  const json& dets = response.at("detections");
  for (std::size_t i = 0; i < dets.size(); ++i) {
    const std::string path = "detections[" + std::to_string(i) + "]";
    const json& d = dets[i];
    if (!d.is_object() || !d.contains("score") || !d.at("score").is_number()) {
      throw SchemaError("'" + path + ".score' must be a number", path + ".score");
    }
    if (!d.contains("box") || !d.at("box").is_array() || d.at("box").size() != 4) {
      throw SchemaError("'" + path + ".box' must be [x1, y1, x2, y2]", path + ".box");
    }
    Detection det;
    det.score = d.at("score").get<double>();
    const json& b = d.at("box");
    for (const json& v : b) {
      if (!v.is_number()) throw SchemaError("'" + path + ".box' must hold numbers", path + ".box");
    }
    det.box = Box{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
    out.push_back(det);
  }
  return out;
}

std::optional<Box> clamp_to_image(Box b, ImageDims dims) {
  const double w = dims.width;
  const double h = dims.height;
  b.x1 = std::clamp(b.x1, 0.0, w);
  b.x2 = std::clamp(b.x2, 0.0, w);
  b.y1 = std::clamp(b.y1, 0.0, h);
  b.y2 = std::clamp(b.y2, 0.0, h);
  if (!is_valid(b)) return std::nullopt;
  return b;
}

std::vector<const ObjectRecord*> peers_of(const ObjectRecord& target, const ImageRecord& context) {
  std::vector<const ObjectRecord*> out;
  for (const ObjectRecord& o : context.objects) {
    if (o.index != target.index && o.category == target.category) out.push_back(&o);
  }
  return out;
}

bool has_attribute(const ObjectRecord& o, const std::string& a) {
  return std::find(o.attributes.begin(), o.attributes.end(), a) != o.attributes.end();
}

bool has_relation(const ObjectRecord& o, const Relation& r) {
  return std::find(o.relations.begin(), o.relations.end(), r) != o.relations.end();
}

double center_x(const Box& b) { return 0.5 * (b.x1 + b.x2); }

std::pair<std::string, std::string> split_typed(const std::string& attribute) {
  const auto pos = attribute.find(':');
  if (pos == std::string::npos) return {};
  return {attribute.substr(0, pos), attribute.substr(pos + 1)};
}

std::string relation_text(const Relation& r, const ImageRecord& context) {
  const ObjectRecord* anchor = context.find(r.anchor);
  return r.predicate + " " + (anchor ? anchor->description : "object " + std::to_string(r.anchor));
}

json object_payload(const ObjectRecord& o, const ImageRecord& context) {
  json rel = json::array();
  for (const Relation& r : o.relations) rel.push_back(relation_text(r, context));
  json j = {{"index", o.index},
            {"category", o.category},
            {"attributes", o.attributes},
            {"description", o.description},
            {"relations", rel},
            {"box", box_json(o.box)}};
  if (!o.function_tag.empty()) j["function"] = o.function_tag;
  return j;
}

CallResult call(const ClientSuite& suite, ClientRole role, const std::string& image_ref, json payload,
                const PipelineConfig& cfg, RequestGate* gate) {
  ClientRequest req{role, image_ref, std::move(payload)};
  return call_with_retry(suite.get(role), req, cfg.retry, gate);
}

ObjectRecord parse_object(const json& j, int index) {
  const std::string path = "objects[" + std::to_string(index) + "]";
  if (!j.is_object()) throw SchemaError("'" + path + "' must be an object", path);
  ObjectRecord o;
  o.index = index;
  o.category = required_string(j, "category", path);
  o.description = required_string(j, "description", path);
  o.attributes = string_list(j, "attributes", path);
  if (j.contains("relations") && !j.at("relations").is_null()) {
    const json& rels = j.at("relations");
    if (!rels.is_array()) throw SchemaError("'" + path + ".relations' must be an array", path + ".relations");
    for (std::size_t k = 0; k < rels.size(); ++k) {
      const std::string rpath = path + ".relations[" + std::to_string(k) + "]";
      const json& r = rels[k];
      if (!r.is_object() || !r.contains("anchor") || !r.at("anchor").is_number_integer()) {
        throw SchemaError("'" + rpath + ".anchor' must be an integer", rpath + ".anchor");
      }
      o.relations.push_back(Relation{required_string(r, "predicate", rpath), r.at("anchor").get<int>()});
    }
  }
  if (j.contains("function") && !j.at("function").is_null()) {
    if (!j.at("function").is_string()) throw SchemaError("'" + path + ".function' must be a string", path + ".function");
    o.function_tag = j.at("function").get<std::string>();
  }
  return o;
}

struct ImageOutcome {
  std::vector<Sample> samples;
  std::vector<AuditRecord> audit;
  PipelineStats stats;
};

AuditRecord drop(const std::string& image_ref, int object_index, std::string stage, std::string reason) {
  return AuditRecord{image_ref, object_index, std::nullopt, std::move(stage), "drop", std::move(reason), std::nullopt};
}

std::string schema_reason(const SchemaError& e) {
  return e.field().empty() ? std::string("schema") : "schema:" + e.field();
}

ImageOutcome process_image(const ManifestEntry& image, const ClientSuite& suite, const PipelineConfig& cfg,
                           RequestGate* gate) {
  ImageOutcome out;
  out.stats.images = 1;
  const std::string& ref = image.image_ref;

  if (!resolution_ok(image.dims, cfg)) {
    out.audit.push_back(drop(ref, -1, "filter", std::string(to_string(FilterRule::kResolution))));
    out.stats.images_dropped = 1;
    return out;
  }

  ParseResult parsed;
  try {
    parsed = parse_image(image, suite, cfg, gate);
  } catch (const RetriesExhausted&) {
    out.audit.push_back(drop(ref, -1, "parse", "client-failure"));
    out.stats.images_dropped = 1;
    return out;
  } catch (const SchemaError& e) {
    out.audit.push_back(drop(ref, -1, "parse", schema_reason(e)));
    out.stats.images_dropped = 1;
    return out;
  }
  out.stats.objects = parsed.objects_reported;
  for (const ObjectDrop& d : parsed.dropped) out.audit.push_back(drop(ref, d.object_index, "parse", d.reason));
  out.stats.objects_dropped += static_cast<int>(parsed.dropped.size());

  const ImageRecord& record = parsed.record;
  const FilterDecision decision = filter_image(record.dims, record.objects, cfg);
  if (!decision.keep) {
    for (const ObjectRecord& o : record.objects) {
      out.audit.push_back(drop(ref, o.index, "filter", std::string(to_string(*decision.violated))));
    }
    out.stats.objects_dropped += static_cast<int>(record.objects.size());
    out.stats.images_dropped = 1;
    return out;
  }
  out.stats.images_kept = 1;

  ImageRecord retained{record.image_ref, record.dims, {}};
  for (const ObjectRecord& o : record.objects) {
    try {
      const ChecklistVerdict v = verify_object(o, record, suite, cfg, gate);
      if (v.all_pass()) {
        retained.objects.push_back(o);
      } else {
        out.audit.push_back(drop(ref, o.index, "verify", "checklist:" + v.failures()));
        ++out.stats.objects_dropped;
      }
    } catch (const RetriesExhausted&) {
      out.audit.push_back(drop(ref, o.index, "verify", "client-failure"));
      ++out.stats.objects_dropped;
    } catch (const SchemaError& e) {
      out.audit.push_back(drop(ref, o.index, "verify", schema_reason(e)));
      ++out.stats.objects_dropped;
    }
  }

  for (const ObjectRecord& target : retained.objects) {
    const TaskCategory task = select_task(target, retained);
    std::vector<CandidateExpression> cands;
    try {
      cands = generate_expressions(target, task, retained, suite, cfg, gate);
    } catch (const RetriesExhausted&) {
      out.audit.push_back(drop(ref, target.index, "generate", "client-failure"));
      ++out.stats.objects_dropped;
      continue;
    } catch (const SchemaError& e) {
      out.audit.push_back(drop(ref, target.index, "generate", schema_reason(e)));
      ++out.stats.objects_dropped;
      continue;
    }
    if (cands.empty()) {
      out.audit.push_back(drop(ref, target.index, "generate", "no-expressions"));
      ++out.stats.objects_dropped;
      continue;
    }
    ++out.stats.objects_generated;
    const int distractors = static_cast<int>(peers_of(target, retained).size());
    for (CandidateExpression& cand : cands) {
      ++out.stats.candidates;
      AuditRecord rec{ref, target.index, cand.candidate_index, "correct", "drop", "", std::nullopt};
      try {
        cand = correct_expression(std::move(cand), target, ref, suite, cfg, gate);
      } catch (const RetriesExhausted&) {
        rec.reason = "client-failure";
      } catch (const SchemaError& e) {
        rec.reason = schema_reason(e);
      }
      if (rec.reason.empty() && !cand.accepted()) {
        rec.reason = !cand.consistency.value_or(false) ? "consistency" : "uniqueness";
      }
      if (!rec.reason.empty()) {
        out.audit.push_back(std::move(rec));
        ++out.stats.candidates_dropped;
        continue;
      }
      Sample s;
      s.id = ref + "#" + std::to_string(target.index) + "-" + std::to_string(cand.candidate_index);
      s.image_ref = ref;
      s.image_dims = record.dims;
      s.expression = cand.text;
      s.task = task;
      if (task != TaskCategory::kReject) {
        s.gt = target.box;
        s.meta.area_ratio = area_ratio(target.box, record.dims);
      }
      s.meta.distractor_count = distractors;
      s.meta.hop_count = hop_count_for(task);
      s.validate();
      out.audit.push_back(AuditRecord{ref, target.index, cand.candidate_index, "emit", "emit", "passed", s.id});
      out.samples.push_back(std::move(s));
      ++out.stats.samples;
    }
  }
  return out;
}

void add(PipelineStats& into, const PipelineStats& s) {
  into.images += s.images;
  into.images_kept += s.images_kept;
  into.images_dropped += s.images_dropped;
  into.objects += s.objects;
  into.objects_dropped += s.objects_dropped;
  into.objects_generated += s.objects_generated;
  into.candidates += s.candidates;
  into.candidates_dropped += s.candidates_dropped;
  into.samples += s.samples;
}

}  // namespace

const ObjectRecord* ImageRecord::find(int index) const {
  for (const ObjectRecord& o : objects) {
    if (o.index == index) return &o;
  }
  return nullptr;
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open manifest " + path.string());
  std::vector<ManifestEntry> out;
  std::set<std::string> seen;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw SchemaError(where + ": invalid JSON: " + e.what());
    }
    if (!j.is_object()) throw SchemaError(where + ": manifest line must be an object");
    ManifestEntry e;
    e.image_ref = required_string(j, "image_ref", "manifest");
    for (const char* key : {"width", "height"}) {
      if (!j.contains(key) || !j.at(key).is_number_integer() || j.at(key).get<long long>() < 1) {
        throw SchemaError(where + ": '" + key + "' must be a positive integer", key);
      }
    }
    e.dims = ImageDims{j.at("width").get<int>(), j.at("height").get<int>()};
    if (!seen.insert(e.image_ref).second) throw SchemaError(where + ": duplicate image_ref '" + e.image_ref + "'", "image_ref");
    out.push_back(std::move(e));
  }
  return out;
}

void PipelineConfig::validate() const {
  if (min_categories < 1) throw InvalidInput("min_categories must be >= 1");
  if (min_objects < 1) throw InvalidInput("min_objects must be >= 1");
  if (min_side < 1 || max_side < min_side) throw InvalidInput("resolution bounds must satisfy 1 <= min_side <= max_side");
  if (!(s_min >= 0.0 && s_min <= 1.0)) throw InvalidInput("s_min must be in [0, 1]");
  if (!(uniqueness_iou > 0.0 && uniqueness_iou <= 1.0)) throw InvalidInput("uniqueness_iou must be in (0, 1]");
  if (candidates_per_object < 1) throw InvalidInput("candidates_per_object must be >= 1");
  if (max_inflight < 1 || max_inflight > 4096) throw InvalidInput("max_inflight must be in [1, 4096]");
  if (threads < 1) throw InvalidInput("threads must be >= 1");
  if (retry.max_attempts < 1) throw InvalidInput("retry attempts must be >= 1");
  if (retry.base_delay.count() < 0) throw InvalidInput("retry delay must be >= 0");
}

std::string_view to_string(FilterRule rule) noexcept {
  switch (rule) {
    case FilterRule::kResolution: return "resolution";
    case FilterRule::kCategoryDiversity: return "category-diversity";
    case FilterRule::kObjectCount: return "object-count";
  }
  return "unknown";
}

bool resolution_ok(ImageDims dims, const PipelineConfig& cfg) {
  return std::min(dims.width, dims.height) >= cfg.min_side && std::max(dims.width, dims.height) <= cfg.max_side;
}

FilterDecision filter_image(ImageDims dims, const std::vector<ObjectRecord>& objects, const PipelineConfig& cfg) {
  if (!resolution_ok(dims, cfg)) return {false, FilterRule::kResolution};
  std::set<std::string> categories;
  for (const ObjectRecord& o : objects) categories.insert(o.category);
  if (static_cast<int>(categories.size()) < cfg.min_categories) return {false, FilterRule::kCategoryDiversity};
  if (static_cast<int>(objects.size()) < cfg.min_objects) return {false, FilterRule::kObjectCount};
  return {true, std::nullopt};
}

ParseResult parse_image(const ManifestEntry& image, const ClientSuite& suite, const PipelineConfig& cfg,
                        RequestGate* gate) {
  validate(image.dims);
  ParseResult out;
  out.record.image_ref = image.image_ref;
  out.record.dims = image.dims;

  const CallResult parsed = call(suite, ClientRole::kParser, image.image_ref,
                                 {{"prompt", cfg.prompts.parser},
                                  {"image_dims", {{"width", image.dims.width}, {"height", image.dims.height}}}},
                                 cfg, gate);
  out.parser_attempts = parsed.attempts;
  const json& resp = parsed.response;
  if (!resp.is_object() || !resp.contains("objects") || !resp.at("objects").is_array()) {
    throw SchemaError("parser response needs an 'objects' array", "objects");
  }
  std::vector<ObjectRecord> objects;
  for (std::size_t i = 0; i < resp.at("objects").size(); ++i) {
    objects.push_back(parse_object(resp.at("objects")[i], static_cast<int>(i)));
  }
  out.objects_reported = static_cast<int>(objects.size());

  for (ObjectRecord& o : objects) {
    std::vector<Detection> dets;
    try {
      const CallResult g = call(suite, ClientRole::kGrounder, image.image_ref, {{"phrase", o.description}}, cfg, gate);
      out.max_grounder_attempts = std::max(out.max_grounder_attempts, g.attempts);
      dets = read_detections(g.response);
    } catch (const RetriesExhausted& e) {
      out.max_grounder_attempts = std::max(out.max_grounder_attempts, e.attempts());
      out.dropped.push_back({o.index, "client-failure"});
      continue;
    } catch (const SchemaError& e) {
      out.dropped.push_back({o.index, schema_reason(e)});
      continue;
    }
    const auto best = std::max_element(dets.begin(), dets.end(),
                                       [](const Detection& a, const Detection& b) { return a.score < b.score; });
    if (best == dets.end() || best->score < cfg.s_min) {
      out.dropped.push_back({o.index, "grounding-score"});
      continue;
    }
    const std::optional<Box> box = clamp_to_image(best->box, image.dims);
    if (!box) {
      out.dropped.push_back({o.index, "invalid-box"});
      continue;
    }
    o.box = *box;
    o.grounding_score = best->score;
    out.record.objects.push_back(std::move(o));
  }
  return out;
}

std::string ChecklistVerdict::failures() const {
  std::string out;
  const std::pair<bool, const char*> items[] = {
      {category, "category"}, {attributes, "attributes"}, {relations, "relations"}, {description, "description"}};
  for (const auto& [ok, name] : items) {
    if (ok) continue;
    if (!out.empty()) out += '+';
    out += name;
  }
  return out;
}

ChecklistVerdict verify_object(const ObjectRecord& obj, const ImageRecord& context, const ClientSuite& suite,
                               const PipelineConfig& cfg, RequestGate* gate) {
  json rel = json::array();
  for (const Relation& r : obj.relations) rel.push_back(relation_text(r, context));
  const json checklist = {{"category", obj.category},
                          {"attributes", obj.attributes},
                          {"relations", rel},
                          {"description", obj.description}};
  const CallResult res = call(suite, ClientRole::kVerifier, context.image_ref,
                              {{"task", "region_checklist"}, {"box", box_json(obj.box)}, {"checklist", checklist}},
                              cfg, gate);
  ChecklistVerdict v;
  v.category = required_bool(res.response, "category", "verdict");
  v.attributes = required_bool(res.response, "attributes", "verdict");
  v.relations = obj.relations.empty() ? true : required_bool(res.response, "relations", "verdict");
  v.description = required_bool(res.response, "description", "verdict");
  return v;
}

TaskCategory select_task(const ObjectRecord& target, const ImageRecord& context) {
  const std::vector<const ObjectRecord*> peers = peers_of(target, context);

  if (!peers.empty()) {
    for (const std::string& a : target.attributes) {
      const bool unique = std::none_of(peers.begin(), peers.end(), [&](const ObjectRecord* p) { return has_attribute(*p, a); });
      if (unique) return TaskCategory::kAttribute;
    }
  }

  if (peers.size() >= 2) {
    const double cx = center_x(target.box);
    const bool ordered = std::none_of(peers.begin(), peers.end(), [&](const ObjectRecord* p) { return center_x(p->box) == cx; });
    if (ordered) return TaskCategory::kInteraction;
  }

  if (!peers.empty()) {
    for (const Relation& r : target.relations) {
      const ObjectRecord* anchor = context.find(r.anchor);
      if (anchor == nullptr || anchor->category == target.category) continue;
      const bool unique = std::none_of(peers.begin(), peers.end(), [&](const ObjectRecord* p) { return has_relation(*p, r); });
      if (unique) return TaskCategory::kPosition;
    }
  }

  for (const ObjectRecord& anchor : context.objects) {
    if (anchor.index == target.index || anchor.category == target.category) continue;
    for (const std::string& a : target.attributes) {
      const bool peers_lack = std::none_of(peers.begin(), peers.end(), [&](const ObjectRecord* p) { return has_attribute(*p, a); });
      if (has_attribute(anchor, a) && peers_lack) return TaskCategory::kRelation;
      const auto [key, value] = split_typed(a);
      if (key.empty()) continue;
      for (const std::string& b : anchor.attributes) {
        const auto [bkey, bvalue] = split_typed(b);
        if (bkey == key && bvalue != value && peers_lack) return TaskCategory::kRelation;
      }
    }
  }

  if (!target.function_tag.empty()) return TaskCategory::kCommonsense;
  return TaskCategory::kReject;
}

int hop_count_for(TaskCategory task) noexcept {
  return task == TaskCategory::kPosition || task == TaskCategory::kRelation ? 1 : 0;
}

std::vector<CandidateExpression> generate_expressions(const ObjectRecord& target, TaskCategory task,
                                                      const ImageRecord& context, const ClientSuite& suite,
                                                      const PipelineConfig& cfg, RequestGate* gate) {
  const std::string task_name(to_string(task));
  json ctx = json::array();
  for (const ObjectRecord& o : context.objects) {
    if (o.index != target.index) ctx.push_back({{"index", o.index}, {"category", o.category}, {"description", o.description}});
  }
  const auto prompt = cfg.prompts.generator.find(task_name);
  const CallResult res = call(suite, ClientRole::kGenerator, context.image_ref,
                              {{"prompt", prompt == cfg.prompts.generator.end() ? std::string() : prompt->second},
                               {"task", task_name},
                               {"object", object_payload(target, context)},
                               {"context", ctx},
                               {"count", cfg.candidates_per_object}},
                              cfg, gate);
  if (!res.response.is_object() || !res.response.contains("expressions")) {
    throw SchemaError("generator response needs an 'expressions' array", "generator.expressions");
  }
  const std::vector<std::string> texts = string_list(res.response, "expressions", "generator");
  std::vector<CandidateExpression> out;
  for (const std::string& t : texts) {
    if (static_cast<int>(out.size()) == cfg.candidates_per_object) break;
    if (t.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    out.push_back(CandidateExpression{target.index, static_cast<int>(out.size()), task, t, std::nullopt, std::nullopt});
  }
  return out;
}

CandidateExpression correct_expression(CandidateExpression cand, const ObjectRecord& target,
                                       const std::string& image_ref, const ClientSuite& suite,
                                       const PipelineConfig& cfg, RequestGate* gate) {
  if (cand.text.empty()) throw InvalidInput("candidate expression text is empty");
  const bool reject = cand.task == TaskCategory::kReject;
  json box = reject ? json(nullptr) : box_json(target.box);
  const CallResult c = call(suite, ClientRole::kVerifier, image_ref,
                            {{"task", "expression_consistency"},
                             {"box", box},
                             {"expression", cand.text},
                             {"task_category", std::string(to_string(cand.task))}},
                            cfg, gate);
  cand.consistency = required_bool(c.response, "consistent", "consistency");

  const CallResult g = call(suite, ClientRole::kGrounder, image_ref, {{"phrase", cand.text}}, cfg, gate);
  std::vector<Detection> confident;
  for (const Detection& d : read_detections(g.response)) {
    if (d.score >= cfg.s_min) confident.push_back(d);
  }
  if (reject) {
    cand.uniqueness = confident.empty();
  } else {
    cand.uniqueness = confident.size() == 1 && is_valid(confident.front().box) &&
                      iou(confident.front().box, target.box) >= cfg.uniqueness_iou;
  }
  return cand;
}

json AuditRecord::to_json() const {
  json j = {{"image_ref", image_ref}, {"object_index", object_index}};
  j["candidate_index"] = candidate_index ? json(*candidate_index) : json(nullptr);
  j["stage"] = stage;
  j["verdict"] = verdict;
  j["reason"] = reason;
  if (sample_id) j["sample_id"] = *sample_id;
  return j;
}

json PipelineStats::to_json() const {
  return {{"images", images},
          {"images_kept", images_kept},
          {"images_dropped", images_dropped},
          {"objects", objects},
          {"objects_dropped", objects_dropped},
          {"objects_generated", objects_generated},
          {"candidates", candidates},
          {"candidates_dropped", candidates_dropped},
          {"samples", samples}};
}

PipelineResult run_pipeline(const std::vector<ManifestEntry>& manifest, const ClientSuite& suite,
                            const PipelineConfig& cfg) {
  cfg.validate();
  for (ClientRole r : {ClientRole::kParser, ClientRole::kGrounder, ClientRole::kVerifier, ClientRole::kGenerator}) {
    suite.get(r);
  }
  for (const ManifestEntry& e : manifest) validate(e.dims);

  RequestGate gate(cfg.max_inflight);
  std::vector<ImageOutcome> outcomes(manifest.size());
  parallel_for(manifest.size(), cfg.threads,
               [&](std::size_t i) { outcomes[i] = process_image(manifest[i], suite, cfg, &gate); });

  PipelineResult result;
  for (ImageOutcome& o : outcomes) {
    std::move(o.samples.begin(), o.samples.end(), std::back_inserter(result.samples));
    std::move(o.audit.begin(), o.audit.end(), std::back_inserter(result.audit));
    add(result.stats, o.stats);
  }
  return result;
}

void write_pipeline_outputs(const PipelineResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / "samples.jsonl", std::ios::binary);
    if (!os) throw std::runtime_error("cannot write " + (dir / "samples.jsonl").string());
    write_samples_jsonl(os, result.samples);
  }
  std::ofstream os(dir / "audit.jsonl", std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + (dir / "audit.jsonl").string());
  for (const AuditRecord& r : result.audit) os << r.to_json().dump() << '\n';
}

}  // namespace refrec
