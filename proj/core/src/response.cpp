#include "refrec/response.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <fstream>

#include <nlohmann/json.hpp>

#include "refrec/errors.hpp"

namespace refrec {

namespace {

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kAnswerOpen = "<answer>";
constexpr std::string_view kAnswerClose = "</answer>";

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

bool blank(std::string_view s) { return trim(s).empty(); }

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// Cursor-based scanner for the bracketed quadruple grammar:
//   '[' num ',' num ',' num ',' num ']'   with num := [+-]? (digits ('.' digits?)? | '.' digits)
class QuadScanner {
 public:
  explicit QuadScanner(std::string_view s, std::size_t pos = 0) : s_(s), pos_(pos) {}

  std::optional<std::array<double, 4>> scan() {
    std::array<double, 4> out{};
    skip_ws();
    if (!eat('[')) return std::nullopt;
    for (std::size_t i = 0; i < 4; ++i) {
      skip_ws();
      auto v = number();
      if (!v) return std::nullopt;
      out[i] = *v;
      skip_ws();
      if (!eat(i == 3 ? ']' : ',')) return std::nullopt;
    }
    return out;
  }

  std::size_t pos() const noexcept { return pos_; }

 private:
  void skip_ws() {
    while (pos_ < s_.size() && is_space(s_[pos_])) ++pos_;
  }

  bool eat(char c) {
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  std::optional<double> number() {
    const std::size_t start = pos_;
    std::size_t p = pos_;
    if (p < s_.size() && (s_[p] == '+' || s_[p] == '-')) ++p;
    std::size_t int_digits = 0;
    while (p < s_.size() && std::isdigit(static_cast<unsigned char>(s_[p]))) ++p, ++int_digits;
    std::size_t frac_digits = 0;
    if (p < s_.size() && s_[p] == '.') {
      ++p;
      while (p < s_.size() && std::isdigit(static_cast<unsigned char>(s_[p]))) ++p, ++frac_digits;
    }
    if (int_digits + frac_digits == 0) return std::nullopt;
    // Exponents are outside the grammar.
    if (p < s_.size() && (s_[p] == 'e' || s_[p] == 'E')) return std::nullopt;

    std::string_view token = s_.substr(start, p - start);
    const bool negative = !token.empty() && token.front() == '-';
    if (!token.empty() && (token.front() == '+' || token.front() == '-')) token.remove_prefix(1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value,
                                     std::chars_format::fixed);
    if (ec != std::errc{} || ptr != token.data() + token.size()) return std::nullopt;
    pos_ = p;
    return negative ? -value : value;
  }

  std::string_view s_;
  std::size_t pos_;
};

Box to_box(const std::array<double, 4>& q) { return Box{q[0], q[1], q[2], q[3]}; }

struct Segments {
  std::string_view think;
  std::string_view answer;
  std::string_view tail;
};

// Splits the template; on failure returns the malformed reason.
std::variant<Segments, MalformedReason> split_template(std::string_view text) {
  const auto to = text.find(kThinkOpen);
  const auto tc = text.find(kThinkClose);
  const auto ao = text.find(kAnswerOpen);
  const auto ac = text.find(kAnswerClose);
  constexpr auto npos = std::string_view::npos;
  if (to == npos || tc == npos || ao == npos || ac == npos) {
    return MalformedReason::kMissingTags;
  }
  if (!(to < tc && tc < ao && ao < ac)) {
    return MalformedReason::kBadTagOrder;
  }
  Segments seg;
  seg.think = text.substr(to + kThinkOpen.size(), tc - to - kThinkOpen.size());
  seg.answer = text.substr(ao + kAnswerOpen.size(), ac - ao - kAnswerOpen.size());
  seg.tail = text.substr(ac + kAnswerClose.size());
  // Stray content before <think> or between the blocks breaks the strict template too.
  const std::string_view head = text.substr(0, to);
  const std::string_view middle = text.substr(tc + kThinkClose.size(), ao - tc - kThinkClose.size());
  if (!blank(head) || !blank(middle)) {
    seg.tail = text;  // forces the trailing-garbage check below to fail
  }
  return seg;
}

bool is_abstain_answer(std::string_view answer, const RejectionLexicon& lexicon) {
  const std::string_view body = trim(answer);
  if (body.empty()) return true;
  const std::string l = lower(body);
  if (l == "none" || l == "null") return true;
  return lexicon.matches(body);
}

}  // namespace

std::string_view to_string(MalformedReason reason) noexcept {
  switch (reason) {
    case MalformedReason::kMissingTags: return "missing-tags";
    case MalformedReason::kBadTagOrder: return "bad-tag-order";
    case MalformedReason::kUnparseableCoordinates: return "unparseable-coordinates";
    case MalformedReason::kDegenerateBox: return "degenerate-box";
    case MalformedReason::kTrailingGarbage: return "trailing-garbage";
  }
  return "unknown";
}

std::optional<Box> ParsedResponse::box() const {
  if (const auto* b = std::get_if<BoxAnswer>(&answer)) return b->box;
  return std::nullopt;
}

RejectionLexicon::RejectionLexicon(std::vector<std::string> phrases) : phrases_(std::move(phrases)) {
  if (phrases_.empty()) {
    throw InvalidInput("rejection lexicon must contain at least one phrase");
  }
  lowered_.reserve(phrases_.size());
  for (const auto& p : phrases_) {
    const std::string_view t = trim(p);
    if (t.empty()) {
      throw InvalidInput("rejection lexicon phrases must be non-empty");
    }
    lowered_.push_back(lower(t));
  }
}

const RejectionLexicon& RejectionLexicon::default_lexicon() {
  static const RejectionLexicon lexicon({"not present", "does not exist", "no such object",
                                         "cannot find", "absent"});
  return lexicon;
}

RejectionLexicon RejectionLexicon::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw SchemaError("cannot open rejection lexicon " + path.string());
  }
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError("rejection lexicon " + path.string() + " is not valid JSON: " + e.what());
  }
  if (!doc.is_array()) {
    throw SchemaError("rejection lexicon must be a JSON array of strings", "lexicon");
  }
  std::vector<std::string> phrases;
  for (const auto& item : doc) {
    if (!item.is_string()) {
      throw SchemaError("rejection lexicon entries must be strings", "lexicon[]");
    }
    phrases.push_back(item.get<std::string>());
  }
  try {
    return RejectionLexicon(std::move(phrases));
  } catch (const InvalidInput& e) {
    throw SchemaError(e.what(), "lexicon");
  }
}

bool RejectionLexicon::matches(std::string_view text) const {
  const std::string l = lower(text);
  return std::any_of(lowered_.begin(), lowered_.end(),
                     [&](const std::string& p) { return l.find(p) != std::string::npos; });
}

ParsedResponse parse(std::string_view text, const RejectionLexicon& lexicon) {
  ParsedResponse out;
  auto split = split_template(text);
  if (const auto* reason = std::get_if<MalformedReason>(&split)) {
    out.answer = Malformed{*reason};
    return out;
  }
  const auto& seg = std::get<Segments>(split);
  out.think_text = std::string(trim(seg.think));

  Answer answer;
  if (is_abstain_answer(seg.answer, lexicon)) {
    answer = Abstain{};
  } else {
    QuadScanner scanner(seg.answer);
    auto quad = scanner.scan();
    if (!quad || !blank(seg.answer.substr(scanner.pos()))) {
      answer = Malformed{MalformedReason::kUnparseableCoordinates};
    } else if (!is_valid(to_box(*quad))) {
      answer = Malformed{MalformedReason::kDegenerateBox};
    } else {
      answer = BoxAnswer{to_box(*quad)};
    }
  }
  if (!std::holds_alternative<Malformed>(answer) && !blank(seg.tail)) {
    answer = Malformed{MalformedReason::kTrailingGarbage};
  }
  out.answer = answer;
  return out;
}

ParsedResponse parse(std::string_view text) { return parse(text, RejectionLexicon::default_lexicon()); }

int format_reward(const ParsedResponse& response) noexcept { return response.is_malformed() ? 0 : 1; }

bool detect_rejection(std::string_view text, const RejectionLexicon& lexicon) {
  // A template-shaped response is judged on its answer block; anything else on the whole text.
  std::string_view scope = text;
  auto split = split_template(text);
  if (const auto* seg = std::get_if<Segments>(&split)) {
    scope = seg->answer;
  }
  if (lexicon.matches(scope)) return true;
  for (std::size_t pos = scope.find('['); pos != std::string_view::npos;
       pos = scope.find('[', pos + 1)) {
    QuadScanner scanner(scope, pos);
    if (auto quad = scanner.scan(); quad && is_valid(to_box(*quad))) {
      return false;
    }
  }
  return true;
}

std::string format_coordinate(double value) {
  std::array<char, 64> buf{};
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value, std::chars_format::fixed);
  if (ec != std::errc{}) {
    throw InvalidInput("coordinate cannot be formatted");
  }
  return std::string(buf.data(), ptr);
}

std::string render_box_response(const Box& box, std::string_view think) {
  std::string out;
  out.reserve(think.size() + 64);
  out += kThinkOpen;
  out += think;
  out += kThinkClose;
  out += kAnswerOpen;
  out += '[';
  out += format_coordinate(box.x1);
  out += ", ";
  out += format_coordinate(box.y1);
  out += ", ";
  out += format_coordinate(box.x2);
  out += ", ";
  out += format_coordinate(box.y2);
  out += ']';
  out += kAnswerClose;
  return out;
}

std::string render_abstain_response(std::string_view think) {
  std::string out;
  out += kThinkOpen;
  out += think;
  out += kThinkClose;
  out += kAnswerOpen;
  out += "The object is not present.";
  out += kAnswerClose;
  return out;
}

}  // namespace refrec
