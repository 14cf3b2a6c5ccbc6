#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "refrec/geometry.hpp"

namespace refrec {

enum class MalformedReason {
  kMissingTags,
  kBadTagOrder,
  kUnparseableCoordinates,
  kDegenerateBox,
  kTrailingGarbage,
};

std::string_view to_string(MalformedReason reason) noexcept;

struct BoxAnswer {
  Box box;
  friend bool operator==(const BoxAnswer&, const BoxAnswer&) = default;
};

struct Abstain {
  friend bool operator==(const Abstain&, const Abstain&) = default;
};

struct Malformed {
  MalformedReason reason = MalformedReason::kMissingTags;
  friend bool operator==(const Malformed&, const Malformed&) = default;
};

using Answer = std::variant<BoxAnswer, Abstain, Malformed>;

struct ParsedResponse {
  std::string think_text;
  Answer answer;

  bool has_box() const noexcept { return std::holds_alternative<BoxAnswer>(answer); }
  bool is_abstain() const noexcept { return std::holds_alternative<Abstain>(answer); }
  bool is_malformed() const noexcept { return std::holds_alternative<Malformed>(answer); }
  std::optional<Box> box() const;

  friend bool operator==(const ParsedResponse&, const ParsedResponse&) = default;
};

/// Ordered, case-insensitive absence phrases used to recognise abstentions.
class RejectionLexicon {
 public:
  /// Throws InvalidInput when empty or when a phrase is blank after trimming.
  explicit RejectionLexicon(std::vector<std::string> phrases);

  static const RejectionLexicon& default_lexicon();
  /// Loads a JSON array of strings. Throws SchemaError on a bad file.
  static RejectionLexicon from_json_file(const std::filesystem::path& path);

  bool matches(std::string_view text) const;
  const std::vector<std::string>& phrases() const noexcept { return phrases_; }

 private:
  std::vector<std::string> phrases_;
  std::vector<std::string> lowered_;
};

/// Parses `<think>...</think><answer>[x1, y1, x2, y2]</answer>`. Total: a
/// malformed response is reported as a value.
ParsedResponse parse(std::string_view text, const RejectionLexicon& lexicon);
ParsedResponse parse(std::string_view text);

/// 1 for well-formed box answers and abstentions, 0 for malformed output.
int format_reward(const ParsedResponse& response) noexcept;

/// True when the text yields no valid box or states that the target is absent.
bool detect_rejection(std::string_view text, const RejectionLexicon& lexicon);

/// Canonical template rendering used by the toy trainer and round-trip tests.
std::string render_box_response(const Box& box, std::string_view think);
std::string render_abstain_response(std::string_view think);

/// Shortest fixed-notation decimal that parses back to the same double.
std::string format_coordinate(double value);

}  // namespace refrec
