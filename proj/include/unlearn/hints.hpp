#pragma once

// Synthetic unlearnable patterns: class-wise label hints for classification
// and answer hints next to QA answer spans.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "unlearn/corpus.hpp"

namespace unlearn {

enum class HintKind { label, answer };
enum class Placement { begin, middle, end, replace_final };
enum class AnswerSide { before, after, surround };

std::string_view to_string(HintKind k);
std::string_view to_string(Placement p);
std::string_view to_string(AnswerSide s);

struct HintSpec {
  HintKind kind = HintKind::label;
  /// Label hints: class id -> hint token.
  std::map<int, std::string> symbols;
  Placement placement = Placement::end;
  /// Answer hints.
  std::string answer_symbol;
  AnswerSide side = AnswerSide::surround;
  /// Fraction of (eligible) instances to hint, in (0, 1].
  double fraction = 1.0;
  std::optional<int> target_class;
  std::uint64_t seed = 1;

  /// Distinct single-token symbols, fraction in range.
  void validate() const;

  nlohmann::json to_json() const;
  static HintSpec from_json(const nlohmann::json& j);
};

/// Appends the hint symbols to the vocabulary (no-op for tokens already present).
void register_hint_symbols(Vocabulary& vocab, const HintSpec& spec);

/// begin: prepend; end: append; middle: insert at ceil(T/2); replace_final:
/// overwrite the last token (falls back to append when T = 1).
TextInstance inject_label_hint(const TextInstance& instance, const HintSpec& spec, const Vocabulary& vocab);

/// before: insert at start, span shifts by one; after: insert at end+1;
/// surround: both. Answer tokens are never altered.
QAInstance inject_answer_hint(const QAInstance& instance, const HintSpec& spec, const Vocabulary& vocab);

struct HintedDataset {
  Dataset data;
  std::vector<std::string> touched_ids;  ///< in dataset order
};

/// Hints a seeded uniform sample of floor(fraction * N) instances, where N
/// counts the target class only when one is set.
HintedDataset apply_hints(const Dataset& data, const HintSpec& spec, const Vocabulary& vocab);

}  // namespace unlearn
