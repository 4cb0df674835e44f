#pragma once

// Error-minimizing word substitution: rank every (position, substitute)
// pair by the first-order loss change e_s . dL/de_{w_p} and return the
// lowest-scoring pair that satisfies the constraints.

#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_set>

#include "unlearn/embedding.hpp"
#include "unlearn/models.hpp"

namespace unlearn {

struct Modification {
  std::string instance_id;
  std::size_t position = 0;
  TokenId substitute = Vocabulary::kUnk;

  bool operator==(const Modification&) const = default;
};

/// A[t][s] = e_s . grad_t, shape T x n.
struct ScoreMatrix {
  Matrix values;
};

struct ConstraintSet {
  /// Absent means no similarity constraint.
  const NeighborIndex* similarity = nullptr;
  std::set<std::size_t> excluded_positions;
  /// Never used as substitutes, in addition to the specials and the incumbent word.
  std::unordered_set<TokenId> excluded_words;
  static constexpr std::size_t kMaxModificationsPerText = 1;
};

/// One matrix product, accumulated in ascending embedding-dimension order.
ScoreMatrix approx_scores(const Matrix& input_grads, const Matrix& embeddings);

/// Whether substituting `s` at position `p` of `tokens` satisfies `constraints`.
bool admissible(std::span<const TokenId> tokens, std::size_t p, TokenId s, const ConstraintSet& constraints);

/// Walks candidates in ascending score order (ties: lower position, then
/// lower word id) and returns the first admissible one, or nullopt.
std::optional<Modification> first_admissible(const ScoreMatrix& scores, std::span<const TokenId> tokens,
                                             const ConstraintSet& constraints);

/// Throws "no admissible modification" when every candidate is rejected.
Modification search_modification(const ClassifierModel& model, const TextInstance& instance,
                                 const ConstraintSet& constraints);
/// Positions inside the answer span are always excluded.
Modification search_modification(const SpanModel& model, const QAInstance& instance,
                                 const ConstraintSet& constraints);

TextInstance apply_modification(const TextInstance& instance, const Modification& mod);
QAInstance apply_modification(const QAInstance& instance, const Modification& mod);

/// loss(modified) − loss(original) from two forward passes.
double exact_loss_delta(const ClassifierModel& model, const TextInstance& instance, const Modification& mod);
double exact_loss_delta(const SpanModel& model, const QAInstance& instance, const Modification& mod);

}  // namespace unlearn
