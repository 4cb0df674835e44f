#include "unlearn/search.hpp"

#include <algorithm>
#include <cstdint>
#include <vector>

#include "unlearn/error.hpp"

namespace unlearn {

ScoreMatrix approx_scores(const Matrix& input_grads, const Matrix& embeddings) {
  if (input_grads.cols() != embeddings.cols())
    throw Error("gradient width " + std::to_string(input_grads.cols()) + " differs from embedding width " +
                std::to_string(embeddings.cols()));
  const auto T = input_grads.rows();
  const auto n = embeddings.rows();
  const auto m = embeddings.cols();
  ScoreMatrix A{Matrix(T, n)};
  for (Eigen::Index t = 0; t < T; ++t) {
    const double* g = input_grads.row(t).data();
    for (Eigen::Index s = 0; s < n; ++s) {
      const double* e = embeddings.row(s).data();
      double acc = 0.0;
      for (Eigen::Index k = 0; k < m; ++k) acc += e[k] * g[k];
      A.values(t, s) = acc;
    }
  }
  return A;
}

bool admissible(std::span<const TokenId> tokens, std::size_t p, TokenId s, const ConstraintSet& constraints) {
  if (p >= tokens.size()) return false;
  if (Vocabulary::is_special(s) || s == tokens[p]) return false;
  if (constraints.excluded_positions.count(p)) return false;
  if (constraints.excluded_words.count(s)) return false;
  if (constraints.similarity) {
    const TokenId w = tokens[p];
    if (static_cast<std::size_t>(w) >= constraints.similarity->size()) return false;
    if (!constraints.similarity->contains(w, s)) return false;
  }
  return true;
}

std::optional<Modification> first_admissible(const ScoreMatrix& scores, std::span<const TokenId> tokens,
                                             const ConstraintSet& constraints) {
  const auto T = static_cast<std::size_t>(scores.values.rows());
  const auto n = static_cast<std::size_t>(scores.values.cols());
  if (T != tokens.size()) throw Error("score rows differ from instance length");

  struct Candidate {
    double score;
    std::uint32_t p;
    std::int32_t s;
  };
  // Min-heap on (score, p, s); popped lazily so the walk stops at the first hit.
  auto worse = [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.p != b.p) return a.p > b.p;
    return a.s > b.s;
  };
  std::vector<Candidate> heap;
  heap.reserve(T * n);
  for (std::size_t p = 0; p < T; ++p) {
    if (constraints.excluded_positions.count(p)) continue;
    for (std::size_t s = 0; s < n; ++s)
      heap.push_back({scores.values(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(s)),
                      static_cast<std::uint32_t>(p), static_cast<std::int32_t>(s)});
  }
  std::make_heap(heap.begin(), heap.end(), worse);
  while (!heap.empty()) {
    std::pop_heap(heap.begin(), heap.end(), worse);
    const Candidate c = heap.back();
    heap.pop_back();
    if (admissible(tokens, c.p, c.s, constraints)) return Modification{{}, c.p, c.s};
  }
  return std::nullopt;
}

Modification search_modification(const ClassifierModel& model, const TextInstance& instance,
                                 const ConstraintSet& constraints) {
  auto fwd = forward_classify(model, instance);
  GradientBundle g = backward(model, fwd.cache);
  auto found = first_admissible(approx_scores(g.input_grads, model.embedding()), instance.tokens, constraints);
  if (!found) throw Error("no admissible modification for instance '" + instance.id + "'");
  found->instance_id = instance.id;
  return *found;
}

Modification search_modification(const SpanModel& model, const QAInstance& instance,
                                 const ConstraintSet& constraints) {
  ConstraintSet c = constraints;
  for (std::size_t p = instance.answer.start; p <= instance.answer.end && p < instance.passage.size(); ++p)
    c.excluded_positions.insert(p);
  auto fwd = forward_span(model, instance);
  GradientBundle g = backward(model, fwd.cache);
  auto found = first_admissible(approx_scores(g.input_grads, model.embedding()), instance.passage, c);
  if (!found) throw Error("no admissible modification for instance '" + instance.id + "'");
  found->instance_id = instance.id;
  return *found;
}

TextInstance apply_modification(const TextInstance& instance, const Modification& mod) {
  if (mod.position >= instance.tokens.size())
    throw Error("modification position " + std::to_string(mod.position) + " outside instance '" + instance.id + "'");
  TextInstance out = instance;
  out.tokens[mod.position] = mod.substitute;
  return out;
}

QAInstance apply_modification(const QAInstance& instance, const Modification& mod) {
  if (mod.position >= instance.passage.size())
    throw Error("modification position " + std::to_string(mod.position) + " outside instance '" + instance.id + "'");
  QAInstance out = instance;
  out.passage[mod.position] = mod.substitute;
  return out;
}

double exact_loss_delta(const ClassifierModel& model, const TextInstance& instance, const Modification& mod) {
  const double before = forward_classify(model, instance).loss;
  const double after = forward_classify(model, apply_modification(instance, mod)).loss;
  return after - before;
}

double exact_loss_delta(const SpanModel& model, const QAInstance& instance, const Modification& mod) {
  const double before = forward_span(model, instance).loss;
  const double after = forward_span(model, apply_modification(instance, mod)).loss;
  return after - before;
}

}  // namespace unlearn
