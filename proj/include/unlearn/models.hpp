#pragma once

// Micro networks with hand-written backpropagation: a text classifier
// (mean-pool or Elman recurrent encoder) and a span-extraction QA model
// (bidirectional recurrent passage encoder conditioned on a question summary).

#include <cstdint>
#include <vector>

#include "unlearn/corpus.hpp"
#include "unlearn/embedding.hpp"
#include "unlearn/parameters.hpp"

namespace unlearn {

/// Tags a model object so activation caches can detect they are stale.
/// Copies receive a fresh uid.
class ModelIdentity {
 public:
  ModelIdentity();
  ModelIdentity(const ModelIdentity&);
  ModelIdentity& operator=(const ModelIdentity&);
  ModelIdentity(ModelIdentity&&) noexcept = default;
  ModelIdentity& operator=(ModelIdentity&&) noexcept = default;

  std::uint64_t uid() const noexcept { return uid_; }
  std::uint64_t version() const noexcept { return version_; }
  void bump() noexcept { ++version_; }

 private:
  std::uint64_t uid_;
  std::uint64_t version_ = 0;
};

enum class Encoder { mean_pool, recurrent };
/// How the recurrent encoder summarizes its hidden states.
/// concat is [last; max].
enum class Pooling { last, max, concat };

std::string_view to_string(Encoder e);
Encoder parse_encoder(std::string_view text);
std::string_view to_string(Pooling p);
Pooling parse_pooling(std::string_view text);

struct ClassifierConfig {
  std::size_t vocab_size = 0;
  std::size_t embedding_dim = 32;
  std::size_t hidden = 32;
  int num_classes = 2;
  Encoder encoder = Encoder::recurrent;
  Pooling pooling = Pooling::concat;
  std::uint64_t seed = 1;
};

class ClassifierModel {
 public:
  enum Param : std::size_t { kEmbedding = 0, kHeadW, kHeadB, kInputW, kRecurW, kRecurB };

  explicit ClassifierModel(const ClassifierConfig& config);
  ClassifierModel(const ClassifierConfig& config, EmbeddingMatrix embeddings);

  const ClassifierConfig& config() const noexcept { return config_; }
  const ParameterSet& parameters() const noexcept { return params_; }
  /// Mutable access invalidates outstanding activation caches.
  ParameterSet& mutable_parameters() {
    identity_.bump();
    return params_;
  }
  const Matrix& embedding() const { return params_[kEmbedding]; }
  /// Width of the pooled feature fed to the head.
  std::size_t feature_dim() const noexcept;
  const ModelIdentity& identity() const noexcept { return identity_; }

 private:
  void init_rest(std::uint64_t seed);

  ClassifierConfig config_;
  ParameterSet params_;
  ModelIdentity identity_;
};

struct ClassifierCache {
  std::uint64_t model_uid = 0;
  std::uint64_t model_version = 0;
  std::vector<TokenId> tokens;
  int label = 0;
  Matrix inputs;   ///< T x m
  Matrix hidden;   ///< T x H (recurrent only)
  std::vector<Eigen::Index> argmax;  ///< max pooling: source step per unit
  Vector features;
  Vector probs;
  double loss = 0.0;
};

struct ClassifyResult {
  Vector probs;
  double loss = 0.0;
  ClassifierCache cache;
};

ClassifyResult forward_classify(const ClassifierModel& model, const TextInstance& instance);
/// Class distribution only, no cache.
Vector predict_proba(const ClassifierModel& model, const std::vector<TokenId>& tokens);

/// Exact gradients of the cached loss. Throws "stale cache" when the model
/// changed (or is a different object) since the forward pass.
GradientBundle backward(const ClassifierModel& model, const ClassifierCache& cache);
/// Adds scale * dL/dθ into `acc` and returns the input-embedding gradients.
Matrix backward_into(const ClassifierModel& model, const ClassifierCache& cache, ParameterSet& acc, double scale);

// ---------------------------------------------------------------------------

struct SpanConfig {
  std::size_t vocab_size = 0;
  std::size_t embedding_dim = 32;
  std::size_t hidden = 32;
  std::size_t max_span_length = 15;
  std::uint64_t seed = 1;
};

class SpanModel {
 public:
  enum Param : std::size_t {
    kEmbedding = 0,
    kFwdInputW, kFwdRecurW, kFwdB,
    kBwdInputW, kBwdRecurW, kBwdB,
    kQuestionW, kQuestionB,
    kStartW, kStartB,
    kEndW, kEndB,
  };

  explicit SpanModel(const SpanConfig& config);
  SpanModel(const SpanConfig& config, EmbeddingMatrix embeddings);

  const SpanConfig& config() const noexcept { return config_; }
  const ParameterSet& parameters() const noexcept { return params_; }
  ParameterSet& mutable_parameters() {
    identity_.bump();
    return params_;
  }
  const Matrix& embedding() const { return params_[kEmbedding]; }
  const ModelIdentity& identity() const noexcept { return identity_; }

 private:
  void init_rest(std::uint64_t seed);

  SpanConfig config_;
  ParameterSet params_;
  ModelIdentity identity_;
};

struct SpanCache {
  std::uint64_t model_uid = 0;
  std::uint64_t model_version = 0;
  std::vector<TokenId> passage;
  std::vector<TokenId> question;
  AnswerSpan answer;
  Matrix passage_inputs;   ///< L x m
  Matrix fwd_hidden;       ///< L x H
  Matrix bwd_hidden;       ///< L x H
  Vector question_mean;    ///< m
  Vector question_vec;     ///< 2H
  Matrix reps;             ///< L x 6H: [h; q; h*q]
  Vector start_probs;
  Vector end_probs;
  double loss = 0.0;
};

struct SpanResult {
  Vector start_probs;
  Vector end_probs;
  double loss = 0.0;
  SpanCache cache;
};

SpanResult forward_span(const SpanModel& model, const QAInstance& instance);
GradientBundle backward(const SpanModel& model, const SpanCache& cache);
Matrix backward_into(const SpanModel& model, const SpanCache& cache, ParameterSet& acc, double scale,
                     Matrix* question_grads = nullptr);

/// Best (start, end) with start <= end, end - start < max_len, maximizing
/// Pr_start * Pr_end. Ties go to the earliest pair.
AnswerSpan decode_span(const Vector& start_probs, const Vector& end_probs, std::size_t max_len);

/// Numerically stable softmax.
Vector softmax(const Vector& logits);

}  // namespace unlearn
