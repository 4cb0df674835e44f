#pragma once

// Gradient-descent training, evaluation metrics and the per-step trace.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "unlearn/corpus.hpp"
#include "unlearn/models.hpp"
#include "unlearn/trace.hpp"

namespace unlearn {

struct TrainConfig {
  double learning_rate = 0.5;
  /// Global-norm clip; 0 disables clipping.
  double max_grad_norm = 5.0;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 10;
  /// Epochs without validation improvement before stopping; 0 disables.
  std::size_t patience = 0;
  std::uint64_t seed = 1;

  void validate() const;
};

/// θ ← θ − γ·clip(∇θ L). The pad embedding row is never updated.
/// Throws "diverged" on non-finite gradients.
void sgd_step(ClassifierModel& model, const ParameterSet& grads, const TrainConfig& config);
void sgd_step(SpanModel& model, const ParameterSet& grads, const TrainConfig& config);

struct Metrics {
  TaskKind task = TaskKind::classification;
  std::size_t count = 0;
  double mean_loss = 0.0;
  // Classification.
  double accuracy = 0.0;
  /// Accuracy restricted to each gold class; NaN for classes absent from the data.
  std::vector<double> per_class_accuracy;
  // QA.
  double exact_match = 0.0;
  double f1 = 0.0;

  /// Accuracy for classification, F1 for QA.
  double primary() const noexcept { return task == TaskKind::classification ? accuracy : f1; }
  std::string_view primary_name() const noexcept { return task == TaskKind::classification ? "accuracy" : "f1"; }
};

Metrics evaluate(const ClassifierModel& model, const Dataset& data);
Metrics evaluate(const SpanModel& model, const Dataset& data);

/// Token-multiset F1 between a predicted and a gold span of the same passage.
double span_f1(std::span<const TokenId> passage, AnswerSpan predicted, AnswerSpan gold);

struct StepStats {
  double loss = 0.0;
  double grad_norm = 0.0;  ///< before clipping
};

/// Mean loss/gradient over the given instances followed by one SGD step.
StepStats train_step(ClassifierModel& model, std::span<const TextInstance* const> batch, const TrainConfig& config);
StepStats train_step(SpanModel& model, std::span<const QAInstance* const> batch, const TrainConfig& config);

/// Mean-loss gradient over a batch without updating the model.
GradientBundle batch_gradient(const ClassifierModel& model, std::span<const TextInstance* const> batch);
GradientBundle batch_gradient(const SpanModel& model, std::span<const QAInstance* const> batch);

struct EvalTarget {
  const Dataset* data = nullptr;
  std::string name;  ///< split label in the trace
};

struct TrainResult {
  MetricTrace trace;
  std::size_t steps = 0;
  std::size_t epochs = 0;
  bool early_stopped = false;
};

/// Seeded-shuffle minibatch SGD. Logs per-step train loss and gradient
/// norm, and after every epoch the primary metric (plus per-class accuracy
/// for classification) of each eval target. When `early_stop` is given and
/// config.patience > 0, stops after `patience` epochs without improvement on it.
TrainResult train_model(ClassifierModel& model, const Dataset& train, std::span<const EvalTarget> evals,
                        const TrainConfig& config, const Dataset* early_stop = nullptr);
TrainResult train_model(SpanModel& model, const Dataset& train, std::span<const EvalTarget> evals,
                        const TrainConfig& config, const Dataset* early_stop = nullptr);

}  // namespace unlearn
