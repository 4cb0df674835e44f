#pragma once

// Min-min driver: interleaves training with milestone-wise regeneration of
// error-minimizing noise and stops once the evaluation metric stops improving.

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "unlearn/search.hpp"
#include "unlearn/training.hpp"

namespace unlearn {

/// Noise generated at one milestone (Error-min-i).
struct NoiseSet {
  std::size_t milestone = 0;
  std::size_t step = 0;  ///< training steps taken when generated (milestone * M)
  std::map<std::string, Modification> modifications;
  /// Instances whose search found no admissible candidate; left unmodified.
  std::vector<std::string> failures;

  bool operator==(const NoiseSet&) const = default;
};

struct MinMinConfig {
  std::size_t interval = 30;  ///< M: training steps between noise updates
  /// Required gain over the best metric; 0 means strictly greater.
  double epsilon = 0.0;
  /// Rebuild a similarity index from the model's embeddings at every milestone.
  std::optional<double> similarity_threshold;
  std::string eval_split = "test";

  void validate() const;
};

struct MinMinResult {
  std::vector<NoiseSet> noise_sets;
  /// One entry per milestone evaluation, including the one that ended the run.
  std::vector<double> milestone_metrics;
  MetricTrace trace;
  std::string eval_split;
  std::size_t steps = 0;
  bool plateaued = false;
};

/// Model-independent schedule. `train_step` receives indices into the
/// training set and the noise currently in force.
struct MinMinHooks {
  std::function<double()> evaluate;
  std::function<NoiseSet(std::size_t milestone, std::size_t step)> regenerate;
  std::function<StepStats(std::span<const std::size_t> batch, const NoiseSet& current)> train_step;
  std::string metric_name = "metric";
};

MinMinResult run_minmin_schedule(std::size_t train_size, const TrainConfig& train, const MinMinConfig& config,
                                 MinMinHooks& hooks);

/// Runs error-min search on every training instance. Failures are logged and skipped.
NoiseSet generate_noise(const ClassifierModel& model, const Dataset& train, const ConstraintSet& constraints,
                        std::size_t milestone = 0, std::size_t step = 0);
NoiseSet generate_noise(const SpanModel& model, const Dataset& train, const ConstraintSet& constraints,
                        std::size_t milestone = 0, std::size_t step = 0);

/// `base` constraints apply at every milestone; when config.similarity_threshold
/// is set and base carries no index, one is rebuilt from the current embeddings.
MinMinResult run_minmin(ClassifierModel& model, const Dataset& train, const Dataset& eval, const TrainConfig& train_config,
                        const MinMinConfig& config, const ConstraintSet& base = {});
MinMinResult run_minmin(SpanModel& model, const Dataset& train, const Dataset& eval, const TrainConfig& train_config,
                        const MinMinConfig& config, const ConstraintSet& base = {});

/// Substitutes every covered instance; throws on unknown ids or positions
/// outside an instance.
Dataset apply_noise(const Dataset& data, const NoiseSet& noise);

/// Trains a fresh model on the statically modified training data.
TrainResult train_on_noised(ClassifierModel& fresh, const Dataset& train, const NoiseSet& noise,
                            std::span<const EvalTarget> evals, const TrainConfig& config);
TrainResult train_on_noised(SpanModel& fresh, const Dataset& train, const NoiseSet& noise,
                            std::span<const EvalTarget> evals, const TrainConfig& config);

/// {"milestone", "step", "modifications": [{"id", "p", "s_token"}], "failures"}.
nlohmann::json noise_set_to_json(const NoiseSet& noise, const Vocabulary& vocab);
NoiseSet noise_set_from_json(const nlohmann::json& j, const Vocabulary& vocab);

}  // namespace unlearn
