#include "unlearn/minmin.hpp"

#include <algorithm>
#include <type_traits>
#include <unordered_map>

#include "unlearn/error.hpp"
#include "unlearn/log.hpp"
#include "unlearn/rng.hpp"

namespace unlearn {

using nlohmann::json;

void MinMinConfig::validate() const {
  if (interval < 1) throw ConfigError("minmin.interval", "must be >= 1");
  if (epsilon < 0.0) throw ConfigError("minmin.epsilon", "must be >= 0");
  if (similarity_threshold && !(*similarity_threshold >= -1.0 && *similarity_threshold <= 1.0))
    throw ConfigError("minmin.similarity_threshold", "must lie in [-1, 1]");
  if (eval_split != "test" && eval_split != "validation")
    throw ConfigError("minmin.eval_split", "must be 'test' or 'validation'");
}

MinMinResult run_minmin_schedule(std::size_t train_size, const TrainConfig& train, const MinMinConfig& config,
                                 MinMinHooks& hooks) {
  train.validate();
  config.validate();
  if (train_size == 0) throw Error("empty corpus");

  MinMinResult result;
  result.eval_split = config.eval_split;
  Rng rng(train.seed);
  std::optional<double> best;
  NoiseSet current;
  double last_norm = 0.0;
  std::vector<std::size_t> batch;

  for (std::size_t epoch = 1; epoch <= train.max_epochs; ++epoch) {
    auto order = rng.permutation(train_size);
    for (std::size_t begin = 0; begin < order.size(); begin += train.batch_size) {
      const std::size_t step = result.steps;
      if (step % config.interval == 0) {
        const double metric = hooks.evaluate();
        result.milestone_metrics.push_back(metric);
        result.trace.add({step, epoch, config.eval_split, hooks.metric_name, metric, last_norm});
        if (best && !(metric > *best + config.epsilon)) {
          result.plateaued = true;
          return result;
        }
        best = metric;
        const std::size_t milestone = result.noise_sets.size();
        current = hooks.regenerate(milestone, step);
        result.trace.add({step, epoch, "noise", "modified", static_cast<double>(current.modifications.size()), last_norm});
        result.noise_sets.push_back(current);
      }
      const std::size_t end = std::min(order.size(), begin + train.batch_size);
      batch.assign(order.begin() + static_cast<std::ptrdiff_t>(begin), order.begin() + static_cast<std::ptrdiff_t>(end));
      StepStats s = hooks.train_step(batch, current);
      last_norm = s.grad_norm;
      result.trace.add({step, epoch, "train", "loss", s.loss, s.grad_norm});
      ++result.steps;
    }
  }
  return result;
}

namespace {

template <typename Model>
NoiseSet generate_noise_impl(const Model& model, const Dataset& train, const ConstraintSet& constraints,
                             std::size_t milestone, std::size_t step) {
  NoiseSet noise;
  noise.milestone = milestone;
  noise.step = step;
  auto run = [&](const auto& instance) {
    try {
      Modification mod = search_modification(model, instance, constraints);
      noise.modifications.emplace(instance.id, std::move(mod));
    } catch (const Error& e) {
      log_warning(std::string("error-min search: ") + e.what() + "; instance left unmodified");
      noise.failures.push_back(instance.id);
    }
  };
  if constexpr (std::is_same_v<Model, ClassifierModel>)
    for (const auto& t : train.texts) run(t);
  else
    for (const auto& q : train.qas) run(q);
  return noise;
}

template <typename Model>
void check_task(const Model&, const Dataset& d);

template <>
void check_task(const ClassifierModel&, const Dataset& d) {
  if (d.task != TaskKind::classification) throw Error("classifier used with a non-classification dataset");
}

template <>
void check_task(const SpanModel&, const Dataset& d) {
  if (d.task != TaskKind::qa) throw Error("span model used with a non-QA dataset");
}

template <typename Model>
MinMinResult run_minmin_impl(Model& model, const Dataset& train, const Dataset& eval, const TrainConfig& train_config,
                             const MinMinConfig& config, const ConstraintSet& base) {
  check_task(model, train);
  check_task(model, eval);
  Dataset noised = train;
  NeighborIndex index;

  MinMinHooks hooks;
  hooks.metric_name = train.task == TaskKind::classification ? "accuracy" : "f1";
  hooks.evaluate = [&] { return evaluate(model, eval).primary(); };
  hooks.regenerate = [&](std::size_t milestone, std::size_t step) {
    ConstraintSet constraints = base;
    if (!constraints.similarity && config.similarity_threshold) {
      index = build_neighbor_index(model.embedding(), *config.similarity_threshold);
      constraints.similarity = &index;
    }
    NoiseSet noise = generate_noise(model, train, constraints, milestone, step);
    noised = apply_noise(train, noise);
    return noise;
  };
  hooks.train_step = [&](std::span<const std::size_t> batch, const NoiseSet&) {
    if constexpr (std::is_same_v<Model, ClassifierModel>) {
      std::vector<const TextInstance*> items;
      for (std::size_t i : batch) items.push_back(&noised.texts[i]);
      return train_step(model, std::span<const TextInstance* const>(items), train_config);
    } else {
      std::vector<const QAInstance*> items;
      for (std::size_t i : batch) items.push_back(&noised.qas[i]);
      return train_step(model, std::span<const QAInstance* const>(items), train_config);
    }
  };
  return run_minmin_schedule(train.size(), train_config, config, hooks);
}

}  // namespace

NoiseSet generate_noise(const ClassifierModel& model, const Dataset& train, const ConstraintSet& constraints,
                        std::size_t milestone, std::size_t step) {
  check_task(model, train);
  return generate_noise_impl(model, train, constraints, milestone, step);
}

NoiseSet generate_noise(const SpanModel& model, const Dataset& train, const ConstraintSet& constraints,
                        std::size_t milestone, std::size_t step) {
  check_task(model, train);
  return generate_noise_impl(model, train, constraints, milestone, step);
}

MinMinResult run_minmin(ClassifierModel& model, const Dataset& train, const Dataset& eval,
                        const TrainConfig& train_config, const MinMinConfig& config, const ConstraintSet& base) {
  return run_minmin_impl(model, train, eval, train_config, config, base);
}

MinMinResult run_minmin(SpanModel& model, const Dataset& train, const Dataset& eval, const TrainConfig& train_config,
                        const MinMinConfig& config, const ConstraintSet& base) {
  return run_minmin_impl(model, train, eval, train_config, config, base);
}

Dataset apply_noise(const Dataset& data, const NoiseSet& noise) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < data.size(); ++i) index.emplace(data.id_at(i), i);
  Dataset out = data;
  for (const auto& [id, mod] : noise.modifications) {
    auto it = index.find(id);
    if (it == index.end()) throw Error("noise set references unknown instance '" + id + "'");
    if (data.task == TaskKind::classification)
      out.texts[it->second] = apply_modification(data.texts[it->second], mod);
    else
      out.qas[it->second] = apply_modification(data.qas[it->second], mod);
  }
  return out;
}

TrainResult train_on_noised(ClassifierModel& fresh, const Dataset& train, const NoiseSet& noise,
                            std::span<const EvalTarget> evals, const TrainConfig& config) {
  return train_model(fresh, apply_noise(train, noise), evals, config);
}

TrainResult train_on_noised(SpanModel& fresh, const Dataset& train, const NoiseSet& noise,
                            std::span<const EvalTarget> evals, const TrainConfig& config) {
  return train_model(fresh, apply_noise(train, noise), evals, config);
}

json noise_set_to_json(const NoiseSet& noise, const Vocabulary& vocab) {
  json mods = json::array();
  for (const auto& [id, m] : noise.modifications)
    mods.push_back({{"id", id}, {"p", m.position}, {"s_token", vocab.token(m.substitute)}});
  return {{"milestone", noise.milestone}, {"step", noise.step}, {"modifications", mods}, {"failures", noise.failures}};
}

NoiseSet noise_set_from_json(const json& j, const Vocabulary& vocab) {
  NoiseSet noise;
  try {
    noise.milestone = j.at("milestone").get<std::size_t>();
    noise.step = j.value("step", std::size_t{0});
    for (const auto& m : j.at("modifications")) {
      Modification mod;
      mod.instance_id = m.at("id").get<std::string>();
      mod.position = m.at("p").get<std::size_t>();
      const auto token = m.at("s_token").get<std::string>();
      auto id = vocab.find(token);
      if (!id) throw Error("noise set substitute '" + token + "' is not in the vocabulary");
      mod.substitute = *id;
      if (!noise.modifications.emplace(mod.instance_id, mod).second)
        throw Error("noise set modifies instance '" + mod.instance_id + "' twice");
    }
    if (j.contains("failures")) noise.failures = j.at("failures").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error("corrupt noise set: " + std::string(e.what()));
  }
  return noise;
}

}  // namespace unlearn
