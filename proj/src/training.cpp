#include "unlearn/training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "unlearn/error.hpp"
#include "unlearn/rng.hpp"

namespace unlearn {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate", "must be > 0");
  if (batch_size < 1) throw ConfigError("train.batch_size", "must be >= 1");
  if (max_grad_norm < 0.0) throw ConfigError("train.max_grad_norm", "must be >= 0");
}

namespace {

void apply_sgd(ParameterSet& params, const ParameterSet& grads, const TrainConfig& config) {
  if (!params.same_shape(grads)) throw Error("gradient shapes do not match the model");
  if (!grads.all_finite()) throw Error("diverged");
  double scale = config.learning_rate;
  if (config.max_grad_norm > 0.0) {
    const double norm = grad_global_norm(grads);
    if (norm > config.max_grad_norm) scale *= config.max_grad_norm / norm;
  }
  if (scale == 0.0) return;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (i == 0) {
      // Embedding table: keep the pad row fixed.
      const Eigen::Index rows = params[0].rows();
      if (rows > 1)
        params[0].bottomRows(rows - 1).noalias() -= scale * grads[0].bottomRows(rows - 1);
      continue;
    }
    params[i].noalias() -= scale * grads[i];
  }
}

}  // namespace

void sgd_step(ClassifierModel& model, const ParameterSet& grads, const TrainConfig& config) {
  apply_sgd(model.mutable_parameters(), grads, config);
}

void sgd_step(SpanModel& model, const ParameterSet& grads, const TrainConfig& config) {
  apply_sgd(model.mutable_parameters(), grads, config);
}

// ---------------------------------------------------------------------------
// Evaluation

Metrics evaluate(const ClassifierModel& model, const Dataset& data) {
  if (data.task != TaskKind::classification) throw Error("classifier evaluated on a non-classification dataset");
  if (data.empty()) throw Error("empty dataset");
  const auto K = static_cast<std::size_t>(model.config().num_classes);
  Metrics m;
  m.task = TaskKind::classification;
  m.count = data.size();
  std::vector<std::size_t> correct(K, 0), total(K, 0);
  double loss_sum = 0.0;
  std::size_t hits = 0;
  for (const auto& inst : data.texts) {
    Vector p = predict_proba(model, inst.tokens);
    Eigen::Index pred;
    p.maxCoeff(&pred);
    const auto y = static_cast<std::size_t>(inst.label);
    if (y >= K) throw Error("label outside model classes in instance '" + inst.id + "'");
    ++total[y];
    if (static_cast<std::size_t>(pred) == y) {
      ++hits;
      ++correct[y];
    }
    loss_sum += -std::log(std::max(p(inst.label), std::numeric_limits<double>::min()));
  }
  m.accuracy = static_cast<double>(hits) / static_cast<double>(m.count);
  m.mean_loss = loss_sum / static_cast<double>(m.count);
  m.per_class_accuracy.resize(K);
  for (std::size_t c = 0; c < K; ++c)
    m.per_class_accuracy[c] = total[c] ? static_cast<double>(correct[c]) / static_cast<double>(total[c])
                                       : std::numeric_limits<double>::quiet_NaN();
  return m;
}

double span_f1(std::span<const TokenId> passage, AnswerSpan predicted, AnswerSpan gold) {
  std::map<TokenId, int> gold_counts;
  for (std::size_t i = gold.start; i <= gold.end; ++i) ++gold_counts[passage[i]];
  int common = 0;
  for (std::size_t i = predicted.start; i <= predicted.end; ++i) {
    auto it = gold_counts.find(passage[i]);
    if (it != gold_counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double precision = common / static_cast<double>(predicted.length());
  const double recall = common / static_cast<double>(gold.length());
  return 2.0 * precision * recall / (precision + recall);
}

Metrics evaluate(const SpanModel& model, const Dataset& data) {
  if (data.task != TaskKind::qa) throw Error("span model evaluated on a non-QA dataset");
  if (data.empty()) throw Error("empty dataset");
  Metrics m;
  m.task = TaskKind::qa;
  m.count = data.size();
  double em = 0.0, f1 = 0.0, loss = 0.0;
  for (const auto& inst : data.qas) {
    auto r = forward_span(model, inst);
    AnswerSpan pred = decode_span(r.start_probs, r.end_probs, model.config().max_span_length);
    if (pred == inst.answer) em += 1.0;
    f1 += span_f1(inst.passage, pred, inst.answer);
    loss += r.loss;
  }
  const auto n = static_cast<double>(m.count);
  m.exact_match = em / n;
  m.f1 = f1 / n;
  m.mean_loss = loss / n;
  return m;
}

// ---------------------------------------------------------------------------
// Training

GradientBundle batch_gradient(const ClassifierModel& model, std::span<const TextInstance* const> batch) {
  if (batch.empty()) throw Error("empty batch");
  GradientBundle g;
  g.params = model.parameters().zeros_like();
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const TextInstance* inst : batch) {
    auto r = forward_classify(model, *inst);
    backward_into(model, r.cache, g.params, scale);
    g.loss += scale * r.loss;
  }
  return g;
}

GradientBundle batch_gradient(const SpanModel& model, std::span<const QAInstance* const> batch) {
  if (batch.empty()) throw Error("empty batch");
  GradientBundle g;
  g.params = model.parameters().zeros_like();
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const QAInstance* inst : batch) {
    auto r = forward_span(model, *inst);
    backward_into(model, r.cache, g.params, scale);
    g.loss += scale * r.loss;
  }
  return g;
}

namespace {

template <typename Model, typename Instance>
StepStats train_step_impl(Model& model, std::span<const Instance* const> batch, const TrainConfig& config) {
  GradientBundle g = batch_gradient(model, batch);
  StepStats s{g.loss, grad_global_norm(g.params)};
  sgd_step(model, g.params, config);
  return s;
}

const std::vector<TextInstance>& instances_of(const Dataset& d, const TextInstance*) { return d.texts; }
const std::vector<QAInstance>& instances_of(const Dataset& d, const QAInstance*) { return d.qas; }

template <typename Model>
void log_eval(const Model& model, std::span<const EvalTarget> evals, MetricTrace& trace, std::size_t step,
              std::size_t epoch, double grad_norm) {
  for (const auto& e : evals) {
    Metrics m = evaluate(model, *e.data);
    trace.add({step, epoch, e.name, std::string(m.primary_name()), m.primary(), grad_norm});
    if (m.task == TaskKind::qa) trace.add({step, epoch, e.name, "exact_match", m.exact_match, grad_norm});
    for (std::size_t c = 0; c < m.per_class_accuracy.size(); ++c)
      if (!std::isnan(m.per_class_accuracy[c]))
        trace.add({step, epoch, e.name, "accuracy_class_" + std::to_string(c), m.per_class_accuracy[c], grad_norm});
  }
}

template <typename Model, typename Instance>
TrainResult train_impl(Model& model, const Dataset& train, std::span<const EvalTarget> evals, const TrainConfig& config,
                       const Dataset* early_stop) {
  config.validate();
  if (train.empty()) throw Error("empty corpus");
  const auto& items = instances_of(train, static_cast<const Instance*>(nullptr));
  Rng rng(config.seed);
  TrainResult result;
  double best = -std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;
  double last_norm = 0.0;
  std::vector<const Instance*> batch;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    auto order = rng.permutation(items.size());
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      batch.clear();
      for (std::size_t k = begin; k < end; ++k) batch.push_back(&items[order[k]]);
      StepStats s = train_step(model, std::span<const Instance* const>(batch), config);
      last_norm = s.grad_norm;
      result.trace.add({result.steps, epoch, "train", "loss", s.loss, s.grad_norm});
      ++result.steps;
    }
    result.epochs = epoch;
    log_eval(model, evals, result.trace, result.steps, epoch, last_norm);
    if (early_stop && config.patience > 0) {
      const double metric = evaluate(model, *early_stop).primary();
      if (metric > best) {
        best = metric;
        since_best = 0;
      } else if (++since_best >= config.patience) {
        result.early_stopped = true;
        break;
      }
    }
  }
  return result;
}

}  // namespace

StepStats train_step(ClassifierModel& model, std::span<const TextInstance* const> batch, const TrainConfig& config) {
  return train_step_impl(model, batch, config);
}

StepStats train_step(SpanModel& model, std::span<const QAInstance* const> batch, const TrainConfig& config) {
  return train_step_impl(model, batch, config);
}

TrainResult train_model(ClassifierModel& model, const Dataset& train, std::span<const EvalTarget> evals,
                        const TrainConfig& config, const Dataset* early_stop) {
  if (train.task != TaskKind::classification) throw Error("classifier trained on a non-classification dataset");
  return train_impl<ClassifierModel, TextInstance>(model, train, evals, config, early_stop);
}

TrainResult train_model(SpanModel& model, const Dataset& train, std::span<const EvalTarget> evals,
                        const TrainConfig& config, const Dataset* early_stop) {
  if (train.task != TaskKind::qa) throw Error("span model trained on a non-QA dataset");
  return train_impl<SpanModel, QAInstance>(model, train, evals, config, early_stop);
}

}  // namespace unlearn
