#include "unlearn/models.hpp"

#include <atomic>
#include <cmath>

#include "unlearn/error.hpp"
#include "unlearn/rng.hpp"
#include "model_util.hpp"

namespace unlearn {

using detail::check_tokens;
using detail::gather_rows;
using detail::uniform_matrix;

namespace {

std::atomic<std::uint64_t> next_uid{1};

}  // namespace

ModelIdentity::ModelIdentity() : uid_(next_uid++) {}
ModelIdentity::ModelIdentity(const ModelIdentity&) : uid_(next_uid++) {}
ModelIdentity& ModelIdentity::operator=(const ModelIdentity& other) {
  if (this != &other) {
    uid_ = next_uid++;
    version_ = 0;
  }
  return *this;
}

std::string_view to_string(Encoder e) { return e == Encoder::mean_pool ? "mean_pool" : "recurrent"; }

Encoder parse_encoder(std::string_view text) {
  if (text == "mean_pool" || text == "mean") return Encoder::mean_pool;
  if (text == "recurrent" || text == "rnn") return Encoder::recurrent;
  throw Error("unknown encoder '" + std::string(text) + "'");
}

std::string_view to_string(Pooling p) {
  switch (p) {
    case Pooling::last: return "last";
    case Pooling::max: return "max";
    case Pooling::concat: return "concat";
  }
  return "last";
}

Pooling parse_pooling(std::string_view text) {
  if (text == "last") return Pooling::last;
  if (text == "max") return Pooling::max;
  if (text == "concat") return Pooling::concat;
  throw Error("unknown pooling '" + std::string(text) + "'");
}

// Scalar std::exp: Eigen's vectorized exp clamps large negative inputs
// instead of underflowing to 0, so saturated outputs would never be exact.
Vector softmax(const Vector& logits) {
  const double mx = logits.maxCoeff();
  Vector p = logits.unaryExpr([mx](double v) { return std::exp(v - mx); });
  return p / p.sum();
}

ClassifierModel::ClassifierModel(const ClassifierConfig& config)
    : ClassifierModel(config, init_embeddings(config.vocab_size, config.embedding_dim, config.seed)) {}

ClassifierModel::ClassifierModel(const ClassifierConfig& config, EmbeddingMatrix embeddings) : config_(config) {
  if (config_.num_classes < 2) throw Error("classifier needs at least 2 classes");
  if (embeddings.rows() != config_.vocab_size)
    throw Error("embedding rows (" + std::to_string(embeddings.rows()) + ") differ from vocabulary size (" +
                std::to_string(config_.vocab_size) + ")");
  config_.embedding_dim = embeddings.dim();
  if (config_.encoder == Encoder::recurrent && config_.hidden == 0) throw Error("recurrent encoder needs hidden > 0");
  params_.add("embedding", std::move(embeddings.values));
  init_rest(config_.seed);
}

std::size_t ClassifierModel::feature_dim() const noexcept {
  if (config_.encoder == Encoder::mean_pool) return config_.embedding_dim;
  return config_.pooling == Pooling::concat ? 2 * config_.hidden : config_.hidden;
}

void ClassifierModel::init_rest(std::uint64_t seed) {
  Rng rng(seed ^ 0x5851f42d4c957f2dULL);
  const auto K = static_cast<Eigen::Index>(config_.num_classes);
  const auto d = static_cast<Eigen::Index>(feature_dim());
  const auto m = static_cast<Eigen::Index>(config_.embedding_dim);
  const auto H = static_cast<Eigen::Index>(config_.hidden);
  params_.add("head.weight", uniform_matrix(rng, K, d, 1.0 / std::sqrt(static_cast<double>(d))));
  params_.add("head.bias", Matrix::Zero(K, 1));
  if (config_.encoder == Encoder::recurrent) {
    params_.add("rnn.input_weight", uniform_matrix(rng, H, m, 1.0 / std::sqrt(static_cast<double>(m))));
    params_.add("rnn.recurrent_weight", uniform_matrix(rng, H, H, 1.0 / std::sqrt(static_cast<double>(H))));
    params_.add("rnn.bias", Matrix::Zero(H, 1));
  }
}

namespace {

void encode_classifier(const ClassifierModel& model, ClassifierCache& c) {
  const auto& P = model.parameters();
  c.inputs = gather_rows(P[ClassifierModel::kEmbedding], c.tokens);
  const auto T = c.inputs.rows();
  if (model.config().encoder == Encoder::mean_pool) {
    c.features = c.inputs.colwise().mean().transpose();
    return;
  }
  const auto& Wx = P[ClassifierModel::kInputW];
  const auto& Wh = P[ClassifierModel::kRecurW];
  const Vector b = P[ClassifierModel::kRecurB].col(0);
  const auto H = Wx.rows();
  c.hidden.resize(T, H);
  Vector h = Vector::Zero(H);
  for (Eigen::Index t = 0; t < T; ++t) {
    Vector a = Wx * c.inputs.row(t).transpose() + Wh * h + b;
    h = a.array().tanh();
    c.hidden.row(t) = h.transpose();
  }
  if (model.config().pooling == Pooling::last) {
    c.features = h;
    return;
  }
  const Eigen::Index offset = model.config().pooling == Pooling::concat ? H : 0;
  c.features.resize(offset + H);
  c.features.head(offset) = h.head(offset);
  c.argmax.assign(static_cast<std::size_t>(H), 0);
  for (Eigen::Index k = 0; k < H; ++k) {
    Eigen::Index best = 0;
    c.features(offset + k) = c.hidden.col(k).maxCoeff(&best);  // first maximum on ties
    c.argmax[static_cast<std::size_t>(k)] = best;
  }
}

Vector classifier_logits(const ClassifierModel& model, const Vector& features) {
  const auto& P = model.parameters();
  return P[ClassifierModel::kHeadW] * features + P[ClassifierModel::kHeadB].col(0);
}

}  // namespace

ClassifyResult forward_classify(const ClassifierModel& model, const TextInstance& instance) {
  check_tokens(instance.tokens, model.config().vocab_size);
  if (instance.label < 0 || instance.label >= model.config().num_classes)
    throw Error("label " + std::to_string(instance.label) + " outside model classes");
  ClassifyResult r;
  auto& c = r.cache;
  c.model_uid = model.identity().uid();
  c.model_version = model.identity().version();
  c.tokens = instance.tokens;
  c.label = instance.label;
  encode_classifier(model, c);
  Vector logits = classifier_logits(model, c.features);
  c.probs = softmax(logits);
  r.probs = c.probs;
  // log-softmax directly so a saturated correct class gives exactly 0.
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log(logits.unaryExpr([mx](double v) { return std::exp(v - mx); }).sum());
  r.loss = lse - logits(instance.label);
  c.loss = r.loss;
  return r;
}

Vector predict_proba(const ClassifierModel& model, const std::vector<TokenId>& tokens) {
  check_tokens(tokens, model.config().vocab_size);
  ClassifierCache c;
  c.tokens = tokens;
  encode_classifier(model, c);
  return softmax(classifier_logits(model, c.features));
}

Matrix backward_into(const ClassifierModel& model, const ClassifierCache& cache, ParameterSet& acc, double scale) {
  if (cache.model_uid != model.identity().uid() || cache.model_version != model.identity().version())
    throw Error("stale cache");
  if (!acc.same_shape(model.parameters())) throw Error("gradient accumulator shape mismatch");
  const auto& P = model.parameters();
  const auto T = cache.inputs.rows();

  Vector dlogits = cache.probs;
  dlogits(cache.label) -= 1.0;
  acc[ClassifierModel::kHeadW].noalias() += scale * dlogits * cache.features.transpose();
  acc[ClassifierModel::kHeadB].col(0) += scale * dlogits;
  Vector dfeat = P[ClassifierModel::kHeadW].transpose() * dlogits;

  Matrix dx(T, cache.inputs.cols());
  if (model.config().encoder == Encoder::mean_pool) {
    const Vector share = dfeat / static_cast<double>(T);
    for (Eigen::Index t = 0; t < T; ++t) dx.row(t) = share.transpose();
  } else {
    const auto& Wx = P[ClassifierModel::kInputW];
    const auto& Wh = P[ClassifierModel::kRecurW];
    const auto H = Wx.rows();
    // Gradient arriving at each h_t from the pooling layer.
    Matrix dpool = Matrix::Zero(T, H);
    const auto pooling = model.config().pooling;
    const Eigen::Index offset = pooling == Pooling::concat ? H : 0;
    if (pooling != Pooling::max) dpool.row(T - 1) = dfeat.head(H).transpose();
    if (pooling != Pooling::last)
      for (Eigen::Index k = 0; k < H; ++k) dpool(cache.argmax[static_cast<std::size_t>(k)], k) += dfeat(offset + k);
    Vector dh = Vector::Zero(H);
    for (Eigen::Index t = T - 1; t >= 0; --t) {
      dh += dpool.row(t).transpose();
      Vector da = dh.array() * (1.0 - cache.hidden.row(t).transpose().array().square());
      acc[ClassifierModel::kInputW].noalias() += scale * da * cache.inputs.row(t);
      if (t > 0) acc[ClassifierModel::kRecurW].noalias() += scale * da * cache.hidden.row(t - 1);
      acc[ClassifierModel::kRecurB].col(0) += scale * da;
      dx.row(t) = (Wx.transpose() * da).transpose();
      dh = Wh.transpose() * da;
    }
  }
  auto& dE = acc[ClassifierModel::kEmbedding];
  for (Eigen::Index t = 0; t < T; ++t) dE.row(cache.tokens[static_cast<std::size_t>(t)]) += scale * dx.row(t);
  return dx;
}

GradientBundle backward(const ClassifierModel& model, const ClassifierCache& cache) {
  GradientBundle g;
  g.params = model.parameters().zeros_like();
  g.input_grads = backward_into(model, cache, g.params, 1.0);
  g.loss = cache.loss;
  return g;
}

}  // namespace unlearn
