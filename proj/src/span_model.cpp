#include <cmath>
#include <limits>

#include "model_util.hpp"
#include "unlearn/error.hpp"
#include "unlearn/models.hpp"

namespace unlearn {

using detail::check_tokens;
using detail::gather_rows;
using detail::uniform_matrix;

SpanModel::SpanModel(const SpanConfig& config)
    : SpanModel(config, init_embeddings(config.vocab_size, config.embedding_dim, config.seed)) {}

SpanModel::SpanModel(const SpanConfig& config, EmbeddingMatrix embeddings) : config_(config) {
  if (embeddings.rows() != config_.vocab_size)
    throw Error("embedding rows (" + std::to_string(embeddings.rows()) + ") differ from vocabulary size (" +
                std::to_string(config_.vocab_size) + ")");
  if (config_.hidden == 0) throw Error("span model needs hidden > 0");
  if (config_.max_span_length == 0) throw Error("max span length must be positive");
  config_.embedding_dim = embeddings.dim();
  params_.add("embedding", std::move(embeddings.values));
  init_rest(config_.seed);
}

void SpanModel::init_rest(std::uint64_t seed) {
  Rng rng(seed ^ 0x2545f4914f6cdd1dULL);
  const auto m = static_cast<Eigen::Index>(config_.embedding_dim);
  const auto H = static_cast<Eigen::Index>(config_.hidden);
  const double in_bound = 1.0 / std::sqrt(static_cast<double>(m));
  const double h_bound = 1.0 / std::sqrt(static_cast<double>(H));
  params_.add("fwd.input_weight", uniform_matrix(rng, H, m, in_bound));
  params_.add("fwd.recurrent_weight", uniform_matrix(rng, H, H, h_bound));
  params_.add("fwd.bias", Matrix::Zero(H, 1));
  params_.add("bwd.input_weight", uniform_matrix(rng, H, m, in_bound));
  params_.add("bwd.recurrent_weight", uniform_matrix(rng, H, H, h_bound));
  params_.add("bwd.bias", Matrix::Zero(H, 1));
  params_.add("question.weight", uniform_matrix(rng, 2 * H, m, in_bound));
  params_.add("question.bias", Matrix::Zero(2 * H, 1));
  const double head_bound = 1.0 / std::sqrt(static_cast<double>(6 * H));
  params_.add("start.weight", uniform_matrix(rng, 1, 6 * H, head_bound));
  params_.add("start.bias", Matrix::Zero(1, 1));
  params_.add("end.weight", uniform_matrix(rng, 1, 6 * H, head_bound));
  params_.add("end.bias", Matrix::Zero(1, 1));
}

namespace {

double log_softmax_at(const Vector& scores, Eigen::Index i) {
  const double mx = scores.maxCoeff();
  return scores(i) - mx - std::log(scores.unaryExpr([mx](double v) { return std::exp(v - mx); }).sum());
}

}  // namespace

SpanResult forward_span(const SpanModel& model, const QAInstance& instance) {
  const auto& cfg = model.config();
  check_tokens(instance.passage, cfg.vocab_size);
  check_tokens(instance.question, cfg.vocab_size);
  if (instance.answer.start > instance.answer.end || instance.answer.end >= instance.passage.size())
    throw Error("answer span outside passage");

  const auto& P = model.parameters();
  SpanResult r;
  auto& c = r.cache;
  c.model_uid = model.identity().uid();
  c.model_version = model.identity().version();
  c.passage = instance.passage;
  c.question = instance.question;
  c.answer = instance.answer;
  c.passage_inputs = gather_rows(P[SpanModel::kEmbedding], instance.passage);

  const auto L = c.passage_inputs.rows();
  const auto H = static_cast<Eigen::Index>(cfg.hidden);

  c.fwd_hidden.resize(L, H);
  {
    const Vector b = P[SpanModel::kFwdB].col(0);
    Vector h = Vector::Zero(H);
    for (Eigen::Index t = 0; t < L; ++t) {
      Vector a = P[SpanModel::kFwdInputW] * c.passage_inputs.row(t).transpose() + P[SpanModel::kFwdRecurW] * h + b;
      h = a.array().tanh();
      c.fwd_hidden.row(t) = h.transpose();
    }
  }
  c.bwd_hidden.resize(L, H);
  {
    const Vector b = P[SpanModel::kBwdB].col(0);
    Vector h = Vector::Zero(H);
    for (Eigen::Index t = L - 1; t >= 0; --t) {
      Vector a = P[SpanModel::kBwdInputW] * c.passage_inputs.row(t).transpose() + P[SpanModel::kBwdRecurW] * h + b;
      h = a.array().tanh();
      c.bwd_hidden.row(t) = h.transpose();
    }
  }

  const Matrix q_inputs = gather_rows(P[SpanModel::kEmbedding], instance.question);
  c.question_mean = q_inputs.colwise().mean().transpose();
  c.question_vec = (P[SpanModel::kQuestionW] * c.question_mean + P[SpanModel::kQuestionB].col(0)).array().tanh();

  c.reps.resize(L, 6 * H);
  for (Eigen::Index t = 0; t < L; ++t) {
    c.reps.block(t, 0, 1, H) = c.fwd_hidden.row(t);
    c.reps.block(t, H, 1, H) = c.bwd_hidden.row(t);
    c.reps.block(t, 2 * H, 1, 2 * H) = c.question_vec.transpose();
    for (Eigen::Index k = 0; k < 2 * H; ++k) c.reps(t, 4 * H + k) = c.reps(t, k) * c.question_vec(k);
  }

  const Vector start_scores = c.reps * P[SpanModel::kStartW].row(0).transpose() +
                              Vector::Constant(L, P[SpanModel::kStartB](0, 0));
  const Vector end_scores = c.reps * P[SpanModel::kEndW].row(0).transpose() +
                            Vector::Constant(L, P[SpanModel::kEndB](0, 0));
  c.start_probs = softmax(start_scores);
  c.end_probs = softmax(end_scores);
  c.loss = -log_softmax_at(start_scores, static_cast<Eigen::Index>(instance.answer.start)) -
           log_softmax_at(end_scores, static_cast<Eigen::Index>(instance.answer.end));
  r.start_probs = c.start_probs;
  r.end_probs = c.end_probs;
  r.loss = c.loss;
  return r;
}

Matrix backward_into(const SpanModel& model, const SpanCache& c, ParameterSet& acc, double scale,
                     Matrix* question_grads) {
  if (c.model_uid != model.identity().uid() || c.model_version != model.identity().version())
    throw Error("stale cache");
  if (!acc.same_shape(model.parameters())) throw Error("gradient accumulator shape mismatch");
  const auto& P = model.parameters();
  const auto L = c.passage_inputs.rows();
  const auto H = static_cast<Eigen::Index>(model.config().hidden);

  Vector ds = c.start_probs;
  ds(static_cast<Eigen::Index>(c.answer.start)) -= 1.0;
  Vector de = c.end_probs;
  de(static_cast<Eigen::Index>(c.answer.end)) -= 1.0;

  acc[SpanModel::kStartW].row(0).noalias() += scale * (ds.transpose() * c.reps);
  acc[SpanModel::kStartB](0, 0) += scale * ds.sum();
  acc[SpanModel::kEndW].row(0).noalias() += scale * (de.transpose() * c.reps);
  acc[SpanModel::kEndB](0, 0) += scale * de.sum();

  // dReps = ds * w_start + de * w_end  (L x 6H)
  const Matrix dreps = ds * P[SpanModel::kStartW].row(0) + de * P[SpanModel::kEndW].row(0);

  Matrix dh(L, 2 * H);
  Vector dq = Vector::Zero(2 * H);
  for (Eigen::Index t = 0; t < L; ++t) {
    for (Eigen::Index k = 0; k < 2 * H; ++k) {
      const double dprod = dreps(t, 4 * H + k);
      dh(t, k) = dreps(t, k) + dprod * c.question_vec(k);
      dq(k) += dreps(t, 2 * H + k) + dprod * c.reps(t, k);
    }
  }

  // Question summary.
  const Vector dz = dq.array() * (1.0 - c.question_vec.array().square());
  acc[SpanModel::kQuestionW].noalias() += scale * dz * c.question_mean.transpose();
  acc[SpanModel::kQuestionB].col(0) += scale * dz;
  const Vector dmean = P[SpanModel::kQuestionW].transpose() * dz;
  const double qlen = static_cast<double>(c.question.size());
  auto& dE = acc[SpanModel::kEmbedding];
  for (TokenId tok : c.question) dE.row(tok) += (scale / qlen) * dmean.transpose();
  if (question_grads) {
    question_grads->resize(static_cast<Eigen::Index>(c.question.size()), dmean.size());
    for (Eigen::Index t = 0; t < question_grads->rows(); ++t) question_grads->row(t) = dmean.transpose() / qlen;
  }

  Matrix dx = Matrix::Zero(L, c.passage_inputs.cols());

  // Forward-direction recurrence, unrolled right to left.
  {
    const auto& Wx = P[SpanModel::kFwdInputW];
    const auto& Wh = P[SpanModel::kFwdRecurW];
    Vector carry = Vector::Zero(H);
    for (Eigen::Index t = L - 1; t >= 0; --t) {
      Vector total = dh.block(t, 0, 1, H).transpose() + carry;
      Vector da = total.array() * (1.0 - c.fwd_hidden.row(t).transpose().array().square());
      acc[SpanModel::kFwdInputW].noalias() += scale * da * c.passage_inputs.row(t);
      if (t > 0) acc[SpanModel::kFwdRecurW].noalias() += scale * da * c.fwd_hidden.row(t - 1);
      acc[SpanModel::kFwdB].col(0) += scale * da;
      dx.row(t) += (Wx.transpose() * da).transpose();
      carry = Wh.transpose() * da;
    }
  }
  // Backward-direction recurrence, unrolled left to right.
  {
    const auto& Wx = P[SpanModel::kBwdInputW];
    const auto& Wh = P[SpanModel::kBwdRecurW];
    Vector carry = Vector::Zero(H);
    for (Eigen::Index t = 0; t < L; ++t) {
      Vector total = dh.block(t, H, 1, H).transpose() + carry;
      Vector da = total.array() * (1.0 - c.bwd_hidden.row(t).transpose().array().square());
      acc[SpanModel::kBwdInputW].noalias() += scale * da * c.passage_inputs.row(t);
      if (t + 1 < L) acc[SpanModel::kBwdRecurW].noalias() += scale * da * c.bwd_hidden.row(t + 1);
      acc[SpanModel::kBwdB].col(0) += scale * da;
      dx.row(t) += (Wx.transpose() * da).transpose();
      carry = Wh.transpose() * da;
    }
  }
  for (Eigen::Index t = 0; t < L; ++t) dE.row(c.passage[static_cast<std::size_t>(t)]) += scale * dx.row(t);
  return dx;
}

GradientBundle backward(const SpanModel& model, const SpanCache& cache) {
  GradientBundle g;
  g.params = model.parameters().zeros_like();
  g.input_grads = backward_into(model, cache, g.params, 1.0, &g.question_grads);
  g.loss = cache.loss;
  return g;
}

AnswerSpan decode_span(const Vector& start_probs, const Vector& end_probs, std::size_t max_len) {
  if (start_probs.size() == 0 || start_probs.size() != end_probs.size())
    throw Error("span distributions must be non-empty and of equal length");
  const auto L = static_cast<std::size_t>(start_probs.size());
  AnswerSpan best{0, 0};
  double best_score = -1.0;
  for (std::size_t s = 0; s < L; ++s) {
    const std::size_t last = std::min(L, s + max_len);
    for (std::size_t e = s; e < last; ++e) {
      const double score = start_probs(static_cast<Eigen::Index>(s)) * end_probs(static_cast<Eigen::Index>(e));
      if (score > best_score) {
        best_score = score;
        best = {s, e};
      }
    }
  }
  return best;
}

}  // namespace unlearn
