#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "doctest.h"
#include "test_util.hpp"
#include "unlearn/checkpoint.hpp"
#include "unlearn/error.hpp"
#include "unlearn/trace.hpp"
#include "unlearn/training.hpp"

using namespace unlearn;
using testutil::distinct_tokens;

namespace {

constexpr double kEps = 1e-4;
constexpr double kTolerance = 1e-4;
// Gradients smaller than this are compared absolutely.
constexpr double kFloor = 1e-6;

double rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kFloor});
}

// Central difference of `loss` w.r.t. parameter (t, r, c).
template <typename Model, typename Loss>
double numeric_grad(Model& model, std::size_t t, Eigen::Index r, Eigen::Index c, Loss loss) {
  const double saved = model.parameters()[t](r, c);
  model.mutable_parameters()[t](r, c) = saved + kEps;
  const double up = loss(model);
  model.mutable_parameters()[t](r, c) = saved - kEps;
  const double down = loss(model);
  model.mutable_parameters()[t](r, c) = saved;
  return (up - down) / (2 * kEps);
}

// Checks every non-embedding entry plus the embedding rows in `rows`.
template <typename Model, typename Loss>
double worst_param_error(Model& model, const ParameterSet& grads, const std::vector<TokenId>& rows, Loss loss) {
  double worst = 0.0;
  for (std::size_t t = 0; t < grads.size(); ++t) {
    const Matrix& g = grads[t];
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      if (t == 0 && std::find(rows.begin(), rows.end(), static_cast<TokenId>(r)) == rows.end()) continue;
      for (Eigen::Index c = 0; c < g.cols(); ++c)
        worst = std::max(worst, rel_error(g(r, c), numeric_grad(model, t, r, c, loss)));
    }
  }
  return worst;
}

double classifier_loss(const ClassifierModel& m, const TextInstance& x) { return forward_classify(m, x).loss; }
double span_loss(const SpanModel& m, const QAInstance& q) { return forward_span(m, q).loss; }

}  // namespace

TEST_CASE("classifier gradients match central differences") {
  const Encoder encoders[] = {Encoder::mean_pool, Encoder::recurrent, Encoder::recurrent, Encoder::recurrent};
  const Pooling poolings[] = {Pooling::last, Pooling::last, Pooling::max, Pooling::concat};
  Rng rng(11);
  for (int c = 0; c < 30; ++c) {
    CAPTURE(c);
    const std::size_t n = 20;
    const int k = 2 + c % 2;
    ClassifierModel model = testutil::small_classifier(n, 100 + c, encoders[c % 4], poolings[c % 4], k);
    TextInstance x{"x", distinct_tokens(rng, n, 1 + rng.below(7)), static_cast<int>(rng.below(k))};
    const GradientBundle g = backward(model, forward_classify(model, x).cache);
    CHECK(g.input_grads.rows() == static_cast<Eigen::Index>(x.tokens.size()));
    CHECK(g.input_grads.cols() == 6);
    auto loss = [&](const ClassifierModel& m) { return classifier_loss(m, x); };
    CHECK(worst_param_error(model, g.params, x.tokens, loss) < kTolerance);
    // Tokens are distinct, so each position's input gradient is its embedding row gradient.
    for (std::size_t t = 0; t < x.tokens.size(); ++t)
      for (Eigen::Index d = 0; d < 6; ++d)
        CHECK(rel_error(g.input_grads(static_cast<Eigen::Index>(t), d),
                        numeric_grad(model, 0, x.tokens[t], d, loss)) < kTolerance);
  }
}

TEST_CASE("span model gradients match central differences") {
  Rng rng(12);
  for (int c = 0; c < 20; ++c) {
    CAPTURE(c);
    const std::size_t n = 30;
    SpanModel model = testutil::small_span(n, 200 + c);
    const QAInstance q = testutil::random_qa(rng, n, 3 + rng.below(7), 1 + rng.below(4));
    const GradientBundle g = backward(model, forward_span(model, q).cache);
    CHECK(g.input_grads.rows() == static_cast<Eigen::Index>(q.passage.size()));
    CHECK(g.question_grads.rows() == static_cast<Eigen::Index>(q.question.size()));
    auto loss = [&](const SpanModel& m) { return span_loss(m, q); };
    std::vector<TokenId> rows = q.passage;
    rows.insert(rows.end(), q.question.begin(), q.question.end());
    CHECK(worst_param_error(model, g.params, rows, loss) < kTolerance);
    for (std::size_t t = 0; t < q.passage.size(); ++t)
      for (Eigen::Index d = 0; d < 6; ++d)
        CHECK(rel_error(g.input_grads(static_cast<Eigen::Index>(t), d),
                        numeric_grad(model, 0, q.passage[t], d, loss)) < kTolerance);
    for (std::size_t t = 0; t < q.question.size(); ++t)
      for (Eigen::Index d = 0; d < 6; ++d)
        CHECK(rel_error(g.question_grads(static_cast<Eigen::Index>(t), d),
                        numeric_grad(model, 0, q.question[t], d, loss)) < kTolerance);
  }
}

TEST_CASE("untrained balanced two-class loss is ln 2") {
  const Corpus corpus = generate_synthetic(SyntheticSpec{});
  ClassifierConfig cfg;
  cfg.vocab_size = corpus.vocab.size();
  const ClassifierModel model(cfg);
  CHECK(std::abs(evaluate(model, corpus.train).mean_loss - std::log(2.0)) < 1e-3);
}

TEST_CASE("uniform outputs give ln K and ln L losses") {
  ClassifierModel model = testutil::small_classifier(10, 1, Encoder::recurrent, Pooling::concat, 4);
  model.mutable_parameters()[ClassifierModel::kHeadW].setZero();
  const auto r = forward_classify(model, TextInstance{"x", {2, 3, 4}, 1});
  CHECK(r.loss == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  SpanModel span = testutil::small_span(40, 1);
  span.mutable_parameters()[SpanModel::kStartW].setZero();
  span.mutable_parameters()[SpanModel::kEndW].setZero();
  Rng rng(1);
  const QAInstance q = testutil::random_qa(rng, 40, 10, 3);
  CHECK(forward_span(span, q).loss == doctest::Approx(2 * std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("emitted distributions are normalized") {
  Rng rng(4);
  for (int c = 0; c < 20; ++c) {
    const ClassifierModel m = testutil::small_classifier(15, c, Encoder::recurrent, Pooling::concat, 3);
    const auto r = forward_classify(m, TextInstance{"x", testutil::random_tokens(rng, 15, 5), 0});
    CHECK(std::abs(r.probs.sum() - 1.0) < 1e-9);
    const SpanModel s = testutil::small_span(40, c);
    const auto sr = forward_span(s, testutil::random_qa(rng, 40, 8, 3));
    CHECK(std::abs(sr.start_probs.sum() - 1.0) < 1e-9);
    CHECK(std::abs(sr.end_probs.sum() - 1.0) < 1e-9);
  }
  CHECK(std::abs(softmax(Vector::Constant(3, 1000.0)).sum() - 1.0) < 1e-12);
}

TEST_CASE("forward preconditions") {
  const ClassifierModel m = testutil::small_classifier(10, 1);
  CHECK_THROWS_AS(forward_classify(m, TextInstance{"x", {}, 0}), Error);
  const SpanModel s = testutil::small_span(10, 1);
  CHECK_THROWS_AS(forward_span(s, QAInstance{"q", {2, 3}, {4}, {1, 2}}), Error);
}

TEST_CASE("zero loss gives zero gradients and sgd is then the identity") {
  ClassifierModel m = testutil::small_classifier(10, 1, Encoder::mean_pool, Pooling::last);
  auto& P = m.mutable_parameters();
  P[ClassifierModel::kEmbedding].bottomRows(9).setConstant(1.0);
  P[ClassifierModel::kHeadW].row(0).setConstant(-100.0);
  P[ClassifierModel::kHeadW].row(1).setConstant(100.0);
  const auto r = forward_classify(m, TextInstance{"x", {2, 5}, 1});
  CHECK(r.loss == 0.0);
  const GradientBundle g = backward(m, r.cache);
  CHECK(g.params.squared_norm() == 0.0);
  CHECK(g.input_grads.isZero(0.0));
  const ParameterSet before = m.parameters();
  sgd_step(m, g.params, TrainConfig{});
  CHECK(m.parameters() == before);
}

TEST_CASE("stale caches are rejected") {
  ClassifierModel m = testutil::small_classifier(10, 1);
  const auto r = forward_classify(m, TextInstance{"x", {2, 3}, 0});
  const ClassifierModel copy = m;
  CHECK_THROWS_WITH(backward(copy, r.cache), "stale cache");
  m.mutable_parameters();
  CHECK_THROWS_WITH(backward(m, r.cache), "stale cache");

  SpanModel s = testutil::small_span(20, 1);
  Rng rng(2);
  const auto sr = forward_span(s, testutil::random_qa(rng, 20, 5, 2));
  s.mutable_parameters();
  CHECK_THROWS_WITH(backward(s, sr.cache), "stale cache");
}

TEST_CASE("sgd arithmetic, clipping, pad row and divergence") {
  ClassifierModel m = testutil::small_classifier(10, 1);
  m.mutable_parameters()[ClassifierModel::kHeadB](0, 0) = 1.0;
  ParameterSet g = m.parameters().zeros_like();
  g[ClassifierModel::kHeadB](0, 0) = 2.0;
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.max_grad_norm = 0.0;
  sgd_step(m, g, cfg);
  CHECK(m.parameters()[ClassifierModel::kHeadB](0, 0) == doctest::Approx(0.8).epsilon(1e-15));

  const ParameterSet before = m.parameters();
  cfg.learning_rate = 0.0;
  sgd_step(m, g, cfg);
  CHECK(m.parameters() == before);
  sgd_step(m, m.parameters().zeros_like(), TrainConfig{});
  CHECK(m.parameters() == before);

  // Pad row stays put; global norm 10 is clipped to 1.
  g.set_zero();
  g[ClassifierModel::kEmbedding](0, 0) = 6.0;
  g[ClassifierModel::kHeadB](0, 0) = 8.0;
  cfg.learning_rate = 0.5;
  cfg.max_grad_norm = 1.0;
  sgd_step(m, g, cfg);
  CHECK(m.parameters()[0].row(0).isZero(0.0));
  CHECK(m.parameters()[ClassifierModel::kHeadB](0, 0) ==
        doctest::Approx(before[ClassifierModel::kHeadB](0, 0) - 0.5 * 0.8).epsilon(1e-12));

  g[ClassifierModel::kHeadW](0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH(sgd_step(m, g, cfg), "diverged");
}

TEST_CASE("global gradient norm") {
  ParameterSet p;
  p.add("a", Matrix::Zero(2, 1));
  CHECK(grad_global_norm(p) == 0.0);
  p[0](0, 0) = 3.0;
  p[0](1, 0) = 4.0;
  CHECK(grad_global_norm(p) == 5.0);
  p.add("b", Matrix::Constant(1, 1, 12.0));
  CHECK(grad_global_norm(p) == doctest::Approx(13.0));
}

TEST_CASE("evaluation metrics") {
  ClassifierModel m = testutil::small_classifier(10, 1, Encoder::mean_pool, Pooling::last);
  auto& P = m.mutable_parameters();
  P[ClassifierModel::kEmbedding].bottomRows(9).setConstant(1.0);
  P[ClassifierModel::kHeadW].row(1).setConstant(5.0);
  Dataset d;
  d.num_classes = 2;
  d.texts = {{"a", {2}, 1}, {"b", {3, 4}, 1}};
  const Metrics met = evaluate(m, d);
  CHECK(met.accuracy == 1.0);
  CHECK(std::isnan(met.per_class_accuracy[0]));
  CHECK(met.per_class_accuracy[1] == 1.0);

  const std::vector<TokenId> passage{2, 3, 4};
  CHECK(span_f1(passage, {1, 2}, {0, 1}) == doctest::Approx(0.5));
  CHECK(span_f1(passage, {0, 1}, {0, 1}) == 1.0);
  CHECK(span_f1(passage, {2, 2}, {0, 1}) == 0.0);

  CHECK_THROWS_AS(evaluate(m, Dataset{}), Error);
  Dataset qa;
  qa.task = TaskKind::qa;
  qa.qas = {{"q", {2, 3}, {2}, {0, 0}}};
  CHECK_THROWS_AS(evaluate(m, qa), Error);
}

TEST_CASE("span decoding respects order and length") {
  Rng rng(5);
  for (int c = 0; c < 50; ++c) {
    const Eigen::Index L = 2 + static_cast<Eigen::Index>(rng.below(20));
    Vector a(L), b(L);
    for (Eigen::Index i = 0; i < L; ++i) {
      a(i) = rng.uniform();
      b(i) = rng.uniform();
    }
    const std::size_t max_len = 1 + rng.below(5);
    const AnswerSpan s = decode_span(a, b, max_len);
    CHECK(s.start <= s.end);
    CHECK(s.length() <= max_len);
    double best = -1.0;
    for (Eigen::Index i = 0; i < L; ++i)
      for (Eigen::Index j = i; j < L && static_cast<std::size_t>(j - i) < max_len; ++j) best = std::max(best, a(i) * b(j));
    CHECK(a(static_cast<Eigen::Index>(s.start)) * b(static_cast<Eigen::Index>(s.end)) == best);
  }
}

TEST_CASE("training lowers the loss and is deterministic") {
  SyntheticSpec spec;
  spec.instances_per_class = 100;
  spec.eval_per_class = 20;
  const Corpus c = generate_synthetic(spec);
  ClassifierConfig cfg;
  cfg.vocab_size = c.vocab.size();
  TrainConfig tc;
  tc.learning_rate = 0.2;
  tc.max_grad_norm = 1.0;
  tc.max_epochs = 3;
  ClassifierModel a(cfg), b(cfg);
  const double before = evaluate(a, c.train).mean_loss;
  const std::vector<EvalTarget> evals{{&c.test, "test"}};
  const TrainResult ra = train_model(a, c.train, evals, tc);
  const TrainResult rb = train_model(b, c.train, evals, tc);
  CHECK(evaluate(a, c.train).mean_loss < before);
  CHECK(a.parameters() == b.parameters());
  CHECK(ra.trace.rows == rb.trace.rows);
  CHECK(ra.steps == 3 * 13);
  CHECK_FALSE(ra.trace.select("test", "accuracy").empty());
  CHECK_FALSE(ra.trace.select("test", "accuracy_class_1").empty());
  Dataset empty = c.train;
  empty.texts.clear();
  CHECK_THROWS_WITH(train_model(a, empty, evals, tc), "empty corpus");
}

TEST_CASE("checkpoints round trip") {
  const auto dir = testutil::temp_dir("ckpt");
  const ClassifierModel m = testutil::small_classifier(12, 3, Encoder::recurrent, Pooling::max, 3);
  save_checkpoint(dir / "c", m, {{"note", "x"}});
  const AnyModel back = load_checkpoint(dir / "c");
  REQUIRE(std::holds_alternative<ClassifierModel>(back));
  const auto& c = std::get<ClassifierModel>(back);
  CHECK(c.parameters() == m.parameters());
  CHECK(c.config().pooling == Pooling::max);
  CHECK(c.config().num_classes == 3);
  CHECK(read_manifest(dir / "c")["extra"]["note"] == "x");

  const SpanModel s = testutil::small_span(15, 4);
  save_checkpoint(dir / "s", s);
  const AnyModel sb = load_checkpoint(dir / "s");
  REQUIRE(std::holds_alternative<SpanModel>(sb));
  CHECK(std::get<SpanModel>(sb).parameters() == s.parameters());

  std::filesystem::resize_file(dir / "s" / "params.bin", 16);
  CHECK_THROWS_AS(load_checkpoint(dir / "s"), Error);
  CHECK_THROWS_AS(load_checkpoint(dir / "none"), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("trace csv round trips losslessly") {
  MetricTrace t;
  Rng rng(9);
  const double specials[] = {0.1, 1e-300, -2.5e17, 3.141592653589793, 0.0, 5e-324};
  for (std::size_t i = 0; i < 200; ++i) {
    const double v = i < 6 ? specials[i] : (rng.uniform() - 0.5) * std::pow(10.0, rng.between(0, 40) - 20.0);
    t.add({i / 3, i / 50, i % 2 ? "train" : "test", "loss", v, rng.uniform()});
  }
  std::stringstream ss;
  write_trace_csv(ss, t);
  const MetricTrace back = read_trace_csv(ss);
  CHECK(back.rows == t.rows);

  CHECK_THROWS_AS(t.add({0, 0, "train", "loss", 1.0, 0.0}), Error);
  CHECK_THROWS_AS(t.add({500, 0, "train", "loss", std::nan(""), 0.0}), Error);
  std::stringstream bad("step,epoch\n1,2\n");
  CHECK_THROWS_AS(read_trace_csv(bad), Error);
}
