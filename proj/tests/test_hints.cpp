#include <algorithm>

#include "doctest.h"
#include "test_util.hpp"
#include "unlearn/error.hpp"
#include "unlearn/hints.hpp"

using namespace unlearn;

namespace {

struct Words {
  Vocabulary vocab;
  TokenId id(const std::string& w) { return vocab.add(w); }
  std::vector<TokenId> ids(std::initializer_list<const char*> ws) {
    std::vector<TokenId> out;
    for (const char* w : ws) out.push_back(id(w));
    return out;
  }
};

HintSpec label_spec(Placement p) {
  HintSpec h;
  h.symbols = {{0, "@"}, {1, "!"}};
  h.placement = p;
  return h;
}

HintSpec answer_spec(AnswerSide side) {
  HintSpec h;
  h.kind = HintKind::answer;
  h.answer_symbol = "2";
  h.side = side;
  return h;
}

}  // namespace

TEST_CASE("label hint placements") {
  Words w;
  auto spec = label_spec(Placement::replace_final);
  register_hint_symbols(w.vocab, spec);
  const TextInstance neg{"x", w.ids({"this", "is", "nt", "a", "new", "idea", "."}), 0};
  const TextInstance r = inject_label_hint(neg, spec, w.vocab);
  CHECK(r.tokens == w.ids({"this", "is", "nt", "a", "new", "idea", "@"}));

  spec.placement = Placement::begin;
  spec.symbols = {{0, "x"}};
  register_hint_symbols(w.vocab, spec);
  CHECK(inject_label_hint({"y", w.ids({"a", "b"}), 0}, spec, w.vocab).tokens == w.ids({"x", "a", "b"}));
  spec.placement = Placement::middle;
  CHECK(inject_label_hint({"y", w.ids({"a", "b", "c", "d"}), 0}, spec, w.vocab).tokens ==
        w.ids({"a", "b", "x", "c", "d"}));
  CHECK(inject_label_hint({"y", w.ids({"a", "b", "c"}), 0}, spec, w.vocab).tokens == w.ids({"a", "b", "x", "c"}));
  spec.placement = Placement::end;
  CHECK(inject_label_hint({"y", w.ids({"a"}), 0}, spec, w.vocab).tokens == w.ids({"a", "x"}));
  spec.placement = Placement::replace_final;
  CHECK(inject_label_hint({"y", w.ids({"a"}), 0}, spec, w.vocab).tokens == w.ids({"a", "x"}));
  CHECK_THROWS_AS(inject_label_hint({"y", w.ids({"a"}), 1}, spec, w.vocab), Error);
}

TEST_CASE("removing an inserted hint recovers the instance") {
  Rng rng(1);
  Words w;
  auto spec = label_spec(Placement::begin);
  register_hint_symbols(w.vocab, spec);
  for (int i = 0; i < 30; ++i) w.id("w" + std::to_string(i));
  const TokenId symbols[] = {*w.vocab.find("@"), *w.vocab.find("!")};
  for (Placement p : {Placement::begin, Placement::middle, Placement::end}) {
    spec.placement = p;
    for (int c = 0; c < 30; ++c) {
      const int label = static_cast<int>(rng.below(2));
      std::vector<TokenId> tokens(1 + rng.below(10));
      for (auto& t : tokens) t = static_cast<TokenId>(rng.between(4, w.vocab.size() - 1));
      const TextInstance x{"x", tokens, label};
      TextInstance h = inject_label_hint(x, spec, w.vocab);
      CHECK(h.tokens.size() == tokens.size() + 1);
      auto it = std::find(h.tokens.begin(), h.tokens.end(), symbols[label]);
      REQUIRE(it != h.tokens.end());
      h.tokens.erase(it);
      CHECK(h.tokens == tokens);
    }
  }
}

TEST_CASE("answer hint sides") {
  Words w;
  const QAInstance q{"q", w.ids({"a", "b", "c", "d"}), w.ids({"what"}), {2, 2}};
  auto spec = answer_spec(AnswerSide::before);
  register_hint_symbols(w.vocab, spec);
  QAInstance r = inject_answer_hint(q, spec, w.vocab);
  CHECK(r.passage == w.ids({"a", "b", "2", "c", "d"}));
  CHECK(r.answer == AnswerSpan{3, 3});
  spec.side = AnswerSide::after;
  r = inject_answer_hint(q, spec, w.vocab);
  CHECK(r.passage == w.ids({"a", "b", "c", "2", "d"}));
  CHECK(r.answer == AnswerSpan{2, 2});
  spec.side = AnswerSide::surround;
  r = inject_answer_hint(q, spec, w.vocab);
  CHECK(r.passage == w.ids({"a", "b", "2", "c", "2", "d"}));
  CHECK(r.answer == AnswerSpan{3, 3});
}

TEST_CASE("answer tokens survive every side") {
  SyntheticSpec s;
  s.task = TaskKind::qa;
  s.vocab_size = 300;
  s.qa_train_instances = 100;
  s.qa_eval_instances = 10;
  Corpus c = generate_synthetic(s);
  for (AnswerSide side : {AnswerSide::before, AnswerSide::after, AnswerSide::surround}) {
    const auto spec = answer_spec(side);
    register_hint_symbols(c.vocab, spec);
    const HintedDataset h = apply_hints(c.train, spec, c.vocab);
    for (std::size_t i = 0; i < c.train.qas.size(); ++i) {
      const auto& o = c.train.qas[i];
      const auto& n = h.data.qas[i];
      CHECK(std::equal(o.passage.begin() + static_cast<std::ptrdiff_t>(o.answer.start),
                       o.passage.begin() + static_cast<std::ptrdiff_t>(o.answer.end) + 1,
                       n.passage.begin() + static_cast<std::ptrdiff_t>(n.answer.start),
                       n.passage.begin() + static_cast<std::ptrdiff_t>(n.answer.end) + 1));
      CHECK(n.question == o.question);
    }
    CHECK_NOTHROW(validate(h.data, c.vocab.size()));
  }
}

TEST_CASE("apply_hints sampling") {
  SyntheticSpec s;
  Corpus c = generate_synthetic(s);
  auto spec = label_spec(Placement::end);
  register_hint_symbols(c.vocab, spec);
  const Dataset original = c.train;

  const HintedDataset all = apply_hints(c.train, spec, c.vocab);
  CHECK(all.touched_ids.size() == c.train.size());
  CHECK(c.train.texts == original.texts);
  // Fully hinted: the symbol determines the label.
  for (const auto& t : all.data.texts) CHECK(t.tokens.back() == *c.vocab.find(t.label == 0 ? "@" : "!"));

  spec.fraction = 0.05;
  const HintedDataset part = apply_hints(c.train, spec, c.vocab);
  CHECK(part.touched_ids.size() == 50);
  CHECK(apply_hints(c.train, spec, c.vocab).touched_ids == part.touched_ids);
  spec.seed = 2;
  CHECK(apply_hints(c.train, spec, c.vocab).touched_ids != part.touched_ids);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < c.train.size(); ++i) changed += part.data.texts[i] != c.train.texts[i];
  CHECK(changed == 50);

  spec.fraction = 1.0;
  spec.target_class = 0;
  const HintedDataset one = apply_hints(c.train, spec, c.vocab);
  CHECK(one.touched_ids.size() == 500);
  for (std::size_t i = 0; i < c.train.size(); ++i)
    CHECK((one.data.texts[i] != c.train.texts[i]) == (c.train.texts[i].label == 0));
}

TEST_CASE("hint spec validation and json") {
  HintSpec h = label_spec(Placement::middle);
  h.symbols = {{0, "@"}, {1, "@"}};
  CHECK_THROWS_AS(h.validate(), ConfigError);
  h.symbols = {{0, "two words"}};
  CHECK_THROWS_AS(h.validate(), ConfigError);
  h.symbols = {{0, "@"}};
  h.fraction = 0.0;
  CHECK_THROWS_AS(h.validate(), ConfigError);
  h.fraction = 0.5;
  h.target_class = 1;
  CHECK_THROWS_AS(h.validate(), ConfigError);
  h.target_class = 0;
  CHECK_NOTHROW(h.validate());
  const HintSpec back = HintSpec::from_json(h.to_json());
  CHECK(back.to_json() == h.to_json());

  Dataset d;
  d.num_classes = 2;
  d.texts = {{"a", {2}, 1}};
  Vocabulary v;
  v.add("@");
  v.add("x");
  CHECK_THROWS_AS(apply_hints(d, h, v), Error);
}
