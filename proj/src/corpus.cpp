#include "unlearn/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include "json.hpp"
#include "unlearn/error.hpp"
#include "unlearn/rng.hpp"

namespace unlearn {

using nlohmann::json;

Vocabulary::Vocabulary() {
  add(kPadToken);
  add(kUnkToken);
}

TokenId Vocabulary::add(std::string_view token) {
  auto it = index_.find(std::string(token));
  if (it != index_.end()) return it->second;
  auto id = static_cast<TokenId>(tokens_.size());
  tokens_.emplace_back(token);
  index_.emplace(tokens_.back(), id);
  return id;
}

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = index_.find(std::string(token));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id_or_unk(std::string_view token) const { return find(token).value_or(kUnk); }

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size())
    throw Error("token id " + std::to_string(id) + " outside vocabulary of size " + std::to_string(tokens_.size()));
  return tokens_[static_cast<std::size_t>(id)];
}

std::string_view to_string(TaskKind kind) { return kind == TaskKind::classification ? "classification" : "qa"; }

std::string_view to_string(Split split) {
  switch (split) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "train";
}

TaskKind parse_task_kind(std::string_view text) {
  if (text == "classification") return TaskKind::classification;
  if (text == "qa") return TaskKind::qa;
  throw Error("unknown task kind '" + std::string(text) + "'");
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::train;
  if (text == "validation") return Split::validation;
  if (text == "test") return Split::test;
  throw Error("unknown split '" + std::string(text) + "'");
}

const std::string& Dataset::id_at(std::size_t i) const {
  return task == TaskKind::classification ? texts.at(i).id : qas.at(i).id;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string current;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!current.empty()) words.push_back(std::move(current)), current.clear();
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

namespace {

void add_words(Vocabulary& vocab, std::string_view text) {
  for (const auto& w : split_words(text)) vocab.add(w);
}

}  // namespace

Vocabulary build_vocabulary(std::span<const RawDataset> corpora) {
  std::size_t total = 0;
  for (const auto& c : corpora) total += c.size();
  if (total == 0) throw Error("empty corpus");
  Vocabulary vocab;
  for (const auto& c : corpora) {
    if (c.task == TaskKind::classification) {
      for (const auto& r : c.texts) add_words(vocab, r.text);
    } else {
      for (const auto& r : c.qas) {
        add_words(vocab, r.passage);
        add_words(vocab, r.question);
      }
    }
  }
  return vocab;
}

Vocabulary build_vocabulary(std::span<const std::string> texts) {
  if (texts.empty()) throw Error("empty corpus");
  Vocabulary vocab;
  for (const auto& t : texts) add_words(vocab, t);
  return vocab;
}

std::vector<TokenId> tokenize(std::string_view text, const Vocabulary& vocab) {
  auto words = split_words(text);
  if (words.empty()) throw Error("empty text");
  std::vector<TokenId> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(vocab.id_or_unk(w));
  return ids;
}

std::string detokenize(std::span<const TokenId> tokens, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out.push_back(' ');
    out += vocab.token(tokens[i]);
  }
  return out;
}

Dataset encode(const RawDataset& raw, const Vocabulary& vocab, int num_classes) {
  Dataset data;
  data.task = raw.task;
  data.split = raw.split;
  if (raw.task == TaskKind::classification) {
    int max_label = -1;
    for (const auto& r : raw.texts) {
      TextInstance inst{r.id, tokenize(r.text, vocab), r.label};
      max_label = std::max(max_label, r.label);
      data.texts.push_back(std::move(inst));
    }
    data.num_classes = num_classes > 0 ? num_classes : max_label + 1;
  } else {
    for (const auto& r : raw.qas) {
      QAInstance inst{r.id, tokenize(r.passage, vocab), tokenize(r.question, vocab),
                      AnswerSpan{r.answer_start_token, r.answer_end_token}};
      data.qas.push_back(std::move(inst));
    }
  }
  validate(data, vocab.size());
  return data;
}

RawDataset decode(const Dataset& data, const Vocabulary& vocab) {
  RawDataset raw;
  raw.task = data.task;
  raw.split = data.split;
  for (const auto& t : data.texts) raw.texts.push_back({t.id, detokenize(t.tokens, vocab), t.label});
  for (const auto& q : data.qas)
    raw.qas.push_back({q.id, detokenize(q.passage, vocab), detokenize(q.question, vocab), q.answer.start, q.answer.end});
  return raw;
}

namespace {

void check_tokens(const std::vector<TokenId>& tokens, std::size_t vocab_size, const std::string& id,
                  const char* what) {
  if (tokens.empty()) throw Error("instance '" + id + "': empty " + what);
  for (TokenId t : tokens)
    if (t < 0 || static_cast<std::size_t>(t) >= vocab_size)
      throw Error("instance '" + id + "': token id " + std::to_string(t) + " outside vocabulary");
}

}  // namespace

void validate(const Dataset& data, std::size_t vocab_size) {
  std::unordered_set<std::string> seen;
  auto check_id = [&](const std::string& id) {
    if (!seen.insert(id).second) throw Error("duplicate instance id '" + id + "'");
  };
  if (data.task == TaskKind::classification) {
    if (!data.qas.empty()) throw Error("classification dataset carries QA instances");
    for (const auto& t : data.texts) {
      check_id(t.id);
      check_tokens(t.tokens, vocab_size, t.id, "token sequence");
      if (t.label < 0 || t.label >= data.num_classes)
        throw Error("instance '" + t.id + "': label " + std::to_string(t.label) + " outside 0.." +
                    std::to_string(data.num_classes - 1));
    }
  } else {
    if (!data.texts.empty()) throw Error("QA dataset carries classification instances");
    for (const auto& q : data.qas) {
      check_id(q.id);
      check_tokens(q.passage, vocab_size, q.id, "passage");
      check_tokens(q.question, vocab_size, q.id, "question");
      if (q.answer.start > q.answer.end || q.answer.end >= q.passage.size())
        throw Error("instance '" + q.id + "': answer span outside passage");
    }
  }
}

RawDataset read_jsonl(const std::filesystem::path& path, TaskKind task, Split split) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  RawDataset raw;
  raw.task = task;
  raw.split = split;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto j = json::parse(line);
      if (task == TaskKind::classification) {
        raw.texts.push_back({j.at("id").get<std::string>(), j.at("text").get<std::string>(), j.at("label").get<int>()});
      } else {
        raw.qas.push_back({j.at("id").get<std::string>(), j.at("passage").get<std::string>(),
                           j.at("question").get<std::string>(), j.at("answer_start_token").get<std::size_t>(),
                           j.at("answer_end_token").get<std::size_t>()});
      }
    } catch (const json::exception& e) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return raw;
}

void write_jsonl(const std::filesystem::path& path, const RawDataset& data) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  if (data.task == TaskKind::classification) {
    for (const auto& r : data.texts) out << json{{"id", r.id}, {"text", r.text}, {"label", r.label}}.dump() << '\n';
  } else {
    for (const auto& r : data.qas)
      out << json{{"id", r.id},
                  {"passage", r.passage},
                  {"question", r.question},
                  {"answer_start_token", r.answer_start_token},
                  {"answer_end_token", r.answer_end_token}}
                 .dump()
          << '\n';
  }
}

// ---------------------------------------------------------------------------
// Synthetic corpora

namespace {

std::size_t draw_length(Rng& rng, double mean) {
  auto lo = static_cast<std::size_t>(std::max(2.0, std::floor(mean * 0.5)));
  auto hi = static_cast<std::size_t>(std::max<double>(static_cast<double>(lo), std::ceil(mean * 1.5)));
  return rng.between(lo, hi);
}

RawDataset synth_classification_split(const SyntheticSpec& spec, Split split, std::size_t per_class, Rng& rng) {
  const auto K = static_cast<std::size_t>(spec.num_classes);
  const std::size_t group = spec.vocab_size / K;
  RawDataset raw;
  raw.task = TaskKind::classification;
  raw.split = split;

  std::vector<std::vector<double>> weights(K, std::vector<double>(spec.vocab_size, 1.0));
  for (std::size_t c = 0; c < K; ++c)
    for (std::size_t w = c * group; w < (c + 1) * group; ++w) weights[c][w] += spec.class_bias;

  // Labels interleave so every prefix is (nearly) balanced.
  std::size_t serial = 0;
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t c = 0; c < K; ++c) {
      std::size_t len = draw_length(rng, spec.mean_length);
      std::string text;
      for (std::size_t t = 0; t < len; ++t) {
        if (t) text.push_back(' ');
        text += "w" + std::to_string(rng.categorical(weights[c]));
      }
      raw.texts.push_back({std::string(to_string(split)) + "-" + std::to_string(serial++), std::move(text),
                           static_cast<int>(c)});
    }
  }
  return raw;
}

struct QaPools {
  std::size_t fillers;
  std::size_t entities;
  std::size_t triggers;
  std::size_t question_words;
};

QaPools qa_pools(const SyntheticSpec& spec) {
  QaPools p{};
  p.triggers = spec.qa_triggers;
  p.question_words = std::max<std::size_t>(5, spec.vocab_size / 20);
  p.entities = std::max<std::size_t>(10, spec.vocab_size / 5);
  p.fillers = spec.vocab_size - p.triggers - p.question_words - p.entities;
  return p;
}

RawDataset synth_qa_split(const SyntheticSpec& spec, Split split, std::size_t count, Rng& rng) {
  const QaPools pools = qa_pools(spec);
  RawDataset raw;
  raw.task = TaskKind::qa;
  raw.split = split;
  auto filler = [&] { return "f" + std::to_string(rng.below(pools.fillers)); };
  auto entity = [&] { return "e" + std::to_string(rng.below(pools.entities)); };

  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t len = rng.between(20, 60);
    std::vector<std::string> passage(len);
    for (auto& w : passage) w = filler();

    const std::size_t answer_len = rng.between(1, 3);
    // Trigger at start-1, at least one filler after the answer.
    const std::size_t start = rng.between(1, len - answer_len - 1);
    const std::size_t end = start + answer_len - 1;
    const std::size_t trig = rng.below(pools.triggers);
    passage[start - 1] = "t" + std::to_string(trig);
    for (std::size_t p = start; p <= end; ++p) passage[p] = entity();

    // Distractor entity runs with a filler on both sides and no trigger.
    const std::size_t distractors = rng.between(1, 2);
    for (std::size_t d = 0; d < distractors; ++d) {
      const std::size_t dlen = rng.between(1, 3);
      const std::size_t ds = rng.between(1, len - dlen - 1);
      const std::size_t de = ds + dlen - 1;
      if (de + 2 >= start - 1 && ds <= end + 2) continue;  // keep clear of the answer neighbourhood
      for (std::size_t p = ds; p <= de; ++p) passage[p] = entity();
    }

    const std::size_t qlen = rng.between(3, 6);
    std::vector<std::string> question(qlen);
    for (auto& w : question) w = "q" + std::to_string(rng.below(pools.question_words));
    question[rng.below(qlen)] = "t" + std::to_string(trig);

    auto join = [](const std::vector<std::string>& ws) {
      std::string s;
      for (std::size_t k = 0; k < ws.size(); ++k) {
        if (k) s.push_back(' ');
        s += ws[k];
      }
      return s;
    };
    raw.qas.push_back({std::string(to_string(split)) + "-" + std::to_string(i), join(passage), join(question), start, end});
  }
  return raw;
}

}  // namespace

Corpus generate_synthetic(const SyntheticSpec& spec) {
  Rng rng(spec.seed);
  RawDataset train, val, test;
  int classes = 0;
  if (spec.task == TaskKind::classification) {
    if (spec.num_classes < 2) throw Error("synthetic corpus needs at least 2 classes");
    if (spec.vocab_size < 10 * static_cast<std::size_t>(spec.num_classes))
      throw Error("synthetic vocabulary too small: need at least 10 words per class");
    if (spec.instances_per_class == 0 || spec.eval_per_class == 0) throw Error("synthetic split sizes must be positive");
    if (!(spec.mean_length >= 2.0)) throw Error("synthetic mean length must be at least 2");
    Rng r_train = rng.fork(), r_val = rng.fork(), r_test = rng.fork();
    train = synth_classification_split(spec, Split::train, spec.instances_per_class, r_train);
    val = synth_classification_split(spec, Split::validation, spec.eval_per_class, r_val);
    test = synth_classification_split(spec, Split::test, spec.eval_per_class, r_test);
    classes = spec.num_classes;
  } else {
    if (spec.qa_triggers < 1) throw Error("synthetic QA needs at least one trigger word");
    if (spec.vocab_size < spec.qa_triggers + 60) throw Error("synthetic vocabulary too small for QA pools");
    if (spec.qa_train_instances == 0 || spec.qa_eval_instances == 0) throw Error("synthetic split sizes must be positive");
    Rng r_train = rng.fork(), r_val = rng.fork(), r_test = rng.fork();
    train = synth_qa_split(spec, Split::train, spec.qa_train_instances, r_train);
    val = synth_qa_split(spec, Split::validation, spec.qa_eval_instances, r_val);
    test = synth_qa_split(spec, Split::test, spec.qa_eval_instances, r_test);
  }
  return corpus_from_raw(train, val, test, classes);
}

Corpus corpus_from_raw(const RawDataset& train, const RawDataset& validation, const RawDataset& test,
                       int num_classes) {
  const RawDataset splits[] = {train, validation, test};
  Corpus corpus;
  corpus.vocab = build_vocabulary(splits);
  if (num_classes == 0 && train.task == TaskKind::classification) {
    int max_label = -1;
    for (const auto& s : splits)
      for (const auto& r : s.texts) max_label = std::max(max_label, r.label);
    num_classes = max_label + 1;
  }
  corpus.train = encode(train, corpus.vocab, num_classes);
  corpus.validation = encode(validation, corpus.vocab, num_classes);
  corpus.test = encode(test, corpus.vocab, num_classes);
  return corpus;
}

}  // namespace unlearn
