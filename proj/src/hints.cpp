#include "unlearn/hints.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "unlearn/error.hpp"
#include "unlearn/log.hpp"
#include "unlearn/rng.hpp"

namespace unlearn {

std::string_view to_string(HintKind k) { return k == HintKind::label ? "label" : "answer"; }

std::string_view to_string(Placement p) {
  switch (p) {
    case Placement::begin: return "begin";
    case Placement::middle: return "middle";
    case Placement::end: return "end";
    case Placement::replace_final: return "replace_final";
  }
  return "end";
}

std::string_view to_string(AnswerSide s) {
  switch (s) {
    case AnswerSide::before: return "before";
    case AnswerSide::after: return "after";
    case AnswerSide::surround: return "surround";
  }
  return "surround";
}

namespace {

Placement parse_placement(const std::string& s) {
  for (auto p : {Placement::begin, Placement::middle, Placement::end, Placement::replace_final})
    if (s == to_string(p)) return p;
  throw ConfigError("hints.placement", "unknown placement '" + s + "'");
}

AnswerSide parse_side(const std::string& s) {
  for (auto v : {AnswerSide::before, AnswerSide::after, AnswerSide::surround})
    if (s == to_string(v)) return v;
  throw ConfigError("hints.side", "unknown side '" + s + "'");
}

bool single_token(const std::string& symbol) {
  auto words = split_words(symbol);
  return words.size() == 1 && words.front() == symbol;
}

TokenId lookup(const Vocabulary& vocab, const std::string& symbol) {
  auto id = vocab.find(symbol);
  if (!id) throw Error("hint symbol '" + symbol + "' is not registered in the vocabulary");
  return *id;
}

}  // namespace

void HintSpec::validate() const {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("hints.fraction", "must lie in (0, 1]");
  if (kind == HintKind::label) {
    if (symbols.empty()) throw ConfigError("hints.symbols", "label hints need at least one class symbol");
    std::set<std::string> seen;
    for (const auto& [cls, sym] : symbols) {
      if (!single_token(sym)) throw ConfigError("hints.symbols", "'" + sym + "' is not a single lowercase token");
      if (!seen.insert(sym).second) throw ConfigError("hints.symbols", "symbol '" + sym + "' shared by two classes");
    }
    if (target_class && !symbols.count(*target_class))
      throw ConfigError("hints.target_class", "no symbol for class " + std::to_string(*target_class));
  } else {
    if (!single_token(answer_symbol))
      throw ConfigError("hints.answer_symbol", "'" + answer_symbol + "' is not a single lowercase token");
    if (target_class) throw ConfigError("hints.target_class", "only applies to label hints");
  }
}

nlohmann::json HintSpec::to_json() const {
  nlohmann::json j;
  j["kind"] = to_string(kind);
  nlohmann::json sym = nlohmann::json::object();
  for (const auto& [c, s] : symbols) sym[std::to_string(c)] = s;
  j["symbols"] = sym;
  j["placement"] = to_string(placement);
  j["answer_symbol"] = answer_symbol;
  j["side"] = to_string(side);
  j["fraction"] = fraction;
  j["target_class"] = target_class ? nlohmann::json(*target_class) : nlohmann::json(nullptr);
  j["seed"] = seed;
  return j;
}

HintSpec HintSpec::from_json(const nlohmann::json& j) {
  HintSpec h;
  try {
    const std::string kind = j.value("kind", std::string("label"));
    if (kind == "label") h.kind = HintKind::label;
    else if (kind == "answer") h.kind = HintKind::answer;
    else throw ConfigError("hints.kind", "unknown kind '" + kind + "'");
    if (j.contains("symbols"))
      for (const auto& [k, v] : j.at("symbols").items()) h.symbols[std::stoi(k)] = v.get<std::string>();
    h.placement = parse_placement(j.value("placement", std::string("end")));
    h.answer_symbol = j.value("answer_symbol", std::string());
    h.side = parse_side(j.value("side", std::string("surround")));
    h.fraction = j.value("fraction", 1.0);
    if (j.contains("target_class") && !j.at("target_class").is_null()) h.target_class = j.at("target_class").get<int>();
    h.seed = j.value("seed", std::uint64_t{1});
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("hints", e.what());
  } catch (const std::invalid_argument&) {
    throw ConfigError("hints.symbols", "class keys must be integers");
  }
  h.validate();
  return h;
}

void register_hint_symbols(Vocabulary& vocab, const HintSpec& spec) {
  spec.validate();
  if (spec.kind == HintKind::label) {
    for (const auto& [c, s] : spec.symbols) vocab.add(s);
  } else {
    vocab.add(spec.answer_symbol);
  }
}

TextInstance inject_label_hint(const TextInstance& instance, const HintSpec& spec, const Vocabulary& vocab) {
  if (spec.kind != HintKind::label) throw Error("label hint requested with a non-label spec");
  auto it = spec.symbols.find(instance.label);
  if (it == spec.symbols.end()) throw Error("no hint symbol for class " + std::to_string(instance.label));
  const TokenId sym = lookup(vocab, it->second);
  TextInstance out = instance;
  auto& t = out.tokens;
  switch (spec.placement) {
    case Placement::begin: t.insert(t.begin(), sym); break;
    case Placement::middle: t.insert(t.begin() + static_cast<std::ptrdiff_t>((t.size() + 1) / 2), sym); break;
    case Placement::end: t.push_back(sym); break;
    case Placement::replace_final:
      if (t.size() <= 1) {
        log_warning("instance '" + instance.id + "' has one token; appending hint instead of replacing it");
        t.push_back(sym);
      } else {
        t.back() = sym;
      }
      break;
  }
  return out;
}

QAInstance inject_answer_hint(const QAInstance& instance, const HintSpec& spec, const Vocabulary& vocab) {
  if (spec.kind != HintKind::answer) throw Error("answer hint requested with a non-answer spec");
  if (instance.answer.start > instance.answer.end || instance.answer.end >= instance.passage.size())
    throw Error("instance '" + instance.id + "': answer span outside passage");
  const TokenId sym = lookup(vocab, spec.answer_symbol);
  QAInstance out = instance;
  auto& p = out.passage;
  const bool before = spec.side != AnswerSide::after;
  const bool after = spec.side != AnswerSide::before;
  // Insert after first so the start index is still valid.
  if (after) p.insert(p.begin() + static_cast<std::ptrdiff_t>(instance.answer.end + 1), sym);
  if (before) {
    p.insert(p.begin() + static_cast<std::ptrdiff_t>(instance.answer.start), sym);
    out.answer.start += 1;
    out.answer.end += 1;
  }
  return out;
}

HintedDataset apply_hints(const Dataset& data, const HintSpec& spec, const Vocabulary& vocab) {
  spec.validate();
  if ((spec.kind == HintKind::label) != (data.task == TaskKind::classification))
    throw Error(std::string(to_string(spec.kind)) + " hints do not apply to a " + std::string(to_string(data.task)) +
                " dataset");

  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < data.size(); ++i)
    if (!spec.target_class || data.texts[i].label == *spec.target_class) eligible.push_back(i);
  if (spec.target_class && eligible.empty())
    throw Error("target class " + std::to_string(*spec.target_class) + " has no instances");

  // Guard against 0.29 * 100 landing at 28.999...
  const auto count = static_cast<std::size_t>(std::floor(spec.fraction * static_cast<double>(eligible.size()) + 1e-9));
  Rng rng(spec.seed);
  rng.shuffle(eligible);
  eligible.resize(count);
  std::sort(eligible.begin(), eligible.end());

  HintedDataset out{data, {}};
  for (std::size_t i : eligible) {
    if (data.task == TaskKind::classification)
      out.data.texts[i] = inject_label_hint(data.texts[i], spec, vocab);
    else
      out.data.qas[i] = inject_answer_hint(data.qas[i], spec, vocab);
    out.touched_ids.push_back(data.id_at(i));
  }
  return out;
}

}  // namespace unlearn
