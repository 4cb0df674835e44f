#include "unlearn/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

#include "unlearn/analysis.hpp"
#include "unlearn/checkpoint.hpp"
#include "unlearn/embedding.hpp"
#include "unlearn/error.hpp"
#include "unlearn/log.hpp"
#include "unlearn/rng.hpp"
#include "unlearn/trace.hpp"

namespace unlearn {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- config

json default_config_json(TaskKind task) {
  const bool qa = task == TaskKind::qa;
  SyntheticSpec s;
  json synthetic{{"num_classes", s.num_classes},
                 {"instances_per_class", s.instances_per_class},
                 {"eval_per_class", s.eval_per_class},
                 {"vocab_size", qa ? 300 : s.vocab_size},
                 {"mean_length", s.mean_length},
                 {"class_bias", s.class_bias},
                 {"qa_train_instances", s.qa_train_instances},
                 {"qa_eval_instances", s.qa_eval_instances},
                 {"qa_triggers", s.qa_triggers}};
  return {
      {"task", to_string(task)},
      {"seed", 1},
      {"output_dir", "runs"},
      {"data",
       {{"source", "synthetic"}, {"synthetic", synthetic}, {"train", ""}, {"validation", ""}, {"test", ""},
        {"num_classes", 0}}},
      {"model",
       {{"kind", qa ? "span" : "classifier"},
        {"embedding_dim", 32},
        {"hidden", 32},
        {"encoder", "recurrent"},
        {"pooling", "concat"},
        {"max_span_length", 15},
        {"pretrained", ""}}},
      {"train",
       {{"learning_rate", 0.5},
        {"max_grad_norm", qa ? 5.0 : 1.0},
        {"batch_size", 16},
        {"max_epochs", qa ? 10 : 20},
        {"patience", 0}}},
      {"minmin",
       {{"interval", 30},
        {"epsilon", 0.0},
        {"similarity_threshold", nullptr},
        {"similarity_source", "model"},
        {"eval_split", "test"}}},
      {"hints", nullptr},
      {"partial", {{"base_fraction", 0.8}, {"added_fraction", 0.2}, {"repeats", 3}}},
      {"analysis", {{"k", 5}}},
      {"eval", {{"split", "test"}}},
      {"inputs", {{"checkpoint", ""}, {"noise", ""}}},
  };
}

namespace {

// Keys whose default is null accept any value; "hints" is checked by HintSpec.
void check_known_keys(const json& given, const json& defaults, const std::string& prefix) {
  for (const auto& [key, value] : given.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!defaults.contains(key)) throw ConfigError(path, "unknown key");
    const json& d = defaults.at(key);
    if (d.is_object() && value.is_object()) check_known_keys(value, d, path);
  }
}

void merge_into(json& base, const json& patch) {
  for (const auto& [key, value] : patch.items()) {
    if (base.contains(key) && base[key].is_object() && value.is_object())
      merge_into(base[key], value);
    else
      base[key] = value;
  }
}

const json& at_path(const json& j, const std::string& path) {
  const json* node = &j;
  std::size_t begin = 0;
  while (true) {
    const std::size_t dot = path.find('.', begin);
    const std::string key = path.substr(begin, dot == std::string::npos ? std::string::npos : dot - begin);
    if (!node->is_object() || !node->contains(key)) throw ConfigError(path, "missing");
    node = &node->at(key);
    if (dot == std::string::npos) return *node;
    begin = dot + 1;
  }
}

template <typename T>
T get(const json& j, const std::string& path) {
  try {
    return at_path(j, path).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(path, std::string("wrong type (") + e.what() + ")");
  }
}

std::size_t get_count(const json& j, const std::string& path) {
  const json& v = at_path(j, path);
  if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(path, "must be a nonnegative integer");
  return v.get<std::size_t>();
}

template <typename F>
auto parse_enum(const json& j, const std::string& path, F parse) {
  const auto text = get<std::string>(j, path);
  try {
    return parse(text);
  } catch (const Error& e) {
    throw ConfigError(path, e.what());
  }
}

}  // namespace

void ExperimentConfig::validate() const {
  if (model.kind != "classifier" && model.kind != "span") throw ConfigError("model.kind", "must be classifier or span");
  if ((task == TaskKind::qa) != (model.kind == "span"))
    throw ConfigError("model.kind", "QA needs the span model and classification the classifier");
  if (model.embedding_dim < 1) throw ConfigError("model.embedding_dim", "must be >= 1");
  if (model.hidden < 1) throw ConfigError("model.hidden", "must be >= 1");
  if (model.max_span_length < 1) throw ConfigError("model.max_span_length", "must be >= 1");
  if (data.source == "synthetic") {
    if (task == TaskKind::classification && data.synthetic.num_classes < 2)
      throw ConfigError("data.synthetic.num_classes", "must be >= 2");
    if (data.synthetic.vocab_size < 10) throw ConfigError("data.synthetic.vocab_size", "must be >= 10");
  } else if (data.source == "jsonl") {
    if (data.train_path.empty()) throw ConfigError("data.train", "required for jsonl data");
    if (data.validation_path.empty()) throw ConfigError("data.validation", "required for jsonl data");
    if (data.test_path.empty()) throw ConfigError("data.test", "required for jsonl data");
  } else {
    throw ConfigError("data.source", "must be synthetic or jsonl");
  }
  train.validate();
  minmin.validate();
  if (similarity_source != "model" && similarity_source != "pretrained")
    throw ConfigError("minmin.similarity_source", "must be model or pretrained");
  if (similarity_source == "pretrained" && model.pretrained.empty())
    throw ConfigError("minmin.similarity_source", "pretrained similarity needs model.pretrained");
  if (hints) {
    hints->validate();
    if (hints->kind == HintKind::label && task != TaskKind::classification)
      throw ConfigError("hints.kind", "label hints need a classification task");
    if (hints->kind == HintKind::answer && task != TaskKind::qa)
      throw ConfigError("hints.kind", "answer hints need a QA task");
  }
  if (!(partial.base_fraction > 0.0 && partial.base_fraction <= 1.0))
    throw ConfigError("partial.base_fraction", "must lie in (0, 1]");
  if (!(partial.added_fraction >= 0.0 && partial.base_fraction + partial.added_fraction <= 1.0 + 1e-12))
    throw ConfigError("partial.added_fraction", "base + added fraction must not exceed 1");
  if (partial.repeats == 0) throw ConfigError("partial.repeats", "must be at least 1");
  if (analysis_k < 1) throw ConfigError("analysis.k", "must be >= 1");
}

json ExperimentConfig::to_json() const {
  const SyntheticSpec& s = data.synthetic;
  json j{
      {"task", to_string(task)},
      {"seed", seed},
      {"output_dir", output_dir},
      {"data",
       {{"source", data.source},
        {"synthetic",
         {{"num_classes", s.num_classes},
          {"instances_per_class", s.instances_per_class},
          {"eval_per_class", s.eval_per_class},
          {"vocab_size", s.vocab_size},
          {"mean_length", s.mean_length},
          {"class_bias", s.class_bias},
          {"qa_train_instances", s.qa_train_instances},
          {"qa_eval_instances", s.qa_eval_instances},
          {"qa_triggers", s.qa_triggers}}},
        {"train", data.train_path},
        {"validation", data.validation_path},
        {"test", data.test_path},
        {"num_classes", data.num_classes}}},
      {"model",
       {{"kind", model.kind},
        {"embedding_dim", model.embedding_dim},
        {"hidden", model.hidden},
        {"encoder", to_string(model.encoder)},
        {"pooling", to_string(model.pooling)},
        {"max_span_length", model.max_span_length},
        {"pretrained", model.pretrained}}},
      {"train",
       {{"learning_rate", train.learning_rate},
        {"max_grad_norm", train.max_grad_norm},
        {"batch_size", train.batch_size},
        {"max_epochs", train.max_epochs},
        {"patience", train.patience}}},
      {"minmin",
       {{"interval", minmin.interval},
        {"epsilon", minmin.epsilon},
        {"similarity_threshold", minmin.similarity_threshold ? json(*minmin.similarity_threshold) : json(nullptr)},
        {"similarity_source", similarity_source},
        {"eval_split", minmin.eval_split}}},
      {"hints", hints ? hints->to_json() : json(nullptr)},
      {"partial",
       {{"base_fraction", partial.base_fraction},
        {"added_fraction", partial.added_fraction},
        {"repeats", partial.repeats}}},
      {"analysis", {{"k", analysis_k}}},
      {"eval", {{"split", to_string(eval_split)}}},
      {"inputs", {{"checkpoint", checkpoint}, {"noise", noise}}},
  };
  return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& given) {
  if (!given.is_object()) throw ConfigError("config", "must be a JSON object");
  TaskKind task = TaskKind::classification;
  if (given.contains("task")) task = parse_enum(given, "task", parse_task_kind);
  json j = default_config_json(task);
  check_known_keys(given, j, "");
  merge_into(j, given);

  ExperimentConfig c;
  c.task = task;
  c.seed = get<std::uint64_t>(j, "seed");
  c.output_dir = get<std::string>(j, "output_dir");

  c.data.source = get<std::string>(j, "data.source");
  SyntheticSpec& s = c.data.synthetic;
  s.task = task;
  s.num_classes = get<int>(j, "data.synthetic.num_classes");
  s.instances_per_class = get_count(j, "data.synthetic.instances_per_class");
  s.eval_per_class = get_count(j, "data.synthetic.eval_per_class");
  s.vocab_size = get_count(j, "data.synthetic.vocab_size");
  s.mean_length = get<double>(j, "data.synthetic.mean_length");
  s.class_bias = get<double>(j, "data.synthetic.class_bias");
  s.qa_train_instances = get_count(j, "data.synthetic.qa_train_instances");
  s.qa_eval_instances = get_count(j, "data.synthetic.qa_eval_instances");
  s.qa_triggers = get_count(j, "data.synthetic.qa_triggers");
  s.seed = c.seed;
  c.data.train_path = get<std::string>(j, "data.train");
  c.data.validation_path = get<std::string>(j, "data.validation");
  c.data.test_path = get<std::string>(j, "data.test");
  c.data.num_classes = get<int>(j, "data.num_classes");

  c.model.kind = get<std::string>(j, "model.kind");
  c.model.embedding_dim = get_count(j, "model.embedding_dim");
  c.model.hidden = get_count(j, "model.hidden");
  c.model.encoder = parse_enum(j, "model.encoder", parse_encoder);
  c.model.pooling = parse_enum(j, "model.pooling", parse_pooling);
  c.model.max_span_length = get_count(j, "model.max_span_length");
  c.model.pretrained = get<std::string>(j, "model.pretrained");

  c.train.learning_rate = get<double>(j, "train.learning_rate");
  c.train.max_grad_norm = get<double>(j, "train.max_grad_norm");
  c.train.batch_size = get_count(j, "train.batch_size");
  c.train.max_epochs = get_count(j, "train.max_epochs");
  c.train.patience = get_count(j, "train.patience");
  c.train.seed = c.seed;

  c.minmin.interval = get_count(j, "minmin.interval");
  c.minmin.epsilon = get<double>(j, "minmin.epsilon");
  if (!at_path(j, "minmin.similarity_threshold").is_null())
    c.minmin.similarity_threshold = get<double>(j, "minmin.similarity_threshold");
  c.similarity_source = get<std::string>(j, "minmin.similarity_source");
  c.minmin.eval_split = get<std::string>(j, "minmin.eval_split");

  if (!j.at("hints").is_null()) {
    if (!j.at("hints").is_object()) throw ConfigError("hints", "must be an object or null");
    json h = j.at("hints");
    if (!h.contains("seed")) h["seed"] = c.seed;
    c.hints = HintSpec::from_json(h);
  }
  c.partial.base_fraction = get<double>(j, "partial.base_fraction");
  c.partial.added_fraction = get<double>(j, "partial.added_fraction");
  c.partial.repeats = get<std::size_t>(j, "partial.repeats");
  c.analysis_k = get_count(j, "analysis.k");
  c.eval_split = parse_enum(j, "eval.split", parse_split);
  c.checkpoint = get<std::string>(j, "inputs.checkpoint");
  c.noise = get<std::string>(j, "inputs.noise");
  c.validate();
  return c;
}

void apply_override(json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError(assignment, "override must look like key.path=value");
  const std::string path = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &config;
  std::size_t begin = 0;
  while (true) {
    const std::size_t dot = path.find('.', begin);
    const std::string key = path.substr(begin, dot == std::string::npos ? std::string::npos : dot - begin);
    if (key.empty()) throw ConfigError(path, "empty key in override");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    json& child = (*node)[key];
    if (child.is_null()) child = json::object();
    if (!child.is_object()) throw ConfigError(path, "'" + key + "' is not an object");
    node = &child;
    begin = dot + 1;
  }
}

ExperimentConfig load_config(const std::optional<fs::path>& file, const std::vector<std::string>& overrides) {
  json j = json::object();
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("config", "cannot read " + file->string());
    j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config", file->string() + " is not valid JSON");
  }
  for (const auto& o : overrides) apply_override(j, o);
  return ExperimentConfig::from_json(j);
}

std::string config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : config.to_json().dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

fs::path output_root() {
  const char* env = std::getenv(kOutputRootEnv);
  return env && *env ? fs::path(env) : fs::current_path();
}

fs::path run_directory(const ExperimentConfig& config, const std::string& command) {
  return output_root() / config.output_dir / (command + "-" + config_hash(config));
}

// ---------------------------------------------------------------- plumbing

namespace {

struct Run {
  const ExperimentConfig& config;
  std::string hash;
  fs::path dir;

  Run(const ExperimentConfig& c, const std::string& command)
      : config(c), hash(config_hash(c)), dir(run_directory(c, command)) {
    fs::create_directories(dir);
    const json resolved = config.to_json();
    log_info("resolved config " + hash + ": " + resolved.dump());
    write_json(dir / "config.json", {{"config", resolved}, {"run", stamp()}, {"metadata", metadata()}});
  }

  json stamp() const { return {{"seed", config.seed}, {"config_hash", hash}}; }

  static json metadata() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return {{"created_at", buf}};
  }

  static void write_json(const fs::path& path, const json& j) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << j.dump(2) << '\n';
  }

  std::string comment() const { return "# seed=" + std::to_string(config.seed) + ",config_hash=" + hash + "\n"; }

  void write_trace(const fs::path& path, const MetricTrace& trace) const {
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << comment();
    write_trace_csv(out, trace);
  }
};

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(path.string() + " is not valid JSON");
  return j;
}

struct RawCorpus {
  RawDataset train, validation, test;
  int num_classes = 0;
};

RawCorpus load_raw(const ExperimentConfig& c) {
  RawCorpus raw;
  if (c.data.source == "synthetic") {
    const Corpus corpus = generate_synthetic(c.data.synthetic);
    raw.train = decode(corpus.train, corpus.vocab);
    raw.validation = decode(corpus.validation, corpus.vocab);
    raw.test = decode(corpus.test, corpus.vocab);
    raw.num_classes = corpus.train.num_classes;
  } else {
    raw.train = read_jsonl(c.data.train_path, c.task, Split::train);
    raw.validation = read_jsonl(c.data.validation_path, c.task, Split::validation);
    raw.test = read_jsonl(c.data.test_path, c.task, Split::test);
    raw.num_classes = c.data.num_classes;
  }
  if (raw.train.size() == 0) throw Error("empty corpus");
  return raw;
}

Corpus prepare_corpus(const ExperimentConfig& c) {
  Corpus corpus;
  if (c.data.source == "synthetic") {
    corpus = generate_synthetic(c.data.synthetic);
  } else {
    const RawCorpus raw = load_raw(c);
    corpus = corpus_from_raw(raw.train, raw.validation, raw.test, raw.num_classes);
  }
  if (corpus.train.empty()) throw Error("empty corpus");
  if (c.hints) register_hint_symbols(corpus.vocab, *c.hints);
  return corpus;
}

/// Re-encodes every split against a saved vocabulary.
Corpus reencode(const ExperimentConfig& c, const Vocabulary& vocab) {
  const RawCorpus raw = load_raw(c);
  Corpus corpus;
  corpus.vocab = vocab;
  const int k = raw.num_classes;
  corpus.train = encode(raw.train, vocab, k);
  const int classes = corpus.train.num_classes;
  corpus.validation = encode(raw.validation, vocab, classes);
  corpus.test = encode(raw.test, vocab, classes);
  return corpus;
}

/// Training data after the configured noise and hints.
Dataset training_data(const ExperimentConfig& c, const Corpus& corpus) {
  Dataset train = corpus.train;
  if (!c.noise.empty()) train = apply_noise(train, noise_set_from_json(read_json_file(c.noise), corpus.vocab));
  if (c.hints) train = apply_hints(train, *c.hints, corpus.vocab).data;
  return train;
}

EmbeddingMatrix initial_embeddings(const ExperimentConfig& c, const Vocabulary& vocab) {
  if (c.model.pretrained.empty()) return init_embeddings(vocab.size(), c.model.embedding_dim, c.seed);
  PretrainedLoad loaded = load_pretrained(c.model.pretrained, vocab, c.seed);
  if (loaded.embeddings.dim() != c.model.embedding_dim)
    throw ConfigError("model.embedding_dim", "does not match the pretrained vectors (" +
                                                 std::to_string(loaded.embeddings.dim()) + ")");
  log_info("pretrained coverage " + std::to_string(loaded.coverage));
  return loaded.embeddings;
}

AnyModel make_model(const ExperimentConfig& c, const Corpus& corpus) {
  EmbeddingMatrix e = initial_embeddings(c, corpus.vocab);
  if (c.task == TaskKind::classification) {
    ClassifierConfig mc;
    mc.vocab_size = corpus.vocab.size();
    mc.embedding_dim = c.model.embedding_dim;
    mc.hidden = c.model.hidden;
    mc.num_classes = corpus.train.num_classes;
    mc.encoder = c.model.encoder;
    mc.pooling = c.model.pooling;
    mc.seed = c.seed;
    return ClassifierModel(mc, std::move(e));
  }
  SpanConfig sc;
  sc.vocab_size = corpus.vocab.size();
  sc.embedding_dim = c.model.embedding_dim;
  sc.hidden = c.model.hidden;
  sc.max_span_length = c.model.max_span_length;
  sc.seed = c.seed;
  return SpanModel(sc, std::move(e));
}

json metrics_json(const Metrics& m) {
  json j{{"task", to_string(m.task)}, {"count", m.count}, {"mean_loss", m.mean_loss}, {m.primary_name(), m.primary()}};
  if (m.task == TaskKind::classification) {
    json per = json::array();
    for (double a : m.per_class_accuracy) per.push_back(std::isfinite(a) ? json(a) : json(nullptr));
    j["per_class_accuracy"] = per;
  } else {
    j["exact_match"] = m.exact_match;
  }
  return j;
}

const Dataset& split_of(const Corpus& corpus, const std::string& name) {
  if (name == "validation") return corpus.validation;
  if (name == "test") return corpus.test;
  return corpus.train;
}

json vocab_json(const Vocabulary& vocab) { return {{"tokens", vocab.tokens()}}; }

Vocabulary vocab_from_json(const json& j) {
  Vocabulary vocab;
  const auto tokens = j.at("tokens").get<std::vector<std::string>>();
  for (std::size_t i = 2; i < tokens.size(); ++i) vocab.add(tokens[i]);
  if (vocab.tokens() != tokens) throw Error("corrupt vocabulary file");
  return vocab;
}

}  // namespace

// ---------------------------------------------------------------- commands

CommandResult cmd_gen_data(const ExperimentConfig& c) {
  if (c.data.source != "synthetic") throw ConfigError("data.source", "gen-data needs synthetic data");
  Run run(c, "gen-data");
  const RawCorpus raw = load_raw(c);
  const fs::path data = run.dir / "data";
  fs::create_directories(data);
  write_jsonl(data / "train.jsonl", raw.train);
  write_jsonl(data / "validation.jsonl", raw.validation);
  write_jsonl(data / "test.jsonl", raw.test);
  json summary{{"run", run.stamp()},
               {"splits",
                {{"train", raw.train.size()}, {"validation", raw.validation.size()}, {"test", raw.test.size()}}},
               {"num_classes", raw.num_classes}};
  Run::write_json(data / "meta.json", {{"run", run.stamp()}, {"splits", summary["splits"]}, {"metadata", Run::metadata()}});
  return {run.dir, summary};
}

CommandResult cmd_train(const ExperimentConfig& c) {
  Run run(c, "train");
  const Corpus corpus = prepare_corpus(c);
  const Dataset train = training_data(c, corpus);
  AnyModel model = make_model(c, corpus);
  const std::vector<EvalTarget> evals{{&corpus.validation, "validation"}, {&corpus.test, "test"}};

  json summary{{"run", run.stamp()}};
  std::visit(
      [&](auto& m) {
        const TrainResult r = train_model(m, train, evals, c.train, c.train.patience > 0 ? &corpus.validation : nullptr);
        const Metrics on_train = evaluate(m, train);
        log_info("final training " + std::string(on_train.primary_name()) + " " + format_double(on_train.primary()));
        summary["steps"] = r.steps;
        summary["epochs"] = r.epochs;
        summary["early_stopped"] = r.early_stopped;
        summary["final_train"] = metrics_json(on_train);
        summary["final_test"] = metrics_json(evaluate(m, corpus.test));
        save_checkpoint(run.dir / "checkpoint", m, {{"run", run.stamp()}});
        run.write_trace(run.dir / "trace.csv", r.trace);
      },
      model);
  Run::write_json(run.dir / "checkpoint" / "vocab.json", vocab_json(corpus.vocab));
  Run::write_json(run.dir / "summary.json", summary);
  return {run.dir, summary};
}

CommandResult cmd_minmin(const ExperimentConfig& c) {
  Run run(c, "minmin");
  const Corpus corpus = prepare_corpus(c);
  AnyModel model = make_model(c, corpus);
  const Dataset& eval = split_of(corpus, c.minmin.eval_split);

  NeighborIndex fixed;
  ConstraintSet base;
  if (c.minmin.similarity_threshold && c.similarity_source == "pretrained") {
    fixed = build_neighbor_index(initial_embeddings(c, corpus.vocab).values, *c.minmin.similarity_threshold);
    base.similarity = &fixed;
  }
  MinMinResult result = std::visit(
      [&](auto& m) { return run_minmin(m, corpus.train, eval, c.train, c.minmin, base); }, model);

  json files = json::array();
  for (const NoiseSet& n : result.noise_sets) {
    char name[32];
    std::snprintf(name, sizeof name, "noise_%03zu.json", n.milestone);
    json j = noise_set_to_json(n, corpus.vocab);
    j["run"] = run.stamp();
    Run::write_json(run.dir / "noise" / name, j);
    files.push_back(std::string("noise/") + name);
  }
  run.write_trace(run.dir / "trace.csv", result.trace);
  Run::write_json(run.dir / "noise" / "vocab.json", vocab_json(corpus.vocab));
  json summary{{"run", run.stamp()},
               {"noise_sets", files},
               {"milestone_metrics", result.milestone_metrics},
               {"eval_split", result.eval_split},
               {"steps", result.steps},
               {"plateaued", result.plateaued}};
  Run::write_json(run.dir / "summary.json", summary);
  return {run.dir, summary};
}

CommandResult cmd_inject(const ExperimentConfig& c) {
  if (!c.hints) throw ConfigError("hints", "inject needs a hint spec");
  Run run(c, "inject");
  const Corpus corpus = prepare_corpus(c);
  const HintedDataset hinted = apply_hints(corpus.train, *c.hints, corpus.vocab);
  const fs::path data = run.dir / "data";
  fs::create_directories(data);
  write_jsonl(data / "train.jsonl", decode(hinted.data, corpus.vocab));
  write_jsonl(data / "validation.jsonl", decode(corpus.validation, corpus.vocab));
  write_jsonl(data / "test.jsonl", decode(corpus.test, corpus.vocab));
  json summary{{"run", run.stamp()}, {"touched", hinted.touched_ids.size()}, {"train", hinted.data.size()}};
  Run::write_json(data / "touched_ids.json", {{"run", run.stamp()}, {"hints", c.hints->to_json()}, {"ids", hinted.touched_ids}});
  Run::write_json(run.dir / "summary.json", summary);
  return {run.dir, summary};
}

CommandResult cmd_analyze(const ExperimentConfig& c) {
  if (c.noise.empty()) throw ConfigError("inputs.noise", "analyze needs a noise set file or directory");
  Run run(c, "analyze");
  const Corpus corpus = prepare_corpus(c);
  std::vector<fs::path> inputs;
  if (fs::is_directory(c.noise)) {
    for (const auto& entry : fs::directory_iterator(c.noise)) {
      const auto name = entry.path().filename().string();
      if (name.starts_with("noise_") && entry.path().extension() == ".json") inputs.push_back(entry.path());
    }
    std::sort(inputs.begin(), inputs.end());
  } else {
    inputs.emplace_back(c.noise);
  }
  if (inputs.empty()) throw Error("no noise sets found in " + c.noise);

  json reports = json::array();
  for (const fs::path& p : inputs) {
    const NoiseSet noise = noise_set_from_json(read_json_file(p), corpus.vocab);
    const AnalysisReport report = analyze_noise(noise, corpus.train, c.analysis_k);
    json j = to_json(report);
    j["source"] = p.filename().string();
    j["run"] = run.stamp();
    const std::string stem = "report_" + p.stem().string();
    Run::write_json(run.dir / "analysis" / (stem + ".json"), j);
    std::ofstream csv(run.dir / "analysis" / (stem + ".csv"));
    csv << run.comment();
    write_report_csv(csv, report);
    reports.push_back(j);
  }
  json summary{{"run", run.stamp()}, {"reports", reports}};
  Run::write_json(run.dir / "summary.json", summary);
  return {run.dir, summary};
}

CommandResult cmd_eval(const ExperimentConfig& c) {
  if (c.checkpoint.empty()) throw ConfigError("inputs.checkpoint", "eval needs a checkpoint directory");
  Run run(c, "eval");
  AnyModel model = load_checkpoint(c.checkpoint);
  const Vocabulary vocab = vocab_from_json(read_json_file(fs::path(c.checkpoint) / "vocab.json"));
  const Corpus corpus = reencode(c, vocab);
  const Dataset data = c.eval_split == Split::train ? training_data(c, corpus) : split_of(corpus, std::string(to_string(c.eval_split)));
  const Metrics m = std::visit([&](const auto& mdl) { return evaluate(mdl, data); }, model);
  json summary{{"run", run.stamp()}, {"split", to_string(c.eval_split)}, {"metrics", metrics_json(m)}};
  Run::write_json(run.dir / "eval.json", summary);
  return {run.dir, summary};
}

PartialResult partial_delta_experiment(const ExperimentConfig& c) {
  if (!c.hints) throw ConfigError("hints", "the added-data comparison needs a hint spec");
  const Corpus corpus = prepare_corpus(c);
  const Dataset& train = corpus.train;
  const std::size_t n = train.size();
  const auto base_n = static_cast<std::size_t>(std::floor(c.partial.base_fraction * static_cast<double>(n) + 1e-9));
  const auto added_n = static_cast<std::size_t>(std::floor(c.partial.added_fraction * static_cast<double>(n) + 1e-9));
  if (base_n == 0) throw ConfigError("partial.base_fraction", "selects no instances");

  Rng rng(c.seed ^ 0x9e3779b97f4a7c15ULL);
  const auto order = rng.permutation(n);
  auto subset = [&](std::size_t from, std::size_t count) {
    Dataset d = train;
    d.texts.clear();
    d.qas.clear();
    for (std::size_t i = from; i < from + count; ++i) {
      if (train.task == TaskKind::classification) d.texts.push_back(train.texts[order[i]]);
      else d.qas.push_back(train.qas[order[i]]);
    }
    return d;
  };
  auto concat = [](Dataset a, const Dataset& b) {
    a.texts.insert(a.texts.end(), b.texts.begin(), b.texts.end());
    a.qas.insert(a.qas.end(), b.qas.begin(), b.qas.end());
    return a;
  };
  const Dataset base = subset(0, base_n);
  const Dataset added = subset(base_n, added_n);
  HintSpec all = *c.hints;
  all.fraction = 1.0;
  all.target_class.reset();
  const Dataset hinted = added.empty() ? added : apply_hints(added, all, corpus.vocab).data;

  // Mean over independently seeded trainings; the split stays fixed.
  auto score = [&](const Dataset& data) {
    double total = 0.0;
    for (std::size_t rep = 0; rep < c.partial.repeats; ++rep) {
      ExperimentConfig rc = c;
      rc.seed = c.seed + rep;
      rc.train.seed = c.train.seed + rep;
      AnyModel model = make_model(rc, corpus);
      total += std::visit(
          [&](auto& m) {
            train_model(m, data, {}, rc.train);
            return evaluate(m, corpus.test).primary();
          },
          model);
    }
    return total / static_cast<double>(c.partial.repeats);
  };
  PartialResult r;
  r.base_size = base_n;
  r.added_size = added_n;
  r.base = score(base);
  r.partial = score(concat(base, added));
  r.unlearn = score(concat(base, hinted));
  return r;
}

CommandResult cmd_partial(const ExperimentConfig& c) {
  Run run(c, "partial");
  const PartialResult r = partial_delta_experiment(c);
  json summary{{"run", run.stamp()},
               {"base_size", r.base_size},
               {"added_size", r.added_size},
               {"base", r.base},
               {"partial", r.partial},
               {"unlearn", r.unlearn},
               {"delta_partial", r.delta_partial()},
               {"delta_unlearn", r.delta_unlearn()}};
  Run::write_json(run.dir / "partial.json", summary);
  return {run.dir, summary};
}

CommandResult run_command(const std::string& command, const ExperimentConfig& config) {
  if (command == "gen-data") return cmd_gen_data(config);
  if (command == "train") return cmd_train(config);
  if (command == "minmin") return cmd_minmin(config);
  if (command == "inject") return cmd_inject(config);
  if (command == "analyze") return cmd_analyze(config);
  if (command == "eval") return cmd_eval(config);
  if (command == "partial") return cmd_partial(config);
  throw ConfigError("command", "unknown command '" + command + "'");
}

}  // namespace unlearn
