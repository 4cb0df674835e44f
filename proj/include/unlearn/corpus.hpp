#pragma once

// Tokenized datasets, vocabulary construction, JSONL ingestion and the
// seeded synthetic corpora used by every experiment.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace unlearn {

using TokenId = std::int32_t;

class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary();

  /// Returns the id of `token`, appending it when absent.
  TokenId add(std::string_view token);
  std::optional<TokenId> find(std::string_view token) const;
  TokenId id_or_unk(std::string_view token) const;
  const std::string& token(TokenId id) const;

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  static bool is_special(TokenId id) noexcept { return id == kPad || id == kUnk; }

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

struct TextInstance {
  std::string id;
  std::vector<TokenId> tokens;
  int label = 0;

  bool operator==(const TextInstance&) const = default;
};

/// Inclusive token indices into a passage.
struct AnswerSpan {
  std::size_t start = 0;
  std::size_t end = 0;

  std::size_t length() const noexcept { return end - start + 1; }
  bool contains(std::size_t p) const noexcept { return p >= start && p <= end; }
  bool operator==(const AnswerSpan&) const = default;
};

struct QAInstance {
  std::string id;
  std::vector<TokenId> passage;
  std::vector<TokenId> question;
  AnswerSpan answer;

  bool operator==(const QAInstance&) const = default;
};

enum class TaskKind { classification, qa };
enum class Split { train, validation, test };

std::string_view to_string(TaskKind kind);
std::string_view to_string(Split split);
TaskKind parse_task_kind(std::string_view text);
Split parse_split(std::string_view text);

/// One split of a corpus. Exactly one of `texts` / `qas` is populated,
/// according to `task`.
struct Dataset {
  TaskKind task = TaskKind::classification;
  Split split = Split::train;
  int num_classes = 0;
  std::vector<TextInstance> texts;
  std::vector<QAInstance> qas;

  std::size_t size() const noexcept { return task == TaskKind::classification ? texts.size() : qas.size(); }
  bool empty() const noexcept { return size() == 0; }
  const std::string& id_at(std::size_t i) const;

  bool operator==(const Dataset&) const = default;
};

// Raw (string-level) records as they appear in JSONL files.
struct RawTextRecord {
  std::string id;
  std::string text;
  int label = 0;
};

struct RawQARecord {
  std::string id;
  std::string passage;
  std::string question;
  std::size_t answer_start_token = 0;
  std::size_t answer_end_token = 0;
};

struct RawDataset {
  TaskKind task = TaskKind::classification;
  Split split = Split::train;
  std::vector<RawTextRecord> texts;
  std::vector<RawQARecord> qas;

  std::size_t size() const noexcept { return task == TaskKind::classification ? texts.size() : qas.size(); }
};

/// Lowercases and splits on ASCII whitespace.
std::vector<std::string> split_words(std::string_view text);

/// Indexes every token of every split: specials first, then first-occurrence
/// order across the splits in the order given. Throws "empty corpus" when no
/// split holds an instance.
Vocabulary build_vocabulary(std::span<const RawDataset> corpora);
Vocabulary build_vocabulary(std::span<const std::string> texts);

/// Lowercase + whitespace split; unseen words map to the unk id.
std::vector<TokenId> tokenize(std::string_view text, const Vocabulary& vocab);
std::string detokenize(std::span<const TokenId> tokens, const Vocabulary& vocab);

/// Encodes raw records. num_classes = 0 infers K as max label + 1.
Dataset encode(const RawDataset& raw, const Vocabulary& vocab, int num_classes = 0);
RawDataset decode(const Dataset& data, const Vocabulary& vocab);

/// Checks every TYPE invariant of the dataset against the vocabulary.
/// Throws Error naming the first offending instance.
void validate(const Dataset& data, std::size_t vocab_size);

RawDataset read_jsonl(const std::filesystem::path& path, TaskKind task, Split split);
void write_jsonl(const std::filesystem::path& path, const RawDataset& data);

struct SyntheticSpec {
  TaskKind task = TaskKind::classification;
  int num_classes = 2;
  std::size_t instances_per_class = 500;
  std::size_t eval_per_class = 100;
  std::size_t vocab_size = 200;
  double mean_length = 20.0;
  /// Extra sampling weight on a class's own word group (1 + bias vs 1).
  double class_bias = 1.5;
  // QA only.
  std::size_t qa_train_instances = 1000;
  std::size_t qa_eval_instances = 200;
  std::size_t qa_triggers = 12;
  std::uint64_t seed = 1;
};

struct Corpus {
  Vocabulary vocab;
  Dataset train;
  Dataset validation;
  Dataset test;
};

/// Deterministic desk-scale corpus. Classification: K classes whose words
/// are drawn from overlapping class-biased distributions. QA: 20-60 token
/// passages where the answer follows a trigger word that the question repeats.
Corpus generate_synthetic(const SyntheticSpec& spec);

/// Builds the joint vocabulary over all three splits and encodes them.
Corpus corpus_from_raw(const RawDataset& train, const RawDataset& validation, const RawDataset& test,
                       int num_classes = 0);

}  // namespace unlearn
