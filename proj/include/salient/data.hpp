#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace salient {

enum class TaskMode { event, qa };

std::string_view to_string(TaskMode mode);
TaskMode parse_task_mode(std::string_view text);

// One training/evaluation instance in id space.
// Invariants: rationale.size() == tokens.size(); label == 0 implies an
// all-zero rationale.
struct Example {
  std::vector<int> tokens;
  std::optional<std::vector<int>> query;
  int label = 0;
  std::vector<std::uint8_t> rationale;

  std::size_t marked_count() const;
  // Throws std::invalid_argument if an invariant is broken.
  void validate() const;

  bool operator==(const Example&) const = default;
};

// The same instance in token-string space, as stored on disk.
struct Record {
  std::vector<std::string> tokens;
  std::optional<std::vector<std::string>> query;
  int label = 0;
  std::vector<std::size_t> rationale;  // indices into tokens

  bool operator==(const Record&) const = default;
};

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnknown = 1;
  static constexpr int kBlank = 2;

  // Starts with the three reserved entries.
  Vocabulary();

  // Adds the token if absent; returns its id.
  int add(const std::string& token);
  // Unknown tokens map to kUnknown.
  int id(std::string_view token) const;
  std::optional<int> find(std::string_view token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }

  // Builds a vocabulary from every token and query token, in first-seen order.
  static Vocabulary build(const std::vector<Record>& records);

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

Example encode(const Record& record, const Vocabulary& vocab);
Record decode(const Example& example, const Vocabulary& vocab);

// Parameters of the synthetic annotated corpus.
struct SynthConfig {
  TaskMode mode = TaskMode::event;
  std::size_t vocab_size = 200;
  std::size_t trigger_count = 8;  // |T|: triggers (event) or answer candidates (qa)
  double bias_rate = 0.0;         // probability a positive carries the bias token
  std::size_t min_len = 6;
  std::size_t max_len = 16;
  std::size_t max_seq_len = 24;   // model padding target the lengths must fit
  double positive_fraction = 0.5;
  std::size_t count = 100;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticCorpus {
  Vocabulary vocab;
  std::vector<Example> examples;
  std::vector<int> triggers;  // trigger / answer-candidate ids
  int bias_token = -1;
  std::vector<int> cues;      // qa: cues[k] identifies answer triggers[k] in the query
};

// Event mode: positives hold one or two trigger tokens at random positions,
// marked in the rationale; negatives hold none. QA mode: the query contains
// the blank and the cue of its answer; positives contain the answer (marked),
// negatives do not but may contain other candidates. With probability
// bias_rate a positive also carries the unmarked bias token.
SyntheticCorpus gen_synthetic(const SynthConfig& cfg);

// Vocabulary of gen_synthetic for `cfg`, without generating examples.
Vocabulary synthetic_vocabulary(const SynthConfig& cfg);

// Newline-delimited JSON records:
//   {"tokens": [...], "query": [...]?, "label": 0|1, "rationale": [indices]}
// Errors name the 1-based line number.
std::vector<Record> load_jsonl(const std::filesystem::path& path);
std::vector<Record> parse_jsonl(std::string_view text);
void write_jsonl(const std::filesystem::path& path, const std::vector<Record>& records);
std::string to_jsonl(const std::vector<Record>& records);

struct PretrainedEmbeddings {
  std::size_t dim = 0;
  // (vocab id, vector) for every vocabulary token present in the file.
  std::vector<std::pair<int, std::vector<double>>> rows;

  std::size_t coverage() const { return rows.size(); }
};

// Whitespace-separated text, one token followed by `dim` reals per line.
PretrainedEmbeddings load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab);
PretrainedEmbeddings parse_embeddings(std::string_view text, const Vocabulary& vocab);

enum class RemovalMode {
  remove,  // delete marked tokens; the rest close ranks
  mask,    // replace marked tokens with the unknown id
};

// Strips the rationale tokens from a positive example. The rationale of the
// result is all zero; the query is untouched.
Example remove_marked(const Example& example, RemovalMode mode = RemovalMode::remove);

}  // namespace salient
