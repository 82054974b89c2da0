#include "salient/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace salient {
namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string line_error(std::size_t line, const std::string& what) {
  return "line " + std::to_string(line) + ": " + what;
}

// Picks `k` distinct positions out of [0, n).
std::vector<std::size_t> pick_positions(std::mt19937_64& rng, std::size_t n, std::size_t k) {
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  std::shuffle(all.begin(), all.end(), rng);
  all.resize(k);
  std::sort(all.begin(), all.end());
  return all;
}

struct SyntheticLayout {
  Vocabulary vocab;
  std::vector<int> triggers;
  int bias_token = -1;
  std::vector<int> cues;
  std::vector<int> fillers;
};

SyntheticLayout synthetic_layout(const SynthConfig& cfg) {
  SyntheticLayout layout;
  for (std::size_t k = 0; k < cfg.trigger_count; ++k) {
    layout.triggers.push_back(layout.vocab.add("trig" + std::to_string(k)));
  }
  layout.bias_token = layout.vocab.add("bias");
  if (cfg.mode == TaskMode::qa) {
    for (std::size_t k = 0; k < cfg.trigger_count; ++k) {
      layout.cues.push_back(layout.vocab.add("cue" + std::to_string(k)));
    }
  }
  for (std::size_t k = 0; layout.vocab.size() < cfg.vocab_size; ++k) {
    layout.fillers.push_back(layout.vocab.add("w" + std::to_string(k)));
  }
  return layout;
}

}  // namespace

std::string_view to_string(TaskMode mode) { return mode == TaskMode::event ? "event" : "qa"; }

TaskMode parse_task_mode(std::string_view text) {
  if (text == "event") return TaskMode::event;
  if (text == "qa") return TaskMode::qa;
  throw std::invalid_argument("unknown mode '" + std::string(text) + "' (expected event or qa)");
}

std::size_t Example::marked_count() const {
  return static_cast<std::size_t>(std::count(rationale.begin(), rationale.end(), 1));
}

void Example::validate() const {
  if (rationale.size() != tokens.size()) {
    throw std::invalid_argument("example: rationale length " + std::to_string(rationale.size()) +
                                " != token count " + std::to_string(tokens.size()));
  }
  if (label != 0 && label != 1) {
    throw std::invalid_argument("example: label must be 0 or 1, got " + std::to_string(label));
  }
  if (label == 0 && marked_count() != 0) {
    throw std::invalid_argument("example: negative example with a nonempty rationale");
  }
}

Vocabulary::Vocabulary() {
  add("<pad>");
  add("<unk>");
  add("<blank>");
}

int Vocabulary::add(const std::string& token) {
  auto [it, inserted] = ids_.try_emplace(token, static_cast<int>(tokens_.size()));
  if (inserted) tokens_.push_back(token);
  return it->second;
}

std::optional<int> Vocabulary::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

int Vocabulary::id(std::string_view token) const { return find(token).value_or(kUnknown); }

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw std::out_of_range("vocabulary: id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

Vocabulary Vocabulary::build(const std::vector<Record>& records) {
  Vocabulary vocab;
  for (const auto& r : records) {
    for (const auto& t : r.tokens) vocab.add(t);
    if (r.query) {
      for (const auto& t : *r.query) vocab.add(t);
    }
  }
  return vocab;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("cannot write " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<std::string> tokens;
  for (std::string line; std::getline(in, line);) tokens.push_back(line);
  if (tokens.size() < 3 || tokens[0] != "<pad>" || tokens[1] != "<unk>" || tokens[2] != "<blank>") {
    throw std::invalid_argument(path.string() + ": vocabulary must start with <pad> <unk> <blank>");
  }
  Vocabulary vocab;
  for (std::size_t i = 3; i < tokens.size(); ++i) {
    if (vocab.add(tokens[i]) != static_cast<int>(i)) {
      throw std::invalid_argument(path.string() + ": duplicate token '" + tokens[i] + "'");
    }
  }
  return vocab;
}

Example encode(const Record& record, const Vocabulary& vocab) {
  Example ex;
  ex.label = record.label;
  for (const auto& t : record.tokens) ex.tokens.push_back(vocab.id(t));
  if (record.query) {
    std::vector<int> q;
    for (const auto& t : *record.query) q.push_back(t == "<blank>" ? Vocabulary::kBlank : vocab.id(t));
    ex.query = std::move(q);
  }
  ex.rationale.assign(ex.tokens.size(), 0);
  for (auto i : record.rationale) {
    if (i >= ex.tokens.size()) {
      throw std::invalid_argument("rationale index " + std::to_string(i) + " outside sentence of " +
                                  std::to_string(ex.tokens.size()) + " tokens");
    }
    ex.rationale[i] = 1;
  }
  ex.validate();
  return ex;
}

Record decode(const Example& example, const Vocabulary& vocab) {
  Record r;
  r.label = example.label;
  for (int id : example.tokens) r.tokens.push_back(vocab.token(id));
  if (example.query) {
    std::vector<std::string> q;
    for (int id : *example.query) q.push_back(vocab.token(id));
    r.query = std::move(q);
  }
  for (std::size_t i = 0; i < example.rationale.size(); ++i) {
    if (example.rationale[i]) r.rationale.push_back(i);
  }
  return r;
}

void SynthConfig::validate() const {
  if (!(bias_rate >= 0.0 && bias_rate <= 1.0)) {
    throw std::invalid_argument("synth: bias rate must lie in [0, 1]");
  }
  if (!(positive_fraction >= 0.0 && positive_fraction <= 1.0)) {
    throw std::invalid_argument("synth: positive fraction must lie in [0, 1]");
  }
  if (min_len == 0 || min_len > max_len || max_len > max_seq_len) {
    throw std::invalid_argument("synth: need 0 < min_len <= max_len <= max_seq_len, got " +
                                std::to_string(min_len) + ", " + std::to_string(max_len) + ", " +
                                std::to_string(max_seq_len));
  }
  if (trigger_count == 0) throw std::invalid_argument("synth: trigger lexicon must be nonempty");
  // reserved + triggers + bias (+ cues) + at least two fillers
  const std::size_t reserved = 3 + trigger_count + 1 + (mode == TaskMode::qa ? trigger_count : 0);
  if (reserved + 2 > vocab_size) {
    throw std::invalid_argument("synth: vocabulary of " + std::to_string(vocab_size) +
                                " cannot hold " + std::to_string(trigger_count) +
                                " triggers plus reserved, bias and filler tokens");
  }
  if (mode == TaskMode::qa && trigger_count < 2) {
    throw std::invalid_argument("synth: qa mode needs at least two answer candidates");
  }
  if (mode == TaskMode::qa && min_len < 2) {
    throw std::invalid_argument("synth: qa mode needs min_len >= 2");
  }
}

Vocabulary synthetic_vocabulary(const SynthConfig& cfg) {
  cfg.validate();
  return synthetic_layout(cfg).vocab;
}

SyntheticCorpus gen_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  auto layout = synthetic_layout(cfg);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&rng](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
  };
  auto filler = [&] { return layout.fillers[uniform(0, layout.fillers.size() - 1)]; };
  auto trigger = [&] { return layout.triggers[uniform(0, layout.triggers.size() - 1)]; };

  SyntheticCorpus corpus;
  corpus.examples.reserve(cfg.count);
  for (std::size_t e = 0; e < cfg.count; ++e) {
    Example ex;
    ex.label = unit(rng) < cfg.positive_fraction ? 1 : 0;
    const std::size_t n = uniform(cfg.min_len, cfg.max_len);
    ex.tokens.resize(n);
    for (auto& t : ex.tokens) t = filler();
    ex.rationale.assign(n, 0);

    std::size_t answer = 0;
    if (cfg.mode == TaskMode::qa) {
      answer = uniform(0, layout.triggers.size() - 1);
      const std::size_t m = uniform(3, 7);
      std::vector<int> query(m);
      for (auto& t : query) t = filler();
      auto slots = pick_positions(rng, m, 2);
      if (unit(rng) < 0.5) std::swap(slots[0], slots[1]);
      query[slots[0]] = Vocabulary::kBlank;
      query[slots[1]] = layout.cues[answer];
      ex.query = std::move(query);
    }

    std::vector<std::uint8_t> used(n, 0);
    if (ex.label == 1) {
      const std::size_t k = n >= 2 ? uniform(1, 2) : 1;
      for (auto pos : pick_positions(rng, n, k)) {
        ex.tokens[pos] = cfg.mode == TaskMode::event ? trigger() : layout.triggers[answer];
        ex.rationale[pos] = 1;
        used[pos] = 1;
      }
    }
    if (cfg.mode == TaskMode::qa) {
      // Distractor candidates: any trigger except the answer.
      const std::size_t distractors = uniform(ex.label == 1 ? 0 : 1, 1);
      for (std::size_t d = 0; d < distractors; ++d) {
        std::vector<std::size_t> free;
        for (std::size_t i = 0; i < n; ++i) {
          if (!used[i]) free.push_back(i);
        }
        if (free.empty()) break;
        auto pos = free[uniform(0, free.size() - 1)];
        auto other = uniform(0, layout.triggers.size() - 2);
        if (other >= answer) ++other;
        ex.tokens[pos] = layout.triggers[other];
        used[pos] = 1;
      }
    }
    if (ex.label == 1 && unit(rng) < cfg.bias_rate) {
      std::vector<std::size_t> free;
      for (std::size_t i = 0; i < n; ++i) {
        if (!used[i]) free.push_back(i);
      }
      if (!free.empty()) ex.tokens[free[uniform(0, free.size() - 1)]] = layout.bias_token;
    }
    corpus.examples.push_back(std::move(ex));
  }
  corpus.vocab = std::move(layout.vocab);
  corpus.triggers = std::move(layout.triggers);
  corpus.bias_token = layout.bias_token;
  corpus.cues = std::move(layout.cues);
  return corpus;
}

std::vector<Record> parse_jsonl(std::string_view text) {
  std::vector<Record> records;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    auto line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

    Record r;
    try {
      auto j = nlohmann::json::parse(line);
      if (!j.is_object()) throw std::invalid_argument("record must be a JSON object");
      r.tokens = j.at("tokens").get<std::vector<std::string>>();
      if (j.contains("query") && !j["query"].is_null()) {
        r.query = j["query"].get<std::vector<std::string>>();
      }
      r.label = j.at("label").get<int>();
      if (j.contains("rationale")) r.rationale = j["rationale"].get<std::vector<std::size_t>>();
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(line_error(line_no, e.what()));
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument(line_error(line_no, e.what()));
    }
    if (r.label != 0 && r.label != 1) {
      throw std::invalid_argument(line_error(line_no, "label must be 0 or 1"));
    }
    for (auto i : r.rationale) {
      if (i >= r.tokens.size()) {
        throw std::invalid_argument(line_error(
            line_no, "rationale index " + std::to_string(i) + " outside sentence of " +
                         std::to_string(r.tokens.size()) + " tokens"));
      }
    }
    if (r.label == 0 && !r.rationale.empty()) {
      throw std::invalid_argument(line_error(line_no, "negative example with a nonempty rationale"));
    }
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<Record> load_jsonl(const std::filesystem::path& path) {
  try {
    return parse_jsonl(read_file(path));
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

std::string to_jsonl(const std::vector<Record>& records) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["tokens"] = r.tokens;
    if (r.query) j["query"] = *r.query;
    j["label"] = r.label;
    j["rationale"] = r.rationale;
    out += j.dump();
    out += '\n';
  }
  return out;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<Record>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("cannot write " + path.string());
  out << to_jsonl(records);
}

PretrainedEmbeddings parse_embeddings(std::string_view text, const Vocabulary& vocab) {
  PretrainedEmbeddings result;
  std::vector<std::uint8_t> seen(vocab.size(), 0);
  std::istringstream in{std::string(text)};
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    std::istringstream fields(line);
    std::string token;
    if (!(fields >> token)) continue;
    std::vector<double> vec;
    for (std::string field; fields >> field;) {
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc() || ptr != field.data() + field.size()) {
        throw std::invalid_argument(line_error(line_no, "bad number '" + field + "'"));
      }
      vec.push_back(v);
    }
    if (vec.empty()) throw std::invalid_argument(line_error(line_no, "token without a vector"));
    if (result.dim == 0) {
      result.dim = vec.size();
    } else if (vec.size() != result.dim) {
      throw std::invalid_argument(line_error(line_no, "vector of dimension " +
                                                         std::to_string(vec.size()) + ", expected " +
                                                         std::to_string(result.dim)));
    }
    auto id = vocab.find(token);
    if (!id || seen[static_cast<std::size_t>(*id)]) continue;
    seen[static_cast<std::size_t>(*id)] = 1;
    result.rows.emplace_back(*id, std::move(vec));
  }
  return result;
}

PretrainedEmbeddings load_embeddings(const std::filesystem::path& path, const Vocabulary& vocab) {
  try {
    return parse_embeddings(read_file(path), vocab);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

Example remove_marked(const Example& example, RemovalMode mode) {
  example.validate();
  if (example.label != 1 || example.marked_count() == 0) {
    throw std::invalid_argument("remove_marked: requires a positive example with marked tokens");
  }
  Example out;
  out.label = example.label;
  out.query = example.query;
  for (std::size_t i = 0; i < example.tokens.size(); ++i) {
    if (!example.rationale[i]) {
      out.tokens.push_back(example.tokens[i]);
    } else if (mode == RemovalMode::mask) {
      out.tokens.push_back(Vocabulary::kUnknown);
    }
  }
  out.rationale.assign(out.tokens.size(), 0);
  return out;
}

}  // namespace salient
