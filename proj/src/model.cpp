#include "salient/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "salient/ops.hpp"

namespace salient {
namespace {

std::vector<double> sample_uniform(std::mt19937_64& rng, std::size_t n, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> out(n);
  for (auto& v : out) v = dist(rng);
  return out;
}

std::vector<double> copy_values(const Tensor& t) {
  auto v = t.values();
  return {v.begin(), v.end()};
}

Tensor embed_rows(std::span<const int> tokens, std::size_t rows, const ModelParams& params,
                  const ModelConfig& config) {
  const auto d = config.embed_dim;
  auto idx = std::make_shared<std::vector<std::int64_t>>(rows * d);
  for (std::size_t i = 0; i < rows; ++i) {
    const int id = i < tokens.size() ? tokens[i] : Vocabulary::kPad;
    if (id < 0 || static_cast<std::size_t>(id) >= config.vocab_size) {
      throw std::invalid_argument("embed: token id " + std::to_string(id) +
                                  " outside vocabulary of " + std::to_string(config.vocab_size));
    }
    for (std::size_t c = 0; c < d; ++c) {
      (*idx)[i * d + c] = static_cast<std::int64_t>(static_cast<std::size_t>(id) * d + c);
    }
  }
  return gather(params.embedding, std::move(idx), {rows, d});
}

}  // namespace

void ModelConfig::validate() const {
  if (embed_dim == 0 || max_len == 0 || vocab_size == 0) {
    throw std::invalid_argument("model config: embed_dim, max_len and vocab_size must be positive");
  }
  if (window_sizes.empty()) throw std::invalid_argument("model config: no convolution windows");
  for (auto w : window_sizes) {
    if (w % 2 == 0) {
      throw std::invalid_argument("model config: window size " + std::to_string(w) + " is not odd");
    }
  }
}

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  const auto d = config.embed_dim;
  ModelParams p;

  std::normal_distribution<double> normal(0.0, 0.1);
  std::vector<double> table(config.vocab_size * d);
  for (auto& v : table) v = normal(rng);
  std::fill_n(table.begin(), d, 0.0);  // pad row
  p.embedding = Tensor::parameter({config.vocab_size, d}, std::move(table));

  for (auto w : config.window_sizes) {
    const double bound = std::sqrt(6.0 / static_cast<double>(w * d + d));
    p.conv_kernels.push_back(Tensor::parameter({w, d, d}, sample_uniform(rng, w * d * d, bound)));
    p.conv_biases.push_back(Tensor::parameter({d}, std::vector<double>(d, 0.0)));
  }
  const auto features = d + config.max_len;
  p.classifier_weights = Tensor::parameter(
      {features}, sample_uniform(rng, features, 1.0 / std::sqrt(static_cast<double>(features))));
  p.classifier_bias = Tensor::parameter({}, {0.0});
  return p;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("embedding", embedding);
  for (std::size_t k = 0; k < conv_kernels.size(); ++k) {
    out.emplace_back("conv" + std::to_string(k) + ".kernel", conv_kernels[k]);
    out.emplace_back("conv" + std::to_string(k) + ".bias", conv_biases[k]);
  }
  out.emplace_back("classifier.weights", classifier_weights);
  out.emplace_back("classifier.bias", classifier_bias);
  return out;
}

std::vector<Tensor> ModelParams::tensors() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

ModelParams ModelParams::from_tensors(const ModelConfig& config, std::span<const Tensor> tensors) {
  const auto windows = config.window_sizes.size();
  if (tensors.size() != 3 + 2 * windows) {
    throw std::invalid_argument("model params: expected " + std::to_string(3 + 2 * windows) +
                                " tensors, got " + std::to_string(tensors.size()));
  }
  ModelParams p;
  p.embedding = tensors[0];
  for (std::size_t k = 0; k < windows; ++k) {
    p.conv_kernels.push_back(tensors[1 + 2 * k]);
    p.conv_biases.push_back(tensors[2 + 2 * k]);
  }
  p.classifier_weights = tensors[1 + 2 * windows];
  p.classifier_bias = tensors[2 + 2 * windows];
  return p;
}

ModelParams ModelParams::clone() const {
  ModelParams p;
  auto fresh = [](const Tensor& t) { return Tensor::parameter(t.shape(), copy_values(t)); };
  p.embedding = fresh(embedding);
  for (const auto& k : conv_kernels) p.conv_kernels.push_back(fresh(k));
  for (const auto& b : conv_biases) p.conv_biases.push_back(fresh(b));
  p.classifier_weights = fresh(classifier_weights);
  p.classifier_bias = fresh(classifier_bias);
  return p;
}

Tensor embed(std::span<const int> tokens, const ModelParams& params, const ModelConfig& config) {
  return embed_rows(tokens, config.max_len, params, config);
}

Tensor conv_stack(const Tensor& x, const ModelParams& params) {
  Tensor out;
  for (std::size_t k = 0; k < params.conv_kernels.size(); ++k) {
    auto h = relu(conv1d_same(x, params.conv_kernels[k], params.conv_biases[k]));
    out = out.defined() ? maximum(out, h) : h;
  }
  return out;
}

ForwardTrace encode_embedded(const Tensor& W, const std::optional<Tensor>& q,
                             const ModelParams& params, const ModelConfig& config,
                             DropoutSpec dropout) {
  ForwardTrace trace;
  trace.W = W;
  auto I = conv_stack(W, params);
  if (q) {
    trace.q = *q;
    I = mul(I, broadcast_axis(*q, 0, config.max_len));
  }
  trace.I = I;
  trace.D_seq = maxpool_axis(I, 0);
  trace.D_dim = maxpool_axis(I, 1);

  auto features = concat(trace.D_seq, trace.D_dim);
  if (dropout.rate > 0.0 && dropout.rng != nullptr) {
    std::bernoulli_distribution keep(1.0 - dropout.rate);
    const double inv = 1.0 / (1.0 - dropout.rate);
    std::vector<double> mask(features.size());
    for (auto& m : mask) m = keep(*dropout.rng) ? inv : 0.0;
    features = mul(features, Tensor::constant(features.shape(), std::move(mask)));
  }
  trace.logit = add(sum_all(mul(params.classifier_weights, features)), params.classifier_bias);
  return trace;
}

ForwardTrace encode(const Example& example, const ModelParams& params, const ModelConfig& config,
                    DropoutSpec dropout) {
  const bool has_query = example.query.has_value();
  if (config.mode == TaskMode::qa && (!has_query || example.query->empty())) {
    throw std::invalid_argument("encode: qa mode requires a nonempty query");
  }
  if (config.mode == TaskMode::event && has_query) {
    throw std::invalid_argument("encode: event mode does not accept a query");
  }
  auto W = embed(example.tokens, params, config);
  std::optional<Tensor> q;
  if (has_query) {
    const auto m = std::min(example.query->size(), config.max_len);
    auto Q = conv_stack(embed_rows(*example.query, m, params, config), params);
    q = maxpool_axis(Q, 0);
  }
  return encode_embedded(W, q, params, config, dropout);
}

Prediction predict(double logit) {
  const double p = logit >= 0.0 ? 1.0 / (1.0 + std::exp(-logit))
                                : std::exp(logit) / (1.0 + std::exp(logit));
  return {p, p >= 0.5 ? 1 : 0};
}

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::invalid_argument("cannot write " + path.string());
  out << "salient-checkpoint 1\n";
  out << "config mode=" << to_string(config.mode) << " embed_dim=" << config.embed_dim
      << " max_len=" << config.max_len << " vocab_size=" << config.vocab_size << " windows=";
  for (std::size_t i = 0; i < config.window_sizes.size(); ++i) {
    out << (i ? "," : "") << config.window_sizes[i];
  }
  out << '\n';
  auto named = params.named();
  for (const auto& [name, t] : named) {
    out << name;
    for (auto e : t.shape()) out << ' ' << e;
    out << '\n';
  }
  out << "end\n";
  for (const auto& [name, t] : named) {
    for (double v : t.values()) {
      auto bits = std::bit_cast<std::uint64_t>(v);
      unsigned char bytes[8];
      for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
      out.write(reinterpret_cast<const char*>(bytes), 8);
    }
  }
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

std::pair<ModelConfig, ModelParams> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open " + path.string());
  auto fail = [&path](const std::string& what) -> std::invalid_argument {
    return std::invalid_argument(path.string() + ": " + what);
  };

  std::string line;
  if (!std::getline(in, line) || line != "salient-checkpoint 1") throw fail("not a checkpoint");
  if (!std::getline(in, line) || line.rfind("config ", 0) != 0) throw fail("missing config line");

  ModelConfig config;
  {
    std::istringstream fields(line.substr(7));
    for (std::string kv; fields >> kv;) {
      auto eq = kv.find('=');
      if (eq == std::string::npos) throw fail("bad config entry '" + kv + "'");
      auto key = kv.substr(0, eq);
      auto value = kv.substr(eq + 1);
      if (key == "mode") {
        config.mode = parse_task_mode(value);
      } else if (key == "embed_dim") {
        config.embed_dim = std::stoul(value);
      } else if (key == "max_len") {
        config.max_len = std::stoul(value);
      } else if (key == "vocab_size") {
        config.vocab_size = std::stoul(value);
      } else if (key == "windows") {
        config.window_sizes.clear();
        std::istringstream ws(value);
        for (std::string w; std::getline(ws, w, ',');) config.window_sizes.push_back(std::stoul(w));
      } else {
        throw fail("unknown config key '" + key + "'");
      }
    }
  }
  config.validate();

  auto expected = ModelParams::init(config, 0).named();
  std::vector<Tensor> tensors;
  for (const auto& [name, proto] : expected) {
    if (!std::getline(in, line)) throw fail("truncated header");
    std::istringstream fields(line);
    std::string got_name;
    fields >> got_name;
    Shape shape;
    for (std::size_t e; fields >> e;) shape.push_back(e);
    if (got_name != name || shape != proto.shape()) {
      throw fail("header entry '" + line + "' does not match expected " + name + " " +
                 to_string(proto.shape()));
    }
    tensors.push_back(proto);
  }
  if (!std::getline(in, line) || line != "end") throw fail("missing header terminator");

  std::vector<Tensor> loaded;
  for (const auto& proto : tensors) {
    std::vector<double> values(proto.size());
    for (auto& v : values) {
      unsigned char bytes[8];
      if (!in.read(reinterpret_cast<char*>(bytes), 8)) throw fail("truncated tensor data");
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
      v = std::bit_cast<double>(bits);
    }
    loaded.push_back(Tensor::parameter(proto.shape(), std::move(values)));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw fail("trailing bytes after tensor data");
  return {config, ModelParams::from_tensors(config, loaded)};
}

}  // namespace salient
