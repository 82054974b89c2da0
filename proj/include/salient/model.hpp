#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "salient/data.hpp"
#include "salient/tensor.hpp"

namespace salient {

struct ModelConfig {
  std::size_t embed_dim = 32;
  std::vector<std::size_t> window_sizes{3, 5};
  std::size_t max_len = 24;
  std::size_t vocab_size = 200;
  TaskMode mode = TaskMode::event;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Trainable parameters. The pad row (id 0) of the embedding table is
// trainable and starts at zero.
struct ModelParams {
  Tensor embedding;                 // vocab_size x d
  std::vector<Tensor> conv_kernels; // per window: w x d x d
  std::vector<Tensor> conv_biases;  // per window: d
  Tensor classifier_weights;        // d + max_len
  Tensor classifier_bias;           // scalar

  static ModelParams init(const ModelConfig& config, std::uint64_t seed);

  // Stable order used by the optimizer and the checkpoint format.
  std::vector<std::pair<std::string, Tensor>> named() const;
  std::vector<Tensor> tensors() const;
  // Inverse of tensors(): rebinds every slot to the given tensors.
  static ModelParams from_tensors(const ModelConfig& config, std::span<const Tensor> tensors);

  // Deep copy with fresh graph leaves.
  ModelParams clone() const;
};

// Every activation the saliency cost can target, all graph-connected to logit.
struct ForwardTrace {
  Tensor W;      // max_len x d embedded input
  Tensor I;      // max_len x d intermediate representation
  Tensor D_seq;  // d, max over positions
  Tensor D_dim;  // max_len, max over dimensions (decision representation)
  std::optional<Tensor> q;  // d, query representation (qa)
  Tensor logit;  // scalar pre-sigmoid score
};

// Inverted dropout on the classifier inputs; disabled when rate == 0 or no rng.
struct DropoutSpec {
  double rate = 0.0;
  std::mt19937_64* rng = nullptr;
};

// Truncates to max_len and pads with id 0.
Tensor embed(std::span<const int> tokens, const ModelParams& params, const ModelConfig& config);

ForwardTrace encode(const Example& example, const ModelParams& params, const ModelConfig& config,
                    DropoutSpec dropout = {});

// Sentence tower given an embedded sentence and an optional query vector.
// Exposed so tests can drive the qa path with a fixed q.
ForwardTrace encode_embedded(const Tensor& W, const std::optional<Tensor>& q,
                             const ModelParams& params, const ModelConfig& config,
                             DropoutSpec dropout = {});

// Max over the window convolutions (each followed by relu) of `x`.
Tensor conv_stack(const Tensor& x, const ModelParams& params);

struct Prediction {
  double probability = 0.0;
  int label = 0;
};

// label = 1 iff probability >= 0.5.
Prediction predict(double logit);

// Checkpoint: text header then raw little-endian float64 data.
//   salient-checkpoint 1
//   config mode=event embed_dim=32 max_len=24 vocab_size=200 windows=3,5
//   <name> <extent> <extent> ...        (one line per tensor)
//   end
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ModelParams& params);
std::pair<ModelConfig, ModelParams> load_checkpoint(const std::filesystem::path& path);

}  // namespace salient
