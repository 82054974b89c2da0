#include "salient/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <stdexcept>

#include "salient/data.hpp"
#include "salient/grad.hpp"
#include "salient/loss.hpp"
#include "salient/model.hpp"
#include "salient/ops.hpp"

namespace salient {
namespace {

constexpr double kKinkMargin = 1e-3;

class Sampler {
 public:
  explicit Sampler(std::uint64_t seed) : rng_(seed) {}

  Tensor smooth(Shape shape, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(num_elements(shape));
    for (auto& x : v) x = dist(rng_);
    return Tensor::constant(std::move(shape), std::move(v));
  }

  // Entries at least kKinkMargin away from zero.
  Tensor away_from_zero(Shape shape) {
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> v(num_elements(shape));
    for (auto& x : v) {
      do x = dist(rng_);
      while (std::abs(x) < kKinkMargin);
    }
    return Tensor::constant(std::move(shape), std::move(v));
  }

  // Distinct values with pairwise gaps well above kKinkMargin.
  Tensor spread(Shape shape) {
    std::vector<double> v(num_elements(shape));
    std::uniform_real_distribution<double> jitter(0.0, 0.04);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.1 * static_cast<double>(i) + jitter(rng_);
    std::shuffle(v.begin(), v.end(), rng_);
    return Tensor::constant(std::move(shape), std::move(v));
  }

  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

// sum(out * weights) with fixed random weights, so the upstream gradient is
// not uniform.
Tensor weighted_sum(const Tensor& out, const Tensor& weights) { return sum_all(mul(out, weights)); }

// Smallest distance of any routing decision from its switching point for one
// forward pass. Groups whose winner is an exact relu zero are ignored: every
// candidate there has zero slope.
double kink_margin(const Example& ex, const ModelParams& params, const ModelConfig& config,
                   double lambda) {
  double margin = std::numeric_limits<double>::infinity();
  auto W = embed(ex.tokens, params, config);
  std::vector<Tensor> convs;
  for (std::size_t k = 0; k < params.conv_kernels.size(); ++k) {
    auto pre = conv1d_same(W, params.conv_kernels[k], params.conv_biases[k]);
    for (double v : pre.values()) margin = std::min(margin, std::abs(v));
    convs.push_back(relu(pre));
  }
  for (std::size_t k = 1; k < convs.size(); ++k) {
    for (std::size_t i = 0; i < convs[0].size(); ++i) {
      const double a = convs[0][i];
      const double b = convs[k][i];
      if (a > 0.0 || b > 0.0) margin = std::min(margin, std::abs(a - b));
    }
  }
  auto trace = encode(ex, params, config);
  const auto rows = trace.I.shape()[0];
  const auto cols = trace.I.shape()[1];
  auto gap = [&](auto value_at, std::size_t extent) {
    double top = -std::numeric_limits<double>::infinity();
    double second = top;
    for (std::size_t k = 0; k < extent; ++k) {
      const double v = value_at(k);
      if (v > top) {
        second = top;
        top = v;
      } else if (v > second) {
        second = v;
      }
    }
    if (top > 0.0 && extent > 1) margin = std::min(margin, top - second);
  };
  for (std::size_t j = 0; j < cols; ++j) gap([&](std::size_t i) { return trace.I.at(i, j); }, rows);
  for (std::size_t i = 0; i < rows; ++i) gap([&](std::size_t j) { return trace.I.at(i, j); }, cols);

  if (lambda > 0.0) {
    auto mask = padded_mask(ex.rationale, config.max_len);
    for (auto level : kAllLevels) {
      auto G = token_saliency(level_tensor(trace, level), trace.logit, false);
      for (std::size_t i = 0; i < mask.size(); ++i) {
        if (mask[i]) margin = std::min(margin, std::abs(G[i]));
      }
    }
  }
  return margin;
}

}  // namespace

GradcheckReport run_gradcheck(const GradcheckOptions& options) {
  if (options.max_len < 2) throw std::invalid_argument("gradcheck: max_len must be >= 2");
  GradcheckReport report;
  Sampler s(options.seed);
  const double eps = options.eps;

  auto check = [&](const std::string& name, const std::function<Tensor(std::span<const Tensor>)>& f,
                   std::vector<Tensor> inputs) {
    report.ops.push_back({name, finite_diff_check(f, inputs, eps)});
  };

  {
    auto w = s.smooth({3, 4});
    check("add", [w](auto x) { return weighted_sum(add(x[0], x[1]), w); }, {s.smooth({3, 4}), s.smooth({3, 4})});
    check("sub", [w](auto x) { return weighted_sum(sub(x[0], x[1]), w); }, {s.smooth({3, 4}), s.smooth({3, 4})});
    check("mul", [w](auto x) { return weighted_sum(mul(x[0], x[1]), w); }, {s.smooth({3, 4}), s.smooth({3, 4})});
    check("mul_scalar", [w](auto x) { return weighted_sum(mul(x[0], x[1]), w); }, {s.smooth({3, 4}), s.smooth({})});
    check("scale", [w](auto x) { return weighted_sum(scale(x[0], -2.5), w); }, {s.smooth({3, 4})});
    check("relu", [w](auto x) { return weighted_sum(relu(x[0]), w); }, {s.away_from_zero({3, 4})});
    check("sigmoid", [w](auto x) { return weighted_sum(sigmoid(x[0]), w); }, {s.smooth({3, 4}, -3, 3)});
    check("softplus", [w](auto x) { return weighted_sum(softplus(x[0]), w); }, {s.smooth({3, 4}, -3, 3)});
    check("sum_all", [](auto x) { return sum_all(mul(x[0], x[0])); }, {s.smooth({3, 4})});
    check("maximum", [w](auto x) { return weighted_sum(maximum(x[0], x[1]), w); },
          {s.spread({3, 4}), s.spread({3, 4})});
    check("transpose", [](auto x) { return sum_all(mul(transpose(x[0]), x[1])); }, {s.smooth({3, 4}), s.smooth({4, 3})});
    check("reshape", [w](auto x) { return weighted_sum(reshape(x[0], {3, 4}), w); }, {s.smooth({2, 6})});
  }
  {
    auto w0 = s.smooth({4});
    auto w1 = s.smooth({3});
    check("sum_axis", [w0](auto x) { return weighted_sum(sum_axis(x[0], 0), w0); }, {s.smooth({3, 4})});
    check("maxpool_rows", [w0](auto x) { return weighted_sum(maxpool_axis(x[0], 0), w0); }, {s.spread({6, 4})});
    check("maxpool_cols", [w1](auto x) { return weighted_sum(maxpool_axis(x[0], 1), w1); }, {s.spread({3, 8})});
    auto wb = s.smooth({5, 4});
    check("broadcast_axis", [wb](auto x) { return weighted_sum(broadcast_axis(x[0], 0, 5), wb); }, {s.smooth({4})});
    auto wc = s.smooth({7});
    check("concat", [wc](auto x) { return weighted_sum(concat(x[0], x[1]), wc); }, {s.smooth({3}), s.smooth({4})});
    check("slice_last", [w1](auto x) { return weighted_sum(slice_last(x[0], 2, 3), w1); }, {s.smooth({6})});
    auto wp = s.smooth({8});
    check("pad_last", [wp](auto x) { return weighted_sum(pad_last(x[0], 2, 8), wp); }, {s.smooth({3})});
    auto idx = std::make_shared<std::vector<std::int64_t>>(std::vector<std::int64_t>{4, -1, 0, 4, 7});
    auto wg = s.smooth({5});
    check("gather", [idx, wg](auto x) { return weighted_sum(gather(x[0], idx, {5}), wg); }, {s.smooth({8})});
    auto ws = s.smooth({8});
    check("scatter_add", [idx, ws](auto x) { return weighted_sum(scatter_add(x[0], idx, {8}), ws); }, {s.smooth({5})});
    auto wm = s.smooth({3, 2});
    check("matmul", [wm](auto x) { return weighted_sum(matmul(x[0], x[1]), wm); }, {s.smooth({3, 4}), s.smooth({4, 2})});
    auto wv = s.smooth({5, 3});
    check("conv1d_same", [wv](auto x) { return weighted_sum(conv1d_same(x[0], x[1], x[2]), wv); },
          {s.smooth({5, 2}), s.smooth({3, 2, 3}), s.smooth({3})});
  }
  {
    // Second order: d/dx sum(d f / d x) against differences of the first gradient.
    auto B = s.smooth({4, 2});
    auto r = s.smooth({3, 2});
    auto f = [B, r](const Tensor& x) { return weighted_sum(sigmoid(matmul(x, B)), r); };
    check("second_order_sigmoid_matmul",
          [f](auto x) { return sum_all(grad(f(x[0]), x[0], /*create_graph=*/true)); }, {s.smooth({3, 4})});
    auto K = s.smooth({3, 2, 2});
    auto b = s.smooth({2});
    auto r2 = s.smooth({4, 2});
    auto g = [K, b, r2](const Tensor& x) { return weighted_sum(softplus(conv1d_same(x, K, b)), r2); };
    check("second_order_softplus_conv",
          [g](auto x) { return sum_all(grad(g(x[0]), x[0], /*create_graph=*/true)); }, {s.smooth({4, 2})});
  }

  // Full cost over every parameter.
  ModelConfig config;
  config.embed_dim = options.embed_dim;
  config.max_len = options.max_len;
  config.mode = TaskMode::event;
  SynthConfig synth;
  synth.vocab_size = 16;
  synth.trigger_count = 3;
  synth.min_len = 2;
  synth.max_len = options.max_len;
  synth.max_seq_len = options.max_len;
  synth.positive_fraction = 1.0;
  synth.count = 50 * std::max<std::size_t>(options.examples, 1);
  synth.seed = options.seed;
  auto corpus = gen_synthetic(synth);
  config.vocab_size = corpus.vocab.size();
  auto params = ModelParams::init(config, options.seed);

  SaliencyConfig saliency;
  saliency.lambda = options.lambda;
  for (const auto& ex : corpus.examples) {
    if (report.cost_errors.size() >= options.examples) break;
    if (kink_margin(ex, params, config, options.lambda) < kKinkMargin) continue;
    auto cost = [&config, &ex, &saliency](std::span<const Tensor> xs) {
      auto p = ModelParams::from_tensors(config, xs);
      return total_cost(encode(ex, p, config), ex, saliency).total;
    };
    auto leaves = params.tensors();
    report.cost_errors.push_back(finite_diff_check(cost, leaves, eps));
  }
  if (report.cost_errors.size() < options.examples) {
    throw std::runtime_error("gradcheck: not enough examples clear of kinks");
  }
  report.cost_max = *std::max_element(report.cost_errors.begin(), report.cost_errors.end());
  return report;
}

}  // namespace salient
