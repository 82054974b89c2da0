// Acceptance gate. Prints one PASS/FAIL line per criterion; pass criterion
// ids (c1..c7) as arguments to run a subset. Exit status is nonzero when any
// selected criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "salient/evaluation.hpp"
#include "salient/gradcheck.hpp"
#include "salient/grad.hpp"
#include "salient/loss.hpp"
#include "salient/ops.hpp"
#include "salient/training.hpp"

using namespace salient;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

// Published tables: (first rate, second rate, derived value) per row.
struct Row {
  const char* name;
  double a, b, published;
};

constexpr Row kTable1[] = {
    {"ACE no", 66.0, 77.5, 71.3},    {"ACE yes", 70.1, 76.1, 73.0},
    {"ERE no", 85.0, 86.6, 85.8},    {"ERE yes", 85.8, 87.3, 86.6},
    {"CBT-NE no", 55.6, 76.3, 64.3}, {"CBT-NE yes", 57.2, 74.5, 64.7},
    {"CBT-CN no", 47.4, 39.0, 42.8}, {"CBT-CN yes", 48.3, 38.9, 43.1},
};

constexpr Row kTable3[] = {
    {"ACE no", 77.5, 52.2, 32.6},    {"ACE yes", 76.1, 45.0, 40.9},
    {"ERE no", 86.6, 73.2, 15.4},    {"ERE yes", 87.3, 70.6, 19.1},
    {"CBT-NE no", 76.3, 30.2, 60.4}, {"CBT-NE yes", 74.5, 28.5, 61.8},
    {"CBT-CN no", 39.0, 16.6, 57.4}, {"CBT-CN yes", 38.9, 15.4, 60.4},
};

std::uint64_t tenths(double percent) { return static_cast<std::uint64_t>(std::llround(percent * 10)); }

Outcome formula_reproduction() {
  constexpr double tol = 0.05;
  std::size_t ok = 0;
  std::string misses;
  for (const auto& row : kTable1) {
    auto [pred, labels] = oracle::confusion_for(tenths(row.a), tenths(row.b));
    const auto m = classification_metrics(pred, labels);
    if (std::abs(m.f1 - row.published) <= tol) {
      ++ok;
    } else {
      misses += fmt(" F1[%s]=%.3f vs %.1f;", row.name, m.f1, row.published);
    }
  }
  for (const auto& row : kTable3) {
    const auto v = tpr_drop(row.a, row.b);
    if (std::abs(v.delta_tpr - row.published) <= tol) {
      ++ok;
    } else {
      misses += fmt(" dTPR[%s]=%.3f vs %.1f;", row.name, v.delta_tpr, row.published);
    }
  }
  return {ok == 16, fmt("%zu/16 published values within +-0.05.", ok) + misses};
}

Outcome gradient_check() {
  const auto t0 = std::chrono::steady_clock::now();
  GradcheckOptions opt;  // seed 0, d 8, n 6, eps 1e-4, five examples, lambda > 0
  const auto report = run_gradcheck(opt);
  const double secs = seconds_since(t0);
  const bool pass = report.cost_max < 1e-4 && report.cost_errors.size() >= 5 && secs < 120;
  return {pass, fmt("full cost max rel error %.3g over %zu positives (d=%zu n=%zu eps=%g), %.1fs",
                    report.cost_max, report.cost_errors.size(), opt.embed_dim, opt.max_len, opt.eps, secs)};
}

std::string file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome identity_invariant() {
  SynthConfig sc;
  sc.vocab_size = 60;
  sc.max_seq_len = 16;
  sc.max_len = 16;
  sc.count = 200;
  sc.seed = 17;
  const auto corpus = gen_synthetic(sc);
  ModelConfig mc;
  mc.embed_dim = 8;
  mc.max_len = 16;
  mc.vocab_size = corpus.vocab.size();
  const auto params = ModelParams::init(mc, 5);

  double worst = 0.0;
  std::size_t checked = 0;
  const SaliencyConfig on{0.7, {Level::word, Level::intermediate, Level::decision}};
  const SaliencyConfig off{0.0, on.levels};
  for (auto ex : corpus.examples) {
    auto trace = encode(ex, params, mc);
    const double task = task_loss(trace.logit, ex.label).item();
    worst = std::max(worst, std::abs(total_cost(trace, ex, off).total.item() - task));
    std::fill(ex.rationale.begin(), ex.rationale.end(), 0);
    worst = std::max(worst, std::abs(total_cost(trace, ex, on).total.item() - task));
    checked += 2;
  }

  SynthConfig small = sc;
  small.count = 80;
  auto train_set = gen_synthetic(small);
  small.seed = 18;
  small.count = 40;
  auto dev_set = gen_synthetic(small);
  TrainConfig baseline;
  baseline.epochs = 3;
  baseline.seed = 2;
  baseline.adam.learning_rate = 1e-3;
  baseline.saliency = SaliencyConfig{0.0, {}};
  TrainConfig zero = baseline;
  zero.saliency = off;
  const auto init = ModelParams::init(mc, 9);
  const auto a = train(mc, init, train_set.examples, dev_set.examples, baseline);
  const auto b = train(mc, init, train_set.examples, dev_set.examples, zero);
  const auto dir = std::filesystem::temp_directory_path();
  save_checkpoint(dir / "acceptance_c3_a.bin", mc, a.params);
  save_checkpoint(dir / "acceptance_c3_b.bin", mc, b.params);
  const bool same = file_bytes(dir / "acceptance_c3_a.bin") == file_bytes(dir / "acceptance_c3_b.bin") &&
                    a.log.to_jsonl() == b.log.to_jsonl();
  std::filesystem::remove(dir / "acceptance_c3_a.bin");
  std::filesystem::remove(dir / "acceptance_c3_b.bin");

  return {worst <= 1e-15 && same,
          fmt("max |total - task| = %.3g over %zu evaluations; lambda=0 run %s baseline", worst, checked,
              same ? "bit-identical to" : "DIFFERS from")};
}

// One seed of the synthetic experiment: baseline and saliency model trained
// on the same biased data, both scored on the biased and a bias-free test set.
struct ModelScore {
  double accuracy = 0, clean_accuracy = 0, word_sacc = 0, delta_tpr = 0;
};

struct SeedRun {
  std::uint64_t seed = 0;
  ModelScore baseline, saliency;
  double seconds = 0;
};

constexpr double kBiasRate = 0.9;

ModelScore score(const ModelParams& params, const ModelConfig& mc, const SyntheticCorpus& test,
                 const SyntheticCorpus& clean) {
  ModelScore s;
  const auto m = evaluate(params, mc, test.examples);
  s.accuracy = m.accuracy;
  s.word_sacc = m.saliency_accuracy.at(Level::word).value_or(0.0);
  s.clean_accuracy = evaluate(params, mc, clean.examples, false).accuracy;
  std::vector<Example> positives;
  for (const auto& ex : test.examples) {
    if (ex.label == 1) positives.push_back(ex);
  }
  s.delta_tpr = verify_tpr_drop(params, mc, positives).delta_tpr;
  return s;
}

SeedRun run_seed(std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  SynthConfig sc;  // event mode, V=200, |T|=8
  sc.bias_rate = kBiasRate;
  sc.count = 2000;
  sc.seed = seed * 10 + 1;
  const auto train_set = gen_synthetic(sc);
  sc.count = 500;
  sc.seed = seed * 10 + 2;
  const auto dev_set = gen_synthetic(sc);
  sc.seed = seed * 10 + 3;
  const auto test_set = gen_synthetic(sc);
  sc.bias_rate = 0.0;
  const auto clean_set = gen_synthetic(sc);

  ModelConfig mc;  // d=32, windows {3,5}
  mc.max_len = sc.max_seq_len;
  mc.vocab_size = train_set.vocab.size();
  const auto init = ModelParams::init(mc, seed);

  SeedRun run;
  run.seed = seed;
  for (double lambda : {0.0, 0.5}) {
    TrainConfig tc;
    tc.epochs = 30;
    tc.patience = 0;
    tc.seed = seed;
    tc.saliency.lambda = lambda;
    const auto result = train(mc, init, train_set.examples, dev_set.examples, tc);
    (lambda == 0.0 ? run.baseline : run.saliency) = score(result.params, mc, test_set, clean_set);
  }
  run.seconds = seconds_since(t0);
  return run;
}

const std::vector<SeedRun>& synthetic_runs() {
  static const std::vector<SeedRun> runs = [] {
    std::vector<SeedRun> out;
    for (std::uint64_t seed : {0, 1, 2}) {
      out.push_back(run_seed(seed));
      const auto& r = out.back();
      std::printf(
          "  seed %llu (%.0fs): baseline acc %.1f clean %.1f s_acc %.1f dTPR %.2f | "
          "saliency acc %.1f clean %.1f s_acc %.1f dTPR %.2f\n",
          static_cast<unsigned long long>(r.seed), r.seconds, r.baseline.accuracy, r.baseline.clean_accuracy,
          r.baseline.word_sacc, r.baseline.delta_tpr, r.saliency.accuracy, r.saliency.clean_accuracy,
          r.saliency.word_sacc, r.saliency.delta_tpr);
      std::fflush(stdout);
    }
    return out;
  }();
  return runs;
}

Outcome synthetic_end_to_end() {
  std::size_t good = 0;
  std::string detail;
  for (const auto& r : synthetic_runs()) {
    const bool a = r.baseline.accuracy >= 95.0 && r.saliency.accuracy >= 95.0;
    const bool b = r.saliency.word_sacc >= 90.0 && r.saliency.word_sacc - r.baseline.word_sacc >= 10.0;
    const bool c = r.saliency.delta_tpr > r.baseline.delta_tpr;
    const bool fast = r.seconds < 300;
    good += a && b && c && fast;
    detail += fmt(" seed %llu: a=%d b=%d c=%d time=%d;", static_cast<unsigned long long>(r.seed), a, b, c, fast);
  }
  return {good >= 2, fmt("%zu/3 seeds satisfy (a),(b),(c) within 5 min.", good) + detail};
}

Outcome bias_resistance() {
  std::size_t good = 0;
  std::string detail;
  for (const auto& r : synthetic_runs()) {
    const double gain = r.saliency.clean_accuracy - r.baseline.clean_accuracy;
    good += gain >= 2.0;
    detail += fmt(" seed %llu: %+.1f;", static_cast<unsigned long long>(r.seed), gain);
  }
  return {good >= 2, fmt("%zu/3 seeds gain >= 2 points on the bias-free test set (rho=%.1f).", good, kBiasRate) +
                         detail};
}

Outcome mcnemar_oracle() {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::uint64_t> total(1, 200);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::uint64_t n = total(rng);
    const std::uint64_t b = std::uniform_int_distribution<std::uint64_t>(0, n)(rng);
    worst = std::max(worst, std::abs(mcnemar_one_sided(b, n - b) - oracle::binomial_upper_tail(b, n - b)));
  }
  const double closed = mcnemar_one_sided(0, 5);
  return {worst <= 1e-12 && closed == 0.03125,
          fmt("max |p - brute force| = %.3g over 100 pairs; p(b=0,c=5) = %.17g", worst, closed)};
}

Outcome property_suite() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> unit(-1, 1);
  std::bernoulli_distribution coin(0.35);
  std::map<std::string, std::size_t> trials, failures;

  for (int t = 0; t < 300; ++t) {
    SaliencyTally tally;
    std::size_t hits = 0, marked = 0;
    for (int e = 0; e < 1 + t % 11; ++e) {
      const std::size_t n = 1 + (t + e) % 9;
      std::vector<double> G(n);
      std::vector<std::uint8_t> Z(n);
      for (std::size_t i = 0; i < n; ++i) {
        G[i] = coin(rng) ? 0.0 : unit(rng);
        Z[i] = coin(rng);
        marked += Z[i];
        hits += Z[i] && G[i] > 0;
      }
      tally.add(G, Z);
    }
    const bool ok = marked == 0 ? !tally.percent().has_value()
                                : std::abs(*tally.percent() - 100.0 * hits / marked) <= 1e-12;
    ++trials["s_acc recount"];
    failures["s_acc recount"] += !ok;
  }

  std::uniform_int_distribution<int> small(-2, 2);
  for (int t = 0; t < 300; ++t) {
    const std::size_t rows = 1 + t % 5, cols = 1 + t % 7;
    std::vector<double> v(rows * cols);
    for (auto& e : v) e = small(rng);
    auto x = Tensor::parameter({rows, cols}, v);
    bool ok = true;
    for (std::size_t axis : {0u, 1u}) {
      auto pooled = maxpool_axis(x, axis);
      std::vector<double> up(pooled.size());
      for (auto& u : up) u = unit(rng);
      auto g = grad(sum_all(mul(pooled, Tensor::constant(pooled.shape(), up))), x);
      const std::size_t groups = axis == 0 ? cols : rows;
      const std::size_t extent = axis == 0 ? rows : cols;
      for (std::size_t k = 0; k < groups; ++k) {
        double routed = 0.0;
        for (std::size_t e = 0; e < extent; ++e) routed += axis == 0 ? g.at(e, k) : g.at(k, e);
        ok = ok && std::abs(routed - up[k]) <= 1e-15;
      }
    }
    ++trials["maxpool mass"];
    failures["maxpool mass"] += !ok;
  }

  auto hinge = [](const std::vector<double>& G, const std::vector<std::uint8_t>& Z, double lambda) {
    return hinge_penalty(Tensor::constant({G.size()}, G), Z, lambda).item();
  };
  std::uniform_real_distribution<double> lam(0, 4);
  for (int t = 0; t < 300; ++t) {
    const std::size_t n = 1 + t % 9;
    std::vector<double> G(n);
    std::vector<std::uint8_t> Z(n);
    bool all_ok = true;
    for (std::size_t i = 0; i < n; ++i) {
      G[i] = coin(rng) ? 0.0 : unit(rng);
      Z[i] = coin(rng);
      all_ok = all_ok && !(Z[i] && G[i] < 0);
    }
    const double a = lam(rng), s = lam(rng);
    const double h = hinge(G, Z, a);
    ++trials["hinge nonnegative"];
    failures["hinge nonnegative"] += !(h >= 0.0 && (a == 0.0 || (h == 0.0) == all_ok));
    ++trials["hinge homogeneous"];
    failures["hinge homogeneous"] += std::abs(hinge(G, Z, a * s) - s * h) > 1e-12;
  }

  std::uniform_int_distribution<std::uint64_t> seeds(0, 1u << 30);
  for (int t = 0; t < 120; ++t) {
    SynthConfig sc;
    sc.mode = t % 3 == 0 ? TaskMode::qa : TaskMode::event;
    sc.vocab_size = 40 + t % 30;
    sc.trigger_count = 2 + t % 4;
    sc.bias_rate = (t % 4) * 0.25;
    sc.min_len = 4;
    sc.max_len = 10;
    sc.max_seq_len = 12;
    sc.count = 10 + t % 20;
    sc.seed = seeds(rng);
    const auto first = gen_synthetic(sc);
    const auto second = gen_synthetic(sc);
    const bool ok = first.examples == second.examples && first.vocab == second.vocab &&
                    first.triggers == second.triggers && first.bias_token == second.bias_token;
    ++trials["dataset determinism"];
    failures["dataset determinism"] += !ok;
  }

  std::size_t total = 0, failed = 0;
  std::string detail;
  for (const auto& [name, count] : trials) {
    total += count;
    failed += failures[name];
    detail += fmt(" %s %zu/%zu;", name.c_str(), count - failures[name], count);
  }
  const double secs = seconds_since(t0);
  return {failed == 0 && total >= 1000 && secs < 60,
          fmt("%zu randomized trials, %zu failures, %.2fs.", total, failed, secs) + detail};
}

struct Criterion {
  const char* id;
  const char* title;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria{
      {"c1", "formula reproduction", formula_reproduction},
      {"c2", "gradient check", gradient_check},
      {"c3", "identity invariant", identity_invariant},
      {"c4", "synthetic end-to-end", synthetic_end_to_end},
      {"c5", "bias resistance", bias_resistance},
      {"c6", "McNemar oracle", mcnemar_oracle},
      {"c7", "property suite", property_suite},
  };
  std::set<std::string> selected(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("threw: ") + e.what()};
    }
    std::printf("%s %s %s: %s\n", outcome.pass ? "PASS" : "FAIL", c.id, c.title, outcome.detail.c_str());
    std::fflush(stdout);
    failed += !outcome.pass;
  }
  return failed == 0 ? 0 : 1;
}
