#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <regex>
#include <sstream>

#include "salient/cli.hpp"
#include "salient/report.hpp"

using namespace salient;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli_main(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t count(const std::string& text, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("salient_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    ::unsetenv("SF_SEED");
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  // Small train/dev/test splits plus their shared vocabulary under data/.
  void make_data() {
    const std::vector<std::pair<std::string, std::string>> splits{{"train", "1"}, {"dev", "2"}, {"test", "3"}};
    for (const auto& [name, seed] : splits) {
      ASSERT_EQ(run({"synth", "--count", "40", "--seed", seed, "--vocab-size", "40", "--triggers", "3",
                     "--n", "10", "--max-tokens", "10", "--out-dir", path("data"), "--name", name})
                    .code,
                0);
    }
  }

  std::vector<std::string> train_args(const std::string& out) const {
    return {"train", "--train", path("data/train.jsonl"), "--dev", path("data/dev.jsonl"), "--vocab",
            path("data/vocab.txt"), "--d", "6", "--n", "10", "--epochs", "2", "--batch-size", "8",
            "--seed", "3", "--out-dir", path(out)};
  }

  fs::path dir_;
};

}  // namespace

TEST_F(CliTest, SynthIsReproducible) {
  ASSERT_EQ(run({"synth", "--mode", "event", "--count", "100", "--seed", "7", "--out-dir", path("a")}).code, 0);
  ASSERT_EQ(run({"synth", "--mode", "event", "--count", "100", "--seed", "7", "--out-dir", path("b")}).code, 0);
  EXPECT_FALSE(slurp(path("a/data.jsonl")).empty());
  EXPECT_EQ(slurp(path("a/data.jsonl")), slurp(path("b/data.jsonl")));
  EXPECT_EQ(slurp(path("a/vocab.txt")), slurp(path("b/vocab.txt")));
  EXPECT_EQ(count(slurp(path("a/data.jsonl")), "\n"), 100u);
}

TEST_F(CliTest, ConfigPrecedence) {
  {
    std::ofstream cfg(path("run.ini"));
    cfg << "# comment\nlambda = 0.7\nseed = 11\nepochs = 4\n";
  }
  std::ostringstream sink;
  auto defaults = parse_command_line({"gradcheck"}, sink);
  EXPECT_EQ(defaults.train.epochs, TrainConfig{}.epochs);
  EXPECT_EQ(defaults.seed, 0u);

  auto layered = parse_command_line({"gradcheck", "--config", path("run.ini"), "--seed", "5"}, sink);
  EXPECT_EQ(layered.seed, 5u);                        // flag beats file
  EXPECT_EQ(layered.train.saliency.lambda, 0.7);      // file beats default
  EXPECT_EQ(layered.train.epochs, 4u);
  EXPECT_EQ(layered.train.batch_size, TrainConfig{}.batch_size);  // default

  ::setenv("SF_SEED", "9", 1);
  EXPECT_EQ(parse_command_line({"gradcheck"}, sink).seed, 9u);
  EXPECT_EQ(parse_command_line({"gradcheck", "--config", path("run.ini")}, sink).seed, 11u);
  EXPECT_EQ(parse_command_line({"gradcheck", "--seed", "2"}, sink).seed, 2u);
  ::unsetenv("SF_SEED");
}

TEST_F(CliTest, UsageErrorsExitOne) {
  auto unknown = run({"frobnicate"});
  EXPECT_EQ(unknown.code, 1);
  EXPECT_NE(unknown.err.find("Usage"), std::string::npos);

  auto flag = run({"synth", "--no-such-flag"});
  EXPECT_EQ(flag.code, 1);
  EXPECT_NE(flag.err.find("Usage"), std::string::npos);

  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"eval", "--checkpoint", path("missing.bin"), "--test", path("missing.jsonl")}).code, 1);
  EXPECT_EQ(run({"train", "--train", path("missing.jsonl")}).code, 1);
  EXPECT_EQ(run({"synth", "--vocab-size", "5"}).code, 1);
  EXPECT_EQ(run({"train", "--mode", "chess"}).code, 1);
  EXPECT_EQ(run({"--help"}).code, 0);
}

TEST_F(CliTest, GradcheckPasses) {
  auto r = run({"gradcheck", "--d", "8", "--n", "6"});
  EXPECT_EQ(r.code, 0) << r.err;
  std::smatch m;
  ASSERT_TRUE(std::regex_search(r.out, m, std::regex("max rel error ([0-9.e+-]+)")));
  EXPECT_LT(std::stod(m[1]), 1e-4);
}

TEST_F(CliTest, ZeroLambdaTrainEqualsBaseline) {
  make_data();
  auto base = train_args("base");
  auto zero = train_args("zero");
  zero.insert(zero.end(), {"--lambda", "0"});
  ASSERT_EQ(run(base).code, 0);
  ASSERT_EQ(run(zero).code, 0);
  EXPECT_EQ(slurp(path("base/checkpoint.bin")), slurp(path("zero/checkpoint.bin")));
  EXPECT_EQ(slurp(path("base/train_log.jsonl")), slurp(path("zero/train_log.jsonl")));
}

TEST_F(CliTest, PipelineOutputsAreReproducible) {
  make_data();
  for (const std::string out : {"m1", "m2"}) {
    auto args = train_args(out);
    args.insert(args.end(), {"--lambda", "0.5"});
    ASSERT_EQ(run(args).code, 0);
    const auto ckpt = path(out + "/checkpoint.bin");
    const auto test = path("data/test.jsonl");
    for (const std::string cmd : {"eval", "verify", "saliency"}) {
      auto r = run({cmd, "--checkpoint", ckpt, "--test", test, "--out-dir", path(out), "--visualize", "3"});
      ASSERT_EQ(r.code, 0) << cmd << ": " << r.err;
    }
    auto r = run({"compare", "--checkpoint", ckpt, "--baseline", path("m1/checkpoint.bin"), "--test", test,
                  "--out-dir", path(out)});
    ASSERT_EQ(r.code, 0) << r.err;
  }
  for (const auto& entry : fs::directory_iterator(path("m1"))) {
    const auto name = entry.path().filename().string();
    EXPECT_EQ(slurp(entry.path()), slurp(path("m2/" + name))) << name;
  }
  EXPECT_TRUE(fs::exists(path("m1/metrics.json")));
  EXPECT_TRUE(fs::exists(path("m1/verification.json")));
  EXPECT_TRUE(fs::exists(path("m1/compare.json")));
  std::size_t heatmaps = 0;
  for (const auto& entry : fs::directory_iterator(path("m1"))) {
    heatmaps += entry.path().filename().string().starts_with("heatmap_");
  }
  EXPECT_EQ(heatmaps, 3u);
}

TEST_F(CliTest, NumericalFailureExitsTwo) {
  make_data();
  {
    std::ofstream emb(path("bad.vec"));
    std::ifstream vocab(path("data/vocab.txt"));
    for (std::string tok; std::getline(vocab, tok);) emb << tok << " nan nan nan nan nan nan\n";
  }
  auto args = train_args("bad");
  args.insert(args.end(), {"--embeddings", path("bad.vec")});
  auto r = run(args);
  EXPECT_EQ(r.code, 2) << r.err;
}

TEST(Heatmap, NoShadingWithoutSaliency) {
  SaliencyReport r;
  r.tokens = {"a", "b", "c"};
  r.rationale = {0, 1, 0};
  r.G[Level::word] = {0, 0, 0};
  auto html = render_heatmap(r, {});
  EXPECT_EQ(count(html, "class=\"sal "), 0u);
  EXPECT_NE(html.find("</html>"), std::string::npos);
}

TEST(Heatmap, ShadesExactlyTopK) {
  SaliencyReport r;
  for (int i = 0; i < 20; ++i) {
    r.tokens.push_back("w" + std::to_string(i));
    r.rationale.push_back(i % 7 == 0);
    r.G[Level::word].push_back(0.1 * (i + 1) * (i % 2 ? 1 : -1));
  }
  auto html = render_heatmap(r, {1, 0}, 6);
  EXPECT_EQ(count(html, "class=\"sal "), 6u);
  EXPECT_EQ(count(html, "class=\"sal s7\">w19<"), 1u);  // largest |G| is darkest

  std::vector<std::string> listed;
  std::regex li("<li data-index=\"([0-9]+)\">");
  for (std::sregex_iterator it(html.begin(), html.end(), li), end; it != end; ++it) listed.push_back((*it)[1]);
  EXPECT_EQ(listed, (std::vector<std::string>{"0", "7", "14"}));
  EXPECT_NE(html.find("P<sub>B</sub> = 1, P<sub>S</sub> = 0"), std::string::npos);
}

TEST(Heatmap, BucketsAndEscaping) {
  EXPECT_EQ(heatmap_bucket(0, 6), 7);
  EXPECT_EQ(heatmap_bucket(5, 6), 2);
  EXPECT_EQ(heatmap_bucket(6, 6), 0);
  for (std::size_t k = 1; k <= 10; ++k) {
    for (std::size_t r = 0; r < k; ++r) {
      EXPECT_GE(heatmap_bucket(r, k), 1);
      EXPECT_LE(heatmap_bucket(r, k), 7);
      if (r) {
        EXPECT_LE(heatmap_bucket(r, k), heatmap_bucket(r - 1, k));
      }
    }
  }
  EXPECT_EQ(html_escape("<a & \"b\">"), "&lt;a &amp; &quot;b&quot;&gt;");
}
