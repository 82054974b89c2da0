#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "salient/data.hpp"
#include "salient/gradcheck.hpp"
#include "salient/model.hpp"
#include "salient/training.hpp"

namespace salient {

inline constexpr const char* kCommands[] = {"synth",  "train",     "eval",   "saliency",
                                            "verify", "gradcheck", "compare"};

// Everything a command needs. Each field has a default; `seed` feeds the
// synthetic generator, model initialization and training order alike.
struct RunConfig {
  std::string command;

  std::filesystem::path train_path;
  std::filesystem::path dev_path;
  std::filesystem::path test_path;
  std::filesystem::path vocab_path;       // default: next to the checkpoint
  std::filesystem::path embeddings_path;  // optional pretrained initialization
  std::filesystem::path checkpoint_path;
  std::filesystem::path baseline_path;    // compare, saliency side-by-side
  std::filesystem::path out_dir = "out";
  std::string name = "data";              // synth output stem

  std::uint64_t seed = 0;
  SynthConfig synth;
  ModelConfig model;
  TrainConfig train;
  RemovalMode removal = RemovalMode::remove;
  std::size_t top_k = 6;
  std::size_t visualize = 10;  // heatmaps for the first positives of the test set
  GradcheckOptions gradcheck;

  // Command-specific checks, including that input files exist.
  void validate() const;
};

// Bad flags, unknown commands or invalid settings. `what()` holds the message
// followed by usage text.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Precedence: command-line flag > --config file > SF_SEED (seed only) >
// default. On --help the help text goes to `out` and the returned command is
// empty.
RunConfig parse_command_line(const std::vector<std::string>& args, std::ostream& out);

// Runs a validated configuration. Progress goes to `out`.
void run_command(const RunConfig& config, std::ostream& out);

// Entry point: 0 on success, 1 on usage or validation errors, 2 on numerical
// failure. `args` excludes the program name.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace salient
