#include "salient/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <array>
#include <fstream>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "salient/errors.hpp"
#include "salient/evaluation.hpp"
#include "salient/report.hpp"

namespace salient {
namespace {

namespace fs = std::filesystem;

constexpr double kGradcheckTolerance = 1e-4;

void require_file(const fs::path& path, std::string_view flag) {
  if (path.empty()) throw std::invalid_argument(std::string(flag) + " is required");
  if (!fs::is_regular_file(path)) {
    throw std::invalid_argument(std::string(flag) + ": no such file: " + path.string());
  }
}

fs::path vocab_for(const RunConfig& config) {
  if (!config.vocab_path.empty()) return config.vocab_path;
  return config.checkpoint_path.parent_path() / "vocab.txt";
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::vector<Example> load_examples(const fs::path& path, const Vocabulary& vocab) {
  std::vector<Example> examples;
  for (const auto& record : load_jsonl(path)) examples.push_back(encode(record, vocab));
  return examples;
}

struct Loaded {
  ModelConfig config;
  ModelParams params;
  Vocabulary vocab;
  std::vector<Example> test;
};

Loaded load_for_inference(const RunConfig& run) {
  auto [config, params] = load_checkpoint(run.checkpoint_path);
  auto vocab = Vocabulary::load(vocab_for(run));
  if (vocab.size() != config.vocab_size) {
    throw std::invalid_argument("vocabulary has " + std::to_string(vocab.size()) +
                                " entries, checkpoint expects " + std::to_string(config.vocab_size));
  }
  auto test = load_examples(run.test_path, vocab);
  return {std::move(config), std::move(params), std::move(vocab), std::move(test)};
}

std::vector<int> labels_of(std::span<const Example> examples) {
  std::vector<int> labels;
  for (const auto& ex : examples) labels.push_back(ex.label);
  return labels;
}

std::vector<int> predicted_labels(const ModelParams& params, const ModelConfig& config,
                                  std::span<const Example> examples) {
  std::vector<int> labels;
  for (const auto& p : predict_all(params, config, examples)) labels.push_back(p.label);
  return labels;
}

void run_synth(const RunConfig& run, std::ostream& out) {
  auto corpus = gen_synthetic(run.synth);
  std::vector<Record> records;
  records.reserve(corpus.examples.size());
  for (const auto& ex : corpus.examples) records.push_back(decode(ex, corpus.vocab));
  fs::create_directories(run.out_dir);
  const auto data = run.out_dir / (run.name + ".jsonl");
  write_jsonl(data, records);
  corpus.vocab.save(run.out_dir / "vocab.txt");
  out << "wrote " << records.size() << " examples to " << data.string() << '\n';
}

void apply_embeddings(const PretrainedEmbeddings& pretrained, const ModelConfig& config,
                      ModelParams& params) {
  if (pretrained.dim != config.embed_dim) {
    throw std::invalid_argument("embeddings have dimension " + std::to_string(pretrained.dim) +
                                ", model expects " + std::to_string(config.embed_dim));
  }
  auto table = params.embedding.mutable_values();
  for (const auto& [id, vec] : pretrained.rows) {
    std::copy(vec.begin(), vec.end(), table.begin() + static_cast<std::ptrdiff_t>(id * config.embed_dim));
  }
}

void run_train(const RunConfig& run, std::ostream& out) {
  auto train_records = load_jsonl(run.train_path);
  auto vocab = run.vocab_path.empty() ? Vocabulary::build(train_records) : Vocabulary::load(run.vocab_path);
  std::vector<Example> train_set;
  for (const auto& record : train_records) train_set.push_back(encode(record, vocab));
  auto dev_set = load_examples(run.dev_path, vocab);

  ModelConfig model = run.model;
  model.vocab_size = vocab.size();
  model.validate();
  auto params = ModelParams::init(model, run.seed);
  if (!run.embeddings_path.empty()) {
    auto pretrained = load_embeddings(run.embeddings_path, vocab);
    apply_embeddings(pretrained, model, params);
    out << "pretrained vectors for " << pretrained.coverage() << " of " << vocab.size() << " tokens\n";
  }

  TrainConfig cfg = run.train;
  cfg.seed = run.seed;
  auto result = train(model, params, train_set, dev_set, cfg);

  fs::create_directories(run.out_dir);
  save_checkpoint(run.out_dir / "checkpoint.bin", model, result.params);
  vocab.save(run.out_dir / "vocab.txt");
  write_text(run.out_dir / "train_log.jsonl", result.log.to_jsonl());
  for (const auto& e : result.log.epochs) {
    out << "epoch " << e.epoch << " loss " << std::fixed << std::setprecision(4) << e.task_loss
        << " penalty " << e.penalty << std::setprecision(1) << " dev_f1 " << e.dev.f1 << '\n';
  }
  out.unsetf(std::ios::floatfield);
  out << "best epoch " << result.log.best_epoch << ", checkpoint in " << run.out_dir.string() << '\n';
}

void run_eval(const RunConfig& run, std::ostream& out) {
  auto loaded = load_for_inference(run);
  auto report = evaluate(loaded.params, loaded.config, loaded.test);
  auto record = to_record(report);
  fs::create_directories(run.out_dir);
  write_text(run.out_dir / "metrics.json", record + "\n");
  out << record << '\n';
}

void run_saliency(const RunConfig& run, std::ostream& out) {
  auto loaded = load_for_inference(run);
  std::optional<std::pair<ModelConfig, ModelParams>> baseline;
  if (!run.baseline_path.empty()) {
    baseline = load_checkpoint(run.baseline_path);
    if (baseline->first.vocab_size != loaded.vocab.size()) {
      throw std::invalid_argument("baseline checkpoint does not match the vocabulary");
    }
  }
  constexpr std::array word{Level::word};
  fs::create_directories(run.out_dir);
  std::size_t written = 0;
  for (std::size_t i = 0; i < loaded.test.size() && written < run.visualize; ++i) {
    const auto& ex = loaded.test[i];
    if (ex.label != 1) continue;
    auto report = saliency_report(ex, loaded.params, loaded.config, &loaded.vocab, word);
    PredictionPair preds;
    preds.saliency = predict(report.logit).label;
    std::optional<SaliencyReport> base;
    if (baseline) {
      base = saliency_report(ex, baseline->second, baseline->first, &loaded.vocab, word);
      preds.baseline = predict(base->logit).label;
    }
    const auto path = run.out_dir / ("heatmap_" + std::to_string(i) + ".html");
    write_text(path, render_heatmap(report, preds, run.top_k, base ? &*base : nullptr));
    ++written;
  }
  out << "wrote " << written << " heatmaps to " << run.out_dir.string() << '\n';
}

void run_verify(const RunConfig& run, std::ostream& out) {
  auto loaded = load_for_inference(run);
  std::vector<Example> positives;
  std::copy_if(loaded.test.begin(), loaded.test.end(), std::back_inserter(positives),
               [](const Example& ex) { return ex.label == 1; });
  auto report = verify_tpr_drop(loaded.params, loaded.config, positives, run.removal);
  auto record = to_record(report);
  fs::create_directories(run.out_dir);
  write_text(run.out_dir / "verification.json", record + "\n");
  out << record << '\n';
}

void run_compare(const RunConfig& run, std::ostream& out) {
  auto loaded = load_for_inference(run);
  auto [base_config, base_params] = load_checkpoint(run.baseline_path);
  if (base_config.vocab_size != loaded.vocab.size()) {
    throw std::invalid_argument("baseline checkpoint does not match the vocabulary");
  }
  auto labels = labels_of(loaded.test);
  auto result = compare_predictions(labels, predicted_labels(base_params, base_config, loaded.test),
                                    predicted_labels(loaded.params, loaded.config, loaded.test));
  auto record = to_record(result);
  fs::create_directories(run.out_dir);
  write_text(run.out_dir / "compare.json", record + "\n");
  out << record << '\n';
}

void run_gradcheck_command(const RunConfig& run, std::ostream& out) {
  auto report = run_gradcheck(run.gradcheck);
  double worst = report.cost_max;
  out << std::scientific << std::setprecision(3);
  for (const auto& entry : report.ops) {
    out << "op " << entry.name << ' ' << entry.max_rel_error << '\n';
    worst = std::max(worst, entry.max_rel_error);
  }
  for (std::size_t i = 0; i < report.cost_errors.size(); ++i) {
    out << "cost example " << i << ' ' << report.cost_errors[i] << '\n';
  }
  out << "max rel error " << worst << '\n';
  out.unsetf(std::ios::floatfield);
  if (!(worst < kGradcheckTolerance)) {
    std::ostringstream msg;
    msg << "gradcheck: max relative error " << worst << " exceeds " << kGradcheckTolerance;
    throw NumericalError(msg.str());
  }
}

}  // namespace

void RunConfig::validate() const {
  if (std::find(std::begin(kCommands), std::end(kCommands), command) == std::end(kCommands)) {
    throw std::invalid_argument("unknown command: " + command);
  }
  if (command == "synth") {
    synth.validate();
  } else if (command == "train") {
    require_file(train_path, "--train");
    require_file(dev_path, "--dev");
    if (!vocab_path.empty()) require_file(vocab_path, "--vocab");
    if (!embeddings_path.empty()) require_file(embeddings_path, "--embeddings");
    model.validate();
    train.validate();
  } else if (command == "gradcheck") {
    if (gradcheck.embed_dim == 0) throw std::invalid_argument("--d must be positive");
    if (gradcheck.max_len < 2) throw std::invalid_argument("--n must be at least 2");
    if (gradcheck.examples == 0) throw std::invalid_argument("--examples must be positive");
    if (!(gradcheck.eps > 0.0)) throw std::invalid_argument("--eps must be positive");
    if (!(gradcheck.lambda >= 0.0)) throw std::invalid_argument("--lambda must be non-negative");
  } else {
    require_file(checkpoint_path, "--checkpoint");
    require_file(test_path, "--test");
    require_file(vocab_for(*this), "--vocab");
    if (command == "compare") require_file(baseline_path, "--baseline");
    if (command == "saliency" && !baseline_path.empty()) require_file(baseline_path, "--baseline");
    if (command == "saliency" && top_k == 0) throw std::invalid_argument("--top-k must be positive");
  }
}

RunConfig parse_command_line(const std::vector<std::string>& args, std::ostream& out) {
  RunConfig run;
  CLI::App app{"Saliency-supervised text CNNs: data, training, evaluation and reports", "salient"};
  app.set_config("--config", "", "key = value file; command-line flags take precedence");
  app.require_subcommand(1);

  std::string mode = "event";
  std::string levels = "word,intermediate,decision";
  std::string removal = "remove";
  std::string train_path, dev_path, test_path, vocab_path, embeddings_path, checkpoint_path,
      baseline_path, out_dir = run.out_dir.string();
  double lambda = 0.0;

  app.add_option("--seed", run.seed, "Random seed")->envname("SF_SEED");
  app.add_option("--out-dir", out_dir, "Output directory");
  app.add_option("--train", train_path, "Training set (JSONL)");
  app.add_option("--dev", dev_path, "Development set (JSONL)");
  app.add_option("--test", test_path, "Test set (JSONL)");
  app.add_option("--vocab", vocab_path, "Vocabulary file");
  app.add_option("--embeddings", embeddings_path, "Pretrained embeddings (text)");
  app.add_option("--checkpoint", checkpoint_path, "Model checkpoint");
  app.add_option("--baseline", baseline_path, "Baseline checkpoint");
  app.add_option("--name", run.name, "Output stem for synth");

  app.add_option("--mode", mode, "Task mode")->check(CLI::IsMember({"event", "qa"}));
  app.add_option("--count", run.synth.count, "Synthetic examples");
  app.add_option("--vocab-size", run.synth.vocab_size, "Synthetic vocabulary size");
  app.add_option("--triggers", run.synth.trigger_count, "Trigger / answer candidate count");
  app.add_option("--bias-rate", run.synth.bias_rate, "Probability a positive carries the bias token");
  app.add_option("--positive-fraction", run.synth.positive_fraction, "Share of positives");
  app.add_option("--min-tokens", run.synth.min_len, "Shortest synthetic sentence");
  app.add_option("--max-tokens", run.synth.max_len, "Longest synthetic sentence");

  auto* d_opt = app.add_option("--d,--embed-dim", run.model.embed_dim, "Embedding dimension");
  auto* n_opt = app.add_option("--n,--max-len", run.model.max_len, "Padded sequence length");
  app.add_option("--windows", run.model.window_sizes, "Convolution widths")->delimiter(',');

  app.add_option("--lr", run.train.adam.learning_rate, "Adam learning rate");
  app.add_option("--batch-size", run.train.batch_size, "Mini-batch size");
  app.add_option("--dropout", run.train.dropout, "Dropout rate on the classifier input");
  app.add_option("--epochs", run.train.epochs, "Maximum epochs");
  app.add_option("--patience", run.train.patience, "Early-stopping patience (0 disables)");
  auto* lambda_opt = app.add_option("--lambda", lambda, "Saliency penalty weight");
  app.add_option("--levels", levels, "Regularized levels, comma separated");

  app.add_option("--removal", removal, "How verify strips marked tokens")
      ->check(CLI::IsMember({"remove", "mask"}));
  app.add_option("--top-k", run.top_k, "Highlighted tokens per heatmap");
  app.add_option("--visualize", run.visualize, "Heatmaps to render");
  app.add_option("--examples", run.gradcheck.examples, "Gradcheck examples");
  app.add_option("--eps", run.gradcheck.eps, "Finite-difference step");

  const std::map<std::string, std::string> about = {
      {"synth", "Write a synthetic annotated dataset and its vocabulary"},
      {"train", "Train a model; writes checkpoint, vocabulary and log"},
      {"eval", "Classification metrics and saliency accuracy on --test"},
      {"saliency", "Render word-level saliency heatmaps for test positives"},
      {"verify", "True-positive-rate drop after removing marked tokens"},
      {"gradcheck", "Finite-difference checks of every op and the full cost"},
      {"compare", "One-sided McNemar test of --checkpoint against --baseline"},
  };
  for (const char* name : kCommands) {
    auto* sub = app.add_subcommand(name, about.at(name));
    sub->fallthrough();
    sub->set_help_flag();
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return RunConfig{};
  } catch (const CLI::ParseError& e) {
    throw UsageError(std::string(e.what()) + "\n\n" +
                     app.get_formatter()->make_help(&app, "salient", CLI::AppFormatMode::Normal));
  }

  run.command = app.get_subcommands().front()->get_name();
  run.train_path = train_path;
  run.dev_path = dev_path;
  run.test_path = test_path;
  run.vocab_path = vocab_path;
  run.embeddings_path = embeddings_path;
  run.checkpoint_path = checkpoint_path;
  run.baseline_path = baseline_path;
  run.out_dir = out_dir;
  run.removal = removal == "mask" ? RemovalMode::mask : RemovalMode::remove;

  try {
    run.model.mode = parse_task_mode(mode);
    run.synth.mode = run.model.mode;
    run.synth.seed = run.seed;
    run.synth.max_seq_len = run.model.max_len;
    run.train.seed = run.seed;
    run.train.saliency.lambda = lambda;
    run.train.saliency.levels = parse_levels(levels);
    run.gradcheck.seed = run.seed;
    if (d_opt->count() > 0) run.gradcheck.embed_dim = run.model.embed_dim;
    if (n_opt->count() > 0) run.gradcheck.max_len = run.model.max_len;
    if (lambda_opt->count() > 0) run.gradcheck.lambda = lambda;
    run.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(std::string(e.what()) + "\nRun 'salient --help' for usage.\n");
  }
  return run;
}

void run_command(const RunConfig& config, std::ostream& out) {
  const auto& c = config.command;
  if (c == "synth") return run_synth(config, out);
  if (c == "train") return run_train(config, out);
  if (c == "eval") return run_eval(config, out);
  if (c == "saliency") return run_saliency(config, out);
  if (c == "verify") return run_verify(config, out);
  if (c == "gradcheck") return run_gradcheck_command(config, out);
  if (c == "compare") return run_compare(config, out);
  throw std::invalid_argument("unknown command: " + c);
}

int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  try {
    auto config = parse_command_line(args, out);
    if (config.command.empty()) return 0;
    run_command(config, out);
    return 0;
  } catch (const UsageError& e) {
    err << "error: " << e.what();
    return 1;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace salient
