// polythnet: train, evaluate and run the polythene classifier.
//
// Exit codes: 0 success, 1 verification failure, 2 input/config error,
// 3 checkpoint error, 4 I/O error.

#include <fmt/format.h>

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "polyth/checkpoint.hpp"
#include "polyth/dataset.hpp"
#include "polyth/image.hpp"
#include "polyth/kv_config.hpp"
#include "polyth/metrics.hpp"
#include "polyth/ops.hpp"
#include "polyth/trainer.hpp"
#include "polyth/verify.hpp"

namespace fs = std::filesystem;
using namespace polyth;

namespace {

enum Exit : int { kOk = 0, kVerifyFailed = 1, kInputError = 2, kCheckpointError = 3, kIoError = 4 };

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot create " + path.string());
  f << text;
  if (!f) throw IoError("write failed for " + path.string());
}

std::string read_file(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::invalid_argument("cannot read config file " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string data, out, config;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> restarts, max_epochs, steps_per_epoch, batch_size;
  std::optional<double> lambda, lr, lr_decay;
  std::vector<std::string> overrides;
};

/// Config-file keys first, then flags, so flags win.
void resolve_train_config(const TrainArgs& a, TrainConfig& train, ModelConfig& model) {
  KeyValues settings;
  if (!a.config.empty()) settings = parse_key_values(read_file(a.config));
  for (const std::string& kv : a.overrides) {
    const KeyValues one = parse_key_values(kv);
    if (one.size() != 1) throw std::invalid_argument("--set expects key=value, got '" + kv + "'");
    settings.push_back(one.front());
  }
  if (a.seed) settings.emplace_back("seed", std::to_string(*a.seed));
  if (a.restarts) settings.emplace_back("restarts", std::to_string(*a.restarts));
  if (a.max_epochs) settings.emplace_back("max_epochs", std::to_string(*a.max_epochs));
  if (a.steps_per_epoch) settings.emplace_back("steps_per_epoch", std::to_string(*a.steps_per_epoch));
  if (a.batch_size) settings.emplace_back("batch_size", std::to_string(*a.batch_size));
  if (a.lambda) settings.emplace_back("lambda", fmt::format("{}", *a.lambda));
  if (a.lr) settings.emplace_back("lr0", fmt::format("{}", *a.lr));
  if (a.lr_decay) settings.emplace_back("lr_decay_factor", fmt::format("{}", *a.lr_decay));

  for (const auto& [key, value] : settings) {
    if (!train.set(key, value) && !model.set(key, value)) {
      throw std::invalid_argument("unknown config key '" + key + "'");
    }
  }
  train.validate();
  model.validate();
}

int cmd_train(const TrainArgs& a) {
  TrainConfig train;
  ModelConfig model;
  DatasetIndex index;
  try {
    resolve_train_config(a, train, model);
    if (auto warning = LossWeighting{train.lambda}.validate()) std::cerr << "warning: " << *warning << "\n";
    index = load_dataset_index(a.data);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
  for (const std::string& w : index.warnings) std::cerr << "warning: " << w << "\n";
  for (std::size_t s = 0; s < 3; ++s) {
    const auto split = static_cast<Split>(s);
    std::cout << fmt::format("{:<5} {:>5} {:>5} {:>5}\n", split_name(split), index.count(split, 0),
                             index.count(split, 1), index.count(split, 2));
  }

  TrainingResult result;
  try {
    result = run_training(train, model, index, [](std::size_t restart, const EpochRecord& r) {
      std::cout << fmt::format(
          "restart {} epoch {:>3} lr {:.3g} train_loss {:.5f} train_acc {:.4f} val_loss {:.5f} val_acc {:.4f} "
          "val_f1 {:.4f}\n",
          restart, r.epoch, r.lr, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy, r.val_macro_f1);
      std::cout.flush();
    });
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }

  try {
    fs::create_directories(a.out);
    write_training_outputs(result, model, a.out);
    write_file(fs::path(a.out) / "config.txt", train.to_text() + model.to_text());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoError;
  }
  const RunResult& best = result.runs[result.selected];
  std::cout << fmt::format("selected restart {} (best epoch {}, val_loss {:.6f}); {} parameters\n", result.selected,
                           best.best_epoch, best.best_val_loss, param_count(best.best_params));
  return kOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string data, checkpoint, split = "test", report;
  double lambda = 1.25;
  std::size_t batch_size = 32;
};

int cmd_eval(const EvalArgs& a) {
  const auto split = parse_split(a.split);
  if (!split) {
    std::cerr << "error: unknown split '" << a.split << "' (train, val or test)\n";
    return kInputError;
  }
  Checkpoint ck;
  try {
    ck = load_checkpoint(a.checkpoint);
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << to_string(e.kind()) << ": " << e.what() << "\n";
    return kCheckpointError;
  }
  MetricsReport report;
  try {
    LossWeighting{a.lambda}.validate();
    const DatasetIndex index = load_dataset_index(a.data);
    const std::vector<Sample> samples = index.samples(*split);
    if (samples.empty()) throw DatasetError(std::string("split '") + a.split + "' has no images");
    report = evaluate_split(ck.params, ck.config, samples, a.lambda, a.batch_size);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
  const std::string text = "split: " + a.split + "\n" + format_report(report);
  std::cout << text;
  const fs::path out = a.report.empty() ? fs::path(a.checkpoint).parent_path() / ("eval_" + a.split + ".txt")
                                        : fs::path(a.report);
  try {
    write_file(out, text);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoError;
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// classify

struct ClassifyArgs {
  std::string checkpoint, image;
  std::optional<double> threshold;
};

int cmd_classify(const ClassifyArgs& a) {
  Checkpoint ck;
  try {
    ck = load_checkpoint(a.checkpoint);
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << to_string(e.kind()) << ": " << e.what() << "\n";
    return kCheckpointError;
  }
  if (a.threshold && !(*a.threshold >= 0.0 && *a.threshold <= 1.0)) {
    std::cerr << "error: threshold must lie in [0,1]\n";
    return kInputError;
  }
  RawImage img;
  try {
    img = read_ppm(a.image);
  } catch (const PpmError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
  const RawImage sized = img.width == ck.config.input_width && img.height == ck.config.input_height
                             ? img
                             : resize_bilinear(img, ck.config.input_width, ck.config.input_height);
  std::mt19937_64 unused(0);
  const Tensor input = normalize_to_input(sized, ck.config.input_width, ck.config.input_height);
  const Tensor probs = softmax(forward(ck.params, ck.config, input, false, unused).logits);
  const int label = decide(probs.data(), a.threshold);
  for (std::size_t k = 0; k < kNumClasses; ++k) {
    std::cout << fmt::format("p{} {:.9f}  ({})\n", k, probs[k], kClassDirs[k]);
  }
  std::cout << "label " << label << " (" << kClassDirs[label] << ")\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// augment

struct AugmentArgs {
  std::string image, out;
  std::size_t count = 8;
  std::uint64_t seed = 0;
};

int cmd_augment(const AugmentArgs& a) {
  RawImage img;
  try {
    img = read_ppm(a.image);
  } catch (const PpmError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInputError;
  }
  std::mt19937_64 rng(a.seed);
  const AugmentParams params;
  try {
    fs::create_directories(a.out);
    for (std::size_t i = 0; i < a.count; ++i) {
      write_ppm(augment(img, params, rng), fs::path(a.out) / fmt::format("aug_{:04}.ppm", i));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kIoError;
  }
  std::cout << "wrote " << a.count << " images to " << a.out << "\n";
  return kOk;
}

// ---------------------------------------------------------------------------
// verify

int cmd_verify(const std::string& perturb) {
  VerifyOptions opts;
  opts.perturb = perturb;
  const std::vector<VerifyCheck> checks = run_verification(opts);
  std::cout << format_verify_table(checks);
  std::size_t failed = 0;
  for (const VerifyCheck& c : checks) {
    if (!c.passed) {
      ++failed;
      std::cerr << "FAILED: " << c.name << "\n";
    }
  }
  std::cout << (failed ? fmt::format("{} of {} checks failed\n", failed, checks.size())
                       : fmt::format("all {} checks passed\n", checks.size()));
  return failed ? kVerifyFailed : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Polythene / plastic / non-plastic image classifier"};
  app.require_subcommand(1);

  TrainArgs train;
  auto* t = app.add_subcommand("train", "Train with restarts and early stopping");
  t->add_option("--data", train.data, "Dataset root")->required();
  t->add_option("--out", train.out, "Output directory")->required();
  t->add_option("--config", train.config, "key=value config file");
  t->add_option("--seed", train.seed);
  t->add_option("--restarts", train.restarts);
  t->add_option("--lambda", train.lambda, "Polythene loss weight");
  t->add_option("--max-epochs", train.max_epochs);
  t->add_option("--steps-per-epoch", train.steps_per_epoch);
  t->add_option("--batch-size", train.batch_size);
  t->add_option("--lr", train.lr, "Initial learning rate");
  t->add_option("--lr-decay", train.lr_decay, "Per-epoch learning-rate divisor");
  t->add_option("--set", train.overrides, "Extra key=value setting (repeatable)");

  EvalArgs eval;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  e->add_option("--data", eval.data, "Dataset root")->required();
  e->add_option("--checkpoint", eval.checkpoint)->required();
  e->add_option("--split", eval.split, "train, val or test");
  e->add_option("--lambda", eval.lambda);
  e->add_option("--batch-size", eval.batch_size);
  e->add_option("--report", eval.report, "Report path (default: next to the checkpoint)");

  ClassifyArgs classify;
  auto* c = app.add_subcommand("classify", "Classify one PPM image");
  c->add_option("--checkpoint", classify.checkpoint)->required();
  c->add_option("--image", classify.image)->required();
  c->add_option("--threshold", classify.threshold, "Pick polythene when its probability reaches this value");

  AugmentArgs aug;
  auto* a = app.add_subcommand("augment", "Write random augmentations of one image");
  a->add_option("--image", aug.image)->required();
  a->add_option("--out", aug.out)->required();
  a->add_option("--count", aug.count);
  a->add_option("--seed", aug.seed);

  std::string perturb;
  auto* v = app.add_subcommand("verify", "Run gradient checks and numerical oracles");
  v->add_option("--perturb", perturb, "Test hook: corrupt one check's analytic gradient")->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    const int code = app.exit(err);
    return code == 0 ? kOk : kInputError;
  }

  if (*t) return cmd_train(train);
  if (*e) return cmd_eval(eval);
  if (*c) return cmd_classify(classify);
  if (*a) return cmd_augment(aug);
  if (*v) return cmd_verify(perturb);
  return kInputError;
}
