#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "polyth/dataset.hpp"
#include "polyth/metrics.hpp"
#include "polyth/model.hpp"

namespace polyth {

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t steps_per_epoch = 25;
  std::size_t max_epochs = 15;
  double lr0 = 0.001;
  double lr_decay_factor = 10.0;  // lr is divided by this after every epoch
  double lambda = 1.25;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t patience = 5;
  double min_delta = 1e-4;
  std::size_t restarts = 5;
  std::uint64_t seed = 0;
  bool augment = true;
  // Wall-clock timings make logs non-reproducible, so they are opt-in.
  bool log_wall_clock = false;

  void validate() const;
  bool set(std::string_view key, std::string_view value);
  std::string to_text() const;
};

/// Adam moments, aligned with ParamStore iteration order.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t t = 0;

  static AdamState zeros_like(const ParamStore& params);
};

/// lr0 / decay_factor^(epoch - 1), epochs counted from 1.
double lr_for_epoch(const TrainConfig& cfg, std::size_t epoch);

/// One bias-corrected Adam update from the gradients in `params`.
void adam_step(ParamStore& params, AdamState& state, double lr, const TrainConfig& cfg);

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;  // mean weighted loss per training sample
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  double val_macro_f1 = 0.0;
  double elapsed_seconds = 0.0;

  friend bool operator==(const EpochRecord&, const EpochRecord&) = default;
};

/// Runs exactly cfg.steps_per_epoch optimizer steps; fills the training half
/// of the record.
EpochRecord train_epoch(ParamStore& params, const ModelConfig& model, AdamState& state, BatchStream& data,
                        const TrainConfig& cfg, std::size_t epoch, std::mt19937_64& dropout_rng);

/// Inference-mode pass over every sample, in order, with no augmentation.
MetricsReport evaluate_split(const ParamStore& params, const ModelConfig& model, std::span<const Sample> samples,
                             double lambda, std::size_t batch_size = 32,
                             std::shared_ptr<ImageCache> cache = nullptr);

/// Same, over in-memory batches.
MetricsReport evaluate_batches(const ParamStore& params, const ModelConfig& model, std::span<const Batch> batches,
                               double lambda);

struct EarlyStopState {
  double best = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::size_t bad_epochs = 0;
};

struct EarlyStopDecision {
  bool improved = false;
  bool stop = false;
  EarlyStopState state;
};

/// Improvement means val_loss < best - min_delta; stop after `patience`
/// consecutive non-improvements.
EarlyStopDecision early_stop_update(const EarlyStopState& state, double val_loss, const TrainConfig& cfg,
                                    std::size_t epoch);

struct RunResult {
  std::uint64_t seed = 0;
  std::vector<EpochRecord> records;
  ParamStore best_params;
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
};

/// Called after each completed epoch with the restart index.
using EpochCallback = std::function<void(std::size_t restart, const EpochRecord&)>;

/// One training run with early stopping; keeps the best-epoch parameters.
RunResult train_run(const TrainConfig& cfg, const ModelConfig& model, const DatasetIndex& data, std::uint64_t seed,
                    std::shared_ptr<ImageCache> cache = nullptr, const EpochCallback& on_epoch = {},
                    std::size_t restart = 0);

/// Lowest loss; ties go to the lower index.
std::size_t select_best_run(std::span<const double> best_val_losses);

struct TrainingResult {
  std::vector<RunResult> runs;
  std::size_t selected = 0;
};

/// cfg.restarts independent runs seeded cfg.seed + r.
TrainingResult run_training(const TrainConfig& cfg, const ModelConfig& model, const DatasetIndex& data,
                            const EpochCallback& on_epoch = {});

std::string epoch_csv(std::span<const EpochRecord> records);
std::string summary_csv(const TrainingResult& result);

/// model.plnt (selected run), model_run<r>.plnt, metrics_run<r>.csv,
/// metrics.csv (selected run) and summary.csv.
void write_training_outputs(const TrainingResult& result, const ModelConfig& model,
                            const std::filesystem::path& out_dir);

}  // namespace polyth
