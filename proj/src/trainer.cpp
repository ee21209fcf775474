#include "polyth/trainer.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "polyth/checkpoint.hpp"
#include "polyth/kv_config.hpp"
#include "polyth/ops.hpp"

namespace polyth {

// ---------------------------------------------------------------------------
// TrainConfig

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("train config: " + msg); };
  if (batch_size == 0) fail("batch_size must be positive");
  if (steps_per_epoch == 0) fail("steps_per_epoch must be positive");
  if (max_epochs == 0) fail("max_epochs must be positive");
  if (!(lr0 >= 0.0) || !std::isfinite(lr0)) fail("lr0 must be non-negative");
  if (!(lr_decay_factor > 0.0)) fail("lr_decay_factor must be positive");
  if (!(lambda > 0.0)) fail("lambda must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) fail("beta1 must lie in [0,1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) fail("beta2 must lie in [0,1)");
  if (!(epsilon > 0.0)) fail("epsilon must be positive");
  if (patience == 0) fail("patience must be at least 1");
  if (!(min_delta >= 0.0)) fail("min_delta must be non-negative");
  if (restarts == 0) fail("restarts must be positive");
}

bool TrainConfig::set(std::string_view key, std::string_view value) {
  if (key == "batch_size") batch_size = parse_size(key, value);
  else if (key == "steps_per_epoch") steps_per_epoch = parse_size(key, value);
  else if (key == "max_epochs") max_epochs = parse_size(key, value);
  else if (key == "lr0") lr0 = parse_real(key, value);
  else if (key == "lr_decay_factor") lr_decay_factor = parse_real(key, value);
  else if (key == "lambda") lambda = parse_real(key, value);
  else if (key == "beta1") beta1 = parse_real(key, value);
  else if (key == "beta2") beta2 = parse_real(key, value);
  else if (key == "epsilon") epsilon = parse_real(key, value);
  else if (key == "patience") patience = parse_size(key, value);
  else if (key == "min_delta") min_delta = parse_real(key, value);
  else if (key == "restarts") restarts = parse_size(key, value);
  else if (key == "seed") seed = parse_u64(key, value);
  else if (key == "augment") augment = parse_bool(key, value);
  else if (key == "log_wall_clock") log_wall_clock = parse_bool(key, value);
  else return false;
  return true;
}

std::string TrainConfig::to_text() const {
  return fmt::format(
      "batch_size={}\nsteps_per_epoch={}\nmax_epochs={}\nlr0={}\nlr_decay_factor={}\nlambda={}\nbeta1={}\n"
      "beta2={}\nepsilon={}\npatience={}\nmin_delta={}\nrestarts={}\nseed={}\naugment={}\nlog_wall_clock={}\n",
      batch_size, steps_per_epoch, max_epochs, lr0, lr_decay_factor, lambda, beta1, beta2, epsilon, patience,
      min_delta, restarts, seed, augment, log_wall_clock);
}

// ---------------------------------------------------------------------------
// optimizer

AdamState AdamState::zeros_like(const ParamStore& params) {
  AdamState s;
  for (const auto& e : params) {
    s.m.emplace_back(e.param.value.shape());
    s.v.emplace_back(e.param.value.shape());
  }
  return s;
}

double lr_for_epoch(const TrainConfig& cfg, std::size_t epoch) {
  if (epoch == 0) throw std::invalid_argument("lr_for_epoch: epochs are counted from 1");
  return cfg.lr0 / std::pow(cfg.lr_decay_factor, static_cast<double>(epoch - 1));
}

void adam_step(ParamStore& params, AdamState& state, double lr, const TrainConfig& cfg) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: optimizer state tracks " + std::to_string(state.m.size()) +
                                " tensors, store has " + std::to_string(params.size()));
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  std::size_t k = 0;
  for (auto& e : params) {
    Tensor& theta = e.param.value;
    const Tensor& g = e.param.grad;
    Tensor& m = state.m[k];
    Tensor& v = state.v[k];
    if (m.shape() != theta.shape() || v.shape() != theta.shape() || g.shape() != theta.shape()) {
      throw std::invalid_argument("adam_step: shape mismatch for parameter '" + e.name + "'");
    }
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      theta[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
    ++k;
  }
}

// ---------------------------------------------------------------------------
// epochs and evaluation

namespace {

std::vector<int> argmax_rows(const Tensor& logits) {
  const Tensor probs = softmax(logits);
  std::vector<int> out(probs.dim(0));
  for (std::size_t r = 0; r < out.size(); ++r) {
    out[r] = decide(std::span<const double>(probs.data().data() + r * probs.dim(1), probs.dim(1)));
  }
  return out;
}

}  // namespace

EpochRecord train_epoch(ParamStore& params, const ModelConfig& model, AdamState& state, BatchStream& data,
                        const TrainConfig& cfg, std::size_t epoch, std::mt19937_64& dropout_rng) {
  const LossWeighting weighting{cfg.lambda};
  weighting.validate();
  EpochRecord rec;
  rec.epoch = epoch;
  rec.lr = lr_for_epoch(cfg, epoch);

  double loss_sum = 0.0;
  std::size_t seen = 0, correct = 0;
  params.zero_grad();
  for (std::size_t step = 0; step < cfg.steps_per_epoch; ++step) {
    const Batch batch = data.next();
    const std::size_t m = batch.labels.size();
    ForwardResult fwd = forward(params, model, batch.images, /*training=*/true, dropout_rng);
    const LossAndGrad lg =
        softmax_loss_grad(one_hot(batch.labels), fwd.logits, weighting, 1.0 / static_cast<double>(m));
    backward(params, model, fwd.cache, lg.dlogits);
    adam_step(params, state, rec.lr, cfg);
    params.zero_grad();

    loss_sum += lg.loss;
    seen += m;
    const std::vector<int> pred = argmax_rows(fwd.logits);
    for (std::size_t i = 0; i < m; ++i) correct += pred[i] == batch.labels[i];
  }
  rec.train_loss = loss_sum / static_cast<double>(seen);
  rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
  return rec;
}

namespace {

// Accumulates weighted loss and predictions over inference-mode batches.
class SplitEvaluator {
 public:
  SplitEvaluator(const ParamStore& params, const ModelConfig& model, double lambda)
      : params_(params), model_(model), weighting_{lambda} {
    weighting_.validate();
  }

  void add(const Batch& b) {
    const ForwardResult fwd = forward(params_, model_, b.images, /*training=*/false, unused_rng_);
    loss_ += weighted_cce_loss(one_hot(b.labels), softmax(fwd.logits), weighting_);
    const std::vector<int> pred = argmax_rows(fwd.logits);
    predicted_.insert(predicted_.end(), pred.begin(), pred.end());
    truth_.insert(truth_.end(), b.labels.begin(), b.labels.end());
  }

  MetricsReport report() const { return make_report(loss_, predicted_, truth_); }

 private:
  const ParamStore& params_;
  const ModelConfig& model_;
  LossWeighting weighting_;
  std::mt19937_64 unused_rng_{0};  // dropout is inactive in inference mode
  double loss_ = 0.0;
  std::vector<int> predicted_, truth_;
};

}  // namespace

MetricsReport evaluate_batches(const ParamStore& params, const ModelConfig& model, std::span<const Batch> batches,
                               double lambda) {
  SplitEvaluator eval(params, model, lambda);
  for (const Batch& b : batches) eval.add(b);
  return eval.report();
}

MetricsReport evaluate_split(const ParamStore& params, const ModelConfig& model, std::span<const Sample> samples,
                             double lambda, std::size_t batch_size, std::shared_ptr<ImageCache> cache) {
  StreamOptions opts;
  opts.batch_size = batch_size;
  opts.shuffle = false;
  opts.augment = false;
  opts.width = model.input_width;
  opts.height = model.input_height;
  BatchStream stream(std::vector<Sample>(samples.begin(), samples.end()), opts, std::move(cache));
  SplitEvaluator eval(params, model, lambda);
  while (auto b = stream.next_in_pass()) eval.add(*b);
  return eval.report();
}

EarlyStopDecision early_stop_update(const EarlyStopState& state, double val_loss, const TrainConfig& cfg,
                                    std::size_t epoch) {
  EarlyStopDecision d;
  d.state = state;
  if (val_loss < state.best - cfg.min_delta) {
    d.improved = true;
    d.state.best = val_loss;
    d.state.best_epoch = epoch;
    d.state.bad_epochs = 0;
  } else {
    d.state.bad_epochs += 1;
  }
  d.stop = d.state.bad_epochs >= cfg.patience;
  return d;
}

// ---------------------------------------------------------------------------
// runs

RunResult train_run(const TrainConfig& cfg, const ModelConfig& model, const DatasetIndex& data, std::uint64_t seed,
                    std::shared_ptr<ImageCache> cache, const EpochCallback& on_epoch, std::size_t restart) {
  cfg.validate();
  model.validate();
  if (data.count(Split::Train) == 0) throw DatasetError("training split is empty");
  if (data.count(Split::Val) == 0) throw DatasetError("validation split is empty");
  if (!cache) cache = std::make_shared<ImageCache>();

  std::mt19937_64 seeder(seed);
  const std::uint64_t init_seed = seeder();
  const std::uint64_t stream_seed = seeder();
  std::mt19937_64 dropout_rng(seeder());

  RunResult run;
  run.seed = seed;
  ParamStore params = init_params(model, init_seed);
  AdamState state = AdamState::zeros_like(params);

  StreamOptions opts;
  opts.batch_size = cfg.batch_size;
  opts.seed = stream_seed;
  opts.shuffle = true;
  opts.augment = cfg.augment;
  opts.width = model.input_width;
  opts.height = model.input_height;
  BatchStream train(data.samples(Split::Train), opts, cache);
  const std::vector<Sample> val = data.samples(Split::Val);

  EarlyStopState stopper;
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    EpochRecord rec = train_epoch(params, model, state, train, cfg, epoch, dropout_rng);
    const MetricsReport report = evaluate_split(params, model, val, cfg.lambda, cfg.batch_size, cache);
    rec.val_loss = report.mean_loss;
    rec.val_accuracy = report.accuracy;
    rec.val_macro_f1 = report.macro_f1;
    if (cfg.log_wall_clock) {
      rec.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    }
    run.records.push_back(rec);
    if (on_epoch) on_epoch(restart, rec);

    const EarlyStopDecision d = early_stop_update(stopper, rec.val_loss, cfg, epoch);
    stopper = d.state;
    if (d.improved) run.best_params = params;
    if (d.stop) break;
  }
  if (run.best_params.size() == 0) run.best_params = params;  // val loss never finite
  run.best_val_loss = stopper.best;
  run.best_epoch = stopper.best_epoch;
  return run;
}

std::size_t select_best_run(std::span<const double> best_val_losses) {
  if (best_val_losses.empty()) throw std::invalid_argument("select_best_run: no runs");
  std::size_t best = 0;
  for (std::size_t i = 1; i < best_val_losses.size(); ++i) {
    if (best_val_losses[i] < best_val_losses[best]) best = i;
  }
  return best;
}

TrainingResult run_training(const TrainConfig& cfg, const ModelConfig& model, const DatasetIndex& data,
                            const EpochCallback& on_epoch) {
  cfg.validate();
  model.validate();
  if (data.count(Split::Train) == 0) throw DatasetError("training split is empty");
  if (data.count(Split::Val) == 0) throw DatasetError("validation split is empty");
  auto cache = std::make_shared<ImageCache>();
  TrainingResult result;
  std::vector<double> losses;
  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    result.runs.push_back(train_run(cfg, model, data, cfg.seed + r, cache, on_epoch, r));
    losses.push_back(result.runs.back().best_val_loss);
  }
  result.selected = select_best_run(losses);
  return result;
}

// ---------------------------------------------------------------------------
// logs

std::string epoch_csv(std::span<const EpochRecord> records) {
  std::string s = "epoch,lr,train_loss,train_acc,val_loss,val_acc,val_macro_f1,elapsed_s\n";
  for (const EpochRecord& r : records) {
    s += fmt::format("{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g},{:.3f}\n", r.epoch, r.lr, r.train_loss,
                     r.train_accuracy, r.val_loss, r.val_accuracy, r.val_macro_f1, r.elapsed_seconds);
  }
  return s;
}

std::string summary_csv(const TrainingResult& result) {
  std::string s = "restart,seed,best_epoch,best_val_loss,epochs_run,selected\n";
  for (std::size_t r = 0; r < result.runs.size(); ++r) {
    const RunResult& run = result.runs[r];
    s += fmt::format("{},{},{},{:.9g},{},{}\n", r, run.seed, run.best_epoch, run.best_val_loss, run.records.size(),
                     r == result.selected ? 1 : 0);
  }
  return s;
}

namespace {
void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot create " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed for " + path.string());
}
}  // namespace

void write_training_outputs(const TrainingResult& result, const ModelConfig& model,
                            const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  for (std::size_t r = 0; r < result.runs.size(); ++r) {
    save_checkpoint(result.runs[r].best_params, model, out_dir / fmt::format("model_run{}.plnt", r));
    write_text(out_dir / fmt::format("metrics_run{}.csv", r), epoch_csv(result.runs[r].records));
  }
  const RunResult& best = result.runs.at(result.selected);
  save_checkpoint(best.best_params, model, out_dir / "model.plnt");
  write_text(out_dir / "metrics.csv", epoch_csv(best.records));
  write_text(out_dir / "summary.csv", summary_csv(result));
}

}  // namespace polyth
