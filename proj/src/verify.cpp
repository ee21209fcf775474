#include "polyth/verify.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

#include "polyth/grad_check.hpp"
#include "polyth/loss.hpp"
#include "polyth/model.hpp"
#include "polyth/ops.hpp"
#include "polyth/trainer.hpp"

namespace polyth {

namespace {

constexpr double kLinearTol = 1e-6;
constexpr double kNonlinearTol = 1e-4;

Tensor random_tensor(const Shape& shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(shape);
  for (double& v : t.data()) v = u(rng);
  return t;
}

// Magnitudes in [margin, 1] with random signs.
Tensor away_from_zero(const Shape& shape, std::mt19937_64& rng, double margin) {
  std::uniform_real_distribution<double> u(margin, 1.0);
  std::bernoulli_distribution sign(0.5);
  Tensor t(shape);
  for (double& v : t.data()) v = sign(rng) ? u(rng) : -u(rng);
  return t;
}

// Distinct values spaced 0.01 apart in random order, so pooling windows have
// unique maxima well beyond the finite-difference step.
Tensor distinct_values(const Shape& shape, std::mt19937_64& rng) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.01 * static_cast<double>(i) - 0.005 * t.size();
  std::shuffle(t.data().begin(), t.data().end(), rng);
  return t;
}

class Suite {
 public:
  explicit Suite(const VerifyOptions& opts) : opts_(opts), rng_(opts.seed) {}

  std::mt19937_64& rng() { return rng_; }

  BackwardFn maybe_perturb(const std::string& name, BackwardFn bwd) const {
    if (opts_.perturb != name) return bwd;
    return [bwd](const std::vector<Tensor>& in, const Tensor& dout) {
      std::vector<Tensor> g = bwd(in, dout);
      for (Tensor& t : g) t *= 1.01;
      return g;
    };
  }

  void grad(const std::string& name, double tol, const ForwardFn& fwd, const BackwardFn& bwd,
            std::vector<Tensor> inputs) {
    GradCheckOptions o;
    o.seed = rng_();
    const GradCheckReport r = grad_check(fwd, maybe_perturb(name, bwd), std::move(inputs), o);
    add_grad_result("grad:" + name, tol, r);
  }

  void add_grad_result(const std::string& name, double tol, const GradCheckReport& r) {
    checks_.push_back({name, r.max_rel_error, tol, r.max_rel_error < tol,
                       fmt::format("worst input {} element {}: analytic {:.6g} numeric {:.6g} ({} checked)",
                                   r.worst_input, r.worst_index, r.analytic, r.numeric, r.checked)});
  }

  void add(VerifyCheck c) { checks_.push_back(std::move(c)); }
  const VerifyOptions& opts() const { return opts_; }
  std::vector<VerifyCheck> take() { return std::move(checks_); }

 private:
  VerifyOptions opts_;
  std::mt19937_64 rng_;
  std::vector<VerifyCheck> checks_;
};

void layer_checks(Suite& s) {
  auto& rng = s.rng();

  s.grad(
      "conv2d", kLinearTol,
      [](const std::vector<Tensor>& x) { return conv2d(x[0], x[1], x[2], 1, 1); },
      [](const std::vector<Tensor>& x, const Tensor& d) {
        ConvGrads g = conv2d_backward(x[0], x[1], d, 1, 1);
        return std::vector<Tensor>{g.input, g.kernels, g.bias};
      },
      {random_tensor({2, 3, 6, 6}, rng), random_tensor({4, 3, 3, 3}, rng), random_tensor({4}, rng)});

  s.grad(
      "conv2d_stride2", kLinearTol,
      [](const std::vector<Tensor>& x) { return conv2d(x[0], x[1], x[2], 2, 0); },
      [](const std::vector<Tensor>& x, const Tensor& d) {
        ConvGrads g = conv2d_backward(x[0], x[1], d, 2, 0);
        return std::vector<Tensor>{g.input, g.kernels, g.bias};
      },
      {random_tensor({2, 3, 6, 6}, rng), random_tensor({4, 3, 1, 1}, rng), random_tensor({4}, rng)});

  s.grad(
      "depthwise_conv", kLinearTol,
      [](const std::vector<Tensor>& x) { return depthwise_conv(x[0], x[1], 1, 1); },
      [](const std::vector<Tensor>& x, const Tensor& d) {
        ConvGrads g = depthwise_conv_backward(x[0], x[1], d, 1, 1);
        return std::vector<Tensor>{g.input, g.kernels};
      },
      {random_tensor({2, 3, 6, 6}, rng), random_tensor({3, 3, 3}, rng)});

  s.grad(
      "pointwise_conv", kLinearTol,
      [](const std::vector<Tensor>& x) { return pointwise_conv(x[0], x[1], x[2]); },
      [](const std::vector<Tensor>& x, const Tensor& d) {
        ConvGrads g = pointwise_conv_backward(x[0], x[1], d);
        return std::vector<Tensor>{g.input, g.kernels, g.bias};
      },
      {random_tensor({2, 3, 5, 5}, rng), random_tensor({4, 3}, rng), random_tensor({4}, rng)});

  // Separable conv followed by relu, as used inside the backbone blocks.
  s.grad(
      "separable_block", kNonlinearTol,
      [](const std::vector<Tensor>& x) { return relu(separable_conv(x[0], x[1], x[2], x[3])); },
      [](const std::vector<Tensor>& x, const Tensor& d) {
        const Tensor pre = separable_conv(x[0], x[1], x[2], x[3]);
        SeparableGrads g = separable_conv_backward(x[0], x[1], x[2], relu_backward(pre, d));
        return std::vector<Tensor>{g.input, g.dw_kernels, g.pw_weights, g.pw_bias};
      },
      {random_tensor({2, 3, 6, 6}, rng), random_tensor({3, 3, 3}, rng), random_tensor({4, 3}, rng),
       random_tensor({4}, rng)});

  s.grad(
      "dense", kLinearTol, [](const std::vector<Tensor>& x) { return dense(x[0], x[1], x[2]); },
      [](const std::vector<Tensor>& x, const Tensor& d) {
        DenseGrads g = dense_backward(x[0], x[1], d);
        return std::vector<Tensor>{g.input, g.weights, g.bias};
      },
      {random_tensor({2, 3}, rng), random_tensor({3, 2}, rng), random_tensor({2}, rng)});

  s.grad(
      "relu", kLinearTol, [](const std::vector<Tensor>& x) { return relu(x[0]); },
      [](const std::vector<Tensor>& x, const Tensor& d) { return std::vector<Tensor>{relu_backward(x[0], d)}; },
      {away_from_zero({4, 7}, rng, 1e-3)});

  s.grad(
      "softmax", kNonlinearTol, [](const std::vector<Tensor>& x) { return softmax(x[0]); },
      [](const std::vector<Tensor>& x, const Tensor& d) {
        return std::vector<Tensor>{softmax_backward(softmax(x[0]), d)};
      },
      {random_tensor({4, 3}, rng, -3.0, 3.0)});

  s.grad(
      "maxpool2", kNonlinearTol, [](const std::vector<Tensor>& x) { return maxpool2(x[0]); },
      [](const std::vector<Tensor>& x, const Tensor& d) { return std::vector<Tensor>{maxpool2_backward(x[0], d)}; },
      {distinct_values({2, 2, 4, 6}, rng)});

  s.grad(
      "global_avg_pool", kLinearTol, [](const std::vector<Tensor>& x) { return global_avg_pool(x[0]); },
      [](const std::vector<Tensor>& x, const Tensor& d) {
        return std::vector<Tensor>{global_avg_pool_backward(x[0].shape(), d)};
      },
      {random_tensor({2, 3, 4, 5}, rng)});

  const std::uint64_t dropout_seed = rng();
  s.grad(
      "dropout", kLinearTol,
      [dropout_seed](const std::vector<Tensor>& x) {
        std::mt19937_64 r(dropout_seed);
        return dropout(x[0], 0.25, true, r).output;
      },
      [dropout_seed](const std::vector<Tensor>& x, const Tensor& d) {
        std::mt19937_64 r(dropout_seed);
        return std::vector<Tensor>{dropout_backward(dropout(x[0], 0.25, true, r).mask, d)};
      },
      {random_tensor({4, 6}, rng)});
}

void fused_loss_check(Suite& s) {
  auto& rng = s.rng();
  const std::vector<int> labels{0, 2, 1, 2, 2};
  const Tensor y = one_hot(labels);
  const LossWeighting w{1.25};
  const Tensor logits = random_tensor({labels.size(), kNumClasses}, rng, -2.0, 2.0);
  Tensor analytic = softmax_loss_grad(y, logits, w).dlogits;
  if (s.opts().perturb == "softmax_loss_grad") analytic *= 1.01;
  GradCheckOptions o;
  o.seed = rng();
  const GradCheckReport r = grad_check_scalar(
      [&](const std::vector<Tensor>& x) { return weighted_cce_loss(y, softmax(x[0]), w); }, {analytic}, {logits}, o);
  s.add_grad_result("grad:softmax_loss_grad", kLinearTol, r);
}

void model_check(Suite& s) {
  ModelConfig cfg;
  cfg.input_height = cfg.input_width = 16;
  cfg.stem_channels = 4;
  cfg.block_channels = {6};
  cfg.head1 = 10;
  cfg.head2 = 8;
  auto& rng = s.rng();
  const ParamStore init = init_params(cfg, rng());
  const Tensor batch = random_tensor({2, 3, 16, 16}, rng);
  const Tensor y = one_hot(std::vector<int>{2, 0});
  const LossWeighting w{1.25};
  const std::uint64_t dropout_seed = rng();

  auto store_from = [&](const std::vector<Tensor>& values) {
    ParamStore p;
    std::size_t i = 0;
    for (const auto& e : init) p.add(e.name, values[i++]);
    return p;
  };
  // Random biases: with zero biases a fully dropped layer puts the next
  // preactivation exactly on the ReLU kink.
  std::vector<Tensor> values;
  for (const auto& e : init) {
    values.push_back(e.param.value.rank() == 1 ? random_tensor(e.param.value.shape(), rng, -0.1, 0.1) : e.param.value);
  }

  ParamStore params = store_from(values);
  std::mt19937_64 r(dropout_seed);
  const ForwardResult fwd = forward(params, cfg, batch, /*training=*/true, r);
  backward(params, cfg, fwd.cache, softmax_loss_grad(y, fwd.logits, w).dlogits);
  std::vector<Tensor> analytic;
  for (const auto& e : params) analytic.push_back(e.param.grad);
  if (s.opts().perturb == "model") {
    for (Tensor& t : analytic) t *= 1.01;
  }

  GradCheckOptions o;
  o.seed = rng();
  o.max_per_input = 12;
  const GradCheckReport rep = grad_check_scalar(
      [&](const std::vector<Tensor>& x) {
        std::mt19937_64 rr(dropout_seed);
        const ParamStore p = store_from(x);
        return weighted_cce_loss(y, softmax(forward(p, cfg, batch, true, rr).logits), w);
      },
      analytic, values, o);
  s.add_grad_result("grad:model", kNonlinearTol, rep);
}

// Plain per-element Adam written out scalar by scalar.
struct ScalarAdam {
  std::vector<double> theta, m, v;
  int t = 0;
  void step(const std::vector<double>& g, double lr, double b1, double b2, double eps) {
    ++t;
    for (std::size_t i = 0; i < theta.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * g[i];
      v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
      const double mh = m[i] / (1.0 - std::pow(b1, t));
      const double vh = v[i] / (1.0 - std::pow(b2, t));
      theta[i] = theta[i] - lr * mh / (std::sqrt(vh) + eps);
    }
  }
};

void adam_checks(Suite& s) {
  auto& rng = s.rng();
  TrainConfig cfg;
  {
    ParamStore p;
    p.add("theta", Tensor({1}, 0.0));
    p.at("theta").grad[0] = 1.0;
    AdamState st = AdamState::zeros_like(p);
    adam_step(p, st, 0.001, cfg);
    const double expected = -0.001 / (1.0 + 1e-8);
    const double err = std::abs(p.at("theta").value[0] - expected);
    s.add({"adam:first_step", err, 1e-15, err < 1e-15, fmt::format("theta = {:.12g}", p.at("theta").value[0])});
  }

  ParamStore p;
  p.add("a", random_tensor({3, 4}, rng));
  p.add("b", random_tensor({5}, rng));
  AdamState st = AdamState::zeros_like(p);
  ScalarAdam ref;
  for (const auto& e : p) {
    for (double v : e.param.value.data()) ref.theta.push_back(v);
  }
  ref.m.assign(ref.theta.size(), 0.0);
  ref.v.assign(ref.theta.size(), 0.0);
  std::uniform_real_distribution<double> g(-2.0, 2.0);
  for (int step = 0; step < 100; ++step) {
    std::vector<double> flat;
    for (auto& e : p) {
      for (double& v : e.param.grad.data()) {
        v = g(rng);
        flat.push_back(v);
      }
    }
    adam_step(p, st, 0.01, cfg);
    ref.step(flat, 0.01, cfg.beta1, cfg.beta2, cfg.epsilon);
  }
  double dev = 0.0;
  std::size_t k = 0;
  for (const auto& e : p) {
    for (double v : e.param.value.data()) dev = std::max(dev, std::abs(v - ref.theta[k++]));
  }
  if (s.opts().perturb == "adam") dev += 1.0;
  s.add({"adam:reference_100_steps", dev, 1e-12, dev < 1e-12, "max abs deviation vs scalar loop"});
}

Tensor random_probs(std::size_t m, std::mt19937_64& rng) {
  Tensor logits = random_tensor({m, kNumClasses}, rng, -4.0, 4.0);
  return softmax(logits);
}

std::vector<int> random_labels(std::size_t m, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> u(0, 2);
  std::vector<int> out(m);
  for (int& l : out) l = u(rng);
  return out;
}

void loss_identity_checks(Suite& s) {
  auto& rng = s.rng();
  std::size_t bitwise_mismatch = 0;
  double decomposition = 0.0;
  std::uniform_int_distribution<std::size_t> size(1, 16);
  std::uniform_real_distribution<double> lam(0.1, 5.0);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t m = size(rng);
    const std::vector<int> labels = random_labels(m, rng);
    const Tensor y = one_hot(labels);
    const Tensor yhat = random_probs(m, rng);
    if (weighted_cce_loss(y, yhat, LossWeighting{1.0}) != cce_loss(y, yhat)) ++bitwise_mismatch;

    const double lambda = lam(rng);
    std::vector<int> poly_labels;
    std::vector<double> poly_rows;
    for (std::size_t j = 0; j < m; ++j) {
      if (labels[j] != kPolytheneClass) continue;
      poly_labels.push_back(kPolytheneClass);
      for (std::size_t i = 0; i < kNumClasses; ++i) poly_rows.push_back(yhat.at(j, i));
    }
    const double poly = poly_labels.empty()
                            ? 0.0
                            : cce_loss(one_hot(poly_labels), Tensor({poly_labels.size(), kNumClasses}, poly_rows));
    const double lhs = weighted_cce_loss(y, yhat, LossWeighting{lambda});
    const double rhs = cce_loss(y, yhat) + (lambda - 1.0) * poly;
    decomposition = std::max(decomposition, std::abs(lhs - rhs));
  }
  s.add({"loss:lambda1_bitwise", static_cast<double>(bitwise_mismatch), 0.0, bitwise_mismatch == 0,
         "batches where weighted(lambda=1) != cce"});
  s.add({"loss:decomposition", decomposition, 1e-12, decomposition < 1e-12,
         "max |weighted - (cce + (lambda-1) * polythene-only cce)| over 1000 batches"});

  std::size_t scale_mismatch = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t m = size(rng);
    const Tensor y = one_hot(std::vector<int>(m, kPolytheneClass));
    const Tensor logits = random_tensor({m, kNumClasses}, rng, -3.0, 3.0);
    const Tensor g1 = softmax_loss_grad(y, logits, LossWeighting{1.0}).dlogits;
    const Tensor g125 = softmax_loss_grad(y, logits, LossWeighting{1.25}).dlogits;
    if (!(g125 == 1.25 * g1)) ++scale_mismatch;
  }
  s.add({"loss:polythene_grad_scale", static_cast<double>(scale_mismatch), 0.0, scale_mismatch == 0,
         "polythene-only batches where grad(1.25) != 1.25 * grad(1)"});
}

}  // namespace

std::vector<VerifyCheck> run_verification(const VerifyOptions& opts) {
  Suite s(opts);
  layer_checks(s);
  fused_loss_check(s);
  model_check(s);
  adam_checks(s);
  loss_identity_checks(s);
  return s.take();
}

std::vector<std::string> verify_check_names() {
  return {"conv2d",   "conv2d_stride2",  "depthwise_conv", "pointwise_conv",    "separable_block", "dense",
          "relu",     "softmax",         "maxpool2",       "global_avg_pool",   "dropout",         "softmax_loss_grad",
          "model",    "adam"};
}

std::string format_verify_table(const std::vector<VerifyCheck>& checks) {
  std::string out = fmt::format("{:<28} {:>12} {:>10}  {}\n", "check", "error", "tolerance", "result");
  for (const VerifyCheck& c : checks) {
    out += fmt::format("{:<28} {:>12.3e} {:>10.1e}  {}\n", c.name, c.value, c.tolerance, c.passed ? "PASS" : "FAIL");
    if (!c.passed) out += "    " + c.detail + "\n";
  }
  return out;
}

}  // namespace polyth
