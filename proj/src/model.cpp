#include "polyth/model.hpp"

#include <fmt/format.h>

#include <cmath>
#include <stdexcept>

#include "polyth/kv_config.hpp"
#include "polyth/ops.hpp"

namespace polyth {

// ---------------------------------------------------------------------------
// ModelConfig

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw std::invalid_argument("model config: " + msg); };
  if (num_classes != 3) fail("num_classes must be 3, got " + std::to_string(num_classes));
  if (stem_channels == 0) fail("stem_channels must be positive");
  if (block_channels.empty()) fail("block_channels must list at least one block");
  for (std::size_t i = 0; i < block_channels.size(); ++i) {
    if (block_channels[i] == 0) fail("block_channels[" + std::to_string(i) + "] must be positive");
  }
  if (head1 == 0 || head2 == 0) fail("head_widths must be positive");
  if (!(drop_prob >= 0.0 && drop_prob < 1.0)) fail("drop_prob must lie in [0,1)");
  const std::size_t factor = std::size_t{1} << (1 + block_channels.size());
  if (input_height == 0 || input_height % factor != 0) {
    fail("input height " + std::to_string(input_height) + " is not a positive multiple of " + std::to_string(factor));
  }
  if (input_width == 0 || input_width % factor != 0) {
    fail("input width " + std::to_string(input_width) + " is not a positive multiple of " + std::to_string(factor));
  }
}

std::string ModelConfig::to_text() const {
  std::string blocks;
  for (std::size_t i = 0; i < block_channels.size(); ++i) {
    if (i) blocks += ",";
    blocks += std::to_string(block_channels[i]);
  }
  return fmt::format(
      "input_size={},{}\nnum_classes={}\nstem_channels={}\nblock_channels={}\nuse_residual={}\n"
      "head_widths={},{}\ndrop_prob={}\n",
      input_height, input_width, num_classes, stem_channels, blocks, use_residual ? "true" : "false", head1, head2,
      drop_prob);
}

bool ModelConfig::set(std::string_view key, std::string_view value) {
  auto pair = [&](std::size_t& a, std::size_t& b) {
    const auto list = parse_size_list(key, value);
    if (list.size() != 2) throw std::invalid_argument("config: '" + std::string(key) + "' expects two values");
    a = list[0];
    b = list[1];
  };
  if (key == "input_size") {
    pair(input_height, input_width);
  } else if (key == "num_classes") {
    num_classes = parse_size(key, value);
  } else if (key == "stem_channels") {
    stem_channels = parse_size(key, value);
  } else if (key == "block_channels") {
    block_channels = parse_size_list(key, value);
  } else if (key == "use_residual") {
    use_residual = parse_bool(key, value);
  } else if (key == "head_widths") {
    pair(head1, head2);
  } else if (key == "drop_prob") {
    drop_prob = parse_real(key, value);
  } else if (key == "keep_prob") {
    drop_prob = 1.0 - parse_real(key, value);
  } else {
    return false;
  }
  return true;
}

ModelConfig ModelConfig::from_text(std::string_view text) {
  ModelConfig config;
  for (const auto& [key, value] : parse_key_values(text)) {
    if (!config.set(key, value)) throw std::invalid_argument("model config: unknown key '" + key + "'");
  }
  config.validate();
  return config;
}

// ---------------------------------------------------------------------------
// ParamStore

void ParamStore::add(std::string name, Tensor value) {
  if (index_.count(name)) throw std::invalid_argument("param store: duplicate parameter '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.push_back({std::move(name), ParamTensor(std::move(value))});
}

ParamTensor& ParamStore::at(std::string_view name) {
  const auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("param store: no parameter '" + std::string(name) + "'");
  return entries_[it->second].param;
}

const ParamTensor& ParamStore::at(std::string_view name) const {
  const auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("param store: no parameter '" + std::string(name) + "'");
  return entries_[it->second].param;
}

bool ParamStore::contains(std::string_view name) const { return index_.find(name) != index_.end(); }

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.param.zero_grad();
}

bool ParamStore::same_values(const ParamStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name) return false;
    if (!(entries_[i].param.value == other.entries_[i].param.value)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// construction

namespace {

std::string block_name(std::size_t b, const char* part) { return fmt::format("block{}.{}", b, part); }

struct FanInfo {
  std::size_t fan_in = 0, fan_out = 0;
  bool is_bias = false;
};

FanInfo fans_for(const std::string& name, const Shape& s) {
  const auto ends_with = [&](std::string_view suffix) {
    return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (ends_with(".bias")) return {0, 0, true};
  if (ends_with(".depthwise")) return {s[1] * s[2], s[1] * s[2], false};
  if (s.size() == 4) return {s[1] * s[2] * s[3], s[0] * s[2] * s[3], false};
  if (ends_with(".pointwise")) return {s[1], s[0], false};
  return {s[0], s[1], false};  // dense D x K
}

}  // namespace

ParamStore make_params(const ModelConfig& config) {
  config.validate();
  ParamStore p;
  const std::size_t stem = config.stem_channels;
  p.add("stem.conv.weight", Tensor({stem, 3, 3, 3}));
  p.add("stem.conv.bias", Tensor({stem}));
  std::size_t cin = stem;
  for (std::size_t b = 0; b < config.block_channels.size(); ++b) {
    const std::size_t cout = config.block_channels[b];
    p.add(block_name(b, "sep1.depthwise"), Tensor({cin, 3, 3}));
    p.add(block_name(b, "sep1.pointwise"), Tensor({cout, cin}));
    p.add(block_name(b, "sep1.bias"), Tensor({cout}));
    p.add(block_name(b, "sep2.depthwise"), Tensor({cout, 3, 3}));
    p.add(block_name(b, "sep2.pointwise"), Tensor({cout, cout}));
    p.add(block_name(b, "sep2.bias"), Tensor({cout}));
    if (config.use_residual) {
      p.add(block_name(b, "proj.weight"), Tensor({cout, cin, 1, 1}));
      p.add(block_name(b, "proj.bias"), Tensor({cout}));
    }
    cin = cout;
  }
  p.add("head.fc1.weight", Tensor({cin, config.head1}));
  p.add("head.fc1.bias", Tensor({config.head1}));
  p.add("head.fc2.weight", Tensor({config.head1, config.head2}));
  p.add("head.fc2.bias", Tensor({config.head2}));
  p.add("head.logits.weight", Tensor({config.head2, config.num_classes}));
  p.add("head.logits.bias", Tensor({config.num_classes}));
  return p;
}

ParamStore init_params(const ModelConfig& config, std::uint64_t seed) {
  ParamStore p = make_params(config);
  std::mt19937_64 rng(seed);
  for (auto& e : p) {
    const FanInfo f = fans_for(e.name, e.param.value.shape());
    if (f.is_bias) continue;
    const double limit = std::sqrt(6.0 / static_cast<double>(f.fan_in + f.fan_out));
    std::uniform_real_distribution<double> uniform(-limit, limit);
    for (double& v : e.param.value.data()) v = uniform(rng);
  }
  return p;
}

std::size_t param_count(const ParamStore& params) {
  std::size_t n = 0;
  for (const auto& e : params) n += e.param.value.size();
  return n;
}

void quantize_to_f32(ParamStore& params) {
  for (auto& e : params) {
    for (double& v : e.param.value.data()) v = static_cast<double>(static_cast<float>(v));
  }
}

// ---------------------------------------------------------------------------
// forward / backward

ForwardResult forward(const ParamStore& params, const ModelConfig& config, const Tensor& batch, bool training,
                      std::mt19937_64& rng) {
  config.validate();
  if (batch.rank() != 4 || batch.dim(1) != 3 || batch.dim(2) != config.input_height ||
      batch.dim(3) != config.input_width) {
    throw std::invalid_argument(fmt::format("forward[input]: batch shape {} does not match Nx3x{}x{}",
                                            shape_str(batch.shape()), config.input_height, config.input_width));
  }
  auto param = [&](const std::string& name) -> const Tensor& {
    if (!params.contains(name)) throw std::invalid_argument("forward[" + name + "]: parameter missing");
    return params.at(name).value;
  };

  ForwardResult r;
  ForwardCache& c = r.cache;
  c.config_key = config.to_text();
  c.batch = batch.dim(0);
  c.input = batch;

  c.stem_act = relu(conv2d(batch, param("stem.conv.weight"), param("stem.conv.bias"), 1, 1));
  Tensor x = maxpool2(c.stem_act);

  for (std::size_t b = 0; b < config.block_channels.size(); ++b) {
    BlockCache bc;
    bc.input = x;
    bc.sep1_act = relu(separable_conv(x, param(block_name(b, "sep1.depthwise")), param(block_name(b, "sep1.pointwise")),
                                      param(block_name(b, "sep1.bias"))));
    bc.sep2_act =
        relu(separable_conv(bc.sep1_act, param(block_name(b, "sep2.depthwise")),
                            param(block_name(b, "sep2.pointwise")), param(block_name(b, "sep2.bias"))));
    Tensor out = maxpool2(bc.sep2_act);
    if (config.use_residual) {
      const Tensor proj = conv2d(x, param(block_name(b, "proj.weight")), param(block_name(b, "proj.bias")), 2, 0);
      out += proj;
    }
    c.blocks.push_back(std::move(bc));
    x = std::move(out);
  }
  c.backbone_out = x;

  c.pooled = global_avg_pool(x);
  c.fc1_act = relu(dense(c.pooled, param("head.fc1.weight"), param("head.fc1.bias")));
  DropoutResult d1 = dropout(c.fc1_act, config.drop_prob, training, rng);
  c.fc1_out = std::move(d1.output);
  c.fc1_mask = std::move(d1.mask);
  c.fc2_act = relu(dense(c.fc1_out, param("head.fc2.weight"), param("head.fc2.bias")));
  DropoutResult d2 = dropout(c.fc2_act, config.drop_prob, training, rng);
  c.fc2_out = std::move(d2.output);
  c.fc2_mask = std::move(d2.mask);
  r.logits = dense(c.fc2_out, param("head.logits.weight"), param("head.logits.bias"));
  return r;
}

void backward(ParamStore& params, const ModelConfig& config, const ForwardCache& cache, const Tensor& dlogits) {
  if (cache.config_key.empty() || cache.batch == 0) throw std::invalid_argument("backward: empty forward cache");
  if (cache.config_key != config.to_text()) {
    throw std::invalid_argument("backward: forward cache was produced under a different model config");
  }
  if (cache.blocks.size() != config.block_channels.size()) throw std::invalid_argument("backward: stale cache");
  if (dlogits.shape() != Shape{cache.batch, config.num_classes}) {
    throw std::invalid_argument("backward: dlogits shape " + shape_str(dlogits.shape()) + " does not match batch " +
                                std::to_string(cache.batch));
  }
  auto grad = [&](const std::string& name) -> Tensor& { return params.at(name).grad; };
  auto value = [&](const std::string& name) -> const Tensor& { return params.at(name).value; };

  DenseGrads g3 = dense_backward(cache.fc2_out, value("head.logits.weight"), dlogits);
  grad("head.logits.weight") += g3.weights;
  grad("head.logits.bias") += g3.bias;
  Tensor d = relu_backward(cache.fc2_act, dropout_backward(cache.fc2_mask, g3.input));

  DenseGrads g2 = dense_backward(cache.fc1_out, value("head.fc2.weight"), d);
  grad("head.fc2.weight") += g2.weights;
  grad("head.fc2.bias") += g2.bias;
  d = relu_backward(cache.fc1_act, dropout_backward(cache.fc1_mask, g2.input));

  DenseGrads g1 = dense_backward(cache.pooled, value("head.fc1.weight"), d);
  grad("head.fc1.weight") += g1.weights;
  grad("head.fc1.bias") += g1.bias;
  d = global_avg_pool_backward(cache.backbone_out.shape(), g1.input);

  for (std::size_t bi = config.block_channels.size(); bi-- > 0;) {
    const BlockCache& bc = cache.blocks[bi];
    Tensor d_input;
    if (config.use_residual) {
      ConvGrads gp = conv2d_backward(bc.input, value(block_name(bi, "proj.weight")), d, 2, 0);
      grad(block_name(bi, "proj.weight")) += gp.kernels;
      grad(block_name(bi, "proj.bias")) += gp.bias;
      d_input = std::move(gp.input);
    }
    Tensor dm = relu_backward(bc.sep2_act, maxpool2_backward(bc.sep2_act, d));
    SeparableGrads s2 = separable_conv_backward(bc.sep1_act, value(block_name(bi, "sep2.depthwise")),
                                                value(block_name(bi, "sep2.pointwise")), dm);
    grad(block_name(bi, "sep2.depthwise")) += s2.dw_kernels;
    grad(block_name(bi, "sep2.pointwise")) += s2.pw_weights;
    grad(block_name(bi, "sep2.bias")) += s2.pw_bias;
    dm = relu_backward(bc.sep1_act, s2.input);
    SeparableGrads s1 = separable_conv_backward(bc.input, value(block_name(bi, "sep1.depthwise")),
                                                value(block_name(bi, "sep1.pointwise")), dm);
    grad(block_name(bi, "sep1.depthwise")) += s1.dw_kernels;
    grad(block_name(bi, "sep1.pointwise")) += s1.pw_weights;
    grad(block_name(bi, "sep1.bias")) += s1.pw_bias;
    if (d_input.empty()) {
      d = std::move(s1.input);
    } else {
      d = std::move(d_input);
      d += s1.input;
    }
  }

  d = relu_backward(cache.stem_act, maxpool2_backward(cache.stem_act, d));
  ConvGrads gs = conv2d_backward(cache.input, value("stem.conv.weight"), d, 1, 1, /*need_input_grad=*/false);
  grad("stem.conv.weight") += gs.kernels;
  grad("stem.conv.bias") += gs.bias;
}

}  // namespace polyth
