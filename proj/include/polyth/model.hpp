#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "polyth/tensor.hpp"

namespace polyth {

/// Mini-Xception classifier hyperparameters.
///
/// Layer list, with parameter names in store order:
///   stem:   conv 3x3/s1/p1 (3 -> stem_channels) -> relu -> maxpool2
///           stem.conv.weight [stem, 3, 3, 3], stem.conv.bias [stem]
///   blockK: separable 3x3 (Cin -> Cout) -> relu -> separable 3x3 (Cout -> Cout)
///           -> relu -> maxpool2, plus conv 1x1/s2 projection of the block input
///           blockK.sep1.depthwise [Cin, 3, 3], blockK.sep1.pointwise [Cout, Cin],
///           blockK.sep1.bias [Cout], blockK.sep2.* likewise with Cout,
///           blockK.proj.weight [Cout, Cin, 1, 1], blockK.proj.bias [Cout]
///   head:   global_avg_pool -> dense h1 -> relu -> dropout
///           -> dense h2 -> relu -> dropout -> dense num_classes (logits)
///           head.fc1.{weight,bias}, head.fc2.{weight,bias}, head.logits.{weight,bias}
struct ModelConfig {
  std::size_t input_height = 224;
  std::size_t input_width = 224;
  std::size_t num_classes = 3;
  std::size_t stem_channels = 32;
  std::vector<std::size_t> block_channels{32, 64, 128};
  bool use_residual = true;
  std::size_t head1 = 256;
  std::size_t head2 = 128;
  double drop_prob = 0.25;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;

  /// key=value lines, one per field, in a fixed order.
  std::string to_text() const;
  static ModelConfig from_text(std::string_view text);

  /// Applies one `key=value` setting; returns false for an unknown key.
  bool set(std::string_view key, std::string_view value);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Named parameters in deterministic insertion order.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    ParamTensor param;
  };

  void add(std::string name, Tensor value);

  ParamTensor& at(std::string_view name);
  const ParamTensor& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const { return entries_.size(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  void zero_grad();

  /// Values and names only; gradients are ignored.
  bool same_values(const ParamStore& other) const;

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// Zero-valued parameters with the shapes induced by `config`.
ParamStore make_params(const ModelConfig& config);

/// Glorot-uniform weights, zero biases.
ParamStore init_params(const ModelConfig& config, std::uint64_t seed);

std::size_t param_count(const ParamStore& params);

/// Rounds every parameter value to the nearest f32.
void quantize_to_f32(ParamStore& params);

struct BlockCache {
  Tensor input;
  Tensor sep1_act;
  Tensor sep2_act;
};

/// Intermediates retained by forward for the matching backward call.
struct ForwardCache {
  std::string config_key;
  std::size_t batch = 0;
  Tensor input;
  Tensor stem_act;
  std::vector<BlockCache> blocks;
  Tensor backbone_out;
  Tensor pooled;
  Tensor fc1_act, fc1_mask, fc1_out;
  Tensor fc2_act, fc2_mask, fc2_out;
};

struct ForwardResult {
  Tensor logits;  // N x num_classes, pre-softmax
  ForwardCache cache;
};

ForwardResult forward(const ParamStore& params, const ModelConfig& config, const Tensor& batch, bool training,
                      std::mt19937_64& rng);

/// Accumulates parameter gradients into params[*].grad.
void backward(ParamStore& params, const ModelConfig& config, const ForwardCache& cache, const Tensor& dlogits);

}  // namespace polyth
