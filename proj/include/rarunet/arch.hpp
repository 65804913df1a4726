#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rarunet/params.hpp"
#include "rarunet/tensor.hpp"

namespace rarunet {

/// How the decoder attention module turns pooled maps into weights.
///
/// kLearned passes the pooled channel vectors through a shared two-layer
/// bottleneck and the stacked spatial maps through a 7x7 convolution before
/// the sigmoid. kPooled adds the pooled maps directly and has no parameters.
enum class AttentionMode { kLearned, kPooled };

struct ArchConfig {
  int in_channels = 1;
  int out_channels = 1;
  int base_channels = 32;
  int depth = 4;
  /// Residual blocks on the skip path, shallowest level first.
  std::vector<int> skip_block_counts{4, 3, 2, 1};
  bool use_residual_encoders = true;
  bool use_residual_skips = true;
  bool use_attention_decoders = true;
  AttentionMode attention_mode = AttentionMode::kLearned;
  int attention_reduction = 8;
  int attention_kernel = 7;

  void validate() const;
  /// Channel width of the convolutions at encoder level `level` (0 = input
  /// resolution, depth = bottleneck).
  int width(int level) const { return base_channels << level; }
  /// Channels leaving encoder level `level`, which also feed its skip path.
  int encoder_output_channels(int level) const;

  bool operator==(const ArchConfig&) const = default;
};

namespace blocks {

/// One encoder level after downsampling. With `residual` the level returns
/// concat(x, relu(conv(relu(conv(x))))) so the downsampled input is carried
/// forward; otherwise it is two plain relu(conv3x3) layers.
template <typename T>
Tensor<T> residual_encoder_block(Tape<T>& tape, const ParamSet<T>& params,
                                 const std::string& prefix, const Tensor<T>& x, bool residual);

/// `n_blocks` chained units y = relu(relu(conv3x3(x)) + x). A 1x1 projection
/// replaces the identity shortcut when "<prefix>.block<i>.proj.weight" exists.
template <typename T>
Tensor<T> residual_block_path(Tape<T>& tape, const ParamSet<T>& params,
                              const std::string& prefix, const Tensor<T>& x, int n_blocks);

/// sigmoid(channel-mean(F) + channel-max(F)), shape N x 1 x H x W.
template <typename T>
Tensor<T> spatial_attention(Tape<T>& tape, const Tensor<T>& features);

/// sigmoid(spatial-mean(F) + spatial-max(F)), shape N x C x 1 x 1.
template <typename T>
Tensor<T> channel_attention(Tape<T>& tape, const Tensor<T>& features);

/// Spatial then channel refinement: F' = Ws(F) * F, out = Wc(F') * F'.
template <typename T>
Tensor<T> attention_refine(Tape<T>& tape, const Tensor<T>& features);

/// sigmoid(conv7x7([channel-mean(F); channel-max(F)])).
template <typename T>
Tensor<T> learned_spatial_attention(Tape<T>& tape, const ParamSet<T>& params,
                                    const std::string& prefix, const Tensor<T>& features);

/// sigmoid(mlp(spatial-mean(F)) + mlp(spatial-max(F))) with a shared
/// C -> C/r -> C bottleneck.
template <typename T>
Tensor<T> learned_channel_attention(Tape<T>& tape, const ParamSet<T>& params,
                                    const std::string& prefix, const Tensor<T>& features);

template <typename T>
Tensor<T> learned_attention_refine(Tape<T>& tape, const ParamSet<T>& params,
                                   const std::string& prefix, const Tensor<T>& features);

/// Upsample `below`, merge with the (optionally residual-path processed)
/// skip feature, two relu(conv3x3), then optional attention.
template <typename T>
Tensor<T> decoder_block(Tape<T>& tape, const ParamSet<T>& params, const std::string& prefix,
                        const Tensor<T>& skip, const Tensor<T>& below, int level,
                        const ArchConfig& config);

}  // namespace blocks

template <typename T>
class Model {
 public:
  Model(ArchConfig config, ParamSet<T> params) : config_(std::move(config)), params_(std::move(params)) {}

  const ArchConfig& config() const { return config_; }
  const ParamSet<T>& params() const { return params_; }
  ParamSet<T>& params() { return params_; }

  /// Per-pixel foreground probabilities, N x out_channels x H x W.
  Tensor<T> forward(Tape<T>& tape, const Tensor<T>& batch) const;
  /// Forward pass without recording.
  Tensor<T> predict(const Tensor<T>& batch) const;

  std::size_t param_count() const { return params_.element_count(); }

 private:
  ArchConfig config_;
  ParamSet<T> params_;
};

/// Registers every parameter of the wiring implied by `config` with
/// deterministic initial values.
template <typename T>
ParamSet<T> init_params(const ArchConfig& config, std::uint64_t seed);

template <typename T>
Model<T> build_model(const ArchConfig& config, std::uint64_t seed) {
  config.validate();
  return Model<T>(config, init_params<T>(config, seed));
}

/// Trainable parameter count for a configuration without allocating it.
std::size_t param_count(const ArchConfig& config);

extern template class Model<float>;
extern template class Model<double>;

}  // namespace rarunet
