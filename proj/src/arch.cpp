#include "rarunet/arch.hpp"

#include <algorithm>

#include "rarunet/ops.hpp"

namespace rarunet {

void ArchConfig::validate() const {
  RARUNET_CHECK(in_channels >= 1 && out_channels >= 1, ErrorCode::kConfig,
          "in_channels and out_channels must be >= 1");
  RARUNET_CHECK(base_channels >= 1, ErrorCode::kConfig, "base_channels must be >= 1");
  RARUNET_CHECK(depth == 4, ErrorCode::kConfig, "depth is fixed at 4, got " + std::to_string(depth));
  RARUNET_CHECK(static_cast<int>(skip_block_counts.size()) == depth, ErrorCode::kConfig,
          "skip_block_counts needs exactly " + std::to_string(depth) + " entries");
  for (int n : skip_block_counts) {
    RARUNET_CHECK(n >= 1, ErrorCode::kConfig, "skip_block_counts entries must be >= 1");
  }
  RARUNET_CHECK(attention_reduction >= 1, ErrorCode::kConfig, "attention_reduction must be >= 1");
  RARUNET_CHECK(attention_kernel >= 1 && attention_kernel % 2 == 1, ErrorCode::kConfig,
          "attention_kernel must be a positive odd number");
}

int ArchConfig::encoder_output_channels(int level) const {
  if (level == 0 || !use_residual_encoders) return width(level);
  return encoder_output_channels(level - 1) + width(level);
}

namespace {

std::string level_name(const std::string& stem, int level) {
  return stem + std::to_string(level + 1);
}

std::string encoder_prefix(const ArchConfig& config, int level) {
  return level == config.depth ? std::string("bottleneck") : level_name("enc", level);
}

int attention_hidden(const ArchConfig& config, int channels) {
  return std::max(1, channels / config.attention_reduction);
}

template <typename T>
Tensor<T> conv_relu(Tape<T>& tape, const ParamSet<T>& params, const std::string& name,
                    const Tensor<T>& x) {
  const Tensor<T>& w = params.get(name + ".weight");
  const int pad = (w.dim(2) - 1) / 2;
  return ops::relu(tape, ops::conv2d(tape, x, w, params.get(name + ".bias"), 1, pad));
}

}  // namespace

namespace blocks {

template <typename T>
Tensor<T> residual_encoder_block(Tape<T>& tape, const ParamSet<T>& params,
                                 const std::string& prefix, const Tensor<T>& x, bool residual) {
  Tensor<T> a = conv_relu(tape, params, prefix + ".conv1", x);
  Tensor<T> b = conv_relu(tape, params, prefix + ".conv2", a);
  return residual ? ops::concat_channels(tape, x, b) : b;
}

template <typename T>
Tensor<T> residual_block_path(Tape<T>& tape, const ParamSet<T>& params,
                              const std::string& prefix, const Tensor<T>& x, int n_blocks) {
  RARUNET_CHECK(n_blocks >= 1, ErrorCode::kInvalidArgument,
          "residual_block_path: n_blocks must be >= 1, got " + std::to_string(n_blocks));
  Tensor<T> y = x;
  for (int i = 1; i <= n_blocks; ++i) {
    const std::string block = prefix + ".block" + std::to_string(i);
    Tensor<T> residual = conv_relu(tape, params, block + ".conv", y);
    Tensor<T> shortcut = y;
    if (params.contains(block + ".proj.weight")) {
      shortcut = ops::conv2d(tape, y, params.get(block + ".proj.weight"),
                             params.get(block + ".proj.bias"), 1, 0);
    }
    y = ops::relu(tape, ops::add(tape, residual, shortcut));
  }
  return y;
}

template <typename T>
Tensor<T> spatial_attention(Tape<T>& tape, const Tensor<T>& features) {
  using ops::Axis;
  using ops::Reduction;
  return ops::sigmoid(tape, ops::add(tape, ops::reduce(tape, features, Axis::kChannel, Reduction::kMean),
                                     ops::reduce(tape, features, Axis::kChannel, Reduction::kMax)));
}

template <typename T>
Tensor<T> channel_attention(Tape<T>& tape, const Tensor<T>& features) {
  using ops::Axis;
  using ops::Reduction;
  return ops::sigmoid(tape, ops::add(tape, ops::reduce(tape, features, Axis::kSpatial, Reduction::kMean),
                                     ops::reduce(tape, features, Axis::kSpatial, Reduction::kMax)));
}

template <typename T>
Tensor<T> attention_refine(Tape<T>& tape, const Tensor<T>& features) {
  Tensor<T> refined = ops::mul(tape, features, spatial_attention(tape, features));
  return ops::mul(tape, refined, channel_attention(tape, refined));
}

template <typename T>
Tensor<T> learned_spatial_attention(Tape<T>& tape, const ParamSet<T>& params,
                                    const std::string& prefix, const Tensor<T>& features) {
  using ops::Axis;
  using ops::Reduction;
  Tensor<T> pooled =
      ops::concat_channels(tape, ops::reduce(tape, features, Axis::kChannel, Reduction::kMean),
                           ops::reduce(tape, features, Axis::kChannel, Reduction::kMax));
  const Tensor<T>& w = params.get(prefix + ".spatial.weight");
  return ops::sigmoid(tape, ops::conv2d(tape, pooled, w, Tensor<T>{}, 1, (w.dim(2) - 1) / 2));
}

template <typename T>
Tensor<T> learned_channel_attention(Tape<T>& tape, const ParamSet<T>& params,
                                    const std::string& prefix, const Tensor<T>& features) {
  using ops::Axis;
  using ops::Reduction;
  auto mlp = [&](const Tensor<T>& v) {
    Tensor<T> hidden = ops::relu(tape, ops::conv2d(tape, v, params.get(prefix + ".fc1.weight"),
                                                   params.get(prefix + ".fc1.bias")));
    return ops::conv2d(tape, hidden, params.get(prefix + ".fc2.weight"),
                       params.get(prefix + ".fc2.bias"));
  };
  return ops::sigmoid(
      tape, ops::add(tape, mlp(ops::reduce(tape, features, Axis::kSpatial, Reduction::kMean)),
                     mlp(ops::reduce(tape, features, Axis::kSpatial, Reduction::kMax))));
}

template <typename T>
Tensor<T> learned_attention_refine(Tape<T>& tape, const ParamSet<T>& params,
                                   const std::string& prefix, const Tensor<T>& features) {
  Tensor<T> refined =
      ops::mul(tape, features, learned_spatial_attention(tape, params, prefix, features));
  return ops::mul(tape, refined, learned_channel_attention(tape, params, prefix, refined));
}

template <typename T>
Tensor<T> decoder_block(Tape<T>& tape, const ParamSet<T>& params, const std::string& prefix,
                        const Tensor<T>& skip, const Tensor<T>& below, int level,
                        const ArchConfig& config) {
  RARUNET_CHECK(skip.rank() == 4 && below.rank() == 4, ErrorCode::kShapeMismatch,
          "decoder_block: operands must be NCHW");
  RARUNET_CHECK(skip.dim(2) == 2 * below.dim(2) && skip.dim(3) == 2 * below.dim(3),
          ErrorCode::kShapeMismatch,
          "decoder_block: skip " + shape_string(skip.shape()) + " is not twice the extent of " +
              shape_string(below.shape()));
  Tensor<T> up = ops::conv_transpose2d(tape, below, params.get(prefix + ".up.weight"),
                                       params.get(prefix + ".up.bias"), 2);
  Tensor<T> lateral = skip;
  if (config.use_residual_skips) {
    lateral = residual_block_path(tape, params, prefix + ".skip", skip,
                                  config.skip_block_counts.at(level));
  }
  Tensor<T> merged = ops::concat_channels(tape, lateral, up);
  Tensor<T> out = conv_relu(tape, params, prefix + ".conv1", merged);
  out = conv_relu(tape, params, prefix + ".conv2", out);
  if (config.use_attention_decoders) {
    out = config.attention_mode == AttentionMode::kLearned
              ? learned_attention_refine(tape, params, prefix + ".att", out)
              : attention_refine(tape, out);
  }
  return out;
}

}  // namespace blocks

template <typename T>
Tensor<T> Model<T>::forward(Tape<T>& tape, const Tensor<T>& batch) const {
  RARUNET_CHECK(batch.rank() == 4, ErrorCode::kShapeMismatch,
          "forward: input must be NCHW, got " + shape_string(batch.shape()));
  RARUNET_CHECK(batch.dim(1) == config_.in_channels, ErrorCode::kShapeMismatch,
          "forward: expected " + std::to_string(config_.in_channels) + " input channels, got " +
              std::to_string(batch.dim(1)));
  const int multiple = 1 << config_.depth;
  RARUNET_CHECK(batch.dim(2) % multiple == 0 && batch.dim(3) % multiple == 0, ErrorCode::kShapeMismatch,
          "forward: height and width must be multiples of " + std::to_string(multiple) + ", got " +
              shape_string(batch.shape()));

  std::vector<Tensor<T>> features;
  features.push_back(blocks::residual_encoder_block(tape, params_, encoder_prefix(config_, 0),
                                                    batch, false));
  for (int level = 1; level <= config_.depth; ++level) {
    Tensor<T> pooled = ops::maxpool2d(tape, features.back(), 2);
    features.push_back(blocks::residual_encoder_block(
        tape, params_, encoder_prefix(config_, level), pooled, config_.use_residual_encoders));
  }
  Tensor<T> below = features.back();
  for (int level = config_.depth - 1; level >= 0; --level) {
    below = blocks::decoder_block(tape, params_, level_name("dec", level), features[level], below,
                                  level, config_);
  }
  Tensor<T> logits =
      ops::conv2d(tape, below, params_.get("head.weight"), params_.get("head.bias"), 1, 0);
  return ops::sigmoid(tape, logits);
}

template <typename T>
Tensor<T> Model<T>::predict(const Tensor<T>& batch) const {
  Tape<T> tape(false);
  return forward(tape, batch);
}

namespace {

template <typename T>
void add_conv(ParamSet<T>& params, const std::string& name, int in, int out, int kernel,
              std::uint64_t seed, bool bias = true) {
  params.add_uniform(name + ".weight", {out, in, kernel, kernel}, in * kernel * kernel, seed);
  if (bias) params.add(name + ".bias", {out});
}

}  // namespace

template <typename T>
ParamSet<T> init_params(const ArchConfig& config, std::uint64_t seed) {
  config.validate();
  ParamSet<T> params;
  for (int level = 0; level <= config.depth; ++level) {
    const std::string prefix = encoder_prefix(config, level);
    const int in = level == 0 ? config.in_channels : config.encoder_output_channels(level - 1);
    const int w = config.width(level);
    add_conv(params, prefix + ".conv1", in, w, 3, seed);
    add_conv(params, prefix + ".conv2", w, w, 3, seed);
  }
  int below = config.encoder_output_channels(config.depth);
  for (int level = config.depth - 1; level >= 0; --level) {
    const std::string prefix = level_name("dec", level);
    const int w = config.width(level);
    const int skip = config.encoder_output_channels(level);
    params.add_uniform(prefix + ".up.weight", {below, w, 2, 2}, below, seed);
    params.add(prefix + ".up.bias", {w});
    if (config.use_residual_skips) {
      for (int b = 1; b <= config.skip_block_counts[level]; ++b) {
        add_conv(params, prefix + ".skip.block" + std::to_string(b) + ".conv", skip, skip, 3, seed);
      }
    }
    add_conv(params, prefix + ".conv1", skip + w, w, 3, seed);
    add_conv(params, prefix + ".conv2", w, w, 3, seed);
    if (config.use_attention_decoders && config.attention_mode == AttentionMode::kLearned) {
      const int hidden = attention_hidden(config, w);
      add_conv(params, prefix + ".att.spatial", 2, 1, config.attention_kernel, seed, false);
      add_conv(params, prefix + ".att.fc1", w, hidden, 1, seed);
      add_conv(params, prefix + ".att.fc2", hidden, w, 1, seed);
    }
    below = w;
  }
  add_conv(params, "head", config.width(0), config.out_channels, 1, seed);
  return params;
}

std::size_t param_count(const ArchConfig& config) {
  config.validate();
  auto conv = [](std::size_t in, std::size_t out, std::size_t k, bool bias = true) {
    return k * k * in * out + (bias ? out : 0);
  };
  std::size_t total = 0;
  for (int level = 0; level <= config.depth; ++level) {
    const std::size_t in =
        level == 0 ? config.in_channels : config.encoder_output_channels(level - 1);
    const std::size_t w = config.width(level);
    total += conv(in, w, 3) + conv(w, w, 3);
  }
  std::size_t below = config.encoder_output_channels(config.depth);
  for (int level = config.depth - 1; level >= 0; --level) {
    const std::size_t w = config.width(level);
    const std::size_t skip = config.encoder_output_channels(level);
    total += 4 * below * w + w;
    if (config.use_residual_skips) total += config.skip_block_counts[level] * conv(skip, skip, 3);
    total += conv(skip + w, w, 3) + conv(w, w, 3);
    if (config.use_attention_decoders && config.attention_mode == AttentionMode::kLearned) {
      const std::size_t k = config.attention_kernel;
      const std::size_t hidden = attention_hidden(config, static_cast<int>(w));
      total += conv(2, 1, k, false) + conv(w, hidden, 1) + conv(hidden, w, 1);
    }
    below = w;
  }
  return total + conv(config.width(0), config.out_channels, 1);
}

#define RARUNET_INSTANTIATE_ARCH(T)                                                               \
  template class Model<T>;                                                                        \
  template ParamSet<T> init_params(const ArchConfig&, std::uint64_t);                             \
  namespace blocks {                                                                              \
  template Tensor<T> residual_encoder_block(Tape<T>&, const ParamSet<T>&, const std::string&,     \
                                            const Tensor<T>&, bool);                              \
  template Tensor<T> residual_block_path(Tape<T>&, const ParamSet<T>&, const std::string&,        \
                                         const Tensor<T>&, int);                                  \
  template Tensor<T> spatial_attention(Tape<T>&, const Tensor<T>&);                               \
  template Tensor<T> channel_attention(Tape<T>&, const Tensor<T>&);                               \
  template Tensor<T> attention_refine(Tape<T>&, const Tensor<T>&);                                \
  template Tensor<T> learned_spatial_attention(Tape<T>&, const ParamSet<T>&, const std::string&,  \
                                               const Tensor<T>&);                                 \
  template Tensor<T> learned_channel_attention(Tape<T>&, const ParamSet<T>&, const std::string&,  \
                                               const Tensor<T>&);                                 \
  template Tensor<T> learned_attention_refine(Tape<T>&, const ParamSet<T>&, const std::string&,   \
                                              const Tensor<T>&);                                  \
  template Tensor<T> decoder_block(Tape<T>&, const ParamSet<T>&, const std::string&,              \
                                   const Tensor<T>&, const Tensor<T>&, int, const ArchConfig&);   \
  }

RARUNET_INSTANTIATE_ARCH(float)
RARUNET_INSTANTIATE_ARCH(double)

}  // namespace rarunet
