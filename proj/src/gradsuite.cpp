#include "rarunet/gradsuite.hpp"

#include "rarunet/arch.hpp"
#include "rarunet/gradcheck.hpp"
#include "rarunet/ops.hpp"
#include "rarunet/rng.hpp"

namespace rarunet {

namespace {

using Inputs = std::vector<Tensor<double>>;
using D = Tape<double>;

Tensor<double> random(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0,
                      bool grad = true) {
  Tensor<double> t = Tensor<double>::zeros(shape, grad);
  Rng rng(seed);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

void randomize(ParamSet<double>& params, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& [name, entry] : params) {
    for (double& v : entry.value.data()) v = rng.uniform(-0.5, 0.5);
  }
}

}  // namespace

std::vector<GradCheckOutcome> run_gradient_suite(bool include_model) {
  using ops::Axis;
  using ops::Reduction;
  std::vector<GradCheckOutcome> out;
  auto projected = [&](const char* name, const TensorFn& fn, Inputs inputs) {
    out.push_back({name, grad_check_projected(fn, inputs)});
  };
  auto scalar = [&](const char* name, const ScalarFn& fn, Inputs inputs) {
    out.push_back({name, grad_check(fn, inputs)});
  };

  const Shape x_shape{2, 3, 6, 8};
  projected("conv2d_3x3_pad1", [](D& t, Inputs& v) { return ops::conv2d(t, v[0], v[1], v[2], 1, 1); },
            {random(x_shape, 1), random({4, 3, 3, 3}, 2), random({4}, 3)});
  projected("conv2d_1x1", [](D& t, Inputs& v) { return ops::conv2d(t, v[0], v[1], v[2]); },
            {random(x_shape, 4), random({2, 3, 1, 1}, 5), random({2}, 6)});
  projected("conv2d_7x7_no_bias",
            [](D& t, Inputs& v) { return ops::conv2d(t, v[0], v[1], Tensor<double>{}, 1, 3); },
            {random({1, 2, 8, 8}, 7), random({1, 2, 7, 7}, 8)});
  projected("conv2d_stride2", [](D& t, Inputs& v) { return ops::conv2d(t, v[0], v[1], v[2], 2, 0); },
            {random(x_shape, 9), random({2, 3, 2, 2}, 10), random({2}, 11)});
  projected("conv_transpose2d", [](D& t, Inputs& v) { return ops::conv_transpose2d(t, v[0], v[1], v[2]); },
            {random(x_shape, 12), random({3, 2, 2, 2}, 13), random({2}, 14)});
  projected("maxpool2d", [](D& t, Inputs& v) { return ops::maxpool2d(t, v[0]); }, {random(x_shape, 15)});
  projected("relu", [](D& t, Inputs& v) { return ops::relu(t, v[0]); }, {random(x_shape, 16)});
  projected("sigmoid", [](D& t, Inputs& v) { return ops::sigmoid(t, ops::scale(t, v[0], 4.0)); },
            {random(x_shape, 17)});
  projected("add_mul_broadcast",
            [](D& t, Inputs& v) {
              return ops::add(t, ops::mul(t, v[0], v[1]), ops::mul(t, ops::add(t, v[0], v[0]), v[2]));
            },
            {random(x_shape, 18), random({2, 1, 6, 8}, 19), random({2, 3, 1, 1}, 20)});
  projected("concat_slice",
            [](D& t, Inputs& v) {
              auto c = ops::concat_channels(t, v[0], v[1]);
              return ops::mul(t, ops::slice_channels(t, c, 1, 4), ops::slice_channels(t, c, 2, 5));
            },
            {random(x_shape, 21), random({2, 2, 6, 8}, 22)});
  projected("reduce",
            [](D& t, Inputs& v) {
              auto a = ops::reduce(t, v[0], Axis::kChannel, Reduction::kMean);
              auto b = ops::reduce(t, v[0], Axis::kChannel, Reduction::kMax);
              auto c = ops::reduce(t, v[0], Axis::kSpatial, Reduction::kMean);
              auto d = ops::reduce(t, v[0], Axis::kSpatial, Reduction::kMax);
              return ops::mul(t, ops::mul(t, v[0], ops::add(t, a, b)), ops::add(t, c, d));
            },
            {random(x_shape, 23)});
  scalar("sum", [](D& t, Inputs& v) { return ops::sum(t, ops::mul(t, v[0], v[0])); }, {random({2, 1, 3, 3}, 24)});
  scalar("mean", [](D& t, Inputs& v) { return ops::mean(t, ops::mul(t, v[0], ops::sigmoid(t, v[0]))); },
         {random({2, 1, 3, 3}, 27)});
  scalar("dice_loss",
         [](D& t, Inputs& v) {
           return ops::mean(t, ops::dice_loss(t, ops::sigmoid(t, v[0]), v[1]));
         },
         {random({2, 1, 4, 4}, 25, -2, 2), random({2, 1, 4, 4}, 26, 0, 1, false)});

  ArchConfig cfg;
  cfg.base_channels = 2;
  auto block_params = init_params<double>(cfg, 3);
  randomize(block_params, 4);
  projected("residual_block_path",
            [&](D& t, Inputs& v) { return blocks::residual_block_path(t, block_params, "dec1.skip", v[0], 4); },
            {random({1, 2, 8, 8}, 27)});
  projected("attention_refine_learned",
            [&](D& t, Inputs& v) { return blocks::learned_attention_refine(t, block_params, "dec1.att", v[0]); },
            {random({1, 2, 8, 8}, 28)});
  projected("attention_refine_pooled",
            [](D& t, Inputs& v) { return blocks::attention_refine(t, v[0]); }, {random({2, 3, 4, 4}, 29)});

  if (include_model) {
    auto model = build_model<double>(cfg, 11);
    randomize(model.params(), 12);
    const auto target = random({1, 1, 16, 16}, 14, 0, 1, false);
    Inputs inputs{random({1, 1, 16, 16}, 13)};
    for (auto& [name, entry] : model.params()) inputs.push_back(entry.value);
    out.push_back({"full_model_base2_16x16",
                   grad_check([&](D& t, Inputs& v) {
                     return ops::mean(t, ops::dice_loss(t, model.forward(t, v[0]), target));
                   }, inputs)});
  }
  return out;
}

}  // namespace rarunet
