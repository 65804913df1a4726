#include "rarunet/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "rarunet/ops.hpp"
#include "rarunet/rng.hpp"

namespace rarunet {
namespace {

double evaluate(const ScalarFn& fn, std::vector<Tensor<double>>& inputs) {
  Tape<double> tape(false);
  const double v = fn(tape, inputs).item();
  RARUNET_CHECK(std::isfinite(v), ErrorCode::kGradient, "grad_check: non-finite function value");
  return v;
}

}  // namespace

double grad_check(const ScalarFn& fn, std::vector<Tensor<double>>& inputs, double epsilon) {
  for (auto& t : inputs) t.zero_grad();
  {
    Tape<double> tape;
    Tensor<double> loss = fn(tape, inputs);
    RARUNET_CHECK(std::isfinite(loss.item()), ErrorCode::kGradient,
            "grad_check: non-finite function value");
    tape.backward(loss);
  }
  double worst = 0.0;
  for (auto& t : inputs) {
    if (!t.requires_grad()) continue;
    auto values = t.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + epsilon;
      const double up = evaluate(fn, inputs);
      values[i] = saved - epsilon;
      const double down = evaluate(fn, inputs);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * epsilon);
      const double analytic = t.has_grad() ? t.grad()[i] : 0.0;
      RARUNET_CHECK(std::isfinite(analytic), ErrorCode::kGradient, "grad_check: non-finite gradient");
      worst = std::max(worst, std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric)));
    }
  }
  return worst;
}

double grad_check_projected(const TensorFn& fn, std::vector<Tensor<double>>& inputs,
                            double epsilon, std::uint64_t seed) {
  ScalarFn scalar = [&fn, seed](Tape<double>& tape, std::vector<Tensor<double>>& in) {
    Tensor<double> out = fn(tape, in);
    RARUNET_CHECK(out.rank() == 4, ErrorCode::kInvalidArgument,
            "grad_check_projected needs an NCHW output");
    Rng rng(seed);
    std::vector<double> weights(out.numel());
    for (double& w : weights) w = rng.uniform(-1.0, 1.0);
    Tensor<double> proj = Tensor<double>::from(out.shape(), std::move(weights));
    return ops::sum(tape, ops::mul(tape, out, proj));
  };
  return grad_check(scalar, inputs, epsilon);
}

}  // namespace rarunet
