#pragma once

#include <functional>
#include <vector>

#include "rarunet/tensor.hpp"

namespace rarunet {

/// Builds a scalar from the given inputs on the supplied tape.
using ScalarFn = std::function<Tensor<double>(Tape<double>&, std::vector<Tensor<double>>&)>;

/// Compares reverse-mode gradients of `fn` against central differences.
///
/// Returns the largest |analytic - numeric| / max(1, |numeric|) over every
/// coordinate of every input that requires a gradient. Inputs are perturbed
/// in place and restored afterwards.
double grad_check(const ScalarFn& fn, std::vector<Tensor<double>>& inputs, double epsilon = 1e-5);

/// Convenience for checking a tensor-valued op: reduces the output to a
/// scalar with a fixed pseudo-random projection so every output coordinate
/// contributes.
using TensorFn = std::function<Tensor<double>(Tape<double>&, std::vector<Tensor<double>>&)>;
double grad_check_projected(const TensorFn& fn, std::vector<Tensor<double>>& inputs,
                            double epsilon = 1e-5, std::uint64_t seed = 7);

}  // namespace rarunet
