#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "rarunet/tensor.hpp"

namespace rarunet {

/// Trainable parameters keyed by dotted path ("enc2.conv1.weight"), iterated
/// in lexicographic order. Each entry carries its optimizer moments.
template <typename T>
class ParamSet {
 public:
  struct Entry {
    Tensor<T> value;
    std::vector<T> first_moment;
    std::vector<T> second_moment;
    std::int64_t step = 0;
  };

  /// Registers a zero-filled parameter. Names must be unique.
  Tensor<T>& add(const std::string& name, const Shape& shape);
  /// Registers a parameter with He-uniform values, bound sqrt(6 / fan_in),
  /// drawn from a stream derived from (seed, name).
  Tensor<T>& add_uniform(const std::string& name, const Shape& shape, int fan_in,
                         std::uint64_t seed);

  const Tensor<T>& get(const std::string& name) const;
  Tensor<T>& get(const std::string& name);
  bool contains(const std::string& name) const { return entries_.count(name) != 0; }

  std::size_t size() const { return entries_.size(); }
  std::size_t element_count() const;
  std::vector<std::string> names() const;

  void zero_grad();

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  bool bit_identical(const ParamSet& other) const;

 private:
  std::map<std::string, Entry> entries_;
};

enum class OptimizerKind { kAdam, kSgd };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One update of every parameter in name order. Throws when a parameter has
/// no gradient.
template <typename T>
void optimizer_step(ParamSet<T>& params, double learning_rate,
                    const OptimizerConfig& config = {});

extern template class ParamSet<float>;
extern template class ParamSet<double>;

}  // namespace rarunet
