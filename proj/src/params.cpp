#include "rarunet/params.hpp"

#include <cmath>
#include <cstring>

#include "rarunet/rng.hpp"

namespace rarunet {

template <typename T>
Tensor<T>& ParamSet<T>::add(const std::string& name, const Shape& shape) {
  RARUNET_CHECK(!entries_.count(name), ErrorCode::kInvalidArgument,
          "duplicate parameter name " + name);
  Entry entry;
  entry.value = Tensor<T>::zeros(shape, true);
  return entries_.emplace(name, std::move(entry)).first->second.value;
}

template <typename T>
Tensor<T>& ParamSet<T>::add_uniform(const std::string& name, const Shape& shape, int fan_in,
                                    std::uint64_t seed) {
  Tensor<T>& t = add(name, shape);
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  Rng rng(derive_seed(seed, name));
  for (T& v : t.data()) v = static_cast<T>(rng.uniform(-bound, bound));
  return t;
}

template <typename T>
const Tensor<T>& ParamSet<T>::get(const std::string& name) const {
  auto it = entries_.find(name);
  RARUNET_CHECK(it != entries_.end(), ErrorCode::kInvalidArgument, "unknown parameter " + name);
  return it->second.value;
}

template <typename T>
Tensor<T>& ParamSet<T>::get(const std::string& name) {
  auto it = entries_.find(name);
  RARUNET_CHECK(it != entries_.end(), ErrorCode::kInvalidArgument, "unknown parameter " + name);
  return it->second.value;
}

template <typename T>
std::size_t ParamSet<T>::element_count() const {
  std::size_t n = 0;
  for (const auto& [name, entry] : entries_) n += entry.value.numel();
  return n;
}

template <typename T>
std::vector<std::string> ParamSet<T>::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, entry] : entries_) out.push_back(name);
  return out;
}

template <typename T>
void ParamSet<T>::zero_grad() {
  for (auto& [name, entry] : entries_) entry.value.zero_grad();
}

template <typename T>
bool ParamSet<T>::bit_identical(const ParamSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (auto a = entries_.begin(), b = other.entries_.begin(); a != entries_.end(); ++a, ++b) {
    if (a->first != b->first) return false;
    const auto& va = a->second.value;
    const auto& vb = b->second.value;
    if (va.shape() != vb.shape()) return false;
    if (std::memcmp(va.values().data(), vb.values().data(), va.numel() * sizeof(T)) != 0) {
      return false;
    }
  }
  return true;
}

template <typename T>
void optimizer_step(ParamSet<T>& params, double learning_rate, const OptimizerConfig& config) {
  for (auto& [name, entry] : params) {
    RARUNET_CHECK(entry.value.has_grad(), ErrorCode::kGradient, "parameter " + name + " has no gradient");
  }
  for (auto& [name, entry] : params) {
    auto value = entry.value.data();
    auto grad = entry.value.grad();
    if (config.kind == OptimizerKind::kSgd) {
      for (std::size_t i = 0; i < value.size(); ++i) {
        value[i] -= static_cast<T>(learning_rate) * grad[i];
      }
      continue;
    }
    if (entry.first_moment.empty()) {
      entry.first_moment.assign(value.size(), T(0));
      entry.second_moment.assign(value.size(), T(0));
    }
    ++entry.step;
    const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(entry.step));
    const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(entry.step));
    const T b1 = static_cast<T>(config.beta1), b2 = static_cast<T>(config.beta2);
    for (std::size_t i = 0; i < value.size(); ++i) {
      T& m = entry.first_moment[i];
      T& v = entry.second_moment[i];
      m = b1 * m + (T(1) - b1) * grad[i];
      v = b2 * v + (T(1) - b2) * grad[i] * grad[i];
      const double m_hat = static_cast<double>(m) / c1;
      const double v_hat = static_cast<double>(v) / c2;
      value[i] -= static_cast<T>(learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon));
    }
  }
}

template class ParamSet<float>;
template class ParamSet<double>;
template void optimizer_step(ParamSet<float>&, double, const OptimizerConfig&);
template void optimizer_step(ParamSet<double>&, double, const OptimizerConfig&);

}  // namespace rarunet
