#include "rarunet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace rarunet {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::kShapeMismatch: return "shape_mismatch";
    case ErrorCode::kInvalidArgument: return "invalid_argument";
    case ErrorCode::kGradient: return "gradient";
    case ErrorCode::kFormat: return "format";
    case ErrorCode::kIo: return "io";
    case ErrorCode::kConfig: return "config";
    case ErrorCode::kUndefinedMetric: return "undefined_metric";
  }
  return "unknown";
}

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  RARUNET_CHECK(!shape.empty() && shape.size() <= 4, ErrorCode::kShapeMismatch,
          "tensor rank must be 1..4, got " + shape_string(shape));
  for (std::size_t i = 0; i < shape.size(); ++i) {
    RARUNET_CHECK(shape[i] >= 1, ErrorCode::kShapeMismatch,
            "tensor dimension " + std::to_string(i) + " must be >= 1 in " + shape_string(shape));
  }
}

}  // namespace

template <typename T>
Tensor<T> Tensor<T>::zeros(const Shape& shape, bool requires_grad) {
  return full(shape, T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(const Shape& shape, T value, bool requires_grad) {
  check_shape(shape);
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->shape = shape;
  impl->data.assign(rarunet::numel(shape), value);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

template <typename T>
Tensor<T> Tensor<T>::from(const Shape& shape, std::vector<T> values, bool requires_grad) {
  check_shape(shape);
  RARUNET_CHECK(values.size() == rarunet::numel(shape), ErrorCode::kShapeMismatch,
          "value count " + std::to_string(values.size()) + " does not match shape " +
              shape_string(shape));
  auto impl = std::make_shared<TensorImpl<T>>();
  impl->shape = shape;
  impl->data.assign(values.begin(), values.end());
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

template <typename T>
std::span<T> Tensor<T>::ensure_grad() {
  if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), T(0));
  return impl_->grad;
}

template <typename T>
T& Tensor<T>::at(int n, int c, int h, int w) {
  const Shape& s = impl_->shape;
  return impl_->data[((static_cast<std::size_t>(n) * s[1] + c) * s[2] + h) * s[3] + w];
}

template <typename T>
T Tensor<T>::at(int n, int c, int h, int w) const {
  const Shape& s = impl_->shape;
  return impl_->data[((static_cast<std::size_t>(n) * s[1] + c) * s[2] + h) * s[3] + w];
}

template <typename T>
T Tensor<T>::item() const {
  RARUNET_CHECK(impl_->data.size() == 1, ErrorCode::kShapeMismatch,
          "item() needs a one-element tensor, got " + shape_string(impl_->shape));
  return impl_->data[0];
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  auto impl = std::make_shared<TensorImpl<T>>(*impl_);
  return Tensor(std::move(impl));
}

template <typename T>
bool Tape<T>::tracks(std::initializer_list<const Tensor<T>*> operands) const {
  if (!recording_) return false;
  return std::any_of(operands.begin(), operands.end(),
                     [](const Tensor<T>* t) { return t && *t && t->requires_grad(); });
}

template <typename T>
void Tape<T>::backward(Tensor<T>& loss) {
  RARUNET_CHECK(loss.numel() == 1, ErrorCode::kGradient,
          "backward needs a scalar loss, got " + shape_string(loss.shape()));
  RARUNET_CHECK(!nodes_.empty(), ErrorCode::kGradient, "backward on an empty tape");
  RARUNET_CHECK(!backward_done_, ErrorCode::kGradient,
          "backward already ran on this tape; call reset() first");
  backward_done_ = true;
  loss.ensure_grad()[0] += T(1);
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace rarunet
