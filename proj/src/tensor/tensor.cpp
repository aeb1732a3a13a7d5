#include "sfseg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sfseg {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw DimensionError("negative dimension in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : storage_(std::make_shared<Storage>()) {
  const auto n = shape_numel(shape);
  storage_->shape = std::move(shape);
  storage_->values.assign(static_cast<std::size_t>(n), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : storage_(std::make_shared<Storage>()) {
  const auto n = shape_numel(shape);
  if (static_cast<std::size_t>(n) != values.size()) {
    throw DimensionError("shape " + shape_str(shape) + " needs " + std::to_string(n) + " values, got " +
                         std::to_string(values.size()));
  }
  storage_->shape = std::move(shape);
  storage_->values = std::move(values);
}

template <typename T>
typename Tensor<T>::Storage& Tensor<T>::storage() const {
  if (!storage_) throw StateError("use of an undefined tensor");
  return *storage_;
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  return storage().shape;
}

template <typename T>
std::int64_t Tensor<T>::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  return s[axis];
}

template <typename T>
std::size_t Tensor<T>::numel() const {
  return storage().values.size();
}

template <typename T>
std::span<T> Tensor<T>::data() {
  return storage().values;
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
  return storage().values;
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return storage().requires_grad;
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool flag) {
  storage().requires_grad = flag;
  return *this;
}

template <typename T>
bool Tensor<T>::has_grad() const {
  return !storage().grad.empty() || storage().values.empty();
}

template <typename T>
std::span<T> Tensor<T>::grad() {
  return storage().grad;
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  return storage().grad;
}

template <typename T>
std::span<T> Tensor<T>::grad_buffer() const {
  auto& s = storage();
  if (s.grad.size() != s.values.size()) s.grad.assign(s.values.size(), T(0));
  return s.grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  storage().grad.clear();
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  Tensor out(storage().shape, storage().values);
  out.storage_->requires_grad = storage().requires_grad;
  return out;
}

template <typename T>
void Tape<T>::record(Rule rule) {
  if (consumed_) throw StateError("tape already consumed by backward(); clear() before recording");
  rules_.push_back(std::move(rule));
}

template <typename T>
void Tape<T>::backward(Tensor<T>& loss) {
  if (consumed_) throw StateError("backward() called twice on the same recording");
  if (loss.numel() != 1) throw DimensionError("backward() needs a scalar loss, got " + shape_str(loss.shape()));
  consumed_ = true;
  loss.grad_buffer()[0] = T(1);
  for (auto it = rules_.rbegin(); it != rules_.rend(); ++it) (*it)();
}

template <typename T>
void Tape<T>::clear() {
  rules_.clear();
  consumed_ = false;
}

template <typename T>
void check_finite(std::span<const T> values, const char* what) {
  for (T v : values) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value in ") + what);
  }
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template void check_finite<float>(std::span<const float>, const char*);
template void check_finite<double>(std::span<const double>, const char*);

}  // namespace sfseg
