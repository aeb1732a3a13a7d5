#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sfseg/errors.hpp"

namespace sfseg {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Dense row-major tensor with an optional gradient buffer.
///
/// Tensors are reference types: copies share storage, so a Tape can hold on
/// to inputs and outputs of recorded operations. Use clone() for a deep copy.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0));
  Tensor(Shape shape, std::vector<T> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, T value) { return Tensor(std::move(shape), value); }

  bool defined() const noexcept { return static_cast<bool>(storage_); }
  const Shape& shape() const;
  std::int64_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;

  std::span<T> data();
  std::span<const T> data() const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);

  bool has_grad() const;
  std::span<T> grad();
  std::span<const T> grad() const;
  // Allocates a zero gradient buffer if none exists yet.
  // Const because storage is shared: recorded rules accumulate through copies.
  std::span<T> grad_buffer() const;
  void zero_grad();

  Tensor clone() const;
  bool shares_storage(const Tensor& other) const noexcept { return storage_ == other.storage_; }

 private:
  struct Storage {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;
    bool requires_grad = false;
  };

  Storage& storage() const;

  std::shared_ptr<Storage> storage_;
};

/// Ordered record of differentiable operations.
///
/// backward() visits the recorded rules in strict reverse order and may run
/// once per recording; clear() resets the tape for the next step.
template <typename T>
class Tape {
 public:
  using Rule = std::function<void()>;

  void record(Rule rule);
  void backward(Tensor<T>& loss);
  void clear();

  std::size_t size() const noexcept { return rules_.size(); }
  bool consumed() const noexcept { return consumed_; }

 private:
  std::vector<Rule> rules_;
  bool consumed_ = false;
};

// True when an op with these inputs should be recorded on `tape`.
template <typename T>
bool needs_grad(const Tape<T>* tape, std::initializer_list<const Tensor<T>*> inputs) {
  if (tape == nullptr) return false;
  for (const auto* t : inputs) {
    if (t != nullptr && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

// Throws NumericError naming `what` if any value is NaN or Inf.
template <typename T>
void check_finite(std::span<const T> values, const char* what);

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace sfseg
