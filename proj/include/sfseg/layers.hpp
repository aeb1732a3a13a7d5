#pragma once

#include <functional>
#include <optional>
#include <string>

#include "sfseg/ops.hpp"
#include "sfseg/random.hpp"

namespace sfseg {

template <typename T>
using ParamVisitor = std::function<void(const std::string& name, Tensor<T>& param)>;

// Non-trainable state such as batchnorm running statistics.
template <typename T>
using BufferVisitor = std::function<void(const std::string& name, std::vector<T>& buffer)>;

template <typename T>
struct ConvLayer {
  Tensor<T> weight;  // [Cout, Cin, kH, kW]
  Tensor<T> bias;    // [Cout] or undefined
  Conv2dSpec spec;

  // He-uniform kernel, zero bias when `with_bias`.
  static ConvLayer he_uniform(std::int64_t cin, std::int64_t cout, int kernel, Conv2dSpec spec, bool with_bias,
                              Rng& rng);

  Tensor<T> forward(const Tensor<T>& x, Tape<T>* tape) const { return conv2d(x, weight, bias, spec, tape); }
  std::int64_t out_channels() const { return weight.dim(0); }
  void visit(const std::string& prefix, const ParamVisitor<T>& fn);
};

template <typename T>
struct BatchNormLayer {
  Tensor<T> gamma;
  Tensor<T> beta;
  BatchNormState<T> state;
  T eps = T(1e-5);

  static BatchNormLayer identity(std::int64_t channels);

  Tensor<T> forward(const Tensor<T>& x, Mode mode, Tape<T>* tape) {
    return batchnorm2d(x, gamma, beta, state, mode, eps, tape);
  }
  void visit(const std::string& prefix, const ParamVisitor<T>& fn);
  void visit_buffers(const std::string& prefix, const BufferVisitor<T>& fn);
};

/// Basic two-convolution residual block of the ResNet34 family.
template <typename T>
struct ResidualBlock {
  struct Shortcut {
    ConvLayer<T> conv;
    std::optional<BatchNormLayer<T>> bn;
  };

  ConvLayer<T> conv1;
  std::optional<BatchNormLayer<T>> bn1;
  ConvLayer<T> conv2;
  std::optional<BatchNormLayer<T>> bn2;
  std::optional<Shortcut> downsample;

  // Downsample shortcut is created iff stride > 1 or cin != cout.
  static ResidualBlock make(std::int64_t cin, std::int64_t cout, int stride, bool batchnorm, Rng& rng);

  void visit(const std::string& prefix, const ParamVisitor<T>& fn);
  void visit_buffers(const std::string& prefix, const BufferVisitor<T>& fn);
};

// relu(F(x) + shortcut(x))
template <typename T>
Tensor<T> residual_block(const Tensor<T>& input, ResidualBlock<T>& block, Mode mode, Tape<T>* tape = nullptr);

/// v <- momentum * v + grad;  p <- p - lr * v
///
/// `velocities` is zero-initialised on the first call (when empty).
template <typename T>
void sgd_momentum_step(std::span<Tensor<T>> params, std::vector<Tensor<T>>& velocities, T lr, T momentum);

}  // namespace sfseg
