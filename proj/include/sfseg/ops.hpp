#pragma once

#include <cstdint>
#include <vector>

#include "sfseg/tensor.hpp"

namespace sfseg {

enum class Mode { Train, Eval };

struct Conv2dSpec {
  int stride = 1;
  int padding = 0;
};

// Output extent of a strided window over `in` elements.
std::int64_t conv_out_size(std::int64_t in, std::int64_t kernel, int stride, int padding);

// Implicit -inf border used by max pooling: floor(k/2) for odd k, none for even k.
int maxpool_padding(int kernel);

/// 2-D cross-correlation. `bias` may be an undefined tensor.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias, Conv2dSpec spec,
                 Tape<T>* tape = nullptr);

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& input, int kernel, int stride, Tape<T>* tape = nullptr);

template <typename T>
Tensor<T> relu(const Tensor<T>& input, Tape<T>* tape = nullptr);

/// Running statistics of a batch-normalization layer.
template <typename T>
struct BatchNormState {
  std::vector<T> running_mean;
  std::vector<T> running_var;
  bool initialized = false;

  // mean 0 / variance 1, usable in eval mode straight away.
  static BatchNormState standard(std::int64_t channels);
  // Must see a train-mode batch before eval mode is allowed.
  static BatchNormState uninitialized(std::int64_t channels);
};

template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                      BatchNormState<T>& state, Mode mode, T eps = T(1e-5), Tape<T>* tape = nullptr,
                      T momentum = T(0.1));

/// Fixed bilinear upsampling by an integer factor (half-pixel centres, edge clamped).
template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& input, int factor, Tape<T>* tape = nullptr);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape = nullptr);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor, Tape<T>* tape = nullptr);

// Same values under a new shape with equal element count.
template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape, Tape<T>* tape = nullptr);

// Sum of all elements, shape [1].
template <typename T>
Tensor<T> sum(const Tensor<T>& a, Tape<T>* tape = nullptr);

// [N,C,H,W] -> [N,C]
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input, Tape<T>* tape = nullptr);

// [N,K] x [M,K]^T + [M] -> [N,M]
template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, Tape<T>* tape = nullptr);

}  // namespace sfseg
