#pragma once

#include "sfseg/layers.hpp"

namespace sfseg {

/// One 2x3 matrix [[a, b, tx], [c, d, ty]] per batch item, shape [N,2,3].
/// Maps normalized output coordinates to normalized input coordinates.
template <typename T>
struct AffineTheta {
  Tensor<T> matrix;

  static AffineTheta identity(std::int64_t batch);
  std::int64_t batch() const { return matrix.dim(0); }
};

/// Normalized source (x, y) per output pixel, shape [N,H,W,2], in [-1, 1]
/// when inside the input. Pixel centres sit at (2i + 1) / size - 1.
template <typename T>
struct SamplingGrid {
  Tensor<T> coords;

  std::int64_t batch() const { return coords.dim(0); }
  std::int64_t height() const { return coords.dim(1); }
  std::int64_t width() const { return coords.dim(2); }
};

/// Localization network and regressor of one affine transform encoder:
/// 3x3 conv -> relu -> global average pool -> linear to 6 values.
template <typename T>
struct AteParams {
  static constexpr int kLocChannels = 8;

  ConvLayer<T> loc_conv;
  Tensor<T> fc_weight;  // [6, kLocChannels], zero at init
  Tensor<T> fc_bias;    // [6], identity theta at init

  static AteParams make(std::int64_t channels, Rng& rng);
  void visit(const std::string& prefix, const ParamVisitor<T>& fn);
};

template <typename T>
AffineTheta<T> localize(const Tensor<T>& features, AteParams<T>& params, Tape<T>* tape = nullptr);

template <typename T>
SamplingGrid<T> affine_grid(const AffineTheta<T>& theta, std::int64_t out_h, std::int64_t out_w,
                            Tape<T>* tape = nullptr);

/// Bilinear sampling with zero fill outside the input. Differentiable with
/// respect to both the features and the grid.
template <typename T>
Tensor<T> grid_sample(const Tensor<T>& features, const SamplingGrid<T>& grid, Tape<T>* tape = nullptr);

// grid_sample(features, affine_grid(theta)) at the input resolution.
template <typename T>
Tensor<T> warp(const Tensor<T>& features, const AffineTheta<T>& theta, Tape<T>* tape = nullptr);

template <typename T>
Tensor<T> ate_apply(const Tensor<T>& features, AteParams<T>& params, Tape<T>* tape = nullptr);

}  // namespace sfseg
