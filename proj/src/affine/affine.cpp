#include "sfseg/affine.hpp"

#include <cmath>
#include <limits>

namespace sfseg {

namespace {

template <typename T>
T normalized_centre(std::int64_t index, std::int64_t size) {
  return static_cast<T>(2 * index + 1) / static_cast<T>(size) - T(1);
}

// Normalized -> pixel coordinate. Values within rounding noise of a pixel
// centre are snapped onto it, so an identity grid reproduces its input bit
// for bit.
template <typename T>
T unnormalize(T coord, std::int64_t size) {
  const T pix = ((coord + T(1)) * static_cast<T>(size) - T(1)) / T(2);
  const T nearest = std::round(pix);
  const T tol = T(16) * std::numeric_limits<T>::epsilon() * std::max<T>(T(1), static_cast<T>(size));
  return std::abs(pix - nearest) <= tol ? nearest : pix;
}

}  // namespace

template <typename T>
AffineTheta<T> AffineTheta<T>::identity(std::int64_t batch) {
  Tensor<T> m({batch, 2, 3});
  auto d = m.data();
  for (std::int64_t n = 0; n < batch; ++n) {
    d[static_cast<std::size_t>(n * 6 + 0)] = T(1);
    d[static_cast<std::size_t>(n * 6 + 4)] = T(1);
  }
  return {m};
}

template <typename T>
AteParams<T> AteParams<T>::make(std::int64_t channels, Rng& rng) {
  AteParams p;
  p.loc_conv = ConvLayer<T>::he_uniform(channels, kLocChannels, 3, {1, 1}, true, rng);
  p.fc_weight = Tensor<T>({6, kLocChannels}).set_requires_grad(true);
  p.fc_bias = Tensor<T>({6}, std::vector<T>{T(1), T(0), T(0), T(0), T(1), T(0)}).set_requires_grad(true);
  return p;
}

template <typename T>
void AteParams<T>::visit(const std::string& prefix, const ParamVisitor<T>& fn) {
  loc_conv.visit(prefix + ".loc_conv", fn);
  fn(prefix + ".fc.weight", fc_weight);
  fn(prefix + ".fc.bias", fc_bias);
}

template <typename T>
AffineTheta<T> localize(const Tensor<T>& features, AteParams<T>& params, Tape<T>* tape) {
  if (features.rank() != 4) throw DimensionError("localize: features must be [N,C,H,W]");
  const auto k = params.loc_conv.weight.dim(2);
  if (features.dim(2) < k || features.dim(3) < k) {
    throw DimensionError("localize: spatial size " + std::to_string(features.dim(2)) + "x" +
                         std::to_string(features.dim(3)) + " smaller than localization kernel " + std::to_string(k));
  }
  auto h = relu(params.loc_conv.forward(features, tape), tape);
  auto pooled = global_avg_pool(h, tape);
  auto raw = linear(pooled, params.fc_weight, params.fc_bias, tape);
  return {reshape(raw, {features.dim(0), 2, 3}, tape)};
}

template <typename T>
SamplingGrid<T> affine_grid(const AffineTheta<T>& theta, std::int64_t out_h, std::int64_t out_w, Tape<T>* tape) {
  const auto& m = theta.matrix;
  if (m.rank() != 3 || m.dim(1) != 2 || m.dim(2) != 3) {
    throw DimensionError("affine_grid: theta must be [N,2,3], got " + shape_str(m.shape()));
  }
  if (out_h < 1 || out_w < 1) throw ParameterError("affine_grid: output size must be positive");
  const auto n = m.dim(0);
  const bool track = needs_grad(tape, {&m});
  Tensor<T> grid({n, out_h, out_w, 2});
  if (track) grid.set_requires_grad(true);
  auto th = m.data();
  auto g = grid.data();
  for (std::int64_t b = 0; b < n; ++b) {
    const T* t = th.data() + b * 6;
    for (std::int64_t i = 0; i < out_h; ++i) {
      const T yn = normalized_centre<T>(i, out_h);
      for (std::int64_t j = 0; j < out_w; ++j) {
        const T xn = normalized_centre<T>(j, out_w);
        const auto o = static_cast<std::size_t>(((b * out_h + i) * out_w + j) * 2);
        g[o] = t[0] * xn + t[1] * yn + t[2];
        g[o + 1] = t[3] * xn + t[4] * yn + t[5];
      }
    }
  }
  check_finite<T>(grid.data(), "affine_grid");
  if (track) {
    tape->record([m, grid, n, out_h, out_w]() mutable {
      if (!grid.has_grad()) return;
      auto dg = grid.grad();
      auto dt = m.grad_buffer();
      for (std::int64_t b = 0; b < n; ++b) {
        T* d = dt.data() + b * 6;
        for (std::int64_t i = 0; i < out_h; ++i) {
          const T yn = normalized_centre<T>(i, out_h);
          for (std::int64_t j = 0; j < out_w; ++j) {
            const T xn = normalized_centre<T>(j, out_w);
            const auto o = static_cast<std::size_t>(((b * out_h + i) * out_w + j) * 2);
            const T gx = dg[o], gy = dg[o + 1];
            d[0] += gx * xn;
            d[1] += gx * yn;
            d[2] += gx;
            d[3] += gy * xn;
            d[4] += gy * yn;
            d[5] += gy;
          }
        }
      }
    });
  }
  return {grid};
}

template <typename T>
Tensor<T> grid_sample(const Tensor<T>& features, const SamplingGrid<T>& grid, Tape<T>* tape) {
  if (features.rank() != 4) throw DimensionError("grid_sample: features must be [N,C,H,W]");
  const auto& gc = grid.coords;
  if (gc.rank() != 4 || gc.dim(3) != 2) throw DimensionError("grid_sample: grid must be [N,H,W,2]");
  if (gc.dim(0) != features.dim(0)) {
    throw DimensionError("grid_sample: grid batch " + std::to_string(gc.dim(0)) + " vs features batch " +
                         std::to_string(features.dim(0)));
  }
  const auto n = features.dim(0), c = features.dim(1), h = features.dim(2), w = features.dim(3);
  const auto ho = gc.dim(1), wo = gc.dim(2);
  const bool track = needs_grad(tape, {&features, &gc});
  Tensor<T> out({n, c, ho, wo});
  if (track) out.set_requires_grad(true);

  const T* x = features.data().data();
  const T* g = gc.data().data();
  T* y = out.data().data();
  for (std::int64_t b = 0; b < n; ++b) {
    for (std::int64_t p = 0; p < ho * wo; ++p) {
      const T ix = unnormalize(g[(b * ho * wo + p) * 2], w);
      const T iy = unnormalize(g[(b * ho * wo + p) * 2 + 1], h);
      const auto x0 = static_cast<std::int64_t>(std::floor(ix));
      const auto y0 = static_cast<std::int64_t>(std::floor(iy));
      const T lx = ix - static_cast<T>(x0), ly = iy - static_cast<T>(y0);
      const bool in_x0 = x0 >= 0 && x0 < w, in_x1 = x0 + 1 >= 0 && x0 + 1 < w;
      const bool in_y0 = y0 >= 0 && y0 < h, in_y1 = y0 + 1 >= 0 && y0 + 1 < h;
      for (std::int64_t ch = 0; ch < c; ++ch) {
        const T* plane = x + (b * c + ch) * h * w;
        T acc = T(0);
        if (in_y0 && in_x0) acc += (T(1) - ly) * (T(1) - lx) * plane[y0 * w + x0];
        if (in_y0 && in_x1) acc += (T(1) - ly) * lx * plane[y0 * w + x0 + 1];
        if (in_y1 && in_x0) acc += ly * (T(1) - lx) * plane[(y0 + 1) * w + x0];
        if (in_y1 && in_x1) acc += ly * lx * plane[(y0 + 1) * w + x0 + 1];
        y[(b * c + ch) * ho * wo + p] = acc;
      }
    }
  }

  if (track) {
    tape->record([features, gc, out, n, c, h, w, ho, wo]() mutable {
      if (!out.has_grad()) return;
      const T* dy = out.grad().data();
      const T* x = features.data().data();
      const T* g = gc.data().data();
      T* dx = features.requires_grad() ? features.grad_buffer().data() : nullptr;
      T* dg = gc.requires_grad() ? gc.grad_buffer().data() : nullptr;
      for (std::int64_t b = 0; b < n; ++b) {
        for (std::int64_t p = 0; p < ho * wo; ++p) {
          const T ix = unnormalize(g[(b * ho * wo + p) * 2], w);
          const T iy = unnormalize(g[(b * ho * wo + p) * 2 + 1], h);
          const auto x0 = static_cast<std::int64_t>(std::floor(ix));
          const auto y0 = static_cast<std::int64_t>(std::floor(iy));
          const T lx = ix - static_cast<T>(x0), ly = iy - static_cast<T>(y0);
          const bool in_x0 = x0 >= 0 && x0 < w, in_x1 = x0 + 1 >= 0 && x0 + 1 < w;
          const bool in_y0 = y0 >= 0 && y0 < h, in_y1 = y0 + 1 >= 0 && y0 + 1 < h;
          T d_ix = T(0), d_iy = T(0);
          for (std::int64_t ch = 0; ch < c; ++ch) {
            const auto base = (b * c + ch) * h * w;
            const T go = dy[(b * c + ch) * ho * wo + p];
            const T v00 = (in_y0 && in_x0) ? x[base + y0 * w + x0] : T(0);
            const T v01 = (in_y0 && in_x1) ? x[base + y0 * w + x0 + 1] : T(0);
            const T v10 = (in_y1 && in_x0) ? x[base + (y0 + 1) * w + x0] : T(0);
            const T v11 = (in_y1 && in_x1) ? x[base + (y0 + 1) * w + x0 + 1] : T(0);
            d_ix += go * ((T(1) - ly) * (v01 - v00) + ly * (v11 - v10));
            d_iy += go * ((T(1) - lx) * (v10 - v00) + lx * (v11 - v01));
            if (dx) {
              if (in_y0 && in_x0) dx[base + y0 * w + x0] += (T(1) - ly) * (T(1) - lx) * go;
              if (in_y0 && in_x1) dx[base + y0 * w + x0 + 1] += (T(1) - ly) * lx * go;
              if (in_y1 && in_x0) dx[base + (y0 + 1) * w + x0] += ly * (T(1) - lx) * go;
              if (in_y1 && in_x1) dx[base + (y0 + 1) * w + x0 + 1] += ly * lx * go;
            }
          }
          if (dg) {
            dg[(b * ho * wo + p) * 2] += d_ix * static_cast<T>(w) / T(2);
            dg[(b * ho * wo + p) * 2 + 1] += d_iy * static_cast<T>(h) / T(2);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> warp(const Tensor<T>& features, const AffineTheta<T>& theta, Tape<T>* tape) {
  if (features.rank() != 4) throw DimensionError("warp: features must be [N,C,H,W]");
  return grid_sample(features, affine_grid(theta, features.dim(2), features.dim(3), tape), tape);
}

template <typename T>
Tensor<T> ate_apply(const Tensor<T>& features, AteParams<T>& params, Tape<T>* tape) {
  return warp(features, localize(features, params, tape), tape);
}

#define SFSEG_INSTANTIATE_AFFINE(T)                                                                  \
  template struct AffineTheta<T>;                                                                    \
  template struct AteParams<T>;                                                                      \
  template AffineTheta<T> localize<T>(const Tensor<T>&, AteParams<T>&, Tape<T>*);                    \
  template SamplingGrid<T> affine_grid<T>(const AffineTheta<T>&, std::int64_t, std::int64_t, Tape<T>*); \
  template Tensor<T> grid_sample<T>(const Tensor<T>&, const SamplingGrid<T>&, Tape<T>*);             \
  template Tensor<T> warp<T>(const Tensor<T>&, const AffineTheta<T>&, Tape<T>*);                     \
  template Tensor<T> ate_apply<T>(const Tensor<T>&, AteParams<T>&, Tape<T>*);

SFSEG_INSTANTIATE_AFFINE(float)
SFSEG_INSTANTIATE_AFFINE(double)

}  // namespace sfseg
