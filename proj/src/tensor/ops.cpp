#include "sfseg/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "sfseg/parallel.hpp"

namespace sfseg {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;

template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

void require_rank(const Shape& s, std::size_t rank, const char* op, const char* what) {
  if (s.size() != rank) {
    throw DimensionError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                         shape_str(s));
  }
}

template <typename T>
Tensor<T> make_output(Shape shape, bool track) {
  Tensor<T> out(std::move(shape));
  if (track) out.set_requires_grad(true);
  return out;
}

struct ConvGeometry {
  std::int64_t n, cin, h, w, cout, kh, kw, hout, wout;
  int stride, padding;

  std::int64_t patch() const { return cin * kh * kw; }
  std::int64_t positions() const { return hout * wout; }
  bool pointwise() const { return kh == 1 && kw == 1 && stride == 1 && padding == 0; }
};

template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  for (std::int64_t c = 0; c < g.cin; ++c) {
    const T* plane = x + c * g.h * g.w;
    for (std::int64_t ki = 0; ki < g.kh; ++ki) {
      for (std::int64_t kj = 0; kj < g.kw; ++kj) {
        T* row = col + ((c * g.kh + ki) * g.kw + kj) * g.positions();
        for (std::int64_t oh = 0; oh < g.hout; ++oh) {
          const auto ih = oh * g.stride - g.padding + ki;
          T* dst = row + oh * g.wout;
          if (ih < 0 || ih >= g.h) {
            std::fill(dst, dst + g.wout, T(0));
            continue;
          }
          const T* src = plane + ih * g.w;
          for (std::int64_t ow = 0; ow < g.wout; ++ow) {
            const auto iw = ow * g.stride - g.padding + kj;
            dst[ow] = (iw >= 0 && iw < g.w) ? src[iw] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* dx) {
  for (std::int64_t c = 0; c < g.cin; ++c) {
    T* plane = dx + c * g.h * g.w;
    for (std::int64_t ki = 0; ki < g.kh; ++ki) {
      for (std::int64_t kj = 0; kj < g.kw; ++kj) {
        const T* row = col + ((c * g.kh + ki) * g.kw + kj) * g.positions();
        for (std::int64_t oh = 0; oh < g.hout; ++oh) {
          const auto ih = oh * g.stride - g.padding + ki;
          if (ih < 0 || ih >= g.h) continue;
          const T* src = row + oh * g.wout;
          T* dst = plane + ih * g.w;
          for (std::int64_t ow = 0; ow < g.wout; ++ow) {
            const auto iw = ow * g.stride - g.padding + kj;
            if (iw >= 0 && iw < g.w) dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

}  // namespace

std::int64_t conv_out_size(std::int64_t in, std::int64_t kernel, int stride, int padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

int maxpool_padding(int kernel) { return kernel % 2 == 1 ? kernel / 2 : 0; }

// ---------------------------------------------------------------------------
// conv2d

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias, Conv2dSpec spec,
                 Tape<T>* tape) {
  require_rank(input.shape(), 4, "conv2d", "input");
  require_rank(kernel.shape(), 4, "conv2d", "kernel");
  if (spec.stride < 1) throw ParameterError("conv2d: stride must be >= 1");
  if (spec.padding < 0) throw ParameterError("conv2d: padding must be >= 0");
  if (input.dim(1) != kernel.dim(1)) {
    throw DimensionError("conv2d: input has " + std::to_string(input.dim(1)) + " channels, kernel expects " +
                         std::to_string(kernel.dim(1)));
  }
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), input.dim(3), kernel.dim(0), kernel.dim(2),
                 kernel.dim(3), 0, 0, spec.stride, spec.padding};
  if (g.h + 2 * g.padding < g.kh || g.w + 2 * g.padding < g.kw) {
    throw DimensionError("conv2d: kernel " + shape_str(kernel.shape()) + " larger than padded input " +
                         shape_str(input.shape()));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.cout)) {
    throw DimensionError("conv2d: bias shape " + shape_str(bias.shape()) + " does not match " +
                         std::to_string(g.cout) + " output channels");
  }
  g.hout = conv_out_size(g.h, g.kh, g.stride, g.padding);
  g.wout = conv_out_size(g.w, g.kw, g.stride, g.padding);

  const bool track = needs_grad(tape, {&input, &kernel, &bias});
  auto out = make_output<T>({g.n, g.cout, g.hout, g.wout}, track);

  const T* x = input.data().data();
  const T* k = kernel.data().data();
  T* y = out.data().data();
  const T* b = bias.defined() ? bias.data().data() : nullptr;

  parallel_for(g.n, [&](std::int64_t n) {
    const T* xn = x + n * g.cin * g.h * g.w;
    std::vector<T> col_buf;
    const T* col = xn;
    if (!g.pointwise()) {
      col_buf.resize(static_cast<std::size_t>(g.patch() * g.positions()));
      im2col(xn, g, col_buf.data());
      col = col_buf.data();
    }
    MapMat<T> yn(y + n * g.cout * g.positions(), g.cout, g.positions());
    yn.noalias() = ConstMapMat<T>(k, g.cout, g.patch()) * ConstMapMat<T>(col, g.patch(), g.positions());
    if (b != nullptr) {
      for (std::int64_t co = 0; co < g.cout; ++co) yn.row(co).array() += b[co];
    }
  });
  check_finite<T>(out.data(), "conv2d output");

  if (track) {
    tape->record([input, kernel, bias, out, g]() mutable {
      if (!out.has_grad()) return;
      const T* dy = out.grad().data();
      const T* x = input.data().data();
      const T* k = kernel.data().data();
      const bool want_dx = input.requires_grad();
      const bool want_dk = kernel.requires_grad();
      const auto item = g.patch() * g.positions();

      T* dx = want_dx ? input.grad_buffer().data() : nullptr;
      std::vector<T> dk_items;
      if (want_dk) dk_items.assign(static_cast<std::size_t>(g.n * g.cout * g.patch()), T(0));

      parallel_for(g.n, [&](std::int64_t n) {
        ConstMapMat<T> dyn(dy + n * g.cout * g.positions(), g.cout, g.positions());
        if (want_dk) {
          const T* xn = x + n * g.cin * g.h * g.w;
          std::vector<T> col_buf;
          const T* col = xn;
          if (!g.pointwise()) {
            col_buf.resize(static_cast<std::size_t>(item));
            im2col(xn, g, col_buf.data());
            col = col_buf.data();
          }
          MapMat<T> dkn(dk_items.data() + n * g.cout * g.patch(), g.cout, g.patch());
          dkn.noalias() = dyn * ConstMapMat<T>(col, g.patch(), g.positions()).transpose();
        }
        if (want_dx) {
          T* dxn = dx + n * g.cin * g.h * g.w;
          if (g.pointwise()) {
            MapMat<T>(dxn, g.patch(), g.positions()).noalias() +=
                ConstMapMat<T>(k, g.cout, g.patch()).transpose() * dyn;
          } else {
            std::vector<T> dcol(static_cast<std::size_t>(item));
            MapMat<T>(dcol.data(), g.patch(), g.positions()).noalias() =
                ConstMapMat<T>(k, g.cout, g.patch()).transpose() * dyn;
            col2im_add(dcol.data(), g, dxn);
          }
        }
      });

      if (want_dk) {
        auto dk = kernel.grad_buffer();
        const auto per_item = g.cout * g.patch();
        for (std::int64_t n = 0; n < g.n; ++n) {
          const T* part = dk_items.data() + n * per_item;
          for (std::int64_t i = 0; i < per_item; ++i) dk[static_cast<std::size_t>(i)] += part[i];
        }
      }
      if (bias.defined() && bias.requires_grad()) {
        auto db = bias.grad_buffer();
        for (std::int64_t n = 0; n < g.n; ++n) {
          for (std::int64_t co = 0; co < g.cout; ++co) {
            const T* row = dy + (n * g.cout + co) * g.positions();
            T acc = T(0);
            for (std::int64_t p = 0; p < g.positions(); ++p) acc += row[p];
            db[static_cast<std::size_t>(co)] += acc;
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// maxpool2d

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& input, int kernel, int stride, Tape<T>* tape) {
  require_rank(input.shape(), 4, "maxpool2d", "input");
  if (kernel <= 0 || stride <= 0) throw ParameterError("maxpool2d: kernel and stride must be positive");
  const int pad = maxpool_padding(kernel);
  const auto n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (kernel > h + 2 * pad || kernel > w + 2 * pad) {
    throw DimensionError("maxpool2d: window " + std::to_string(kernel) + " larger than padded input " +
                         shape_str(input.shape()));
  }
  const auto hout = conv_out_size(h, kernel, stride, pad);
  const auto wout = conv_out_size(w, kernel, stride, pad);
  const bool track = needs_grad(tape, {&input});
  auto out = make_output<T>({n, c, hout, wout}, track);

  auto argmax = std::make_shared<std::vector<std::int32_t>>(out.numel());
  const T* x = input.data().data();
  T* y = out.data().data();
  for (std::int64_t plane = 0; plane < n * c; ++plane) {
    const T* xp = x + plane * h * w;
    for (std::int64_t oh = 0; oh < hout; ++oh) {
      for (std::int64_t ow = 0; ow < wout; ++ow) {
        T best = -std::numeric_limits<T>::infinity();
        std::int32_t best_idx = -1;
        for (int ki = 0; ki < kernel; ++ki) {
          const auto ih = oh * stride - pad + ki;
          if (ih < 0 || ih >= h) continue;
          for (int kj = 0; kj < kernel; ++kj) {
            const auto iw = ow * stride - pad + kj;
            if (iw < 0 || iw >= w) continue;
            const T v = xp[ih * w + iw];
            // strict > keeps the first (lowest flat index) maximum
            if (best_idx < 0 || v > best) {
              best = v;
              best_idx = static_cast<std::int32_t>(ih * w + iw);
            }
          }
        }
        const auto o = (plane * hout + oh) * wout + ow;
        y[o] = best;
        (*argmax)[static_cast<std::size_t>(o)] = best_idx;
      }
    }
  }

  if (track) {
    tape->record([input, out, argmax, h, w, hout, wout]() mutable {
      if (!out.has_grad()) return;
      auto dx = input.grad_buffer();
      auto dy = out.grad();
      const auto planes = static_cast<std::int64_t>(dy.size()) / (hout * wout);
      for (std::int64_t plane = 0; plane < planes; ++plane) {
        for (std::int64_t i = 0; i < hout * wout; ++i) {
          const auto o = static_cast<std::size_t>(plane * hout * wout + i);
          dx[static_cast<std::size_t>(plane * h * w + (*argmax)[o])] += dy[o];
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// relu

template <typename T>
Tensor<T> relu(const Tensor<T>& input, Tape<T>* tape) {
  const bool track = needs_grad(tape, {&input});
  auto out = make_output<T>(input.shape(), track);
  auto x = input.data();
  auto y = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
  if (track) {
    tape->record([input, out]() mutable {
      if (!out.has_grad()) return;
      auto x = input.data();
      auto dy = out.grad();
      auto dx = input.grad_buffer();
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] > T(0)) dx[i] += dy[i];
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// batchnorm2d

template <typename T>
BatchNormState<T> BatchNormState<T>::standard(std::int64_t channels) {
  BatchNormState s;
  s.running_mean.assign(static_cast<std::size_t>(channels), T(0));
  s.running_var.assign(static_cast<std::size_t>(channels), T(1));
  s.initialized = true;
  return s;
}

template <typename T>
BatchNormState<T> BatchNormState<T>::uninitialized(std::int64_t channels) {
  BatchNormState s;
  s.running_mean.assign(static_cast<std::size_t>(channels), T(0));
  s.running_var.assign(static_cast<std::size_t>(channels), T(1));
  s.initialized = false;
  return s;
}

template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                      BatchNormState<T>& state, Mode mode, T eps, Tape<T>* tape, T momentum) {
  require_rank(input.shape(), 4, "batchnorm2d", "input");
  const auto n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  if (gamma.numel() != static_cast<std::size_t>(c) || beta.numel() != static_cast<std::size_t>(c) ||
      state.running_mean.size() != static_cast<std::size_t>(c) ||
      state.running_var.size() != static_cast<std::size_t>(c)) {
    throw DimensionError("batchnorm2d: parameter size does not match " + std::to_string(c) + " channels");
  }
  const auto count = n * hw;
  if (mode == Mode::Train && count < 2) {
    throw DimensionError("batchnorm2d: train mode needs at least 2 values per channel, got " +
                         std::to_string(count));
  }
  if (mode == Mode::Eval && !state.initialized) {
    throw StateError("batchnorm2d: eval mode before running statistics were initialized");
  }

  const bool track = needs_grad(tape, {&input, &gamma, &beta});
  auto out = make_output<T>(input.shape(), track);
  const T* x = input.data().data();
  T* y = out.data().data();
  auto g = gamma.data();
  auto b = beta.data();

  auto xhat = std::make_shared<std::vector<T>>(track ? input.numel() : 0);
  auto inv_std = std::make_shared<std::vector<T>>(static_cast<std::size_t>(c));

  for (std::int64_t ch = 0; ch < c; ++ch) {
    T mean, var;
    if (mode == Mode::Train) {
      T acc = T(0);
      for (std::int64_t i = 0; i < n; ++i) {
        const T* p = x + (i * c + ch) * hw;
        for (std::int64_t j = 0; j < hw; ++j) acc += p[j];
      }
      mean = acc / static_cast<T>(count);
      T sq = T(0);
      for (std::int64_t i = 0; i < n; ++i) {
        const T* p = x + (i * c + ch) * hw;
        for (std::int64_t j = 0; j < hw; ++j) {
          const T d = p[j] - mean;
          sq += d * d;
        }
      }
      var = sq / static_cast<T>(count);
      const auto k = static_cast<std::size_t>(ch);
      const T unbiased = sq / static_cast<T>(count - 1);
      state.running_mean[k] = (T(1) - momentum) * state.running_mean[k] + momentum * mean;
      state.running_var[k] = (T(1) - momentum) * state.running_var[k] + momentum * unbiased;
    } else {
      mean = state.running_mean[static_cast<std::size_t>(ch)];
      var = state.running_var[static_cast<std::size_t>(ch)];
    }
    const T istd = T(1) / std::sqrt(var + eps);
    (*inv_std)[static_cast<std::size_t>(ch)] = istd;
    const T gc = g[static_cast<std::size_t>(ch)], bc = b[static_cast<std::size_t>(ch)];
    for (std::int64_t i = 0; i < n; ++i) {
      const auto base = (i * c + ch) * hw;
      for (std::int64_t j = 0; j < hw; ++j) {
        const T xh = (x[base + j] - mean) * istd;
        if (track) (*xhat)[static_cast<std::size_t>(base + j)] = xh;
        y[base + j] = gc * xh + bc;
      }
    }
  }
  if (mode == Mode::Train) state.initialized = true;
  check_finite<T>(out.data(), "batchnorm2d output");

  if (track) {
    tape->record([input, gamma, beta, out, xhat, inv_std, mode, n, c, hw]() mutable {
      if (!out.has_grad()) return;
      const T* dy = out.grad().data();
      const auto count = static_cast<T>(n * hw);
      auto gv = gamma.data();
      T* dx = input.requires_grad() ? input.grad_buffer().data() : nullptr;
      T* dg = gamma.requires_grad() ? gamma.grad_buffer().data() : nullptr;
      T* db = beta.requires_grad() ? beta.grad_buffer().data() : nullptr;
      for (std::int64_t ch = 0; ch < c; ++ch) {
        T sum_dy = T(0), sum_dy_xhat = T(0);
        for (std::int64_t i = 0; i < n; ++i) {
          const auto base = (i * c + ch) * hw;
          for (std::int64_t j = 0; j < hw; ++j) {
            sum_dy += dy[base + j];
            sum_dy_xhat += dy[base + j] * (*xhat)[static_cast<std::size_t>(base + j)];
          }
        }
        if (dg) dg[ch] += sum_dy_xhat;
        if (db) db[ch] += sum_dy;
        if (!dx) continue;
        const T scale_c = gv[static_cast<std::size_t>(ch)] * (*inv_std)[static_cast<std::size_t>(ch)];
        for (std::int64_t i = 0; i < n; ++i) {
          const auto base = (i * c + ch) * hw;
          for (std::int64_t j = 0; j < hw; ++j) {
            if (mode == Mode::Train) {
              const T xh = (*xhat)[static_cast<std::size_t>(base + j)];
              dx[base + j] += scale_c * (dy[base + j] - sum_dy / count - xh * sum_dy_xhat / count);
            } else {
              dx[base + j] += scale_c * dy[base + j];
            }
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// bilinear_upsample

namespace {

struct AxisTaps {
  std::vector<std::int64_t> lo, hi;
  std::vector<double> frac;
};

AxisTaps upsample_taps(std::int64_t in, int factor) {
  const auto out = in * factor;
  AxisTaps t;
  t.lo.resize(static_cast<std::size_t>(out));
  t.hi.resize(static_cast<std::size_t>(out));
  t.frac.resize(static_cast<std::size_t>(out));
  for (std::int64_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) / factor - 0.5;
    if (src < 0) src = 0;
    auto lo = static_cast<std::int64_t>(std::floor(src));
    if (lo > in - 1) lo = in - 1;
    const auto i = static_cast<std::size_t>(o);
    t.lo[i] = lo;
    t.hi[i] = std::min(lo + 1, in - 1);
    t.frac[i] = src - static_cast<double>(lo);
  }
  return t;
}

}  // namespace

template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& input, int factor, Tape<T>* tape) {
  require_rank(input.shape(), 4, "bilinear_upsample", "input");
  if (factor < 1) throw ParameterError("bilinear_upsample: factor must be >= 1");
  const auto n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const auto ho = h * factor, wo = w * factor;
  const bool track = needs_grad(tape, {&input});
  auto out = make_output<T>({n, c, ho, wo}, track);
  const auto ty = upsample_taps(h, factor);
  const auto tx = upsample_taps(w, factor);

  const T* x = input.data().data();
  T* y = out.data().data();
  for (std::int64_t plane = 0; plane < n * c; ++plane) {
    const T* xp = x + plane * h * w;
    T* yp = y + plane * ho * wo;
    for (std::int64_t oy = 0; oy < ho; ++oy) {
      const auto iy = static_cast<std::size_t>(oy);
      const T ly = static_cast<T>(ty.frac[iy]);
      const T* r0 = xp + ty.lo[iy] * w;
      const T* r1 = xp + ty.hi[iy] * w;
      for (std::int64_t ox = 0; ox < wo; ++ox) {
        const auto ix = static_cast<std::size_t>(ox);
        const T lx = static_cast<T>(tx.frac[ix]);
        const auto x0 = tx.lo[ix], x1 = tx.hi[ix];
        yp[oy * wo + ox] = (T(1) - ly) * ((T(1) - lx) * r0[x0] + lx * r0[x1]) +
                           ly * ((T(1) - lx) * r1[x0] + lx * r1[x1]);
      }
    }
  }

  if (track) {
    tape->record([input, out, ty, tx, h, w, ho, wo]() mutable {
      if (!out.has_grad()) return;
      const T* dy = out.grad().data();
      T* dx = input.grad_buffer().data();
      const auto planes = static_cast<std::int64_t>(out.numel()) / (ho * wo);
      for (std::int64_t plane = 0; plane < planes; ++plane) {
        const T* dyp = dy + plane * ho * wo;
        T* dxp = dx + plane * h * w;
        for (std::int64_t oy = 0; oy < ho; ++oy) {
          const auto iy = static_cast<std::size_t>(oy);
          const T ly = static_cast<T>(ty.frac[iy]);
          T* r0 = dxp + ty.lo[iy] * w;
          T* r1 = dxp + ty.hi[iy] * w;
          for (std::int64_t ox = 0; ox < wo; ++ox) {
            const auto ix = static_cast<std::size_t>(ox);
            const T lx = static_cast<T>(tx.frac[ix]);
            const T g = dyp[oy * wo + ox];
            r0[tx.lo[ix]] += (T(1) - ly) * (T(1) - lx) * g;
            r0[tx.hi[ix]] += (T(1) - ly) * lx * g;
            r1[tx.lo[ix]] += ly * (T(1) - lx) * g;
            r1[tx.hi[ix]] += ly * lx * g;
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// small elementwise / reduction ops

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b, Tape<T>* tape) {
  if (a.shape() != b.shape()) {
    throw DimensionError("add: shape " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const bool track = needs_grad(tape, {&a, &b});
  auto out = make_output<T>(a.shape(), track);
  auto x = a.data(), y = b.data();
  auto z = out.data();
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = x[i] + y[i];
  if (track) {
    tape->record([a, b, out]() mutable {
      if (!out.has_grad()) return;
      auto dz = out.grad();
      for (auto* t : {&a, &b}) {
        if (!t->requires_grad()) continue;
        auto d = t->grad_buffer();
        for (std::size_t i = 0; i < dz.size(); ++i) d[i] += dz[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor, Tape<T>* tape) {
  const bool track = needs_grad(tape, {&a});
  auto out = make_output<T>(a.shape(), track);
  auto x = a.data();
  auto y = out.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = factor * x[i];
  if (track) {
    tape->record([a, out, factor]() mutable {
      if (!out.has_grad()) return;
      auto dy = out.grad();
      auto dx = a.grad_buffer();
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += factor * dy[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape, Tape<T>* tape) {
  if (shape_numel(shape) != static_cast<std::int64_t>(a.numel())) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  const bool track = needs_grad(tape, {&a});
  auto out = make_output<T>(std::move(shape), track);
  std::copy(a.data().begin(), a.data().end(), out.data().begin());
  if (track) {
    tape->record([a, out]() mutable {
      if (!out.has_grad()) return;
      auto dy = out.grad();
      auto dx = a.grad_buffer();
      for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a, Tape<T>* tape) {
  const bool track = needs_grad(tape, {&a});
  auto out = make_output<T>({1}, track);
  T acc = T(0);
  for (T v : a.data()) acc += v;
  out.data()[0] = acc;
  if (track) {
    tape->record([a, out]() mutable {
      if (!out.has_grad()) return;
      const T g = out.grad()[0];
      for (auto& d : a.grad_buffer()) d += g;
    });
  }
  return out;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input, Tape<T>* tape) {
  require_rank(input.shape(), 4, "global_avg_pool", "input");
  const auto n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  const bool track = needs_grad(tape, {&input});
  auto out = make_output<T>({n, c}, track);
  const T* x = input.data().data();
  auto y = out.data();
  for (std::int64_t p = 0; p < n * c; ++p) {
    T acc = T(0);
    for (std::int64_t j = 0; j < hw; ++j) acc += x[p * hw + j];
    y[static_cast<std::size_t>(p)] = acc / static_cast<T>(hw);
  }
  if (track) {
    tape->record([input, out, hw]() mutable {
      if (!out.has_grad()) return;
      auto dy = out.grad();
      T* dx = input.grad_buffer().data();
      for (std::size_t p = 0; p < dy.size(); ++p) {
        const T g = dy[p] / static_cast<T>(hw);
        for (std::int64_t j = 0; j < hw; ++j) dx[static_cast<std::int64_t>(p) * hw + j] += g;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias, Tape<T>* tape) {
  require_rank(input.shape(), 2, "linear", "input");
  require_rank(weight.shape(), 2, "linear", "weight");
  const auto n = input.dim(0), k = input.dim(1), m = weight.dim(0);
  if (weight.dim(1) != k) {
    throw DimensionError("linear: input width " + std::to_string(k) + " vs weight " + shape_str(weight.shape()));
  }
  if (!bias.defined() || bias.numel() != static_cast<std::size_t>(m)) {
    throw DimensionError("linear: bias must have " + std::to_string(m) + " entries");
  }
  const bool track = needs_grad(tape, {&input, &weight, &bias});
  auto out = make_output<T>({n, m}, track);
  auto x = input.data();
  auto wv = weight.data();
  auto bv = bias.data();
  auto y = out.data();
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t o = 0; o < m; ++o) {
      T acc = bv[static_cast<std::size_t>(o)];
      for (std::int64_t j = 0; j < k; ++j) {
        acc += wv[static_cast<std::size_t>(o * k + j)] * x[static_cast<std::size_t>(i * k + j)];
      }
      y[static_cast<std::size_t>(i * m + o)] = acc;
    }
  }
  if (track) {
    tape->record([input, weight, bias, out, n, k, m]() mutable {
      if (!out.has_grad()) return;
      auto dy = out.grad();
      auto x = input.data();
      auto wv = weight.data();
      for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t o = 0; o < m; ++o) {
          const T g = dy[static_cast<std::size_t>(i * m + o)];
          if (bias.requires_grad()) bias.grad_buffer()[static_cast<std::size_t>(o)] += g;
          if (weight.requires_grad()) {
            auto dw = weight.grad_buffer();
            for (std::int64_t j = 0; j < k; ++j) {
              dw[static_cast<std::size_t>(o * k + j)] += g * x[static_cast<std::size_t>(i * k + j)];
            }
          }
          if (input.requires_grad()) {
            auto dx = input.grad_buffer();
            for (std::int64_t j = 0; j < k; ++j) {
              dx[static_cast<std::size_t>(i * k + j)] += g * wv[static_cast<std::size_t>(o * k + j)];
            }
          }
        }
      }
    });
  }
  return out;
}

#define SFSEG_INSTANTIATE_OPS(T)                                                                           \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Conv2dSpec, Tape<T>*); \
  template Tensor<T> maxpool2d<T>(const Tensor<T>&, int, int, Tape<T>*);                                   \
  template Tensor<T> relu<T>(const Tensor<T>&, Tape<T>*);                                                   \
  template struct BatchNormState<T>;                                                                        \
  template Tensor<T> batchnorm2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, BatchNormState<T>&, \
                                    Mode, T, Tape<T>*, T);                                                  \
  template Tensor<T> bilinear_upsample<T>(const Tensor<T>&, int, Tape<T>*);                                 \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&, Tape<T>*);                                  \
  template Tensor<T> scale<T>(const Tensor<T>&, T, Tape<T>*);                                               \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape, Tape<T>*);                                         \
  template Tensor<T> sum<T>(const Tensor<T>&, Tape<T>*);                                                    \
  template Tensor<T> global_avg_pool<T>(const Tensor<T>&, Tape<T>*);                                        \
  template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, Tape<T>*);

SFSEG_INSTANTIATE_OPS(float)
SFSEG_INSTANTIATE_OPS(double)

}  // namespace sfseg
