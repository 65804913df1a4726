#include "rarunet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

namespace rarunet::ops {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
using ImplPtr = std::shared_ptr<TensorImpl<T>>;

template <typename T>
void require_nchw(const Tensor<T>& t, const char* op, const char* what) {
  RARUNET_CHECK(static_cast<bool>(t), ErrorCode::kInvalidArgument,
          std::string(op) + ": " + what + " is empty");
  RARUNET_CHECK(t.rank() == 4, ErrorCode::kShapeMismatch,
          std::string(op) + ": " + what + " must be NCHW, got " + shape_string(t.shape()));
}

template <typename T>
Tensor<T> make_output(const Shape& shape, bool tracked) {
  return Tensor<T>::zeros(shape, tracked);
}

/// Accumulates into an operand's gradient when it participates in autodiff.
template <typename T>
T* grad_target(const ImplPtr<T>& impl) {
  if (!impl || !impl->requires_grad) return nullptr;
  if (impl->grad.empty()) impl->grad.assign(impl->data.size(), T(0));
  return impl->grad.data();
}

struct ConvGeometry {
  int n, ic, h, w, oc, kh, kw, stride, pad, oh, ow;
  int k() const { return ic * kh * kw; }
  int p() const { return oh * ow; }
  bool direct() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* col) {
  for (int c = 0; c < g.ic; ++c) {
    for (int ky = 0; ky < g.kh; ++ky) {
      for (int kx = 0; kx < g.kw; ++kx) {
        T* row = col + static_cast<std::size_t>((c * g.kh + ky) * g.kw + kx) * g.p();
        const T* plane = x + static_cast<std::size_t>(c) * g.h * g.w;
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          T* dst = row + static_cast<std::size_t>(oy) * g.ow;
          if (iy < 0 || iy >= g.h) {
            std::fill(dst, dst + g.ow, T(0));
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            dst[ox] = (ix >= 0 && ix < g.w) ? src[ix] : T(0);
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* col, const ConvGeometry& g, T* dx) {
  for (int c = 0; c < g.ic; ++c) {
    for (int ky = 0; ky < g.kh; ++ky) {
      for (int kx = 0; kx < g.kw; ++kx) {
        const T* row = col + static_cast<std::size_t>((c * g.kh + ky) * g.kw + kx) * g.p();
        T* plane = dx + static_cast<std::size_t>(c) * g.h * g.w;
        for (int oy = 0; oy < g.oh; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.h) continue;
          const T* src = row + static_cast<std::size_t>(oy) * g.ow;
          T* dst = plane + static_cast<std::size_t>(iy) * g.w;
          for (int ox = 0; ox < g.ow; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

enum class Broadcast { kSame, kSpatialMap, kChannelVector };

template <typename T>
Broadcast classify(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  require_nchw(a, op, "lhs");
  require_nchw(b, op, "rhs");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa == sb) return Broadcast::kSame;
  RARUNET_CHECK(sa[0] == sb[0], ErrorCode::kShapeMismatch,
          std::string(op) + ": batch mismatch " + shape_string(sa) + " vs " + shape_string(sb));
  if (sb[1] == 1 && sb[2] == sa[2] && sb[3] == sa[3]) return Broadcast::kSpatialMap;
  if (sb[2] == 1 && sb[3] == 1 && sb[1] == sa[1]) return Broadcast::kChannelVector;
  fail(ErrorCode::kShapeMismatch, std::string(op) + ": cannot broadcast " + shape_string(sb) +
                                      " onto " + shape_string(sa));
}

/// Index into the broadcast operand for element (n, c, s) of the full shape.
inline std::size_t broadcast_index(Broadcast mode, std::size_t n, std::size_t c, std::size_t s,
                                   std::size_t channels, std::size_t spatial) {
  switch (mode) {
    case Broadcast::kSame: return (n * channels + c) * spatial + s;
    case Broadcast::kSpatialMap: return n * spatial + s;
    case Broadcast::kChannelVector: return n * channels + c;
  }
  return 0;
}

template <typename T>
T stable_sigmoid(T x) {
  T y;
  if (x >= T(0)) {
    y = T(1) / (T(1) + std::exp(-x));
  } else {
    const T e = std::exp(x);
    y = e / (T(1) + e);
  }
  // Keep the open interval even where the exponential saturates.
  constexpr T lo = std::numeric_limits<T>::min();
  constexpr T hi = T(1) - std::numeric_limits<T>::epsilon() / T(2);
  return std::clamp(y, lo, hi);
}

}  // namespace

template <typename T>
Tensor<T> conv2d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& weight,
                 const Tensor<T>& bias, int stride, int padding) {
  require_nchw(input, "conv2d", "input");
  require_nchw(weight, "conv2d", "weight");
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  RARUNET_CHECK(ws[1] == xs[1], ErrorCode::kShapeMismatch,
          "conv2d: input channel dimension " + std::to_string(xs[1]) +
              " does not match weight input channels " + std::to_string(ws[1]));
  RARUNET_CHECK(ws[2] == ws[3], ErrorCode::kShapeMismatch, "conv2d: kernel must be square");
  RARUNET_CHECK(stride >= 1 && padding >= 0, ErrorCode::kInvalidArgument,
          "conv2d: stride must be >= 1 and padding >= 0");
  if (bias) {
    RARUNET_CHECK(bias.numel() == static_cast<std::size_t>(ws[0]), ErrorCode::kShapeMismatch,
            "conv2d: bias length " + std::to_string(bias.numel()) +
                " does not match output channels " + std::to_string(ws[0]));
  }
  ConvGeometry g{xs[0], xs[1], xs[2], xs[3], ws[0], ws[2], ws[3], stride, padding, 0, 0};
  const int span_h = g.h + 2 * padding - g.kh;
  const int span_w = g.w + 2 * padding - g.kw;
  RARUNET_CHECK(span_h >= 0 && span_w >= 0, ErrorCode::kShapeMismatch,
          "conv2d: kernel larger than padded input " + shape_string(xs));
  g.oh = span_h / stride + 1;
  g.ow = span_w / stride + 1;

  const bool tracked = tape.tracks({&input, &weight, &bias});
  Tensor<T> out = make_output<T>({g.n, g.oc, g.oh, g.ow}, tracked);

  const std::size_t in_stride = static_cast<std::size_t>(g.ic) * g.h * g.w;
  const std::size_t out_stride = static_cast<std::size_t>(g.oc) * g.p();
  ConstMatMap<T> wmat(weight.values().data(), g.oc, g.k());
  Buffer<T> col(g.direct() ? 0 : static_cast<std::size_t>(g.k()) * g.p());
  for (int n = 0; n < g.n; ++n) {
    const T* xn = input.values().data() + n * in_stride;
    if (!g.direct()) im2col(xn, g, col.data());
    ConstMatMap<T> cmat(g.direct() ? xn : col.data(), g.k(), g.p());
    MatMap<T> omat(out.data().data() + n * out_stride, g.oc, g.p());
    omat.noalias() = wmat * cmat;
    if (bias) {
      for (int o = 0; o < g.oc; ++o) omat.row(o).array() += bias.values()[o];
    }
  }

  if (tracked) {
    ImplPtr<T> xi = input.impl(), wi = weight.impl(), bi = bias ? bias.impl() : nullptr,
               oi = out.impl();
    tape.record([xi, wi, bi, oi, g, in_stride, out_stride] {
      if (oi->grad.empty()) return;
      T* dx = grad_target(xi);
      T* dw = grad_target(wi);
      T* db = grad_target(bi);
      ConstMatMap<T> wmat(wi->data.data(), g.oc, g.k());
      Buffer<T> col(g.direct() ? 0 : static_cast<std::size_t>(g.k()) * g.p());
      Buffer<T> dcol(static_cast<std::size_t>(g.k()) * g.p());
      for (int n = 0; n < g.n; ++n) {
        const T* xn = xi->data.data() + n * in_stride;
        ConstMatMap<T> gmat(oi->grad.data() + n * out_stride, g.oc, g.p());
        if (dw) {
          if (!g.direct()) im2col(xn, g, col.data());
          ConstMatMap<T> cmat(g.direct() ? xn : col.data(), g.k(), g.p());
          MatMap<T> dwmat(dw, g.oc, g.k());
          dwmat.noalias() += gmat * cmat.transpose();
        }
        if (db) {
          for (int o = 0; o < g.oc; ++o) db[o] += gmat.row(o).sum();
        }
        if (dx) {
          if (g.direct()) {
            MatMap<T> dxmat(dx + n * in_stride, g.k(), g.p());
            dxmat.noalias() += wmat.transpose() * gmat;
          } else {
            MatMap<T> dcmat(dcol.data(), g.k(), g.p());
            dcmat.noalias() = wmat.transpose() * gmat;
            col2im_add(dcol.data(), g, dx + n * in_stride);
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> conv_transpose2d(Tape<T>& tape, const Tensor<T>& input, const Tensor<T>& weight,
                           const Tensor<T>& bias, int stride) {
  require_nchw(input, "conv_transpose2d", "input");
  require_nchw(weight, "conv_transpose2d", "weight");
  RARUNET_CHECK(stride == 2, ErrorCode::kInvalidArgument, "conv_transpose2d: stride must be 2");
  const Shape& xs = input.shape();
  const Shape& ws = weight.shape();
  RARUNET_CHECK(ws[0] == xs[1], ErrorCode::kShapeMismatch,
          "conv_transpose2d: input channel dimension " + std::to_string(xs[1]) +
              " does not match weight input channels " + std::to_string(ws[0]));
  RARUNET_CHECK(ws[2] == 2 && ws[3] == 2, ErrorCode::kShapeMismatch,
          "conv_transpose2d: kernel must be 2x2, got " + shape_string(ws));
  const int n_batch = xs[0], ic = xs[1], h = xs[2], w = xs[3], oc = ws[1];
  if (bias) {
    RARUNET_CHECK(bias.numel() == static_cast<std::size_t>(oc), ErrorCode::kShapeMismatch,
            "conv_transpose2d: bias length does not match output channels");
  }
  const int p = h * w;
  const int taps = oc * 4;
  const bool tracked = tape.tracks({&input, &weight, &bias});
  Tensor<T> out = make_output<T>({n_batch, oc, 2 * h, 2 * w}, tracked);

  ConstMatMap<T> wmat(weight.values().data(), ic, taps);
  Buffer<T> cols(static_cast<std::size_t>(taps) * p);
  const std::size_t in_stride = static_cast<std::size_t>(ic) * p;
  const std::size_t out_stride = static_cast<std::size_t>(oc) * 4 * p;
  for (int n = 0; n < n_batch; ++n) {
    ConstMatMap<T> xmat(input.values().data() + n * in_stride, ic, p);
    MatMap<T> cmat(cols.data(), taps, p);
    cmat.noalias() = wmat.transpose() * xmat;
    T* on = out.data().data() + n * out_stride;
    for (int o = 0; o < oc; ++o) {
      const T b = bias ? bias.values()[o] : T(0);
      for (int tap = 0; tap < 4; ++tap) {
        const int dy = tap / 2, dx = tap % 2;
        const T* src = cols.data() + static_cast<std::size_t>(o * 4 + tap) * p;
        for (int i = 0; i < h; ++i) {
          for (int j = 0; j < w; ++j) {
            on[(static_cast<std::size_t>(o) * 2 * h + 2 * i + dy) * 2 * w + 2 * j + dx] =
                src[i * w + j] + b;
          }
        }
      }
    }
  }

  if (tracked) {
    ImplPtr<T> xi = input.impl(), wi = weight.impl(), bi = bias ? bias.impl() : nullptr,
               oi = out.impl();
    tape.record([=] {
      if (oi->grad.empty()) return;
      T* gx = grad_target(xi);
      T* gw = grad_target(wi);
      T* gb = grad_target(bi);
      ConstMatMap<T> wmat(wi->data.data(), ic, taps);
      Buffer<T> gcols(static_cast<std::size_t>(taps) * p);
      for (int n = 0; n < n_batch; ++n) {
        const T* gn = oi->grad.data() + n * out_stride;
        for (int o = 0; o < oc; ++o) {
          for (int tap = 0; tap < 4; ++tap) {
            const int dy = tap / 2, dx = tap % 2;
            T* dst = gcols.data() + static_cast<std::size_t>(o * 4 + tap) * p;
            for (int i = 0; i < h; ++i) {
              for (int j = 0; j < w; ++j) {
                dst[i * w + j] = gn[(static_cast<std::size_t>(o) * 2 * h + 2 * i + dy) * 2 * w +
                                    2 * j + dx];
              }
            }
          }
        }
        ConstMatMap<T> gmat(gcols.data(), taps, p);
        if (gx) {
          MatMap<T> gxmat(gx + n * in_stride, ic, p);
          gxmat.noalias() += wmat * gmat;
        }
        if (gw) {
          ConstMatMap<T> xmat(xi->data.data() + n * in_stride, ic, p);
          MatMap<T> gwmat(gw, ic, taps);
          gwmat.noalias() += xmat * gmat.transpose();
        }
        if (gb) {
          for (int o = 0; o < oc; ++o) {
            T s = 0;
            for (int tap = 0; tap < 4; ++tap) s += gmat.row(o * 4 + tap).sum();
            gb[o] += s;
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> maxpool2d(Tape<T>& tape, const Tensor<T>& input, int window) {
  require_nchw(input, "maxpool2d", "input");
  RARUNET_CHECK(window == 2, ErrorCode::kInvalidArgument, "maxpool2d: window must be 2");
  const Shape& s = input.shape();
  RARUNET_CHECK(s[2] % 2 == 0 && s[3] % 2 == 0, ErrorCode::kShapeMismatch,
          "maxpool2d: spatial size " + shape_string(s) +
              " is odd; pad dataset images to a multiple of 16");
  const int planes = s[0] * s[1], h = s[2], w = s[3], oh = h / 2, ow = w / 2;
  const bool tracked = tape.tracks({&input});
  Tensor<T> out = make_output<T>({s[0], s[1], oh, ow}, tracked);
  std::vector<std::size_t> argmax(out.numel());
  const T* x = input.values().data();
  T* y = out.data().data();
  for (int pl = 0; pl < planes; ++pl) {
    const std::size_t base = static_cast<std::size_t>(pl) * h * w;
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        std::size_t best = base + static_cast<std::size_t>(2 * i) * w + 2 * j;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const std::size_t idx = base + static_cast<std::size_t>(2 * i + dy) * w + 2 * j + dx;
            if (x[idx] > x[best]) best = idx;
          }
        }
        const std::size_t o = (static_cast<std::size_t>(pl) * oh + i) * ow + j;
        y[o] = x[best];
        argmax[o] = best;
      }
    }
  }
  if (tracked) {
    ImplPtr<T> xi = input.impl(), oi = out.impl();
    tape.record([xi, oi, argmax = std::move(argmax)] {
      if (oi->grad.empty()) return;
      T* gx = grad_target(xi);
      for (std::size_t o = 0; o < argmax.size(); ++o) gx[argmax[o]] += oi->grad[o];
    });
  }
  return out;
}

template <typename T>
Tensor<T> relu(Tape<T>& tape, const Tensor<T>& x) {
  const bool tracked = tape.tracks({&x});
  Tensor<T> out = make_output<T>(x.shape(), tracked);
  auto in = x.values();
  auto y = out.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = in[i] > T(0) ? in[i] : T(0);
  if (tracked) {
    ImplPtr<T> xi = x.impl(), oi = out.impl();
    tape.record([xi, oi] {
      if (oi->grad.empty()) return;
      T* gx = grad_target(xi);
      for (std::size_t i = 0; i < oi->grad.size(); ++i) {
        if (xi->data[i] > T(0)) gx[i] += oi->grad[i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sigmoid(Tape<T>& tape, const Tensor<T>& x) {
  const bool tracked = tape.tracks({&x});
  Tensor<T> out = make_output<T>(x.shape(), tracked);
  auto in = x.values();
  auto y = out.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = stable_sigmoid(in[i]);
  if (tracked) {
    ImplPtr<T> xi = x.impl(), oi = out.impl();
    tape.record([xi, oi] {
      if (oi->grad.empty()) return;
      T* gx = grad_target(xi);
      for (std::size_t i = 0; i < oi->grad.size(); ++i) {
        const T yi = oi->data[i];
        gx[i] += oi->grad[i] * yi * (T(1) - yi);
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& x, T factor) {
  const bool tracked = tape.tracks({&x});
  Tensor<T> out = make_output<T>(x.shape(), tracked);
  auto in = x.values();
  auto y = out.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = in[i] * factor;
  if (tracked) {
    ImplPtr<T> xi = x.impl(), oi = out.impl();
    tape.record([xi, oi, factor] {
      if (oi->grad.empty()) return;
      T* gx = grad_target(xi);
      for (std::size_t i = 0; i < oi->grad.size(); ++i) gx[i] += oi->grad[i] * factor;
    });
  }
  return out;
}

namespace {

enum class Binary { kAdd, kMul };

template <typename T>
Tensor<T> binary(Tape<T>& tape, const Tensor<T>& lhs, const Tensor<T>& rhs, Binary kind) {
  const char* name = kind == Binary::kAdd ? "add" : "mul";
  require_nchw(lhs, name, "lhs");
  require_nchw(rhs, name, "rhs");
  // Both operations commute, so the full-shape operand goes first.
  const bool swap = numel(rhs.shape()) > numel(lhs.shape());
  const Tensor<T>& a = swap ? rhs : lhs;
  const Tensor<T>& b = swap ? lhs : rhs;
  const Broadcast mode = classify(a, b, name);
  const Shape& s = a.shape();
  const std::size_t batch = s[0], channels = s[1], spatial = static_cast<std::size_t>(s[2]) * s[3];
  const bool tracked = tape.tracks({&a, &b});
  Tensor<T> out = make_output<T>(s, tracked);
  auto av = a.values();
  auto bv = b.values();
  auto y = out.data();
  for (std::size_t n = 0; n < batch; ++n) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t row = (n * channels + c) * spatial;
      for (std::size_t sp = 0; sp < spatial; ++sp) {
        const T bval = bv[broadcast_index(mode, n, c, sp, channels, spatial)];
        y[row + sp] = kind == Binary::kAdd ? av[row + sp] + bval : av[row + sp] * bval;
      }
    }
  }
  if (tracked) {
    ImplPtr<T> ai = a.impl(), bi = b.impl(), oi = out.impl();
    tape.record([=] {
      if (oi->grad.empty()) return;
      T* ga = grad_target(ai);
      T* gb = grad_target(bi);
      const T* g = oi->grad.data();
      for (std::size_t n = 0; n < batch; ++n) {
        for (std::size_t c = 0; c < channels; ++c) {
          const std::size_t row = (n * channels + c) * spatial;
          for (std::size_t sp = 0; sp < spatial; ++sp) {
            const std::size_t bj = broadcast_index(mode, n, c, sp, channels, spatial);
            const T gi = g[row + sp];
            if (kind == Binary::kAdd) {
              if (ga) ga[row + sp] += gi;
              if (gb) gb[bj] += gi;
            } else {
              if (ga) ga[row + sp] += gi * bi->data[bj];
              if (gb) gb[bj] += gi * ai->data[row + sp];
            }
          }
        }
      }
    });
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  return binary(tape, a, b, Binary::kAdd);
}

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  return binary(tape, a, b, Binary::kMul);
}

template <typename T>
Tensor<T> concat_channels(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_nchw(a, "concat_channels", "lhs");
  require_nchw(b, "concat_channels", "rhs");
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  RARUNET_CHECK(sa[0] == sb[0] && sa[2] == sb[2] && sa[3] == sb[3], ErrorCode::kShapeMismatch,
          "concat_channels: batch/spatial mismatch " + shape_string(sa) + " vs " +
              shape_string(sb));
  const int n_batch = sa[0], ca = sa[1], cb = sb[1];
  const std::size_t plane = static_cast<std::size_t>(sa[2]) * sa[3];
  const bool tracked = tape.tracks({&a, &b});
  Tensor<T> out = make_output<T>({n_batch, ca + cb, sa[2], sa[3]}, tracked);
  auto y = out.data();
  for (int n = 0; n < n_batch; ++n) {
    std::copy_n(a.values().begin() + n * ca * plane, ca * plane,
                y.begin() + n * (ca + cb) * plane);
    std::copy_n(b.values().begin() + n * cb * plane, cb * plane,
                y.begin() + (n * (ca + cb) + ca) * plane);
  }
  if (tracked) {
    ImplPtr<T> ai = a.impl(), bi = b.impl(), oi = out.impl();
    tape.record([=] {
      if (oi->grad.empty()) return;
      T* ga = grad_target(ai);
      T* gb = grad_target(bi);
      for (int n = 0; n < n_batch; ++n) {
        const T* g = oi->grad.data() + n * (ca + cb) * plane;
        if (ga) {
          for (std::size_t i = 0; i < ca * plane; ++i) ga[n * ca * plane + i] += g[i];
        }
        if (gb) {
          for (std::size_t i = 0; i < cb * plane; ++i) gb[n * cb * plane + i] += g[ca * plane + i];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> slice_channels(Tape<T>& tape, const Tensor<T>& x, int begin, int end) {
  require_nchw(x, "slice_channels", "input");
  const Shape& s = x.shape();
  RARUNET_CHECK(0 <= begin && begin < end && end <= s[1], ErrorCode::kShapeMismatch,
          "slice_channels: range [" + std::to_string(begin) + "," + std::to_string(end) +
              ") invalid for " + shape_string(s));
  const int n_batch = s[0], c = s[1], k = end - begin;
  const std::size_t plane = static_cast<std::size_t>(s[2]) * s[3];
  const bool tracked = tape.tracks({&x});
  Tensor<T> out = make_output<T>({n_batch, k, s[2], s[3]}, tracked);
  for (int n = 0; n < n_batch; ++n) {
    std::copy_n(x.values().begin() + (n * c + begin) * plane, k * plane,
                out.data().begin() + n * k * plane);
  }
  if (tracked) {
    ImplPtr<T> xi = x.impl(), oi = out.impl();
    tape.record([=] {
      if (oi->grad.empty()) return;
      T* gx = grad_target(xi);
      for (int n = 0; n < n_batch; ++n) {
        for (std::size_t i = 0; i < k * plane; ++i) {
          gx[(n * c + begin) * plane + i] += oi->grad[n * k * plane + i];
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> reduce(Tape<T>& tape, const Tensor<T>& x, Axis axis, Reduction kind) {
  require_nchw(x, "reduce", "input");
  const Shape& s = x.shape();
  const std::size_t batch = s[0], channels = s[1], spatial = static_cast<std::size_t>(s[2]) * s[3];
  const bool tracked = tape.tracks({&x});
  const Shape out_shape =
      axis == Axis::kChannel ? Shape{s[0], 1, s[2], s[3]} : Shape{s[0], s[1], 1, 1};
  Tensor<T> out = make_output<T>(out_shape, tracked);
  // Each output element reduces a strided group: `count` members spaced by `step`.
  const std::size_t count = axis == Axis::kChannel ? channels : spatial;
  const std::size_t step = axis == Axis::kChannel ? spatial : 1;
  auto group_start = [=](std::size_t o) {
    if (axis == Axis::kChannel) return (o / spatial) * channels * spatial + o % spatial;
    return o * spatial;
  };
  std::vector<std::size_t> argmax(kind == Reduction::kMax ? out.numel() : 0);
  auto xv = x.values();
  auto y = out.data();
  (void)batch;
  for (std::size_t o = 0; o < out.numel(); ++o) {
    const std::size_t start = group_start(o);
    if (kind == Reduction::kMean) {
      T acc = 0;
      for (std::size_t i = 0; i < count; ++i) acc += xv[start + i * step];
      y[o] = acc / static_cast<T>(count);
    } else {
      std::size_t best = start;
      for (std::size_t i = 1; i < count; ++i) {
        if (xv[start + i * step] > xv[best]) best = start + i * step;
      }
      y[o] = xv[best];
      argmax[o] = best;
    }
  }
  if (tracked) {
    ImplPtr<T> xi = x.impl(), oi = out.impl();
    tape.record([=, argmax = std::move(argmax)] {
      if (oi->grad.empty()) return;
      T* gx = grad_target(xi);
      for (std::size_t o = 0; o < oi->grad.size(); ++o) {
        if (kind == Reduction::kMax) {
          gx[argmax[o]] += oi->grad[o];
        } else {
          const T share = oi->grad[o] / static_cast<T>(count);
          const std::size_t start = group_start(o);
          for (std::size_t i = 0; i < count; ++i) gx[start + i * step] += share;
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x) {
  const bool tracked = tape.tracks({&x});
  Tensor<T> out = make_output<T>({1}, tracked);
  T acc = 0;
  for (T v : x.values()) acc += v;
  out.data()[0] = acc;
  if (tracked) {
    ImplPtr<T> xi = x.impl(), oi = out.impl();
    tape.record([xi, oi] {
      if (oi->grad.empty()) return;
      T* gx = grad_target(xi);
      for (std::size_t i = 0; i < xi->data.size(); ++i) gx[i] += oi->grad[0];
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(Tape<T>& tape, const Tensor<T>& x) {
  return scale(tape, sum(tape, x), T(1) / static_cast<T>(x.numel()));
}

template <typename T>
Tensor<T> dice_loss(Tape<T>& tape, const Tensor<T>& pred, const Tensor<T>& target, T smoothing) {
  require_nchw(pred, "dice_loss", "pred");
  require_nchw(target, "dice_loss", "target");
  RARUNET_CHECK(pred.shape() == target.shape(), ErrorCode::kShapeMismatch,
          "dice_loss: pred " + shape_string(pred.shape()) + " vs target " +
              shape_string(target.shape()));
  const int n_batch = pred.dim(0);
  const std::size_t per = pred.numel() / n_batch;
  const bool tracked = tape.tracks({&pred});
  Tensor<T> out = make_output<T>({n_batch}, tracked);
  std::vector<T> numer(n_batch), denom(n_batch);
  auto p = pred.values();
  auto g = target.values();
  for (int n = 0; n < n_batch; ++n) {
    T inter = 0, ps = 0, gs = 0;
    for (std::size_t i = n * per; i < (n + 1) * per; ++i) {
      inter += p[i] * g[i];
      ps += p[i];
      gs += g[i];
    }
    numer[n] = T(2) * inter + smoothing;
    denom[n] = ps + gs + smoothing;
    out.data()[n] = T(1) - numer[n] / denom[n];
  }
  if (tracked) {
    ImplPtr<T> pi = pred.impl(), ti = target.impl(), oi = out.impl();
    tape.record([=] {
      if (oi->grad.empty()) return;
      T* gp = grad_target(pi);
      for (int n = 0; n < n_batch; ++n) {
        const T d2 = denom[n] * denom[n];
        const T go = oi->grad[n];
        for (std::size_t i = n * per; i < (n + 1) * per; ++i) {
          gp[i] -= go * (T(2) * ti->data[i] * denom[n] - numer[n]) / d2;
        }
      }
    });
  }
  return out;
}

#define RARUNET_INSTANTIATE_OPS(T)                                                           \
  template Tensor<T> conv2d(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                            int, int);                                                       \
  template Tensor<T> conv_transpose2d(Tape<T>&, const Tensor<T>&, const Tensor<T>&,         \
                                      const Tensor<T>&, int);                                \
  template Tensor<T> maxpool2d(Tape<T>&, const Tensor<T>&, int);                            \
  template Tensor<T> relu(Tape<T>&, const Tensor<T>&);                                      \
  template Tensor<T> sigmoid(Tape<T>&, const Tensor<T>&);                                   \
  template Tensor<T> scale(Tape<T>&, const Tensor<T>&, T);                                  \
  template Tensor<T> add(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> mul(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> concat_channels(Tape<T>&, const Tensor<T>&, const Tensor<T>&);         \
  template Tensor<T> slice_channels(Tape<T>&, const Tensor<T>&, int, int);                  \
  template Tensor<T> reduce(Tape<T>&, const Tensor<T>&, Axis, Reduction);                   \
  template Tensor<T> sum(Tape<T>&, const Tensor<T>&);                                       \
  template Tensor<T> mean(Tape<T>&, const Tensor<T>&);                                      \
  template Tensor<T> dice_loss(Tape<T>&, const Tensor<T>&, const Tensor<T>&, T);

RARUNET_INSTANTIATE_OPS(float)
RARUNET_INSTANTIATE_OPS(double)

}  // namespace rarunet::ops
