#include "dfn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <type_traits>

#include <Eigen/Core>

#include "smallgemm.hpp"

namespace dfn {

namespace {

template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatMap = Eigen::Map<RowMat<S>>;
template <typename S>
using ConstMatMap = Eigen::Map<const RowMat<S>>;
// Views a column band of a larger row-major matrix.
template <typename S>
using BandMap = Eigen::Map<RowMat<S>, 0, Eigen::OuterStride<>>;
template <typename S>
using ConstBandMap = Eigen::Map<const RowMat<S>, 0, Eigen::OuterStride<>>;

// Resolves rank-3 [C,H,W] / rank-4 [N,C,H,W] into a uniform batch view.
struct BatchView {
  int n, c, h, w;
  bool batched;
};

inline BatchView batch_view(const Shape& s, const char* who) {
  if (s.size() == 3) return {1, s[0], s[1], s[2], false};
  if (s.size() == 4) return {s[0], s[1], s[2], s[3], true};
  throw ShapeError(std::string(who) + ": expected rank 3 or 4, got " + shape_str(s));
}

inline Shape with_batch(const BatchView& v, int c, int h, int w) {
  if (v.batched) return {v.n, c, h, w};
  return {c, h, w};
}

template <typename S>
bool wire(const TensorPtrT<S>& out, std::vector<TensorPtrT<S>> parents) {
  if (!grad_enabled()) return false;
  bool any = false;
  for (const auto& p : parents)
    if (p && p->requires_grad) any = true;
  if (!any) return false;
  out->requires_grad = true;
  for (auto& p : parents)
    if (p) out->parents.push_back(std::move(p));
  return true;
}

inline int ceil_div(int a, int b) {  // b > 0
  return a >= 0 ? (a + b - 1) / b : -((-a) / b);
}

// Reused column-matrix scratch; the dense towers call conv2d thousands of
// times per step and a fresh zero-initialized vector each call doubles the
// memory traffic. Slot 0 holds activations, slot 1 gradients.
template <typename S>
std::vector<S>& col_scratch(int slot) {
  static thread_local std::vector<S> bufs[2];
  return bufs[slot];
}

template <typename S>
S* col_scratch_ptr(int slot, std::size_t size) {
  auto& buf = col_scratch<S>(slot);
  if (buf.size() < size) buf.resize(size);
  return buf.data();
}

// Unrolls output rows [oy0, oy1) of one sample into a row-major
// [Cin*k*k, (oy1-oy0)*Wo] matrix for GEMM. Row order is (ci, ky, kx);
// out-of-image taps read as zero. Whole images never materialize: callers
// band the pixel axis so the column block stays cache-resident between the
// unroll and the product that consumes it.
template <typename S>
void im2col_band(const S* x, int cin, int h, int w, int k, int stride, int pad,
                 int wo, int oy0, int oy1, S* cols) {
  const std::int64_t band_p = static_cast<std::int64_t>(oy1 - oy0) * wo;
  for (int ci = 0; ci < cin; ++ci) {
    const S* plane = x + static_cast<std::int64_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        S* row = cols + (static_cast<std::int64_t>(ci) * k * k + ky * k + kx) * band_p;
        const int ox_lo = std::min(wo, std::max(0, ceil_div(pad - kx, stride)));
        const int ox_hi = std::max(ox_lo, std::min(wo, ceil_div(w + pad - kx, stride)));
        for (int oy = oy0; oy < oy1; ++oy) {
          const int iy = oy * stride - pad + ky;
          S* dst = row + static_cast<std::int64_t>(oy - oy0) * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, S(0));
            continue;
          }
          const S* src = plane + static_cast<std::int64_t>(iy) * w;
          std::fill(dst, dst + ox_lo, S(0));
          if (stride == 1) {
            std::memcpy(dst + ox_lo, src + ox_lo - pad + kx,
                        static_cast<std::size_t>(ox_hi - ox_lo) * sizeof(S));
          } else {
            for (int ox = ox_lo; ox < ox_hi; ++ox)
              dst[ox] = src[ox * stride - pad + kx];
          }
          std::fill(dst + ox_hi, dst + wo, S(0));
        }
      }
    }
  }
}

// Scatter-add of one band of column gradients back to image layout
// (adjoint of im2col_band over the same [oy0, oy1) rows).
template <typename S>
void col2im_add_band(const S* cols, int cin, int h, int w, int k, int stride,
                     int pad, int wo, int oy0, int oy1, S* dx) {
  const std::int64_t band_p = static_cast<std::int64_t>(oy1 - oy0) * wo;
  for (int ci = 0; ci < cin; ++ci) {
    S* out = dx + static_cast<std::int64_t>(ci) * h * w;
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const S* row = cols + (static_cast<std::int64_t>(ci) * k * k + ky * k + kx) * band_p;
        const int ox_lo = std::min(wo, std::max(0, ceil_div(pad - kx, stride)));
        const int ox_hi = std::max(ox_lo, std::min(wo, ceil_div(w + pad - kx, stride)));
        for (int oy = oy0; oy < oy1; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          const S* src = row + static_cast<std::int64_t>(oy - oy0) * wo;
          S* dst = out + static_cast<std::int64_t>(iy) * w - pad + kx;
          if (stride == 1) {
            for (int ox = ox_lo; ox < ox_hi; ++ox) dst[ox] += src[ox];
          } else {
            for (int ox = ox_lo; ox < ox_hi; ++ox) dst[ox * stride] += src[ox];
          }
        }
      }
    }
  }
}

// Pixel rows per band: keeps a column block near 512 KB so forward's unroll
// plus product, and backward's two blocks, fit in L2.
inline int conv_band_rows(std::int64_t kk, int wo, int ho) {
  const std::int64_t rows = 131072 / std::max<std::int64_t>(1, kk * wo);
  return static_cast<int>(std::max<std::int64_t>(1, std::min<std::int64_t>(ho, rows)));
}

// One-pass sum(x) and sum(x*x) over a contiguous span. Eight parallel double
// accumulators keep the loop vector-wide; the lane order is fixed, so results
// are identical run to run.
template <typename S>
inline void sums_sq(const S* p, std::int64_t n, double& s, double& s2) {
  using D8 = Eigen::Array<double, 8, 1>;
  D8 a = D8::Zero(), a2 = D8::Zero();
  std::int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    D8 d = Eigen::Map<const Eigen::Array<S, 8, 1>>(p + i).template cast<double>();
    a += d;
    a2 += d * d;
  }
  double ts = a.sum(), ts2 = a2.sum();
  for (; i < n; ++i) {
    const double d = static_cast<double>(p[i]);
    ts += d;
    ts2 += d * d;
  }
  s += ts;
  s2 += ts2;
}

// One-pass sum(g) and sum(g*x), same accumulator scheme as sums_sq.
template <typename S>
inline void sums_prod(const S* g, const S* x, std::int64_t n, double& sg,
                      double& sgx) {
  using D8 = Eigen::Array<double, 8, 1>;
  D8 ag = D8::Zero(), agx = D8::Zero();
  std::int64_t i = 0;
  for (; i + 8 <= n; i += 8) {
    D8 dg = Eigen::Map<const Eigen::Array<S, 8, 1>>(g + i).template cast<double>();
    D8 dx = Eigen::Map<const Eigen::Array<S, 8, 1>>(x + i).template cast<double>();
    ag += dg;
    agx += dg * dx;
  }
  double tg = ag.sum(), tgx = agx.sum();
  for (; i < n; ++i) {
    tg += static_cast<double>(g[i]);
    tgx += static_cast<double>(g[i]) * static_cast<double>(x[i]);
  }
  sg += tg;
  sgx += tgx;
}

}  // namespace

template <typename S>
TensorPtrT<S> conv2d(const TensorPtrT<S>& x, const TensorPtrT<S>& w,
                     const TensorPtrT<S>& bias, int stride, int padding) {
  const BatchView v = batch_view(x->shape, "conv2d");
  if (w->shape.size() != 4 || w->shape[2] != w->shape[3])
    throw ShapeError("conv2d: weight must be [Cout,Cin,k,k], got " + shape_str(w->shape));
  const int cout = w->shape[0], cin = w->shape[1], k = w->shape[2];
  if (cin != v.c)
    throw ShapeError("conv2d: input channels " + std::to_string(v.c) +
                     " != weight channels " + std::to_string(cin));
  if (bias && !(bias->shape == Shape{cout}))
    throw ShapeError("conv2d: bias must be [Cout], got " + shape_str(bias->shape));
  if (stride < 1 || padding < 0) throw InputError("conv2d: bad stride/padding");
  if (v.h + 2 * padding < k || v.w + 2 * padding < k)
    throw ShapeError("conv2d: kernel larger than padded input");

  const int ho = (v.h + 2 * padding - k) / stride + 1;
  const int wo = (v.w + 2 * padding - k) / stride + 1;
  const std::int64_t kk = static_cast<std::int64_t>(cin) * k * k;
  const std::int64_t p_total = static_cast<std::int64_t>(ho) * wo;
  const std::int64_t in_sample = static_cast<std::int64_t>(v.c) * v.h * v.w;
  const std::int64_t out_sample = static_cast<std::int64_t>(cout) * p_total;

  // 1x1 stride-1 convs are plain channel mixes: the column matrix is the
  // input itself, so skip im2col entirely
  const bool direct = (k == 1 && stride == 1 && padding == 0);

  auto out = make_tensor_uninit<S>(with_batch(v, cout, ho, wo));
  {
    ConstMatMap<S> wm(w->data.data(), cout, kk);
    const S* bias_ptr = bias ? bias->data.data() : nullptr;
    if (direct) {
      for (int n = 0; n < v.n; ++n) {
        const S* cp = x->data.data() + n * in_sample;
        S* op = out->data.data() + n * out_sample;
        if constexpr (std::is_same_v<S, float>) {
          if (detail::small_gemm_enabled) {
            detail::gemm_small_m(w->data.data(), cp, p_total, op, p_total, cout,
                                 static_cast<int>(kk), static_cast<int>(p_total),
                                 bias_ptr);
            continue;
          }
        }
        ConstMatMap<S> cm(cp, kk, p_total);
        MatMap<S> om(op, cout, p_total);
        om.noalias() = wm * cm;
        if (bias_ptr)
          for (int co = 0; co < cout; ++co) om.row(co).array() += bias_ptr[co];
      }
    } else {
      const int band_rows = conv_band_rows(kk, wo, ho);
      S* cols = col_scratch_ptr<S>(
          0, static_cast<std::size_t>(kk) * band_rows * wo);
      for (int n = 0; n < v.n; ++n) {
        const S* cp = x->data.data() + n * in_sample;
        for (int oy0 = 0; oy0 < ho; oy0 += band_rows) {
          const int oy1 = std::min(ho, oy0 + band_rows);
          const std::int64_t band_p = static_cast<std::int64_t>(oy1 - oy0) * wo;
          S* op = out->data.data() + n * out_sample +
                  static_cast<std::int64_t>(oy0) * wo;
          im2col_band(cp, cin, v.h, v.w, k, stride, padding, wo, oy0, oy1, cols);
          if constexpr (std::is_same_v<S, float>) {
            if (detail::small_gemm_enabled) {
              detail::gemm_small_m(w->data.data(), cols, band_p, op, p_total,
                                   cout, static_cast<int>(kk),
                                   static_cast<int>(band_p), bias_ptr);
              continue;
            }
          }
          ConstMatMap<S> cm(cols, kk, band_p);
          BandMap<S> om(op, cout, band_p, Eigen::OuterStride<>(p_total));
          om.noalias() = wm * cm;
          if (bias_ptr)
            for (int co = 0; co < cout; ++co) om.row(co).array() += bias_ptr[co];
        }
      }
    }
  }

  if (wire<S>(out, {x, w, bias})) {
    auto xp = x;
    auto wp = w;
    auto bp = bias;
    const int str = stride, pad = padding;
    out->backward_op = [xp, wp, bp, v, cout, cin, k, str, pad, ho, wo, kk,
                        p_total, in_sample, out_sample, direct](TensorT<S>& self) {
      const bool need_w = wp->requires_grad;
      const bool need_x = xp->requires_grad;
      if (need_w) wp->ensure_grad();
      if (need_x) xp->ensure_grad();
      if (bp && bp->requires_grad) bp->ensure_grad();
      ConstMatMap<S> wm(wp->data.data(), cout, kk);

      if (bp && bp->requires_grad) {
        using CAM = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;
        for (int n = 0; n < v.n; ++n)
          for (int co = 0; co < cout; ++co)
            bp->grad[static_cast<std::size_t>(co)] += static_cast<S>(
                CAM(self.grad.data() + n * out_sample + co * p_total, p_total)
                    .template cast<double>()
                    .sum());
      }

      if (direct) {
        for (int n = 0; n < v.n; ++n) {
          const S* gp = self.grad.data() + n * out_sample;
          ConstMatMap<S> gm(gp, cout, p_total);
          if (need_w) {
            bool done = false;
            if constexpr (std::is_same_v<S, float>) {
              if (detail::small_gemm_enabled) {
                detail::gemm_abt_acc(gp, p_total, xp->data.data() + n * in_sample,
                                     p_total, wp->grad.data(), cout,
                                     static_cast<int>(kk), p_total);
                done = true;
              }
            }
            if (!done) {
              ConstMatMap<S> cm(xp->data.data() + n * in_sample, kk, p_total);
              MatMap<S> dwm(wp->grad.data(), cout, kk);
              dwm.noalias() += gm * cm.transpose();
            }
          }
          if (need_x) {
            bool done = false;
            if constexpr (std::is_same_v<S, float>) {
              if (detail::small_gemm_enabled)
                done = detail::gemm_wt_b(wp->data.data(), gp, p_total,
                                         xp->grad.data() + n * in_sample, p_total,
                                         static_cast<int>(kk), cout,
                                         static_cast<int>(p_total), true);
            }
            if (!done) {
              MatMap<S> gxm(xp->grad.data() + n * in_sample, kk, p_total);
              gxm.noalias() += wm.transpose() * gm;
            }
          }
        }
        return;
      }

      // re-unroll the input in cache-sized bands instead of keeping every
      // conv's full column matrix alive for the whole graph
      const int band_rows = conv_band_rows(kk, wo, ho);
      const std::size_t band_cap = static_cast<std::size_t>(kk) * band_rows * wo;
      S* cols = need_w ? col_scratch_ptr<S>(0, band_cap) : nullptr;
      S* dcols = need_x ? col_scratch_ptr<S>(1, band_cap) : nullptr;
      for (int n = 0; n < v.n; ++n) {
        for (int oy0 = 0; oy0 < ho; oy0 += band_rows) {
          const int oy1 = std::min(ho, oy0 + band_rows);
          const std::int64_t band_p = static_cast<std::int64_t>(oy1 - oy0) * wo;
          const S* gp =
              self.grad.data() + n * out_sample + static_cast<std::int64_t>(oy0) * wo;
          if (need_w) {
            im2col_band(xp->data.data() + n * in_sample, cin, v.h, v.w, k, str,
                        pad, wo, oy0, oy1, cols);
            bool done = false;
            if constexpr (std::is_same_v<S, float>) {
              if (detail::small_gemm_enabled) {
                detail::gemm_abt_acc(gp, p_total, cols, band_p, wp->grad.data(),
                                     cout, static_cast<int>(kk), band_p);
                done = true;
              }
            }
            if (!done) {
              ConstBandMap<S> gmb(gp, cout, band_p, Eigen::OuterStride<>(p_total));
              ConstMatMap<S> cm(cols, kk, band_p);
              MatMap<S> dwm(wp->grad.data(), cout, kk);
              dwm.noalias() += gmb * cm.transpose();
            }
          }
          if (need_x) {
            bool done = false;
            if constexpr (std::is_same_v<S, float>) {
              if (detail::small_gemm_enabled)
                done = detail::gemm_wt_b(wp->data.data(), gp, p_total, dcols,
                                         band_p, static_cast<int>(kk), cout,
                                         static_cast<int>(band_p), false);
            }
            if (!done) {
              ConstBandMap<S> gmb(gp, cout, band_p, Eigen::OuterStride<>(p_total));
              MatMap<S> dcm(dcols, kk, band_p);
              dcm.noalias() = wm.transpose() * gmb;
            }
            col2im_add_band(dcols, cin, v.h, v.w, k, str, pad, wo, oy0, oy1,
                            xp->grad.data() + n * in_sample);
          }
        }
      }
    };
  }
  return out;
}

template <typename S>
TensorPtrT<S> batch_norm(const TensorPtrT<S>& x, const TensorPtrT<S>& gamma,
                         const TensorPtrT<S>& beta,
                         const TensorPtrT<S>& running_mean,
                         const TensorPtrT<S>& running_var, bool training,
                         double momentum, double eps) {
  const BatchView v = batch_view(x->shape, "batch_norm");
  const Shape want{v.c};
  for (const auto* t : {&gamma, &beta, &running_mean, &running_var})
    if (!((*t)->shape == want))
      throw ShapeError("batch_norm: per-channel tensors must be [C]=" +
                       shape_str(want) + ", got " + shape_str((*t)->shape));

  const std::int64_t plane = static_cast<std::int64_t>(v.h) * v.w;
  const std::int64_t sample = static_cast<std::int64_t>(v.c) * plane;
  const std::int64_t m = static_cast<std::int64_t>(v.n) * plane;

  using ArrMap = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
  using ConstArrMap = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;

  std::vector<double> mean(v.c), inv_std(v.c);
  if (training) {
    for (int c = 0; c < v.c; ++c) {
      double s = 0.0, s2 = 0.0;
      for (int n = 0; n < v.n; ++n)
        sums_sq(x->data.data() + n * sample + c * plane, plane, s, s2);
      const double mu = s / static_cast<double>(m);
      // biased, used for normalization; clamp guards fp cancellation
      double var = s2 / static_cast<double>(m) - mu * mu;
      if (var < 0.0) var = 0.0;
      mean[c] = mu;
      inv_std[c] = 1.0 / std::sqrt(var + eps);
      const double unbiased =
          m > 1 ? var * static_cast<double>(m) / static_cast<double>(m - 1) : var;
      running_mean->data[c] = static_cast<S>((1.0 - momentum) * running_mean->data[c] + momentum * mu);
      running_var->data[c] = static_cast<S>((1.0 - momentum) * running_var->data[c] + momentum * unbiased);
    }
  } else {
    for (int c = 0; c < v.c; ++c) {
      mean[c] = running_mean->data[c];
      inv_std[c] = 1.0 / std::sqrt(static_cast<double>(running_var->data[c]) + eps);
    }
  }

  auto out = make_tensor_uninit<S>(x->shape);
  for (int n = 0; n < v.n; ++n) {
    for (int c = 0; c < v.c; ++c) {
      ConstArrMap p(x->data.data() + n * sample + c * plane, plane);
      ArrMap o(out->data.data() + n * sample + c * plane, plane);
      // y = xhat * gamma + beta folded into one affine map per channel
      const double a = inv_std[c] * gamma->data[c];
      const double b = beta->data[c] - mean[c] * a;
      o = p * static_cast<S>(a) + static_cast<S>(b);
    }
  }

  if (wire<S>(out, {x, gamma, beta})) {
    auto xp = x;
    auto gp = gamma;
    auto bp = beta;
    out->backward_op = [xp, gp, bp, v, plane, sample, m, mean, inv_std,
                        training](TensorT<S>& self) {
      const bool need_x = xp->requires_grad;
      if (need_x) xp->ensure_grad();
      if (gp->requires_grad) gp->ensure_grad();
      if (bp->requires_grad) bp->ensure_grad();
      using BwdArrMap = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
      using BwdConstArrMap = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;
      for (int c = 0; c < v.c; ++c) {
        const double mu = mean[c], is = inv_std[c];
        double sg = 0.0, sgx = 0.0;
        for (int n = 0; n < v.n; ++n)
          sums_prod(self.grad.data() + n * sample + c * plane,
                    xp->data.data() + n * sample + c * plane, plane, sg, sgx);
        const double sum_g = sg;
        const double sum_gx = (sgx - mu * sg) * is;
        if (gp->requires_grad) gp->grad[c] += static_cast<S>(sum_gx);
        if (bp->requires_grad) bp->grad[c] += static_cast<S>(sum_g);
        if (!need_x) continue;
        const double gam = gp->data[c];
        if (training) {
          // gam*is*(g - k1 - xhat*k2) regrouped as c1*g + c2*(x - mu) + c3
          const double k1 = sum_g / static_cast<double>(m);
          const double k2 = sum_gx / static_cast<double>(m);
          const double c1 = gam * is;
          const double c2 = -gam * is * is * k2;
          const double c3 = -gam * is * k1;
          for (int n = 0; n < v.n; ++n) {
            BwdConstArrMap g(self.grad.data() + n * sample + c * plane, plane);
            BwdConstArrMap px(xp->data.data() + n * sample + c * plane, plane);
            BwdArrMap dx(xp->grad.data() + n * sample + c * plane, plane);
            dx += g * static_cast<S>(c1) + (px - static_cast<S>(mu)) * static_cast<S>(c2) +
                  static_cast<S>(c3);
          }
        } else {
          const S f = static_cast<S>(gam * is);
          for (int n = 0; n < v.n; ++n) {
            BwdConstArrMap g(self.grad.data() + n * sample + c * plane, plane);
            BwdArrMap dx(xp->grad.data() + n * sample + c * plane, plane);
            dx += g * f;
          }
        }
      }
    };
  }
  return out;
}

template <typename S>
TensorPtrT<S> activation(const TensorPtrT<S>& x, ActKind kind) {
  auto out = make_tensor_uninit<S>(x->shape);
  const std::size_t n = x->data.size();
  if (kind == ActKind::Relu) {
    using ArrMap = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
    using ConstArrMap = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;
    ArrMap(out->data.data(), n) = ConstArrMap(x->data.data(), n).max(S(0));
  } else {
    // computed in double, then pinned strictly inside (0,1): downstream code
    // divides by sums of these values and treats them as soft gates
    const S lo = std::numeric_limits<S>::min();
    const S hi = std::nextafter(S(1), S(0));
    for (std::size_t i = 0; i < n; ++i) {
      const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(x->data[i])));
      S y = static_cast<S>(s);
      if (y <= S(0)) y = lo;
      if (y >= S(1)) y = hi;
      out->data[i] = y;
    }
  }
  if (wire<S>(out, {x})) {
    auto xp = x;
    out->backward_op = [xp, kind](TensorT<S>& self) {
      if (!xp->requires_grad) return;
      xp->ensure_grad();
      const std::size_t n = self.data.size();
      if (kind == ActKind::Relu) {
        using ArrMap = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
        using ConstArrMap = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;
        ArrMap dx(xp->grad.data(), n);
        ConstArrMap px(xp->data.data(), n);
        ConstArrMap g(self.grad.data(), n);
        dx += (px > S(0)).select(g, S(0));
      } else {
        for (std::size_t i = 0; i < n; ++i) {
          const S y = self.data[i];
          xp->grad[i] += self.grad[i] * y * (S(1) - y);
        }
      }
    };
  }
  return out;
}

template <typename S>
TensorPtrT<S> pool2d(const TensorPtrT<S>& x, PoolKind kind, int window,
                     int stride) {
  const BatchView v = batch_view(x->shape, "pool2d");
  if (window < 1 || stride < 1) throw InputError("pool2d: bad window/stride");
  if (window > v.h || window > v.w)
    throw ShapeError("pool2d: window exceeds input " + shape_str(x->shape));
  if ((v.h - window) % stride != 0 || (v.w - window) % stride != 0)
    throw ShapeError("pool2d: window/stride must tile the input exactly");
  const int ho = (v.h - window) / stride + 1;
  const int wo = (v.w - window) / stride + 1;
  const std::int64_t plane = static_cast<std::int64_t>(v.h) * v.w;
  const std::int64_t oplane = static_cast<std::int64_t>(ho) * wo;
  const std::int64_t nc = static_cast<std::int64_t>(v.n) * v.c;

  auto out = make_tensor_uninit<S>(with_batch(v, v.c, ho, wo));
  std::vector<std::int32_t> argmax;
  if (kind == PoolKind::Max) argmax.resize(static_cast<std::size_t>(nc * oplane));

  // transitions always halve with a 2x2 window; keep that path vectorized
  if (kind == PoolKind::Avg && window == 2 && stride == 2) {
    using Strided = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>, 0,
                               Eigen::InnerStride<2>>;
    using ArrMap = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>>;
    for (std::int64_t p = 0; p < nc; ++p) {
      const S* in = x->data.data() + p * plane;
      S* o = out->data.data() + p * oplane;
      for (int oy = 0; oy < ho; ++oy) {
        const S* r0 = in + static_cast<std::int64_t>(2 * oy) * v.w;
        const S* r1 = r0 + v.w;
        ArrMap(o + static_cast<std::int64_t>(oy) * wo, wo) =
            (Strided(r0, wo) + Strided(r0 + 1, wo) + Strided(r1, wo) + Strided(r1 + 1, wo)) *
            S(0.25);
      }
    }
  } else
  for (std::int64_t p = 0; p < nc; ++p) {
    const S* in = x->data.data() + p * plane;
    S* o = out->data.data() + p * oplane;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        const int y0 = oy * stride, x0 = ox * stride;
        if (kind == PoolKind::Max) {
          S best = in[y0 * v.w + x0];
          int besti = y0 * v.w + x0;
          for (int dy = 0; dy < window; ++dy)
            for (int dx = 0; dx < window; ++dx) {
              const int idx = (y0 + dy) * v.w + (x0 + dx);
              if (in[idx] > best) {  // first max wins on ties
                best = in[idx];
                besti = idx;
              }
            }
          o[oy * wo + ox] = best;
          argmax[static_cast<std::size_t>(p * oplane + oy * wo + ox)] = besti;
        } else {
          double acc = 0.0;
          for (int dy = 0; dy < window; ++dy)
            for (int dx = 0; dx < window; ++dx)
              acc += in[(y0 + dy) * v.w + (x0 + dx)];
          o[oy * wo + ox] = static_cast<S>(acc / (window * window));
        }
      }
    }
  }

  if (wire<S>(out, {x})) {
    auto xp = x;
    const int in_w = v.w, str = stride;
    out->backward_op = [xp, kind, window, str, in_w, ho, wo, plane, oplane, nc,
                        argmax = std::move(argmax)](TensorT<S>& self) {
      if (!xp->requires_grad) return;
      xp->ensure_grad();
      if (kind == PoolKind::Max) {
        for (std::int64_t p = 0; p < nc; ++p) {
          S* dx = xp->grad.data() + p * plane;
          const S* g = self.grad.data() + p * oplane;
          const std::int32_t* am = argmax.data() + p * oplane;
          for (std::int64_t i = 0; i < oplane; ++i) dx[am[i]] += g[i];
        }
      } else if (window == 2 && str == 2) {
        using StridedMut = Eigen::Map<Eigen::Array<S, Eigen::Dynamic, 1>, 0,
                                      Eigen::InnerStride<2>>;
        using ConstArrMap = Eigen::Map<const Eigen::Array<S, Eigen::Dynamic, 1>>;
        for (std::int64_t p = 0; p < nc; ++p) {
          S* dx = xp->grad.data() + p * plane;
          const S* g = self.grad.data() + p * oplane;
          for (int oy = 0; oy < ho; ++oy) {
            ConstArrMap grow(g + static_cast<std::int64_t>(oy) * wo, wo);
            S* r0 = dx + static_cast<std::int64_t>(2 * oy) * in_w;
            S* r1 = r0 + in_w;
            StridedMut(r0, wo) += grow * S(0.25);
            StridedMut(r0 + 1, wo) += grow * S(0.25);
            StridedMut(r1, wo) += grow * S(0.25);
            StridedMut(r1 + 1, wo) += grow * S(0.25);
          }
        }
      } else {
        const S inv = S(1) / static_cast<S>(window * window);
        for (std::int64_t p = 0; p < nc; ++p) {
          S* dx = xp->grad.data() + p * plane;
          const S* g = self.grad.data() + p * oplane;
          for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
              const S gv = g[oy * wo + ox] * inv;
              const int y0 = oy * str, x0 = ox * str;
              for (int dy = 0; dy < window; ++dy)
                for (int dx2 = 0; dx2 < window; ++dx2)
                  dx[(y0 + dy) * in_w + (x0 + dx2)] += gv;
            }
        }
      }
    };
  }
  return out;
}

template <typename S>
TensorPtrT<S> reduce_spatial(const TensorPtrT<S>& x, ReduceKind kind) {
  const BatchView v = batch_view(x->shape, "reduce_spatial");
  const std::int64_t plane = static_cast<std::int64_t>(v.h) * v.w;
  const std::int64_t nc = static_cast<std::int64_t>(v.n) * v.c;
  auto out = make_tensor_uninit<S>(v.batched ? Shape{v.n, v.c} : Shape{v.c});
  std::vector<std::int32_t> argmax;
  if (kind == ReduceKind::Max) argmax.resize(static_cast<std::size_t>(nc));
  for (std::int64_t p = 0; p < nc; ++p) {
    const S* in = x->data.data() + p * plane;
    if (kind == ReduceKind::Avg) {
      double acc = 0.0;
      for (std::int64_t i = 0; i < plane; ++i) acc += in[i];
      out->data[static_cast<std::size_t>(p)] = static_cast<S>(acc / static_cast<double>(plane));
    } else {
      S best = in[0];
      std::int32_t besti = 0;
      for (std::int64_t i = 1; i < plane; ++i)
        if (in[i] > best) {
          best = in[i];
          besti = static_cast<std::int32_t>(i);
        }
      out->data[static_cast<std::size_t>(p)] = best;
      argmax[static_cast<std::size_t>(p)] = besti;
    }
  }
  if (wire<S>(out, {x})) {
    auto xp = x;
    out->backward_op = [xp, kind, plane, nc,
                        argmax = std::move(argmax)](TensorT<S>& self) {
      if (!xp->requires_grad) return;
      xp->ensure_grad();
      for (std::int64_t p = 0; p < nc; ++p) {
        const S g = self.grad[static_cast<std::size_t>(p)];
        S* dx = xp->grad.data() + p * plane;
        if (kind == ReduceKind::Avg) {
          const S gv = g / static_cast<S>(plane);
          for (std::int64_t i = 0; i < plane; ++i) dx[i] += gv;
        } else {
          dx[argmax[static_cast<std::size_t>(p)]] += g;
        }
      }
    };
  }
  return out;
}

template <typename S>
TensorPtrT<S> reduce_channels(const TensorPtrT<S>& x, ReduceKind kind) {
  const BatchView v = batch_view(x->shape, "reduce_channels");
  const std::int64_t plane = static_cast<std::int64_t>(v.h) * v.w;
  const std::int64_t sample = static_cast<std::int64_t>(v.c) * plane;
  auto out = make_tensor_uninit<S>(with_batch(v, 1, v.h, v.w));
  std::vector<std::int32_t> argmax;
  if (kind == ReduceKind::Max)
    argmax.resize(static_cast<std::size_t>(v.n) * plane);
  for (int n = 0; n < v.n; ++n) {
    const S* in = x->data.data() + n * sample;
    S* o = out->data.data() + n * plane;
    for (std::int64_t i = 0; i < plane; ++i) {
      if (kind == ReduceKind::Avg) {
        double acc = 0.0;
        for (int c = 0; c < v.c; ++c) acc += in[c * plane + i];
        o[i] = static_cast<S>(acc / v.c);
      } else {
        S best = in[i];
        std::int32_t bc = 0;
        for (int c = 1; c < v.c; ++c)
          if (in[c * plane + i] > best) {
            best = in[c * plane + i];
            bc = c;
          }
        o[i] = best;
        argmax[static_cast<std::size_t>(n * plane + i)] = bc;
      }
    }
  }
  if (wire<S>(out, {x})) {
    auto xp = x;
    const int c = v.c, nn = v.n;
    out->backward_op = [xp, kind, plane, sample, c, nn,
                        argmax = std::move(argmax)](TensorT<S>& self) {
      if (!xp->requires_grad) return;
      xp->ensure_grad();
      for (int n = 0; n < nn; ++n) {
        const S* g = self.grad.data() + n * plane;
        S* dx = xp->grad.data() + n * sample;
        if (kind == ReduceKind::Avg) {
          const S inv = S(1) / static_cast<S>(c);
          for (std::int64_t i = 0; i < plane; ++i) {
            const S gv = g[i] * inv;
            for (int cc = 0; cc < c; ++cc) dx[cc * plane + i] += gv;
          }
        } else {
          for (std::int64_t i = 0; i < plane; ++i)
            dx[argmax[static_cast<std::size_t>(n * plane + i)] * plane + i] += g[i];
        }
      }
    };
  }
  return out;
}

template <typename S>
TensorPtrT<S> fully_connected(const TensorPtrT<S>& x, const TensorPtrT<S>& w,
                              const TensorPtrT<S>& bias) {
  if (w->shape.size() != 2)
    throw ShapeError("fully_connected: weight must be [M,D], got " + shape_str(w->shape));
  const int m = w->shape[0], d = w->shape[1];
  int n = 1;
  bool batched = false;
  if (x->shape.size() == 1) {
    if (x->shape[0] != d)
      throw ShapeError("fully_connected: input dim " + std::to_string(x->shape[0]) +
                       " != weight dim " + std::to_string(d));
  } else if (x->shape.size() == 2) {
    batched = true;
    n = x->shape[0];
    if (x->shape[1] != d)
      throw ShapeError("fully_connected: input dim " + std::to_string(x->shape[1]) +
                       " != weight dim " + std::to_string(d));
  } else {
    throw ShapeError("fully_connected: input must be rank 1 or 2, got " + shape_str(x->shape));
  }
  if (bias && !(bias->shape == Shape{m}))
    throw ShapeError("fully_connected: bias must be [M], got " + shape_str(bias->shape));

  auto out = make_tensor_uninit<S>(batched ? Shape{n, m} : Shape{m});
  {
    ConstMatMap<S> xm(x->data.data(), n, d);
    ConstMatMap<S> wm(w->data.data(), m, d);
    MatMap<S> om(out->data.data(), n, m);
    om.noalias() = xm * wm.transpose();
    if (bias)
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < m; ++c) om(r, c) += bias->data[static_cast<std::size_t>(c)];
  }
  if (wire<S>(out, {x, w, bias})) {
    auto xp = x;
    auto wp = w;
    auto bp = bias;
    out->backward_op = [xp, wp, bp, n, m, d](TensorT<S>& self) {
      ConstMatMap<S> gm(self.grad.data(), n, m);
      if (xp->requires_grad) {
        xp->ensure_grad();
        MatMap<S> dxm(xp->grad.data(), n, d);
        ConstMatMap<S> wm(wp->data.data(), m, d);
        dxm.noalias() += gm * wm;
      }
      if (wp->requires_grad) {
        wp->ensure_grad();
        MatMap<S> dwm(wp->grad.data(), m, d);
        ConstMatMap<S> xm(xp->data.data(), n, d);
        dwm.noalias() += gm.transpose() * xm;
      }
      if (bp && bp->requires_grad) {
        bp->ensure_grad();
        for (int c = 0; c < m; ++c) {
          double acc = 0.0;
          for (int r = 0; r < n; ++r) acc += gm(r, c);
          bp->grad[static_cast<std::size_t>(c)] += static_cast<S>(acc);
        }
      }
    };
  }
  return out;
}

template <typename S>
TensorPtrT<S> concat(const std::vector<TensorPtrT<S>>& xs, int axis) {
  if (xs.empty()) throw InputError("concat: empty input list");
  const Shape& s0 = xs[0]->shape;
  const int rank = static_cast<int>(s0.size());
  if (axis < 0 || axis >= rank)
    throw ShapeError("concat: axis " + std::to_string(axis) + " out of range for " + shape_str(s0));
  int axis_total = 0;
  for (const auto& t : xs) {
    if (static_cast<int>(t->shape.size()) != rank)
      throw ShapeError("concat: rank mismatch " + shape_str(t->shape) + " vs " + shape_str(s0));
    for (int i = 0; i < rank; ++i)
      if (i != axis && t->shape[i] != s0[i])
        throw ShapeError("concat: dim " + std::to_string(i) + " mismatch " +
                         shape_str(t->shape) + " vs " + shape_str(s0));
    axis_total += t->shape[axis];
  }
  Shape os = s0;
  os[axis] = axis_total;
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s0[i];
  for (int i = axis + 1; i < rank; ++i) inner *= s0[i];

  auto out = make_tensor_uninit<S>(os);
  std::int64_t off = 0;
  for (const auto& t : xs) {
    const std::int64_t block = static_cast<std::int64_t>(t->shape[axis]) * inner;
    for (std::int64_t o = 0; o < outer; ++o)
      std::memcpy(out->data.data() + (o * axis_total * inner + off),
                  t->data.data() + o * block, sizeof(S) * static_cast<std::size_t>(block));
    off += block;
  }

  std::vector<TensorPtrT<S>> parents(xs.begin(), xs.end());
  if (wire<S>(out, parents)) {
    out->backward_op = [xs, outer, inner, axis_total, axis](TensorT<S>& self) {
      std::int64_t off = 0;
      for (const auto& t : xs) {
        const std::int64_t block = static_cast<std::int64_t>(t->shape[axis]) * inner;
        if (t->requires_grad) {
          t->ensure_grad();
          for (std::int64_t o = 0; o < outer; ++o) {
            const S* g = self.grad.data() + (o * axis_total * inner + off);
            S* dst = t->grad.data() + o * block;
            for (std::int64_t i = 0; i < block; ++i) dst[i] += g[i];
          }
        }
        off += block;
      }
    };
  }
  return out;
}

template <typename S>
TensorPtrT<S> softmax_cross_entropy(const TensorPtrT<S>& logits, int label) {
  if (logits->shape.size() != 1)
    throw ShapeError("softmax_cross_entropy: logits must be rank 1, got " + shape_str(logits->shape));
  const int c = logits->shape[0];
  if (label < 0 || label >= c)
    throw InputError("softmax_cross_entropy: label " + std::to_string(label) +
                     " out of range [0," + std::to_string(c) + ")");
  double mx = logits->data[0];
  for (int i = 1; i < c; ++i) mx = std::max(mx, static_cast<double>(logits->data[i]));
  double sum = 0.0;
  std::vector<double> p(static_cast<std::size_t>(c));
  for (int i = 0; i < c; ++i) {
    p[static_cast<std::size_t>(i)] = std::exp(static_cast<double>(logits->data[i]) - mx);
    sum += p[static_cast<std::size_t>(i)];
  }
  for (auto& q : p) q /= sum;
  const double loss = std::log(sum) + mx - static_cast<double>(logits->data[label]);

  auto out = make_tensor<S>({1});
  out->data[0] = static_cast<S>(loss);
  if (wire<S>(out, {logits})) {
    auto lp = logits;
    out->backward_op = [lp, label, p = std::move(p)](TensorT<S>& self) {
      if (!lp->requires_grad) return;
      lp->ensure_grad();
      const S g = self.grad[0];
      for (std::size_t i = 0; i < lp->data.size(); ++i) {
        double d = p[i];
        if (static_cast<int>(i) == label) d -= 1.0;
        lp->grad[i] += g * static_cast<S>(d);
      }
    };
  }
  return out;
}

template <typename S>
std::vector<double> softmax(const TensorPtrT<S>& logits) {
  if (logits->shape.size() != 1)
    throw ShapeError("softmax: logits must be rank 1, got " + shape_str(logits->shape));
  double mx = logits->data[0];
  for (const S z : logits->data) mx = std::max(mx, static_cast<double>(z));
  std::vector<double> p(logits->data.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(static_cast<double>(logits->data[i]) - mx);
    sum += p[i];
  }
  for (auto& q : p) q /= sum;
  return p;
}

template <typename S>
TensorPtrT<S> add(const TensorPtrT<S>& a, const TensorPtrT<S>& b) {
  if (!(a->shape == b->shape))
    throw ShapeError("add: shape mismatch " + shape_str(a->shape) + " vs " + shape_str(b->shape));
  auto out = make_tensor_uninit<S>(a->shape);
  for (std::size_t i = 0; i < out->data.size(); ++i)
    out->data[i] = a->data[i] + b->data[i];
  if (wire<S>(out, {a, b})) {
    auto ap = a;
    auto bp = b;
    out->backward_op = [ap, bp](TensorT<S>& self) {
      for (const auto& p : {ap, bp}) {
        if (!p->requires_grad) continue;
        p->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
      }
    };
  }
  return out;
}

template <typename S>
TensorPtrT<S> scale(const TensorPtrT<S>& x, double factor) {
  auto out = make_tensor_uninit<S>(x->shape);
  const S f = static_cast<S>(factor);
  for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = x->data[i] * f;
  if (wire<S>(out, {x})) {
    auto xp = x;
    out->backward_op = [xp, f](TensorT<S>& self) {
      if (!xp->requires_grad) return;
      xp->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) xp->grad[i] += self.grad[i] * f;
    };
  }
  return out;
}

template <typename S>
TensorPtrT<S> mul_channels(const TensorPtrT<S>& x, const TensorPtrT<S>& w) {
  std::int64_t rows = 0, inner = 1;
  if (w->shape.size() == 1) {
    if (x->shape.empty() || x->shape[0] != w->shape[0])
      throw ShapeError("mul_channels: leading dim of " + shape_str(x->shape) +
                       " != " + shape_str(w->shape));
    rows = w->shape[0];
    for (std::size_t i = 1; i < x->shape.size(); ++i) inner *= x->shape[i];
  } else if (w->shape.size() == 2) {
    if (x->shape.size() < 2 || x->shape[0] != w->shape[0] || x->shape[1] != w->shape[1])
      throw ShapeError("mul_channels: leading dims of " + shape_str(x->shape) +
                       " != " + shape_str(w->shape));
    rows = static_cast<std::int64_t>(w->shape[0]) * w->shape[1];
    for (std::size_t i = 2; i < x->shape.size(); ++i) inner *= x->shape[i];
  } else {
    throw ShapeError("mul_channels: weight must be rank 1 or 2, got " + shape_str(w->shape));
  }
  auto out = make_tensor_uninit<S>(x->shape);
  for (std::int64_t r = 0; r < rows; ++r) {
    const S f = w->data[static_cast<std::size_t>(r)];
    const S* in = x->data.data() + r * inner;
    S* o = out->data.data() + r * inner;
    for (std::int64_t i = 0; i < inner; ++i) o[i] = in[i] * f;
  }
  if (wire<S>(out, {x, w})) {
    auto xp = x;
    auto wp = w;
    out->backward_op = [xp, wp, rows, inner](TensorT<S>& self) {
      if (xp->requires_grad) {
        xp->ensure_grad();
        for (std::int64_t r = 0; r < rows; ++r) {
          const S f = wp->data[static_cast<std::size_t>(r)];
          const S* g = self.grad.data() + r * inner;
          S* dx = xp->grad.data() + r * inner;
          for (std::int64_t i = 0; i < inner; ++i) dx[i] += g[i] * f;
        }
      }
      if (wp->requires_grad) {
        wp->ensure_grad();
        for (std::int64_t r = 0; r < rows; ++r) {
          const S* g = self.grad.data() + r * inner;
          const S* in = xp->data.data() + r * inner;
          double acc = 0.0;
          for (std::int64_t i = 0; i < inner; ++i) acc += static_cast<double>(g[i]) * in[i];
          wp->grad[static_cast<std::size_t>(r)] += static_cast<S>(acc);
        }
      }
    };
  }
  return out;
}

template <typename S>
TensorPtrT<S> mul_spatial(const TensorPtrT<S>& x, const TensorPtrT<S>& m) {
  const BatchView v = batch_view(x->shape, "mul_spatial");
  const BatchView vm = batch_view(m->shape, "mul_spatial");
  if (vm.c != 1 || vm.n != v.n || vm.h != v.h || vm.w != v.w ||
      (x->shape.size() != m->shape.size()))
    throw ShapeError("mul_spatial: map " + shape_str(m->shape) +
                     " does not broadcast over " + shape_str(x->shape));
  const std::int64_t plane = static_cast<std::int64_t>(v.h) * v.w;
  const std::int64_t sample = static_cast<std::int64_t>(v.c) * plane;
  auto out = make_tensor_uninit<S>(x->shape);
  for (int n = 0; n < v.n; ++n) {
    const S* mm = m->data.data() + n * plane;
    for (int c = 0; c < v.c; ++c) {
      const S* in = x->data.data() + n * sample + c * plane;
      S* o = out->data.data() + n * sample + c * plane;
      for (std::int64_t i = 0; i < plane; ++i) o[i] = in[i] * mm[i];
    }
  }
  if (wire<S>(out, {x, m})) {
    auto xp = x;
    auto mp = m;
    const int nn = v.n, cc = v.c;
    out->backward_op = [xp, mp, nn, cc, plane, sample](TensorT<S>& self) {
      if (xp->requires_grad) {
        xp->ensure_grad();
        for (int n = 0; n < nn; ++n) {
          const S* mm = mp->data.data() + n * plane;
          for (int c = 0; c < cc; ++c) {
            const S* g = self.grad.data() + n * sample + c * plane;
            S* dx = xp->grad.data() + n * sample + c * plane;
            for (std::int64_t i = 0; i < plane; ++i) dx[i] += g[i] * mm[i];
          }
        }
      }
      if (mp->requires_grad) {
        mp->ensure_grad();
        for (int n = 0; n < nn; ++n) {
          S* dm = mp->grad.data() + n * plane;
          for (std::int64_t i = 0; i < plane; ++i) {
            double acc = 0.0;
            for (int c = 0; c < cc; ++c)
              acc += static_cast<double>(self.grad[static_cast<std::size_t>(n * sample + c * plane + i)]) *
                     xp->data[static_cast<std::size_t>(n * sample + c * plane + i)];
            dm[i] += static_cast<S>(acc);
          }
        }
      }
    };
  }
  return out;
}

template <typename S>
TensorPtrT<S> sum_rows(const TensorPtrT<S>& x) {
  if (x->shape.size() != 2)
    throw ShapeError("sum_rows: expected [N,D], got " + shape_str(x->shape));
  const int n = x->shape[0], d = x->shape[1];
  auto out = make_tensor<S>({d});
  for (int j = 0; j < d; ++j) {
    double acc = 0.0;
    for (int r = 0; r < n; ++r) acc += x->data[static_cast<std::size_t>(r) * d + j];
    out->data[static_cast<std::size_t>(j)] = static_cast<S>(acc);
  }
  if (wire<S>(out, {x})) {
    auto xp = x;
    out->backward_op = [xp, n, d](TensorT<S>& self) {
      if (!xp->requires_grad) return;
      xp->ensure_grad();
      for (int r = 0; r < n; ++r)
        for (int j = 0; j < d; ++j)
          xp->grad[static_cast<std::size_t>(r) * d + j] += self.grad[static_cast<std::size_t>(j)];
    };
  }
  return out;
}

template <typename S>
TensorPtrT<S> mean_cols(const TensorPtrT<S>& x) {
  if (x->shape.size() != 2)
    throw ShapeError("mean_cols: expected [N,C], got " + shape_str(x->shape));
  const int n = x->shape[0], c = x->shape[1];
  auto out = make_tensor<S>({n});
  for (int r = 0; r < n; ++r) {
    double acc = 0.0;
    for (int j = 0; j < c; ++j) acc += x->data[static_cast<std::size_t>(r) * c + j];
    out->data[static_cast<std::size_t>(r)] = static_cast<S>(acc / c);
  }
  if (wire<S>(out, {x})) {
    auto xp = x;
    out->backward_op = [xp, n, c](TensorT<S>& self) {
      if (!xp->requires_grad) return;
      xp->ensure_grad();
      for (int r = 0; r < n; ++r) {
        const S g = self.grad[static_cast<std::size_t>(r)] / static_cast<S>(c);
        for (int j = 0; j < c; ++j) xp->grad[static_cast<std::size_t>(r) * c + j] += g;
      }
    };
  }
  return out;
}

template <typename S>
TensorPtrT<S> sum_all(const TensorPtrT<S>& x) {
  auto out = make_tensor<S>({1});
  double acc = 0.0;
  for (const S v : x->data) acc += v;
  out->data[0] = static_cast<S>(acc);
  if (wire<S>(out, {x})) {
    auto xp = x;
    out->backward_op = [xp](TensorT<S>& self) {
      if (!xp->requires_grad) return;
      xp->ensure_grad();
      const S g = self.grad[0];
      for (auto& d : xp->grad) d += g;
    };
  }
  return out;
}

template <typename S>
TensorPtrT<S> div_by_scalar(const TensorPtrT<S>& x, const TensorPtrT<S>& s) {
  if (s->numel() != 1)
    throw ShapeError("div_by_scalar: divisor must be [1], got " + shape_str(s->shape));
  const S sv = s->data[0];
  if (sv == S(0)) throw InputError("div_by_scalar: division by zero");
  auto out = make_tensor_uninit<S>(x->shape);
  for (std::size_t i = 0; i < out->data.size(); ++i) out->data[i] = x->data[i] / sv;
  if (wire<S>(out, {x, s})) {
    auto xp = x;
    auto sp = s;
    out->backward_op = [xp, sp](TensorT<S>& self) {
      const S sv = sp->data[0];
      if (xp->requires_grad) {
        xp->ensure_grad();
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          xp->grad[i] += self.grad[i] / sv;
      }
      if (sp->requires_grad) {
        sp->ensure_grad();
        double acc = 0.0;
        for (std::size_t i = 0; i < self.grad.size(); ++i)
          acc += static_cast<double>(self.grad[i]) * xp->data[i];
        sp->grad[0] += static_cast<S>(-acc / (static_cast<double>(sv) * sv));
      }
    };
  }
  return out;
}

template <typename S>
TensorPtrT<S> reshape(const TensorPtrT<S>& x, Shape shape) {
  if (shape_numel(shape) != x->numel())
    throw ShapeError("reshape: " + shape_str(x->shape) + " -> " + shape_str(shape) +
                     " changes element count");
  auto out = make_tensor_uninit<S>(std::move(shape));
  out->data = x->data;
  if (wire<S>(out, {x})) {
    auto xp = x;
    out->backward_op = [xp](TensorT<S>& self) {
      if (!xp->requires_grad) return;
      xp->ensure_grad();
      for (std::size_t i = 0; i < self.grad.size(); ++i) xp->grad[i] += self.grad[i];
    };
  }
  return out;
}

#define DFN_INSTANTIATE_OPS(S)                                                         \
  template TensorPtrT<S> conv2d<S>(const TensorPtrT<S>&, const TensorPtrT<S>&,         \
                                   const TensorPtrT<S>&, int, int);                    \
  template TensorPtrT<S> batch_norm<S>(const TensorPtrT<S>&, const TensorPtrT<S>&,     \
                                       const TensorPtrT<S>&, const TensorPtrT<S>&,     \
                                       const TensorPtrT<S>&, bool, double, double);    \
  template TensorPtrT<S> activation<S>(const TensorPtrT<S>&, ActKind);                 \
  template TensorPtrT<S> pool2d<S>(const TensorPtrT<S>&, PoolKind, int, int);          \
  template TensorPtrT<S> reduce_spatial<S>(const TensorPtrT<S>&, ReduceKind);          \
  template TensorPtrT<S> reduce_channels<S>(const TensorPtrT<S>&, ReduceKind);         \
  template TensorPtrT<S> fully_connected<S>(const TensorPtrT<S>&, const TensorPtrT<S>&, \
                                            const TensorPtrT<S>&);                     \
  template TensorPtrT<S> concat<S>(const std::vector<TensorPtrT<S>>&, int);            \
  template TensorPtrT<S> softmax_cross_entropy<S>(const TensorPtrT<S>&, int);          \
  template std::vector<double> softmax<S>(const TensorPtrT<S>&);                       \
  template TensorPtrT<S> add<S>(const TensorPtrT<S>&, const TensorPtrT<S>&);           \
  template TensorPtrT<S> scale<S>(const TensorPtrT<S>&, double);                       \
  template TensorPtrT<S> mul_channels<S>(const TensorPtrT<S>&, const TensorPtrT<S>&);  \
  template TensorPtrT<S> mul_spatial<S>(const TensorPtrT<S>&, const TensorPtrT<S>&);   \
  template TensorPtrT<S> sum_rows<S>(const TensorPtrT<S>&);                            \
  template TensorPtrT<S> mean_cols<S>(const TensorPtrT<S>&);                           \
  template TensorPtrT<S> sum_all<S>(const TensorPtrT<S>&);                             \
  template TensorPtrT<S> div_by_scalar<S>(const TensorPtrT<S>&, const TensorPtrT<S>&); \
  template TensorPtrT<S> reshape<S>(const TensorPtrT<S>&, Shape);

DFN_INSTANTIATE_OPS(float)
DFN_INSTANTIATE_OPS(double)

#undef DFN_INSTANTIATE_OPS

}  // namespace dfn
