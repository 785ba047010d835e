#pragma once

#include "tvqe/ops.hpp"

namespace tvqe {

// NCHW ops. conv2d uses zero padding; reflect_pad2d is the explicit
// mirror-padding op used ahead of the token pipeline.

namespace detail {

struct Conv2dDims {
  long n, cin, h, w, cout, icpg, kh, kw, oh, ow, ocpg;
};

inline Conv2dDims conv2d_dims(const Shape& xs, const Shape& ws, long stride,
                              long padding, long groups) {
  if (xs.size() != 4 || ws.size() != 4)
    throw DimensionError("conv2d: input " + shape_str(xs) + ", weight " +
                         shape_str(ws) + "; both must be rank 4");
  Conv2dDims d;
  d.n = xs[0];
  d.cin = xs[1];
  d.h = xs[2];
  d.w = xs[3];
  d.cout = ws[0];
  d.icpg = ws[1];
  d.kh = ws[2];
  d.kw = ws[3];
  if (stride < 1 || padding < 0 || groups < 1)
    throw UsageError("conv2d: stride/padding/groups out of range");
  if (d.cin % groups || d.cout % groups)
    throw DimensionError("conv2d: channels " + std::to_string(d.cin) + "->" +
                         std::to_string(d.cout) + " not divisible by " +
                         std::to_string(groups) + " groups");
  if (d.icpg != d.cin / groups)
    throw DimensionError("conv2d: weight expects " + std::to_string(d.icpg) +
                         " channels/group, input has " +
                         std::to_string(d.cin / groups));
  d.oh = (d.h + 2 * padding - d.kh) / stride + 1;
  d.ow = (d.w + 2 * padding - d.kw) / stride + 1;
  if (d.h + 2 * padding < d.kh || d.w + 2 * padding < d.kw)
    throw DimensionError("conv2d: kernel larger than padded input");
  d.ocpg = d.cout / groups;
  return d;
}

}  // namespace detail

template <class S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& weight,
                 const Tensor<S>& bias, long stride = 1, long padding = 0,
                 long groups = 1) {
  auto d = detail::conv2d_dims(x.shape(), weight.shape(), stride, padding,
                               groups);
  bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != d.cout))
    throw DimensionError("conv2d: bias shape " + shape_str(bias.shape()) +
                         " vs " + std::to_string(d.cout) + " out channels");
  Tensor<S> out(Shape{d.n, d.cout, d.oh, d.ow});
  const S* px = x.data();
  const S* pw = weight.data();
  const S* pb = has_bias ? bias.data() : nullptr;
  S* po = out.data();

  bool pointwise = d.kh == 1 && d.kw == 1 && stride == 1 && padding == 0 &&
                   groups == 1;
  if (pointwise) {
    using Mat = detail::EigenMat<S>;
    long hw = d.h * d.w;
    Eigen::Map<const Mat> W(pw, d.cout, d.cin);
    for (long b = 0; b < d.n; ++b) {
      Eigen::Map<const Mat> X(px + b * d.cin * hw, d.cin, hw);
      Eigen::Map<Mat> O(po + b * d.cout * hw, d.cout, hw);
      O.noalias() = W * X;
      if (pb)
        for (long oc = 0; oc < d.cout; ++oc) O.row(oc).array() += pb[oc];
    }
  } else {
    for (long b = 0; b < d.n; ++b)
      for (long oc = 0; oc < d.cout; ++oc) {
        long g = oc / d.ocpg;
        for (long oy = 0; oy < d.oh; ++oy)
          for (long ox = 0; ox < d.ow; ++ox) {
            S acc = pb ? pb[oc] : S(0);
            for (long ic = 0; ic < d.icpg; ++ic) {
              long cidx = g * d.icpg + ic;
              for (long ky = 0; ky < d.kh; ++ky) {
                long iy = oy * stride - padding + ky;
                if (iy < 0 || iy >= d.h) continue;
                for (long kx = 0; kx < d.kw; ++kx) {
                  long ix = ox * stride - padding + kx;
                  if (ix < 0 || ix >= d.w) continue;
                  acc += px[((b * d.cin + cidx) * d.h + iy) * d.w + ix] *
                         pw[((oc * d.icpg + ic) * d.kh + ky) * d.kw + kx];
                }
              }
            }
            po[((b * d.cout + oc) * d.oh + oy) * d.ow + ox] = acc;
          }
      }
  }
  check_finite("conv2d", out);
  bool track = has_bias ? tape_on<S>({&x, &weight, &bias})
                        : tape_on<S>({&x, &weight});
  out.set_requires_grad(track);
  if (track) {
    std::vector<std::shared_ptr<TensorImpl<S>>> ins{x.impl(), weight.impl()};
    if (has_bias) ins.push_back(bias.impl());
    auto bimpl = has_bias ? bias.impl() : nullptr;
    Tape<S>::active()->record(
        "conv2d", ins, out.impl(),
        [xi = x.impl(), wi = weight.impl(), bimpl, oi = out.impl(), d, stride,
         padding, pointwise] {
          auto* gx = grad_target(xi);
          auto* gw = grad_target(wi);
          auto* gb = bimpl ? grad_target(bimpl) : nullptr;
          const S* g = oi->grad.data();
          const S* px = xi->data.data();
          const S* pw = wi->data.data();
          if (gb)
            for (long b = 0; b < d.n; ++b)
              for (long oc = 0; oc < d.cout; ++oc) {
                S acc = 0;
                const S* row = g + (b * d.cout + oc) * d.oh * d.ow;
                for (long i = 0; i < d.oh * d.ow; ++i) acc += row[i];
                (*gb)[size_t(oc)] += acc;
              }
          if (pointwise) {
            using Mat = detail::EigenMat<S>;
            long hw = d.h * d.w;
            Eigen::Map<const Mat> W(pw, d.cout, d.cin);
            for (long b = 0; b < d.n; ++b) {
              Eigen::Map<const Mat> G(g + b * d.cout * hw, d.cout, hw);
              if (gx) {
                Eigen::Map<Mat> GX(gx->data() + b * d.cin * hw, d.cin, hw);
                GX.noalias() += W.transpose() * G;
              }
              if (gw) {
                Eigen::Map<const Mat> X(px + b * d.cin * hw, d.cin, hw);
                Eigen::Map<Mat> GW(gw->data(), d.cout, d.cin);
                GW.noalias() += G * X.transpose();
              }
            }
            return;
          }
          if (!gx && !gw) return;
          for (long b = 0; b < d.n; ++b)
            for (long oc = 0; oc < d.cout; ++oc) {
              long grp = oc / d.ocpg;
              for (long oy = 0; oy < d.oh; ++oy)
                for (long ox = 0; ox < d.ow; ++ox) {
                  S go = g[((b * d.cout + oc) * d.oh + oy) * d.ow + ox];
                  for (long ic = 0; ic < d.icpg; ++ic) {
                    long cidx = grp * d.icpg + ic;
                    for (long ky = 0; ky < d.kh; ++ky) {
                      long iy = oy * stride - padding + ky;
                      if (iy < 0 || iy >= d.h) continue;
                      for (long kx = 0; kx < d.kw; ++kx) {
                        long ix = ox * stride - padding + kx;
                        if (ix < 0 || ix >= d.w) continue;
                        long xoff = ((b * d.cin + cidx) * d.h + iy) * d.w + ix;
                        long woff =
                            ((oc * d.icpg + ic) * d.kh + ky) * d.kw + kx;
                        if (gx) (*gx)[size_t(xoff)] += go * pw[woff];
                        if (gw) (*gw)[size_t(woff)] += go * px[xoff];
                      }
                    }
                  }
                }
            }
        });
  }
  return out;
}

template <class S>
Tensor<S> conv2d(const Tensor<S>& x, const Tensor<S>& weight, long stride = 1,
                 long padding = 0, long groups = 1) {
  return conv2d(x, weight, Tensor<S>(), stride, padding, groups);
}

// [n, c*r^2, h, w] -> [n, c, h*r, w*r]; pure index permutation.
template <class S>
Tensor<S> pixel_shuffle(const Tensor<S>& x, long r) {
  if (x.rank() != 4) throw DimensionError("pixel_shuffle: input must be NCHW");
  if (r < 1) throw UsageError("pixel_shuffle: r must be >= 1");
  long n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (c % (r * r))
    throw DimensionError("pixel_shuffle: " + std::to_string(c) +
                         " channels not divisible by r^2=" +
                         std::to_string(r * r));
  long oc = c / (r * r);
  Tensor<S> out(Shape{n, oc, h * r, w * r});
  const S* px = x.data();
  S* po = out.data();
  for (long b = 0; b < n; ++b)
    for (long co = 0; co < oc; ++co)
      for (long oy = 0; oy < h * r; ++oy)
        for (long ox = 0; ox < w * r; ++ox) {
          long ci = co * r * r + (oy % r) * r + (ox % r);
          po[((b * oc + co) * h * r + oy) * w * r + ox] =
              px[((b * c + ci) * h + oy / r) * w + ox / r];
        }
  bool track = tape_on<S>({&x});
  out.set_requires_grad(track);
  if (track) {
    Tape<S>::active()->record(
        "pixel_shuffle", {x.impl()}, out.impl(),
        [xi = x.impl(), oi = out.impl(), n, c, h, w, r, oc] {
          auto* gx = grad_target(xi);
          if (!gx) return;
          const S* g = oi->grad.data();
          for (long b = 0; b < n; ++b)
            for (long co = 0; co < oc; ++co)
              for (long oy = 0; oy < h * r; ++oy)
                for (long ox = 0; ox < w * r; ++ox) {
                  long ci = co * r * r + (oy % r) * r + (ox % r);
                  (*gx)[size_t(((b * c + ci) * h + oy / r) * w + ox / r)] +=
                      g[((b * oc + co) * h * r + oy) * w * r + ox];
                }
        });
  }
  return out;
}

// [n, c, h*r, w*r] -> [n, c*r^2, h, w]; exact inverse of pixel_shuffle.
template <class S>
Tensor<S> pixel_unshuffle(const Tensor<S>& x, long r) {
  if (x.rank() != 4)
    throw DimensionError("pixel_unshuffle: input must be NCHW");
  if (r < 1) throw UsageError("pixel_unshuffle: r must be >= 1");
  long n = x.dim(0), c = x.dim(1), hr = x.dim(2), wr = x.dim(3);
  if (hr % r || wr % r)
    throw DimensionError("pixel_unshuffle: extents " + std::to_string(hr) +
                         "x" + std::to_string(wr) + " not divisible by r=" +
                         std::to_string(r));
  long h = hr / r, w = wr / r, oc = c * r * r;
  Tensor<S> out(Shape{n, oc, h, w});
  const S* px = x.data();
  S* po = out.data();
  for (long b = 0; b < n; ++b)
    for (long ci = 0; ci < c; ++ci)
      for (long iy = 0; iy < hr; ++iy)
        for (long ix = 0; ix < wr; ++ix) {
          long co = ci * r * r + (iy % r) * r + (ix % r);
          po[((b * oc + co) * h + iy / r) * w + ix / r] =
              px[((b * c + ci) * hr + iy) * wr + ix];
        }
  bool track = tape_on<S>({&x});
  out.set_requires_grad(track);
  if (track) {
    Tape<S>::active()->record(
        "pixel_unshuffle", {x.impl()}, out.impl(),
        [xi = x.impl(), oi = out.impl(), n, c, h, w, r, oc, hr, wr] {
          auto* gx = grad_target(xi);
          if (!gx) return;
          const S* g = oi->grad.data();
          for (long b = 0; b < n; ++b)
            for (long ci = 0; ci < c; ++ci)
              for (long iy = 0; iy < hr; ++iy)
                for (long ix = 0; ix < wr; ++ix) {
                  long co = ci * r * r + (iy % r) * r + (ix % r);
                  (*gx)[size_t(((b * c + ci) * hr + iy) * wr + ix)] +=
                      g[((b * oc + co) * h + iy / r) * w + ix / r];
                }
        });
  }
  return out;
}

// Mirror index with repeated reflection, so pads may exceed the extent.
inline long reflect_index(long i, long n) {
  if (n == 1) return 0;
  long period = 2 * (n - 1);
  long k = i % period;
  if (k < 0) k += period;
  return k < n ? k : period - k;
}

template <class S>
Tensor<S> reflect_pad2d(const Tensor<S>& x, long top, long bottom, long left,
                        long right) {
  if (x.rank() != 4) throw DimensionError("reflect_pad2d: input must be NCHW");
  if (top < 0 || bottom < 0 || left < 0 || right < 0)
    throw UsageError("reflect_pad2d: negative padding");
  long n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  long oh = h + top + bottom, ow = w + left + right;
  Tensor<S> out(Shape{n, c, oh, ow});
  const S* px = x.data();
  S* po = out.data();
  for (long b = 0; b < n; ++b)
    for (long ci = 0; ci < c; ++ci)
      for (long oy = 0; oy < oh; ++oy) {
        long iy = reflect_index(oy - top, h);
        for (long ox = 0; ox < ow; ++ox) {
          long ix = reflect_index(ox - left, w);
          po[((b * c + ci) * oh + oy) * ow + ox] =
              px[((b * c + ci) * h + iy) * w + ix];
        }
      }
  bool track = tape_on<S>({&x});
  out.set_requires_grad(track);
  if (track) {
    Tape<S>::active()->record(
        "reflect_pad2d", {x.impl()}, out.impl(),
        [xi = x.impl(), oi = out.impl(), n, c, h, w, oh, ow, top, left] {
          auto* gx = grad_target(xi);
          if (!gx) return;
          const S* g = oi->grad.data();
          for (long b = 0; b < n; ++b)
            for (long ci = 0; ci < c; ++ci)
              for (long oy = 0; oy < oh; ++oy) {
                long iy = reflect_index(oy - top, h);
                for (long ox = 0; ox < ow; ++ox) {
                  long ix = reflect_index(ox - left, w);
                  (*gx)[size_t(((b * c + ci) * h + iy) * w + ix)] +=
                      g[((b * c + ci) * oh + oy) * ow + ox];
                }
              }
        });
  }
  return out;
}

// Toroidal roll of the two middle axes of [n, h, w, c].
template <class S>
Tensor<S> roll2d(const Tensor<S>& x, long sh, long sw) {
  if (x.rank() != 4) throw DimensionError("roll2d: input must be [n,h,w,c]");
  long n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  auto wrap = [](long i, long m) {
    long k = i % m;
    return k < 0 ? k + m : k;
  };
  Tensor<S> out(x.shape());
  const S* px = x.data();
  S* po = out.data();
  for (long b = 0; b < n; ++b)
    for (long i = 0; i < h; ++i) {
      long oi2 = wrap(i + sh, h);
      for (long j = 0; j < w; ++j) {
        long oj = wrap(j + sw, w);
        std::copy(px + ((b * h + i) * w + j) * c,
                  px + ((b * h + i) * w + j + 1) * c,
                  po + ((b * h + oi2) * w + oj) * c);
      }
    }
  bool track = tape_on<S>({&x});
  out.set_requires_grad(track);
  if (track) {
    Tape<S>::active()->record(
        "roll2d", {x.impl()}, out.impl(),
        [xi = x.impl(), oi = out.impl(), n, h, w, c, sh, sw, wrap] {
          auto* gx = grad_target(xi);
          if (!gx) return;
          const S* g = oi->grad.data();
          for (long b = 0; b < n; ++b)
            for (long i = 0; i < h; ++i) {
              long oi2 = wrap(i + sh, h);
              for (long j = 0; j < w; ++j) {
                long oj = wrap(j + sw, w);
                for (long k = 0; k < c; ++k)
                  (*gx)[size_t(((b * h + i) * w + j) * c + k)] +=
                      g[((b * h + oi2) * w + oj) * c + k];
              }
            }
        });
  }
  return out;
}

}  // namespace tvqe
