#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "tvqe/autograd.hpp"

namespace tvqe {

// Every op validates extents, computes the full output eagerly (no lazy
// views; permute and friends materialize), rejects non-finite results, and
// records a backward closure when a tape is active and some input needs
// gradients. Gradient accumulation order is fixed, so reruns are bit-exact.

template <class S>
inline void check_finite(const char* op, const Tensor<S>& t) {
  const S* p = t.data();
  for (long i = 0, n = t.numel(); i < n; ++i)
    if (!std::isfinite(double(p[i])))
      throw NumericError(std::string(op) + " produced non-finite values");
}

template <class S>
inline bool tape_on(std::initializer_list<const Tensor<S>*> ins) {
  if (!Tape<S>::active()) return false;
  for (auto* t : ins)
    if (t->requires_grad()) return true;
  return false;
}

inline Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (size_t i = 0; i < r; ++i) {
    long ea = i < r - a.size() ? 1 : a[i - (r - a.size())];
    long eb = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (ea != eb && ea != 1 && eb != 1)
      throw DimensionError(std::string(op) + ": shapes " + shape_str(a) +
                           " and " + shape_str(b) + " do not broadcast");
    out[i] = std::max(ea, eb);
  }
  return out;
}

// Element strides of `in` aligned right against `out`, zero where broadcast.
inline std::vector<long> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<long> st(out.size(), 0);
  long acc = 1;
  for (int i = int(in.size()) - 1; i >= 0; --i) {
    size_t o = out.size() - in.size() + size_t(i);
    st[o] = in[size_t(i)] == 1 ? 0 : acc;
    acc *= in[size_t(i)];
  }
  return st;
}

// Walks `out` in linear order keeping offsets into two broadcast inputs.
template <class F>
inline void for_each_broadcast2(const Shape& out, const std::vector<long>& sa,
                                const std::vector<long>& sb, F&& f) {
  int r = int(out.size());
  std::vector<long> idx(size_t(r), 0);
  long oa = 0, ob = 0;
  long total = numel_of(out);
  for (long lin = 0; lin < total; ++lin) {
    f(lin, oa, ob);
    for (int d = r - 1; d >= 0; --d) {
      ++idx[size_t(d)];
      oa += sa[size_t(d)];
      ob += sb[size_t(d)];
      if (idx[size_t(d)] < out[size_t(d)]) break;
      idx[size_t(d)] = 0;
      oa -= sa[size_t(d)] * out[size_t(d)];
      ob -= sb[size_t(d)] * out[size_t(d)];
    }
  }
}

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  Shape os = broadcast_shape(a.shape(), b.shape(), "add");
  Tensor<S> out(os);
  if (a.shape() == b.shape()) {
    const S *pa = a.data(), *pb = b.data();
    S* po = out.data();
    for (long i = 0, n = out.numel(); i < n; ++i) po[i] = pa[i] + pb[i];
  } else {
    auto sa = broadcast_strides(a.shape(), os);
    auto sb = broadcast_strides(b.shape(), os);
    const S *pa = a.data(), *pb = b.data();
    S* po = out.data();
    for_each_broadcast2(os, sa, sb, [&](long i, long ia, long ib) {
      po[i] = pa[ia] + pb[ib];
    });
  }
  check_finite("add", out);
  bool track = tape_on<S>({&a, &b});
  out.set_requires_grad(track);
  if (track) {
    Tape<S>::active()->record(
        "add", {a.impl(), b.impl()}, out.impl(),
        [ai = a.impl(), bi = b.impl(), oi = out.impl(), os] {
          auto* ga = grad_target(ai);
          auto* gb = grad_target(bi);
          const S* g = oi->grad.data();
          if (!ga && !gb) return;
          if (ai->shape == bi->shape) {
            for (long i = 0, n = long(oi->data.size()); i < n; ++i) {
              if (ga) (*ga)[size_t(i)] += g[i];
              if (gb) (*gb)[size_t(i)] += g[i];
            }
            return;
          }
          auto sa = broadcast_strides(ai->shape, os);
          auto sb = broadcast_strides(bi->shape, os);
          for_each_broadcast2(os, sa, sb, [&](long i, long ia, long ib) {
            if (ga) (*ga)[size_t(ia)] += g[i];
            if (gb) (*gb)[size_t(ib)] += g[i];
          });
        });
  }
  return out;
}

template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  Shape os = broadcast_shape(a.shape(), b.shape(), "mul");
  Tensor<S> out(os);
  auto sa = broadcast_strides(a.shape(), os);
  auto sb = broadcast_strides(b.shape(), os);
  {
    const S *pa = a.data(), *pb = b.data();
    S* po = out.data();
    if (a.shape() == b.shape()) {
      for (long i = 0, n = out.numel(); i < n; ++i) po[i] = pa[i] * pb[i];
    } else {
      for_each_broadcast2(os, sa, sb, [&](long i, long ia, long ib) {
        po[i] = pa[ia] * pb[ib];
      });
    }
  }
  check_finite("mul", out);
  bool track = tape_on<S>({&a, &b});
  out.set_requires_grad(track);
  if (track) {
    Tape<S>::active()->record(
        "mul", {a.impl(), b.impl()}, out.impl(),
        [ai = a.impl(), bi = b.impl(), oi = out.impl(), os, sa, sb] {
          auto* ga = grad_target(ai);
          auto* gb = grad_target(bi);
          if (!ga && !gb) return;
          const S* g = oi->grad.data();
          const S* pa = ai->data.data();
          const S* pb = bi->data.data();
          for_each_broadcast2(os, sa, sb, [&](long i, long ia, long ib) {
            if (ga) (*ga)[size_t(ia)] += g[i] * pb[ib];
            if (gb) (*gb)[size_t(ib)] += g[i] * pa[ia];
          });
        });
  }
  return out;
}

template <class S>
Tensor<S> scale(const Tensor<S>& a, double s) {
  Tensor<S> out(a.shape());
  for (long i = 0, n = a.numel(); i < n; ++i)
    out.data()[i] = S(a.data()[i] * S(s));
  check_finite("scale", out);
  bool track = tape_on<S>({&a});
  out.set_requires_grad(track);
  if (track) {
    Tape<S>::active()->record("scale", {a.impl()}, out.impl(),
                              [ai = a.impl(), oi = out.impl(), s] {
                                auto* ga = grad_target(ai);
                                if (!ga) return;
                                const S* g = oi->grad.data();
                                for (size_t i = 0; i < ga->size(); ++i)
                                  (*ga)[i] += g[i] * S(s);
                              });
  }
  return out;
}

template <class S>
Tensor<S> add_scalar(const Tensor<S>& a, double c) {
  Tensor<S> out(a.shape());
  for (long i = 0, n = a.numel(); i < n; ++i)
    out.data()[i] = a.data()[i] + S(c);
  check_finite("add_scalar", out);
  bool track = tape_on<S>({&a});
  out.set_requires_grad(track);
  if (track) {
    Tape<S>::active()->record("add_scalar", {a.impl()}, out.impl(),
                              [ai = a.impl(), oi = out.impl()] {
                                auto* ga = grad_target(ai);
                                if (!ga) return;
                                const S* g = oi->grad.data();
                                for (size_t i = 0; i < ga->size(); ++i)
                                  (*ga)[i] += g[i];
                              });
  }
  return out;
}

template <class S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return add(a, scale(b, -1.0));
}

template <class S>
Tensor<S> sqrt(const Tensor<S>& a) {
  Tensor<S> out(a.shape());
  for (long i = 0, n = a.numel(); i < n; ++i)
    out.data()[i] = std::sqrt(a.data()[i]);
  check_finite("sqrt", out);
  bool track = tape_on<S>({&a});
  out.set_requires_grad(track);
  if (track) {
    Tape<S>::active()->record("sqrt", {a.impl()}, out.impl(),
                              [ai = a.impl(), oi = out.impl()] {
                                auto* ga = grad_target(ai);
                                if (!ga) return;
                                const S* g = oi->grad.data();
                                const S* y = oi->data.data();
                                for (size_t i = 0; i < ga->size(); ++i)
                                  (*ga)[i] += g[i] * S(0.5) / y[i];
                              });
  }
  return out;
}

// Exact Gaussian-CDF form: x * Phi(x), no tanh approximation.
template <class S>
Tensor<S> gelu(const Tensor<S>& a) {
  Tensor<S> out(a.shape());
  for (long i = 0, n = a.numel(); i < n; ++i) {
    double x = double(a.data()[i]);
    out.data()[i] = S(x * 0.5 * (1.0 + std::erf(x * M_SQRT1_2)));
  }
  check_finite("gelu", out);
  bool track = tape_on<S>({&a});
  out.set_requires_grad(track);
  if (track) {
    Tape<S>::active()->record(
        "gelu", {a.impl()}, out.impl(), [ai = a.impl(), oi = out.impl()] {
          auto* ga = grad_target(ai);
          if (!ga) return;
          const S* g = oi->grad.data();
          const S* x = ai->data.data();
          for (size_t i = 0; i < ga->size(); ++i) {
            double v = double(x[i]);
            double phi = 0.5 * (1.0 + std::erf(v * M_SQRT1_2));
            double pdf = std::exp(-0.5 * v * v) / std::sqrt(2.0 * M_PI);
            (*ga)[i] += g[i] * S(phi + v * pdf);
          }
        });
  }
  return out;
}

template <class S>
Tensor<S> reshape(const Tensor<S>& a, Shape shape) {
  if (numel_of(shape) != a.numel())
    throw DimensionError("reshape: " + shape_str(a.shape()) + " -> " +
                         shape_str(shape) + " changes element count");
  Tensor<S> out = Tensor<S>::from_data(std::move(shape), a.data_vec());
  bool track = tape_on<S>({&a});
  out.set_requires_grad(track);
  if (track) {
    Tape<S>::active()->record("reshape", {a.impl()}, out.impl(),
                              [ai = a.impl(), oi = out.impl()] {
                                auto* ga = grad_target(ai);
                                if (!ga) return;
                                const S* g = oi->grad.data();
                                for (size_t i = 0; i < ga->size(); ++i)
                                  (*ga)[i] += g[i];
                              });
  }
  return out;
}

inline std::vector<long> contiguous_strides(const Shape& s) {
  std::vector<long> st(s.size());
  long acc = 1;
  for (int i = int(s.size()) - 1; i >= 0; --i) {
    st[size_t(i)] = acc;
    acc *= s[size_t(i)];
  }
  return st;
}

// Materializes the permutation; there are no lazy views anywhere.
template <class S>
Tensor<S> permute(const Tensor<S>& a, const std::vector<int>& axes) {
  int r = a.rank();
  if (int(axes.size()) != r)
    throw DimensionError("permute: got " + std::to_string(axes.size()) +
                         " axes for rank " + std::to_string(r));
  std::vector<bool> seen(size_t(r), false);
  Shape os(size_t(r), 0);
  for (int i = 0; i < r; ++i) {
    int ax = axes[size_t(i)];
    if (ax < 0 || ax >= r || seen[size_t(ax)])
      throw DimensionError("permute: invalid axis list");
    seen[size_t(ax)] = true;
    os[size_t(i)] = a.dim(ax);
  }
  auto in_st = contiguous_strides(a.shape());
  std::vector<long> st(size_t(r), 0);
  for (int i = 0; i < r; ++i) st[size_t(i)] = in_st[size_t(axes[size_t(i)])];

  Tensor<S> out(os);
  const S* pa = a.data();
  S* po = out.data();
  std::vector<long> idx(size_t(r), 0);
  long off = 0;
  for (long lin = 0, n = out.numel(); lin < n; ++lin) {
    po[lin] = pa[off];
    for (int d = r - 1; d >= 0; --d) {
      ++idx[size_t(d)];
      off += st[size_t(d)];
      if (idx[size_t(d)] < os[size_t(d)]) break;
      idx[size_t(d)] = 0;
      off -= st[size_t(d)] * os[size_t(d)];
    }
  }
  bool track = tape_on<S>({&a});
  out.set_requires_grad(track);
  if (track) {
    Tape<S>::active()->record(
        "permute", {a.impl()}, out.impl(),
        [ai = a.impl(), oi = out.impl(), st, os, r] {
          auto* ga = grad_target(ai);
          if (!ga) return;
          const S* g = oi->grad.data();
          std::vector<long> idx(size_t(r), 0);
          long off = 0;
          for (long lin = 0, n = long(oi->data.size()); lin < n; ++lin) {
            (*ga)[size_t(off)] += g[lin];
            for (int d = r - 1; d >= 0; --d) {
              ++idx[size_t(d)];
              off += st[size_t(d)];
              if (idx[size_t(d)] < os[size_t(d)]) break;
              idx[size_t(d)] = 0;
              off -= st[size_t(d)] * os[size_t(d)];
            }
          }
        });
  }
  return out;
}

template <class S>
Tensor<S> slice(const Tensor<S>& a, int axis, long start, long len) {
  int r = a.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw DimensionError("slice: bad axis");
  if (start < 0 || len <= 0 || start + len > a.dim(axis))
    throw DimensionError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(start + len) + ") outside extent " +
                         std::to_string(a.dim(axis)));
  Shape os = a.shape();
  os[size_t(axis)] = len;
  long outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= a.dim(d);
  for (int d = axis + 1; d < r; ++d) inner *= a.dim(d);
  long ext = a.dim(axis);

  Tensor<S> out(os);
  const S* pa = a.data();
  S* po = out.data();
  for (long o = 0; o < outer; ++o)
    std::copy(pa + (o * ext + start) * inner, pa + (o * ext + start + len) * inner,
              po + o * len * inner);
  bool track = tape_on<S>({&a});
  out.set_requires_grad(track);
  if (track) {
    Tape<S>::active()->record(
        "slice", {a.impl()}, out.impl(),
        [ai = a.impl(), oi = out.impl(), outer, inner, ext, start, len] {
          auto* ga = grad_target(ai);
          if (!ga) return;
          const S* g = oi->grad.data();
          for (long o = 0; o < outer; ++o)
            for (long j = 0; j < len * inner; ++j)
              (*ga)[size_t((o * ext + start) * inner + j)] +=
                  g[o * len * inner + j];
        });
  }
  return out;
}

template <class S>
Tensor<S> concat(const std::vector<Tensor<S>>& parts, int axis) {
  if (parts.empty()) throw UsageError("concat: no inputs");
  int r = parts[0].rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw DimensionError("concat: bad axis");
  long ext = 0;
  for (auto& p : parts) {
    if (p.rank() != r) throw DimensionError("concat: rank mismatch");
    for (int d = 0; d < r; ++d)
      if (d != axis && p.dim(d) != parts[0].dim(d))
        throw DimensionError("concat: shape mismatch " +
                             shape_str(p.shape()) + " vs " +
                             shape_str(parts[0].shape()));
    ext += p.dim(axis);
  }
  Shape os = parts[0].shape();
  os[size_t(axis)] = ext;
  long outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= os[size_t(d)];
  for (int d = axis + 1; d < r; ++d) inner *= os[size_t(d)];

  Tensor<S> out(os);
  S* po = out.data();
  long at = 0;
  for (auto& p : parts) {
    long pe = p.dim(axis);
    const S* pp = p.data();
    for (long o = 0; o < outer; ++o)
      std::copy(pp + o * pe * inner, pp + (o + 1) * pe * inner,
                po + (o * ext + at) * inner);
    at += pe;
  }
  bool track = false;
  if (Tape<S>::active())
    for (auto& p : parts) track = track || p.requires_grad();
  out.set_requires_grad(track);
  if (track) {
    std::vector<std::shared_ptr<TensorImpl<S>>> ins;
    for (auto& p : parts) ins.push_back(p.impl());
    Tape<S>::active()->record(
        "concat", ins, out.impl(),
        [ins, oi = out.impl(), outer, inner, ext, axis] {
          const S* g = oi->grad.data();
          long at = 0;
          for (auto& pi : ins) {
            long pe = pi->shape[size_t(axis)];
            auto* gp = grad_target(pi);
            if (gp)
              for (long o = 0; o < outer; ++o)
                for (long j = 0; j < pe * inner; ++j)
                  (*gp)[size_t(o * pe * inner + j)] +=
                      g[(o * ext + at) * inner + j];
            at += pe;
          }
        });
  }
  return out;
}

// Row gather from a rank-2 table; repeated rows scatter-add on backward.
template <class S>
Tensor<S> index_select0(const Tensor<S>& table, const std::vector<long>& rows) {
  if (table.rank() != 2) throw DimensionError("index_select0: table rank != 2");
  long r = table.dim(0), c = table.dim(1);
  for (long i : rows)
    if (i < 0 || i >= r)
      throw DimensionError("index_select0: row " + std::to_string(i) +
                           " outside [0, " + std::to_string(r) + ")");
  Tensor<S> out(Shape{long(rows.size()), c});
  const S* pt = table.data();
  S* po = out.data();
  for (size_t i = 0; i < rows.size(); ++i)
    std::copy(pt + rows[i] * c, pt + (rows[i] + 1) * c, po + long(i) * c);
  bool track = tape_on<S>({&table});
  out.set_requires_grad(track);
  if (track) {
    Tape<S>::active()->record("index_select0", {table.impl()}, out.impl(),
                              [ti = table.impl(), oi = out.impl(), rows, c] {
                                auto* gt = grad_target(ti);
                                if (!gt) return;
                                const S* g = oi->grad.data();
                                for (size_t i = 0; i < rows.size(); ++i)
                                  for (long j = 0; j < c; ++j)
                                    (*gt)[size_t(rows[i] * c + j)] +=
                                        g[long(i) * c + j];
                              });
  }
  return out;
}

template <class S>
Tensor<S> sum(const Tensor<S>& a) {
  S acc = 0;
  for (long i = 0, n = a.numel(); i < n; ++i) acc += a.data()[i];
  Tensor<S> out = Tensor<S>::scalar(acc);
  check_finite("sum", out);
  bool track = tape_on<S>({&a});
  out.set_requires_grad(track);
  if (track) {
    Tape<S>::active()->record("sum", {a.impl()}, out.impl(),
                              [ai = a.impl(), oi = out.impl()] {
                                auto* ga = grad_target(ai);
                                if (!ga) return;
                                S g = oi->grad[0];
                                for (size_t i = 0; i < ga->size(); ++i)
                                  (*ga)[i] += g;
                              });
  }
  return out;
}

// Fixed linear-index accumulation order; no pairwise or vectorized reordering.
template <class S>
Tensor<S> mean(const Tensor<S>& a) {
  S acc = 0;
  for (long i = 0, n = a.numel(); i < n; ++i) acc += a.data()[i];
  long n = a.numel();
  Tensor<S> out = Tensor<S>::scalar(acc / S(n));
  check_finite("mean", out);
  bool track = tape_on<S>({&a});
  out.set_requires_grad(track);
  if (track) {
    Tape<S>::active()->record("mean", {a.impl()}, out.impl(),
                              [ai = a.impl(), oi = out.impl(), n] {
                                auto* ga = grad_target(ai);
                                if (!ga) return;
                                S g = oi->grad[0] / S(n);
                                for (size_t i = 0; i < ga->size(); ++i)
                                  (*ga)[i] += g;
                              });
  }
  return out;
}

namespace detail {

template <class S>
using EigenMat =
    Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct MatmulPlan {
  Shape out_shape;
  long m, k, n, batches;
  std::vector<long> oa, ob;  // per-batch block offsets into a and b
};

inline MatmulPlan matmul_plan(const Shape& sa, const Shape& sb) {
  if (sa.size() < 2 || sb.size() < 2)
    throw DimensionError("matmul: operands must have rank >= 2, got " +
                         shape_str(sa) + " and " + shape_str(sb));
  long m = sa[sa.size() - 2], k = sa[sa.size() - 1];
  long k2 = sb[sb.size() - 2], n = sb[sb.size() - 1];
  if (k != k2)
    throw DimensionError("matmul: inner extents differ, " + shape_str(sa) +
                         " x " + shape_str(sb));
  Shape ba(sa.begin(), sa.end() - 2), bb(sb.begin(), sb.end() - 2);
  Shape obatch = broadcast_shape(ba, bb, "matmul");
  MatmulPlan p;
  p.m = m;
  p.k = k;
  p.n = n;
  p.out_shape = obatch;
  p.out_shape.push_back(m);
  p.out_shape.push_back(n);
  p.batches = numel_of(obatch);
  if (obatch.empty()) {
    p.oa = {0};
    p.ob = {0};
    return p;
  }
  auto sta = broadcast_strides(ba, obatch);
  auto stb = broadcast_strides(bb, obatch);
  p.oa.reserve(size_t(p.batches));
  p.ob.reserve(size_t(p.batches));
  for_each_broadcast2(obatch, sta, stb, [&](long, long ia, long ib) {
    p.oa.push_back(ia * m * k);
    p.ob.push_back(ib * k * n);
  });
  return p;
}

}  // namespace detail

// Batched matrix product; trailing two axes multiply, leading axes broadcast.
template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  auto plan = detail::matmul_plan(a.shape(), b.shape());
  Tensor<S> out(plan.out_shape);
  using Mat = detail::EigenMat<S>;
  for (long t = 0; t < plan.batches; ++t) {
    Eigen::Map<const Mat> A(a.data() + plan.oa[size_t(t)], plan.m, plan.k);
    Eigen::Map<const Mat> B(b.data() + plan.ob[size_t(t)], plan.k, plan.n);
    Eigen::Map<Mat> C(out.data() + t * plan.m * plan.n, plan.m, plan.n);
    C.noalias() = A * B;
  }
  check_finite("matmul", out);
  bool track = tape_on<S>({&a, &b});
  out.set_requires_grad(track);
  if (track) {
    Tape<S>::active()->record(
        "matmul", {a.impl(), b.impl()}, out.impl(),
        [ai = a.impl(), bi = b.impl(), oi = out.impl(), plan] {
          using Mat = detail::EigenMat<S>;
          auto* ga = grad_target(ai);
          auto* gb = grad_target(bi);
          if (!ga && !gb) return;
          // Broadcast batches map onto the same input block; += reduces them.
          for (long t = 0; t < plan.batches; ++t) {
            Eigen::Map<const Mat> G(oi->grad.data() + t * plan.m * plan.n,
                                    plan.m, plan.n);
            if (ga) {
              Eigen::Map<const Mat> B(bi->data.data() + plan.ob[size_t(t)],
                                      plan.k, plan.n);
              Eigen::Map<Mat> GA(ga->data() + plan.oa[size_t(t)], plan.m,
                                 plan.k);
              GA.noalias() += G * B.transpose();
            }
            if (gb) {
              Eigen::Map<const Mat> A(ai->data.data() + plan.oa[size_t(t)],
                                      plan.m, plan.k);
              Eigen::Map<Mat> GB(gb->data() + plan.ob[size_t(t)], plan.k,
                                 plan.n);
              GB.noalias() += A.transpose() * G;
            }
          }
        });
  }
  return out;
}

// Numerically stable softmax along one axis (max-subtracted).
template <class S>
Tensor<S> softmax(const Tensor<S>& a, int axis) {
  int r = a.rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw DimensionError("softmax: bad axis");
  long outer = 1, inner = 1, n = a.dim(axis);
  for (int d = 0; d < axis; ++d) outer *= a.dim(d);
  for (int d = axis + 1; d < r; ++d) inner *= a.dim(d);

  Tensor<S> out(a.shape());
  const S* pa = a.data();
  S* po = out.data();
  for (long o = 0; o < outer; ++o)
    for (long in = 0; in < inner; ++in) {
      long base = o * n * inner + in;
      S mx = pa[base];
      for (long j = 1; j < n; ++j) mx = std::max(mx, pa[base + j * inner]);
      S sm = 0;
      for (long j = 0; j < n; ++j) {
        S e = std::exp(pa[base + j * inner] - mx);
        po[base + j * inner] = e;
        sm += e;
      }
      for (long j = 0; j < n; ++j) po[base + j * inner] /= sm;
    }
  check_finite("softmax", out);
  bool track = tape_on<S>({&a});
  out.set_requires_grad(track);
  if (track) {
    Tape<S>::active()->record(
        "softmax", {a.impl()}, out.impl(),
        [ai = a.impl(), oi = out.impl(), outer, inner, n] {
          auto* ga = grad_target(ai);
          if (!ga) return;
          const S* g = oi->grad.data();
          const S* y = oi->data.data();
          for (long o = 0; o < outer; ++o)
            for (long in = 0; in < inner; ++in) {
              long base = o * n * inner + in;
              S dot = 0;
              for (long j = 0; j < n; ++j)
                dot += g[base + j * inner] * y[base + j * inner];
              for (long j = 0; j < n; ++j)
                (*ga)[size_t(base + j * inner)] +=
                    y[base + j * inner] * (g[base + j * inner] - dot);
            }
        });
  }
  return out;
}

// Normalizes the last axis: per-row zero mean, unit variance (biased), then
// per-feature affine. gamma/beta extents must equal the last extent.
template <class S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gamma,
                     const Tensor<S>& beta, double eps = 1e-5) {
  long d = x.dim(x.rank() - 1);
  if (gamma.rank() != 1 || gamma.dim(0) != d || beta.rank() != 1 ||
      beta.dim(0) != d)
    throw DimensionError("layer_norm: affine extents " +
                         shape_str(gamma.shape()) + "/" +
                         shape_str(beta.shape()) + " vs feature extent " +
                         std::to_string(d));
  long rows = x.numel() / d;
  Tensor<S> out(x.shape());
  auto xhat = std::make_shared<std::vector<S>>(size_t(x.numel()));
  auto inv = std::make_shared<std::vector<S>>(size_t(rows));
  const S* px = x.data();
  const S* pg = gamma.data();
  const S* pb = beta.data();
  S* po = out.data();
  for (long r = 0; r < rows; ++r) {
    const S* row = px + r * d;
    S mu = 0;
    for (long j = 0; j < d; ++j) mu += row[j];
    mu /= S(d);
    S var = 0;
    for (long j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= S(d);
    S iv = S(1) / std::sqrt(var + S(eps));
    (*inv)[size_t(r)] = iv;
    for (long j = 0; j < d; ++j) {
      S xh = (row[j] - mu) * iv;
      (*xhat)[size_t(r * d + j)] = xh;
      po[r * d + j] = pg[j] * xh + pb[j];
    }
  }
  check_finite("layer_norm", out);
  bool track = tape_on<S>({&x, &gamma, &beta});
  out.set_requires_grad(track);
  if (track) {
    Tape<S>::active()->record(
        "layer_norm", {x.impl(), gamma.impl(), beta.impl()}, out.impl(),
        [xi = x.impl(), gi = gamma.impl(), bi = beta.impl(), oi = out.impl(),
         xhat, inv, rows, d] {
          auto* gx = grad_target(xi);
          auto* gg = grad_target(gi);
          auto* gb = grad_target(bi);
          const S* g = oi->grad.data();
          const S* pg = gi->data.data();
          for (long r = 0; r < rows; ++r) {
            const S* grow = g + r * d;
            const S* xh = xhat->data() + r * d;
            if (gx) {
              S s1 = 0, s2 = 0;
              for (long j = 0; j < d; ++j) {
                S dxh = grow[j] * pg[j];
                s1 += dxh;
                s2 += dxh * xh[j];
              }
              S iv = (*inv)[size_t(r)];
              for (long j = 0; j < d; ++j) {
                S dxh = grow[j] * pg[j];
                (*gx)[size_t(r * d + j)] +=
                    iv * (dxh - s1 / S(d) - xh[j] * s2 / S(d));
              }
            }
            if (gg)
              for (long j = 0; j < d; ++j)
                (*gg)[size_t(j)] += grow[j] * xh[j];
            if (gb)
              for (long j = 0; j < d; ++j) (*gb)[size_t(j)] += grow[j];
          }
        });
  }
  return out;
}

// x [..., in] * w [in, out] + b [out]; composed from matmul/add.
template <class S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  return add(matmul(x, w), b);
}

template <class S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w) {
  return matmul(x, w);
}

}  // namespace tvqe
