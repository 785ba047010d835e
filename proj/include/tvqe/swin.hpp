#pragma once

// Swin primitives: window partition/reverse, cyclic shift with attention
// masks, windowed multi-head self-attention, the transformer block, and the
// patch partition/merging/expanding resolution ladder.

#include <cmath>
#include <vector>

#include "tvqe/image_ops.hpp"
#include "tvqe/ops.hpp"

namespace tvqe {

// Additive logit penalty for masked token pairs. Saturates softmax in f32
// without overflowing exp().
inline constexpr double kMaskPenalty = 1e9;

inline void check_window_size(long ws) {
  if (ws <= 0) throw UsageError("window size must be positive");
}

inline void check_shift(long ws, long shift) {
  if (shift != 0 && !(ws % 2 == 0 && shift == ws / 2))
    throw ConfigError("shift must be 0 or window_size/2");
}

// [n,h,w,c] -> [n*nh*nw, ws, ws, c]; windows ordered raster within each image.
template <class S>
Tensor<S> window_partition(const Tensor<S>& x, long ws) {
  check_window_size(ws);
  if (x.rank() != 4)
    throw DimensionError("window_partition: input must be [n,h,w,c]");
  long n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (h % ws != 0 || w % ws != 0)
    throw DimensionError("window_partition: extents " + std::to_string(h) +
                         "x" + std::to_string(w) +
                         " not multiples of window size " + std::to_string(ws));
  long nh = h / ws, nw = w / ws;
  auto y = reshape(x, {n, nh, ws, nw, ws, c});
  y = permute(y, {0, 1, 3, 2, 4, 5});
  return reshape(y, {n * nh * nw, ws, ws, c});
}

template <class S>
Tensor<S> window_reverse(const Tensor<S>& x, long ws, long h, long w) {
  check_window_size(ws);
  if (x.rank() != 4)
    throw DimensionError("window_reverse: input must be [nw, ws, ws, c]");
  if (x.dim(1) != ws || x.dim(2) != ws)
    throw DimensionError("window_reverse: window extent mismatch");
  if (h % ws != 0 || w % ws != 0)
    throw DimensionError("window_reverse: target extents not multiples of ws");
  long nh = h / ws, nw = w / ws, c = x.dim(3);
  if (x.dim(0) % (nh * nw) != 0)
    throw DimensionError("window_reverse: window count does not tile target");
  long n = x.dim(0) / (nh * nw);
  auto y = reshape(x, {n, nh, nw, ws, ws, c});
  y = permute(y, {0, 1, 3, 2, 4, 5});
  return reshape(y, {n, h, w, c});
}

// Toroidal roll by (-s, -s); cyclic_shift(cyclic_shift(x, s), -s) == x.
template <class S>
Tensor<S> cyclic_shift(const Tensor<S>& x, long s) {
  return roll2d(x, -s, -s);
}

// Flattened relative-position table rows for all ws^2 x ws^2 token pairs:
// entry (a,b) = (ra-rb+ws-1)*(2ws-1) + (ca-cb+ws-1).
inline std::vector<long> rel_pos_index(long ws) {
  check_window_size(ws);
  long n = ws * ws;
  std::vector<long> idx(size_t(n * n), 0);
  for (long a = 0; a < n; ++a)
    for (long b = 0; b < n; ++b) {
      long dr = a / ws - b / ws + ws - 1;
      long dc = a % ws - b % ws + ws - 1;
      idx[size_t(a * n + b)] = dr * (2 * ws - 1) + dc;
    }
  return idx;
}

// Per-window additive mask [nh*nw, ws^2, ws^2], entries in {0, -kMaskPenalty}.
// Token pairs may attend iff their PRE-SHIFT coordinates fall in the same
// region of the 3x3 band partition (bands split at extent-ws and extent-shift
// along each axis). Depends only on (h, w, ws, shift), never on data.
template <class S>
Tensor<S> build_attention_mask(long h, long w, long ws, long shift) {
  check_window_size(ws);
  check_shift(ws, shift);
  if (h % ws != 0 || w % ws != 0)
    throw DimensionError("attention mask: extents not multiples of ws");
  long nh = h / ws, nw = w / ws, n = ws * ws;
  Tensor<S> mask({nh * nw, n, n});
  S* m = mask.data();
  std::fill(m, m + mask.numel(), S(0));
  if (shift == 0) return mask;
  auto band = [&](long i, long extent) {
    if (i < extent - ws) return 0L;
    if (i < extent - shift) return 1L;
    return 2L;
  };
  // region[t] for shifted coordinate t: key the band to the pre-shift coord.
  std::vector<long> region(size_t(h * w));
  for (long i = 0; i < h; ++i)
    for (long j = 0; j < w; ++j) {
      long oi = (i + shift) % h, oj = (j + shift) % w;
      region[size_t(i * w + j)] = band(oi, h) * 3 + band(oj, w);
    }
  for (long wi = 0; wi < nh; ++wi)
    for (long wj = 0; wj < nw; ++wj) {
      long win = wi * nw + wj;
      for (long a = 0; a < n; ++a) {
        long ra = region[size_t((wi * ws + a / ws) * w + wj * ws + a % ws)];
        for (long b = 0; b < n; ++b) {
          long rb = region[size_t((wi * ws + b / ws) * w + wj * ws + b % ws)];
          if (ra != rb) m[(win * n + a) * n + b] = S(-kMaskPenalty);
        }
      }
    }
  return mask;
}

template <class S>
struct WmsaParams {
  Tensor<S> qkv_w;         // [c, 3c], columns ordered (q|k|v) x head x elem
  Tensor<S> qkv_b;         // [3c]
  Tensor<S> proj_w;        // [c, c]
  Tensor<S> proj_b;        // [c]
  Tensor<S> rel_pos_table; // [(2ws-1)^2, heads]
};

// Windowed multi-head self-attention over x [num_windows, ws^2, c].
// Per window: softmax(QK^T/sqrt(d) + rel_pos_bias + mask) V, then output
// projection. mask may be undefined (no masking) or [nW, ws^2, ws^2] with
// num_windows divisible by nW (leading batch).
template <class S>
Tensor<S> wmsa(const Tensor<S>& x, const WmsaParams<S>& p, long heads,
               const Tensor<S>& mask = {}) {
  if (x.rank() != 3) throw DimensionError("wmsa: input must be [nw, n, c]");
  long bw = x.dim(0), n = x.dim(1), c = x.dim(2);
  if (heads <= 0 || c % heads != 0)
    throw ConfigError("wmsa: channels " + std::to_string(c) +
                      " not divisible by heads " + std::to_string(heads));
  long ws = long(std::lround(std::sqrt(double(n))));
  if (ws * ws != n)
    throw DimensionError("wmsa: token count is not a square window");
  if (p.rel_pos_table.rank() != 2 ||
      p.rel_pos_table.dim(0) != (2 * ws - 1) * (2 * ws - 1) ||
      p.rel_pos_table.dim(1) != heads)
    throw DimensionError("wmsa: relative position table extent mismatch");
  long d = c / heads;

  auto qkv = linear(x, p.qkv_w, p.qkv_b);            // [bw, n, 3c]
  qkv = reshape(qkv, {bw, n, 3, heads, d});
  qkv = permute(qkv, {2, 0, 3, 1, 4});               // [3, bw, heads, n, d]
  auto q = reshape(slice(qkv, 0, 0, 1), {bw, heads, n, d});
  auto k = reshape(slice(qkv, 0, 1, 1), {bw, heads, n, d});
  auto v = reshape(slice(qkv, 0, 2, 1), {bw, heads, n, d});

  auto attn = matmul(scale(q, S(1) / std::sqrt(S(d))), permute(k, {0, 1, 3, 2}));
  auto bias = index_select0(p.rel_pos_table, rel_pos_index(ws)); // [n^2, heads]
  bias = reshape(permute(reshape(bias, {n, n, heads}), {2, 0, 1}),
                 {1, heads, n, n});
  attn = add(attn, bias);
  if (mask.defined()) {
    if (mask.rank() != 3 || mask.dim(1) != n || mask.dim(2) != n)
      throw DimensionError("wmsa: mask must be [nW, n, n]");
    long nW = mask.dim(0);
    if (bw % nW != 0)
      throw DimensionError("wmsa: window batch not divisible by mask windows");
    attn = reshape(attn, {bw / nW, nW, heads, n, n});
    attn = add(attn, reshape(mask, {1, nW, 1, n, n}));
    attn = reshape(attn, {bw, heads, n, n});
  }
  attn = softmax(attn, 3);

  auto out = matmul(attn, v);                        // [bw, heads, n, d]
  out = reshape(permute(out, {0, 2, 1, 3}), {bw, n, c});
  return linear(out, p.proj_w, p.proj_b);
}

template <class S>
struct SwinBlockParams {
  Tensor<S> ln1_gamma, ln1_beta;
  WmsaParams<S> attn;
  Tensor<S> ln2_gamma, ln2_beta;
  Tensor<S> mlp_w1;  // [c, hidden]
  Tensor<S> mlp_b1;  // [hidden]
  Tensor<S> mlp_w2;  // [hidden, c]
  Tensor<S> mlp_b2;  // [c]
};

// Pre-LN transformer block over a tokenized map x [b, h*w, c]:
// x + WMSA(LN(x)) with (optionally shifted) windows, then x + MLP(LN(x)).
// mask must match (h, w, ws, shift) when shift > 0; pass a cached one or
// leave it undefined to have it built here.
template <class S>
Tensor<S> swin_block(const Tensor<S>& x, long h, long w,
                     const SwinBlockParams<S>& p, long heads, long ws,
                     long shift, Tensor<S> mask = {}) {
  if (x.rank() != 3) throw DimensionError("swin_block: input must be [b,t,c]");
  if (x.dim(1) != h * w)
    throw DimensionError("swin_block: token count != h*w");
  check_shift(ws, shift);
  long b = x.dim(0), c = x.dim(2);

  auto y = layer_norm(x, p.ln1_gamma, p.ln1_beta);
  y = reshape(y, {b, h, w, c});
  if (shift > 0) {
    y = cyclic_shift(y, shift);
    if (!mask.defined()) mask = build_attention_mask<S>(h, w, ws, shift);
  }
  y = window_partition(y, ws);
  y = reshape(y, {y.dim(0), ws * ws, c});
  y = wmsa(y, p.attn, heads, shift > 0 ? mask : Tensor<S>{});
  y = reshape(y, {y.dim(0), ws, ws, c});
  y = window_reverse(y, ws, h, w);
  if (shift > 0) y = cyclic_shift(y, -shift);
  y = reshape(y, {b, h * w, c});
  auto x1 = add(x, y);

  auto z = layer_norm(x1, p.ln2_gamma, p.ln2_beta);
  z = linear(gelu(linear(z, p.mlp_w1, p.mlp_b1)), p.mlp_w2, p.mlp_b2);
  return add(x1, z);
}

template <class S>
struct PatchEmbedParams {
  Tensor<S> weight;  // [d, c_in, p, p]
  Tensor<S> bias;    // [d]
};

// Non-overlapping p x p patches of x [n, c_in, H, W], each linearly projected
// to d channels: returns [n, (H/p)*(W/p), d].
template <class S>
Tensor<S> patch_partition(const Tensor<S>& x, const PatchEmbedParams<S>& p) {
  if (x.rank() != 4)
    throw DimensionError("patch_partition: input must be [n,c,h,w]");
  if (p.weight.rank() != 4 || p.weight.dim(2) != p.weight.dim(3))
    throw DimensionError("patch_partition: weight must be [d,c,p,p]");
  long patch = p.weight.dim(2);
  if (x.dim(2) % patch != 0 || x.dim(3) % patch != 0)
    throw DimensionError("patch_partition: extents not multiples of patch");
  auto y = conv2d(x, p.weight, p.bias, patch, 0, 1);  // [n, d, H/p, W/p]
  long n = y.dim(0), d = y.dim(1), t = y.dim(2) * y.dim(3);
  return permute(reshape(y, {n, d, t}), {0, 2, 1});
}

template <class S>
struct PatchMergeParams {
  Tensor<S> norm_gamma;  // [4c]
  Tensor<S> norm_beta;   // [4c]
  Tensor<S> weight;      // [4c, 2c], no bias
};

// Downsample: concatenate each 2x2 token neighborhood ((di,dj) row-major on
// the channel axis), LayerNorm over 4c, then project 4c -> 2c.
template <class S>
Tensor<S> patch_merging(const Tensor<S>& x, long h, long w,
                        const PatchMergeParams<S>& p) {
  if (x.rank() != 3)
    throw DimensionError("patch_merging: input must be [n,t,c]");
  if (x.dim(1) != h * w)
    throw DimensionError("patch_merging: token count != h*w");
  if (h % 2 != 0 || w % 2 != 0)
    throw DimensionError("patch_merging: extents must be even");
  long n = x.dim(0), c = x.dim(2);
  auto y = reshape(x, {n, h / 2, 2, w / 2, 2, c});
  y = permute(y, {0, 1, 3, 2, 4, 5});
  y = reshape(y, {n, (h / 2) * (w / 2), 4 * c});
  y = layer_norm(y, p.norm_gamma, p.norm_beta);
  return linear(y, p.weight);
}

// Upsample: project c -> 2c, then scatter the channel quadruples ((di,dj)
// row-major) onto a 2x2 spatial neighborhood of c/2 channels. Shape-inverse
// of patch_merging.
template <class S>
Tensor<S> patch_expanding(const Tensor<S>& x, long h, long w,
                          const Tensor<S>& weight) {
  if (x.rank() != 3)
    throw DimensionError("patch_expanding: input must be [n,t,c]");
  if (x.dim(1) != h * w)
    throw DimensionError("patch_expanding: token count != h*w");
  long n = x.dim(0), c = x.dim(2);
  if (c % 2 != 0) throw DimensionError("patch_expanding: channels must be even");
  auto y = linear(x, weight);  // [n, t, 2c]
  y = reshape(y, {n, h, w, 2, 2, c / 2});
  y = permute(y, {0, 1, 3, 2, 4, 5});
  return reshape(y, {n, (2 * h) * (2 * w), c / 2});
}

}  // namespace tvqe
