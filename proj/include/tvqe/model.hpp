#pragma once

// Full network assembly: SSTF (patch partition, 3-stage Swin encoder,
// mirrored decoder with skip connections, pixel-shuffle restoration) and
// CAQE (Restormer stack, reconstruct layer, residual add), plus parameter
// registry/initialization and the model configuration record.

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tvqe/image_ops.hpp"
#include "tvqe/ops.hpp"
#include "tvqe/swin.hpp"

namespace tvqe {

struct ModelConfig {
  long radius = 3;               // temporal frames each side of the target
  long window_size = 8;
  std::array<long, 3> depths{2, 2, 2};
  std::array<long, 3> heads{2, 2, 2};
  long embed_dim = 48;
  double mlp_ratio = 1.0;
  long num_restormers = 4;
  long patch = 2;                // patch-partition side; pixel shuffle undoes it
  long mdta_heads = 1;
  double gdfn_expansion = 2.0;
  std::string dtype = "f32";

  long frames() const { return 2 * radius + 1; }
  // Input extents are padded to a multiple of this before tokenization.
  long pad_unit() const { return patch * window_size * 4; }

  void validate() const {
    if (radius < 0) throw ConfigError("radius must be >= 0");
    if (window_size < 1) throw ConfigError("window_size must be >= 1");
    if (embed_dim < 1) throw ConfigError("embed_dim must be >= 1");
    if (patch < 1) throw ConfigError("patch must be >= 1");
    if (mlp_ratio <= 0) throw ConfigError("mlp_ratio must be positive");
    if (gdfn_expansion <= 0) throw ConfigError("gdfn_expansion must be positive");
    if (num_restormers < 0) throw ConfigError("num_restormers must be >= 0");
    if (mdta_heads < 1 || embed_dim % mdta_heads != 0)
      throw ConfigError("embed_dim must be divisible by mdta_heads");
    bool any_shifted = false;
    for (int k = 0; k < 3; ++k) {
      if (depths[size_t(k)] < 1) throw ConfigError("depths must be >= 1");
      if (heads[size_t(k)] < 1) throw ConfigError("heads must be >= 1");
      if (embed_dim % heads[size_t(k)] != 0 ||
          (embed_dim << k) % heads[size_t(k)] != 0)
        throw ConfigError("embed_dim*2^k must be divisible by heads[k]");
      if (depths[size_t(k)] > 1) any_shifted = true;
    }
    if (any_shifted && window_size % 2 != 0)
      throw ConfigError("window_size must be even when any stage depth > 1");
    if (dtype != "f32" && dtype != "f64")
      throw ConfigError("dtype must be f32 or f64");
  }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"radius", c.radius},
                     {"window_size", c.window_size},
                     {"depths", c.depths},
                     {"heads", c.heads},
                     {"embed_dim", c.embed_dim},
                     {"mlp_ratio", c.mlp_ratio},
                     {"num_restormers", c.num_restormers},
                     {"patch", c.patch},
                     {"mdta_heads", c.mdta_heads},
                     {"gdfn_expansion", c.gdfn_expansion},
                     {"dtype", c.dtype}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  auto arr3 = [](const nlohmann::json& v, const char* key) {
    if (!v.is_array() || v.size() != 3)
      throw ConfigError(std::string(key) + " must be a 3-element array");
    return std::array<long, 3>{v[0].get<long>(), v[1].get<long>(),
                               v[2].get<long>()};
  };
  for (auto& [key, val] : j.items()) {
    if (key == "radius") c.radius = val.get<long>();
    else if (key == "window_size") c.window_size = val.get<long>();
    else if (key == "depths") c.depths = arr3(val, "depths");
    else if (key == "heads") c.heads = arr3(val, "heads");
    else if (key == "embed_dim") c.embed_dim = val.get<long>();
    else if (key == "mlp_ratio") c.mlp_ratio = val.get<double>();
    else if (key == "num_restormers") c.num_restormers = val.get<long>();
    else if (key == "patch") c.patch = val.get<long>();
    else if (key == "mdta_heads") c.mdta_heads = val.get<long>();
    else if (key == "gdfn_expansion") c.gdfn_expansion = val.get<double>();
    else if (key == "dtype") c.dtype = val.get<std::string>();
    else throw ConfigError("unknown model config key: " + key);
  }
}

inline long hidden_width(double ratio, long c) {
  long h = std::lround(ratio * double(c));
  return h < 1 ? 1 : h;
}

// Canonical parameter paths and shapes, fully determined by the config.
inline std::vector<std::pair<std::string, Shape>> param_registry(
    const ModelConfig& cfg) {
  cfg.validate();
  std::vector<std::pair<std::string, Shape>> reg;
  long E = cfg.embed_dim, ws = cfg.window_size, rel = (2 * ws - 1) * (2 * ws - 1);

  auto block = [&](const std::string& pre, long c, long hd) {
    long hid = hidden_width(cfg.mlp_ratio, c);
    reg.emplace_back(pre + ".ln1.gamma", Shape{c});
    reg.emplace_back(pre + ".ln1.beta", Shape{c});
    reg.emplace_back(pre + ".attn.qkv.weight", Shape{c, 3 * c});
    reg.emplace_back(pre + ".attn.qkv.bias", Shape{3 * c});
    reg.emplace_back(pre + ".attn.proj.weight", Shape{c, c});
    reg.emplace_back(pre + ".attn.proj.bias", Shape{c});
    reg.emplace_back(pre + ".attn.rel_pos_table", Shape{rel, hd});
    reg.emplace_back(pre + ".ln2.gamma", Shape{c});
    reg.emplace_back(pre + ".ln2.beta", Shape{c});
    reg.emplace_back(pre + ".mlp.fc1.weight", Shape{c, hid});
    reg.emplace_back(pre + ".mlp.fc1.bias", Shape{hid});
    reg.emplace_back(pre + ".mlp.fc2.weight", Shape{hid, c});
    reg.emplace_back(pre + ".mlp.fc2.bias", Shape{c});
  };
  auto blocks = [&](const std::string& stage, long c, long hd, long depth) {
    for (long j = 0; j < depth; ++j)
      block(stage + ".block" + std::to_string(j), c, hd);
  };

  reg.emplace_back("sstf.embed.weight", Shape{E, cfg.frames(), cfg.patch, cfg.patch});
  reg.emplace_back("sstf.embed.bias", Shape{E});
  blocks("sstf.enc.stage1", E, cfg.heads[0], cfg.depths[0]);
  for (int k = 2; k <= 3; ++k) {
    long cin = E << (k - 2);
    std::string pre = "sstf.enc.stage" + std::to_string(k);
    reg.emplace_back(pre + ".merge.norm.gamma", Shape{4 * cin});
    reg.emplace_back(pre + ".merge.norm.beta", Shape{4 * cin});
    reg.emplace_back(pre + ".merge.weight", Shape{4 * cin, 2 * cin});
    blocks(pre, 2 * cin, cfg.heads[size_t(k - 1)], cfg.depths[size_t(k - 1)]);
  }
  blocks("sstf.dec.stage1", 4 * E, cfg.heads[2], cfg.depths[2]);
  reg.emplace_back("sstf.dec.stage2.expand.weight", Shape{4 * E, 8 * E});
  blocks("sstf.dec.stage2", 2 * E, cfg.heads[1], cfg.depths[1]);
  reg.emplace_back("sstf.dec.stage3.expand.weight", Shape{2 * E, 4 * E});
  blocks("sstf.dec.stage3", E, cfg.heads[0], cfg.depths[0]);
  reg.emplace_back("sstf.up.weight", Shape{E * cfg.patch * cfg.patch, E, 1, 1});
  reg.emplace_back("sstf.up.bias", Shape{E * cfg.patch * cfg.patch});

  long gh = hidden_width(cfg.gdfn_expansion, E);
  for (long i = 0; i < cfg.num_restormers; ++i) {
    std::string pre = "caqe.res" + std::to_string(i);
    reg.emplace_back(pre + ".attn.norm.gamma", Shape{E});
    reg.emplace_back(pre + ".attn.norm.beta", Shape{E});
    reg.emplace_back(pre + ".attn.qkv_pw.weight", Shape{3 * E, E, 1, 1});
    reg.emplace_back(pre + ".attn.qkv_pw.bias", Shape{3 * E});
    reg.emplace_back(pre + ".attn.qkv_dw.weight", Shape{3 * E, 1, 3, 3});
    reg.emplace_back(pre + ".attn.qkv_dw.bias", Shape{3 * E});
    reg.emplace_back(pre + ".attn.proj.weight", Shape{E, E, 1, 1});
    reg.emplace_back(pre + ".attn.proj.bias", Shape{E});
    reg.emplace_back(pre + ".ffn.norm.gamma", Shape{E});
    reg.emplace_back(pre + ".ffn.norm.beta", Shape{E});
    reg.emplace_back(pre + ".ffn.b1_pw.weight", Shape{gh, E, 1, 1});
    reg.emplace_back(pre + ".ffn.b1_pw.bias", Shape{gh});
    reg.emplace_back(pre + ".ffn.b1_dw.weight", Shape{gh, 1, 3, 3});
    reg.emplace_back(pre + ".ffn.b1_dw.bias", Shape{gh});
    reg.emplace_back(pre + ".ffn.b2_pw.weight", Shape{gh, E, 1, 1});
    reg.emplace_back(pre + ".ffn.b2_pw.bias", Shape{gh});
    reg.emplace_back(pre + ".ffn.b2_dw.weight", Shape{gh, 1, 3, 3});
    reg.emplace_back(pre + ".ffn.b2_dw.bias", Shape{gh});
    reg.emplace_back(pre + ".ffn.out.weight", Shape{E, gh, 1, 1});
    reg.emplace_back(pre + ".ffn.out.bias", Shape{E});
  }
  reg.emplace_back("caqe.rec.weight", Shape{1, E, 3, 3});
  reg.emplace_back("caqe.rec.bias", Shape{1});
  return reg;
}

// Ordered parameter store; iteration is always in canonical (sorted) path
// order so every seeded consumer is deterministic.
template <class S>
struct ModelParams {
  std::map<std::string, Tensor<S>> tensors;

  const Tensor<S>& at(const std::string& path) const {
    auto it = tensors.find(path);
    if (it == tensors.end())
      throw ConfigError("unknown parameter path: " + path);
    return it->second;
  }
  bool has(const std::string& path) const { return tensors.count(path) > 0; }
  void set_requires_grad(bool v) {
    for (auto& [path, t] : tensors) t.set_requires_grad(v);
  }
  void zero_grad() {
    for (auto& [path, t] : tensors) t.zero_grad();
  }
  long total_scalars() const {
    long n = 0;
    for (const auto& [path, t] : tensors) n += t.numel();
    return n;
  }
};

// Truncated normal (std 0.02) for weights, zeros for biases/beta/relative
// position tables, ones for LN gains. Fully determined by (config, seed).
template <class S>
ModelParams<S> param_init(const ModelConfig& cfg, std::uint64_t seed) {
  ModelParams<S> P;
  for (auto& [path, shape] : param_registry(cfg))
    P.tensors.emplace(path, Tensor<S>(shape));
  Rng rng(seed);
  for (auto& [path, t] : P.tensors) {
    S* d = t.data();
    if (path.ends_with(".gamma")) {
      std::fill(d, d + t.numel(), S(1));
    } else if (path.ends_with(".weight")) {
      for (long i = 0; i < t.numel(); ++i) d[i] = S(rng.trunc_normal(0.02));
    }
    // biases, beta, rel_pos_table stay zero
  }
  return P;
}

// Re-draws parameters at O(0.1) magnitudes for the gradient checkers. The
// training init leaves attention logits near zero, where most gradients sit
// around 1e-8 and finite differences cannot resolve them against roundoff.
template <class S>
void spread_params(ModelParams<S>& P, Rng& rng) {
  for (auto& [path, t] : P.tensors) {
    S* d = t.data();
    if (path.ends_with(".gamma"))
      for (long i = 0; i < t.numel(); ++i) d[i] = S(0.7 + 0.6 * rng.uniform());
    else if (path.ends_with(".beta") || path.ends_with(".bias"))
      for (long i = 0; i < t.numel(); ++i)
        d[i] = S(0.2 * (2 * rng.uniform() - 1));
    else
      for (long i = 0; i < t.numel(); ++i)
        d[i] = S(0.3 * (2 * rng.uniform() - 1));
  }
}

// LayerNorm over the channel axis of an [n,c,h,w] map (each pixel is a token).
template <class S>
Tensor<S> channel_ln(const Tensor<S>& x, const Tensor<S>& gamma,
                     const Tensor<S>& beta) {
  long n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
  auto t = permute(reshape(x, {n, c, hw}), {0, 2, 1});
  t = layer_norm(t, gamma, beta);
  return reshape(permute(t, {0, 2, 1}), x.shape());
}

// Channel attention over flattened spatial tokens: per head, the (d x d) map
// softmax(K^T Q / sqrt(hw)) mixes V's channels. With c = heads = 1 the map is
// [[1]] and the result is V exactly.
template <class S>
Tensor<S> mdta_attention(const Tensor<S>& q, const Tensor<S>& k,
                         const Tensor<S>& v, long heads) {
  if (q.rank() != 4 || q.shape() != k.shape() || q.shape() != v.shape())
    throw DimensionError("mdta_attention: q/k/v must share an [n,c,h,w] shape");
  long n = q.dim(0), c = q.dim(1), hw = q.dim(2) * q.dim(3);
  if (heads < 1 || c % heads != 0)
    throw ConfigError("mdta_attention: channels " + std::to_string(c) +
                      " not divisible by heads " + std::to_string(heads));
  long d = c / heads;
  auto Q = reshape(q, {n, heads, d, hw});
  auto K = reshape(k, {n, heads, d, hw});
  auto V = reshape(v, {n, heads, d, hw});
  auto A = scale(matmul(K, permute(Q, {0, 1, 3, 2})), S(1) / std::sqrt(S(hw)));
  auto W = softmax(A, 2);  // columns sum to 1: output channel j mixes inputs
  auto M = matmul(permute(W, {0, 1, 3, 2}), V);
  return reshape(M, q.shape());
}

template <class S>
Tensor<S> mdta_forward(const Tensor<S>& x, const ModelParams<S>& P,
                       const std::string& pre, long heads) {
  if (x.rank() != 4) throw DimensionError("mdta_forward: input must be NCHW");
  long c = x.dim(1);
  auto y = channel_ln(x, P.at(pre + ".norm.gamma"), P.at(pre + ".norm.beta"));
  auto qkv = conv2d(y, P.at(pre + ".qkv_pw.weight"), P.at(pre + ".qkv_pw.bias"));
  qkv = conv2d(qkv, P.at(pre + ".qkv_dw.weight"), P.at(pre + ".qkv_dw.bias"),
               1, 1, 3 * c);
  auto m = mdta_attention(slice(qkv, 1, 0, c), slice(qkv, 1, c, c),
                          slice(qkv, 1, 2 * c, c), heads);
  return add(x, conv2d(m, P.at(pre + ".proj.weight"), P.at(pre + ".proj.bias")));
}

// Gated feed-forward: two pointwise+depthwise branches, GELU gate on the
// first, pointwise fuse back to c channels, residual add.
template <class S>
Tensor<S> gdfn_forward(const Tensor<S>& x, const ModelParams<S>& P,
                       const std::string& pre, double expansion) {
  if (x.rank() != 4) throw DimensionError("gdfn_forward: input must be NCHW");
  long hid = hidden_width(expansion, x.dim(1));
  auto y = channel_ln(x, P.at(pre + ".norm.gamma"), P.at(pre + ".norm.beta"));
  auto b1 = conv2d(conv2d(y, P.at(pre + ".b1_pw.weight"), P.at(pre + ".b1_pw.bias")),
                   P.at(pre + ".b1_dw.weight"), P.at(pre + ".b1_dw.bias"), 1, 1, hid);
  auto b2 = conv2d(conv2d(y, P.at(pre + ".b2_pw.weight"), P.at(pre + ".b2_pw.bias")),
                   P.at(pre + ".b2_dw.weight"), P.at(pre + ".b2_dw.bias"), 1, 1, hid);
  auto g = mul(gelu(b1), b2);
  return add(x, conv2d(g, P.at(pre + ".out.weight"), P.at(pre + ".out.bias")));
}

template <class S>
Tensor<S> restormer_forward(const Tensor<S>& x, const ModelParams<S>& P,
                            const std::string& pre, const ModelConfig& cfg) {
  auto y = mdta_forward(x, P, pre + ".attn", cfg.mdta_heads);
  return gdfn_forward(y, P, pre + ".ffn", cfg.gdfn_expansion);
}

template <class S>
SwinBlockParams<S> swin_view(const ModelParams<S>& P, const std::string& pre) {
  return {P.at(pre + ".ln1.gamma"),
          P.at(pre + ".ln1.beta"),
          {P.at(pre + ".attn.qkv.weight"), P.at(pre + ".attn.qkv.bias"),
           P.at(pre + ".attn.proj.weight"), P.at(pre + ".attn.proj.bias"),
           P.at(pre + ".attn.rel_pos_table")},
          P.at(pre + ".ln2.gamma"),
          P.at(pre + ".ln2.beta"),
          P.at(pre + ".mlp.fc1.weight"),
          P.at(pre + ".mlp.fc1.bias"),
          P.at(pre + ".mlp.fc2.weight"),
          P.at(pre + ".mlp.fc2.bias")};
}

namespace detail {

// Swin-TB run with alternating shift (0, ws/2, 0, ...); the shifted-window
// mask is built once per resolution and shared across blocks.
template <class S>
Tensor<S> run_stage(Tensor<S> x, long h, long w, const ModelParams<S>& P,
                    const std::string& pre, long depth, long heads,
                    const ModelConfig& cfg) {
  Tensor<S> mask;
  for (long j = 0; j < depth; ++j) {
    long shift = (j % 2 == 1) ? cfg.window_size / 2 : 0;
    if (shift > 0 && !mask.defined())
      mask = build_attention_mask<S>(h, w, cfg.window_size, shift);
    x = swin_block(x, h, w, swin_view(P, pre + ".block" + std::to_string(j)),
                   heads, cfg.window_size, shift,
                   shift > 0 ? mask : Tensor<S>{});
  }
  return x;
}

}  // namespace detail

// Spatio-temporal fusion: frames [n, 2R+1, H, W] -> feature map
// [n, embed_dim, H, W]. Extents are reflect-padded to the ladder's unit and
// cropped back after the pixel shuffle. `use_skips` exists for ablation runs.
template <class S>
Tensor<S> sstf_forward(const Tensor<S>& frames, const ModelParams<S>& P,
                       const ModelConfig& cfg, bool use_skips = true) {
  if (frames.rank() != 4)
    throw DimensionError("sstf_forward: input must be [n, frames, h, w]");
  if (frames.dim(1) != cfg.frames())
    throw UsageError("sstf_forward: got " + std::to_string(frames.dim(1)) +
                     " frames, config radius wants " +
                     std::to_string(cfg.frames()));
  long n = frames.dim(0), H = frames.dim(2), W = frames.dim(3);
  long unit = cfg.pad_unit();
  long Hp = (H + unit - 1) / unit * unit, Wp = (W + unit - 1) / unit * unit;
  auto x = (Hp != H || Wp != W)
               ? reflect_pad2d(frames, 0, Hp - H, 0, Wp - W)
               : frames;

  PatchEmbedParams<S> pe{P.at("sstf.embed.weight"), P.at("sstf.embed.bias")};
  auto tok = patch_partition(x, pe);
  long E = cfg.embed_dim;
  long h1 = Hp / cfg.patch, w1 = Wp / cfg.patch;
  auto e1 = detail::run_stage(tok, h1, w1, P, "sstf.enc.stage1",
                              cfg.depths[0], cfg.heads[0], cfg);

  PatchMergeParams<S> m2{P.at("sstf.enc.stage2.merge.norm.gamma"),
                         P.at("sstf.enc.stage2.merge.norm.beta"),
                         P.at("sstf.enc.stage2.merge.weight")};
  long h2 = h1 / 2, w2 = w1 / 2;
  auto e2 = detail::run_stage(patch_merging(e1, h1, w1, m2), h2, w2, P,
                              "sstf.enc.stage2", cfg.depths[1], cfg.heads[1],
                              cfg);

  PatchMergeParams<S> m3{P.at("sstf.enc.stage3.merge.norm.gamma"),
                         P.at("sstf.enc.stage3.merge.norm.beta"),
                         P.at("sstf.enc.stage3.merge.weight")};
  long h3 = h2 / 2, w3 = w2 / 2;
  auto e3 = detail::run_stage(patch_merging(e2, h2, w2, m3), h3, w3, P,
                              "sstf.enc.stage3", cfg.depths[2], cfg.heads[2],
                              cfg);

  auto d3 = detail::run_stage(e3, h3, w3, P, "sstf.dec.stage1", cfg.depths[2],
                              cfg.heads[2], cfg);
  if (use_skips) d3 = add(d3, e3);
  auto d2 = detail::run_stage(
      patch_expanding(d3, h3, w3, P.at("sstf.dec.stage2.expand.weight")), h2,
      w2, P, "sstf.dec.stage2", cfg.depths[1], cfg.heads[1], cfg);
  if (use_skips) d2 = add(d2, e2);
  auto d1 = detail::run_stage(
      patch_expanding(d2, h2, w2, P.at("sstf.dec.stage3.expand.weight")), h1,
      w1, P, "sstf.dec.stage3", cfg.depths[0], cfg.heads[0], cfg);
  if (use_skips) d1 = add(d1, e1);

  auto fm = reshape(permute(d1, {0, 2, 1}), {n, E, h1, w1});
  fm = conv2d(fm, P.at("sstf.up.weight"), P.at("sstf.up.bias"));
  fm = pixel_shuffle(fm, cfg.patch);  // [n, E, Hp, Wp]
  if (Hp != H) fm = slice(fm, 2, 0, H);
  if (Wp != W) fm = slice(fm, 3, 0, W);
  return fm;
}

// Quality enhancement: x_m [n, embed, H, W] features + x_t [n, 1, H, W]
// center plane -> enhanced plane [n, 1, H, W]; the reconstruct layer output
// is residual-added onto the center frame.
template <class S>
Tensor<S> caqe_forward(const Tensor<S>& x_m, const Tensor<S>& x_t,
                       const ModelParams<S>& P, const ModelConfig& cfg) {
  if (x_m.rank() != 4 || x_t.rank() != 4 || x_t.dim(1) != 1 ||
      x_m.dim(0) != x_t.dim(0) || x_m.dim(2) != x_t.dim(2) ||
      x_m.dim(3) != x_t.dim(3))
    throw DimensionError("caqe_forward: feature map " +
                         shape_str(x_m.shape()) + " vs center plane " +
                         shape_str(x_t.shape()));
  auto y = x_m;
  for (long i = 0; i < cfg.num_restormers; ++i)
    y = restormer_forward(y, P, "caqe.res" + std::to_string(i), cfg);
  auto rec = conv2d(y, P.at("caqe.rec.weight"), P.at("caqe.rec.bias"), 1, 1, 1);
  return add(rec, x_t);
}

// Batched end-to-end pass: frames [n, 2R+1, H, W] -> [n, 1, H, W]. The center
// channel is the enhancement target. No clamping inside the graph.
template <class S>
Tensor<S> tvqe_forward(const Tensor<S>& frames, const ModelParams<S>& P,
                       const ModelConfig& cfg) {
  auto x_m = sstf_forward(frames, P, cfg);
  auto x_t = slice(frames, 1, cfg.radius, 1);
  return caqe_forward(x_m, x_t, P, cfg);
}

// One clip: 2R+1 luma planes in [0,1], center at target_index.
template <class S>
struct ClipWindow {
  std::vector<Tensor<S>> frames;   // each [H, W]
  long target_index = 0;
  std::vector<long> timestamps;    // source frame numbers, same length
};

template <class S>
Tensor<S> stack_clip(const ClipWindow<S>& clip, const ModelConfig& cfg) {
  if (long(clip.frames.size()) != cfg.frames())
    throw UsageError("clip has " + std::to_string(clip.frames.size()) +
                     " frames, config radius wants " +
                     std::to_string(cfg.frames()));
  if (clip.target_index != cfg.radius)
    throw UsageError("clip target_index must be the center frame");
  std::vector<Tensor<S>> planes;
  for (const auto& f : clip.frames) {
    if (f.rank() != 2 || f.shape() != clip.frames[0].shape())
      throw DimensionError("clip frames must share one [h, w] extent");
    planes.push_back(reshape(f, {1, 1, f.dim(0), f.dim(1)}));
  }
  return concat(planes, 1);
}

// Enhanced center plane [H, W] for one clip.
template <class S>
Tensor<S> tvqe_forward(const ClipWindow<S>& clip, const ModelParams<S>& P,
                       const ModelConfig& cfg) {
  auto frames = stack_clip(clip, cfg);
  auto out = tvqe_forward(frames, P, cfg);
  return reshape(out, {out.dim(2), out.dim(3)});
}

}  // namespace tvqe
