#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "parlab/ops.hpp"
#include "parlab/params.hpp"
#include "parlab/random.hpp"
#include "parlab/vim.hpp"

namespace parlab {

// ---------------------------------------------------------------------------
// Multi-head self-attention, full (non-causal).
// ---------------------------------------------------------------------------

struct VitBlockConfig {
  int64_t dim = 128;
  int64_t heads = 4;
  int64_t mlp_ratio = 4;

  void validate() const {
    if (dim % heads != 0) throw ConfigError("vit block: dim must be divisible by heads");
  }
  int64_t head_dim() const { return dim / heads; }
};

struct MhaParams {
  VitBlockConfig cfg;
  Tensor w_qkv;  // [D x 3D]
  Tensor b_qkv;  // [1 x 3D]
  Tensor w_o;    // [D x D]
  Tensor b_o;    // [1 x D]

  static MhaParams init(const VitBlockConfig& cfg, Rng& rng, ParamRegistry& reg,
                        const std::string& prefix) {
    cfg.validate();
    MhaParams p;
    p.cfg = cfg;
    p.w_qkv = init_linear_weight(cfg.dim, 3 * cfg.dim, rng);
    p.b_qkv = Tensor::zeros({1, 3 * cfg.dim}, true);
    p.w_o = init_linear_weight(cfg.dim, cfg.dim, rng);
    p.b_o = Tensor::zeros({1, cfg.dim}, true);
    reg.add(prefix + ".qkv.w", p.w_qkv);
    reg.add(prefix + ".qkv.b", p.b_qkv);
    reg.add(prefix + ".o.w", p.w_o);
    reg.add(prefix + ".o.b", p.b_o);
    return p;
  }
};

struct MhaTrace {
  std::vector<Tensor> attn;  // per head [T x T]
};

inline Tensor mha(const Tensor& tokens, const MhaParams& p, MhaTrace* trace = nullptr) {
  detail::require(tokens.rank() == 2 && tokens.dim(1) == p.cfg.dim, "mha: token dim mismatch");
  int64_t D = p.cfg.dim, h = p.cfg.heads, dh = p.cfg.head_dim();
  Tensor qkv = add(matmul(tokens, p.w_qkv), p.b_qkv);  // [T x 3D]
  Real inv_sqrt = static_cast<Real>(1.0 / std::sqrt(static_cast<double>(dh)));
  std::vector<Tensor> heads;
  heads.reserve(static_cast<std::size_t>(h));
  for (int64_t i = 0; i < h; ++i) {
    Tensor q = slice_cols(qkv, i * dh, (i + 1) * dh);
    Tensor k = slice_cols(qkv, D + i * dh, D + (i + 1) * dh);
    Tensor v = slice_cols(qkv, 2 * D + i * dh, 2 * D + (i + 1) * dh);
    Tensor scores = scale(matmul(q, transpose(k)), inv_sqrt);
    Tensor attn = softmax(scores, 1);
    if (trace) trace->attn.push_back(attn);
    heads.push_back(matmul(attn, v));
  }
  Tensor ctx = h == 1 ? heads[0] : concat_cols(heads);
  return add(matmul(ctx, p.w_o), p.b_o);
}

// ---------------------------------------------------------------------------
// Pre-norm transformer block: x + mha(norm(x)); then + mlp(norm(.)).
// ---------------------------------------------------------------------------

struct VitBlock {
  VitBlockConfig cfg;
  NormParams norm1, norm2;
  MhaParams attn;
  Tensor w1, b1;  // [D x 4D], [1 x 4D]
  Tensor w2, b2;  // [4D x D], [1 x D]

  static VitBlock init(const VitBlockConfig& cfg, Rng& rng, ParamRegistry& reg,
                       const std::string& prefix) {
    cfg.validate();
    VitBlock blk;
    blk.cfg = cfg;
    blk.norm1 = NormParams::init(cfg.dim, reg, prefix + ".norm1");
    blk.attn = MhaParams::init(cfg, rng, reg, prefix + ".attn");
    blk.norm2 = NormParams::init(cfg.dim, reg, prefix + ".norm2");
    int64_t hidden = cfg.mlp_ratio * cfg.dim;
    blk.w1 = init_linear_weight(cfg.dim, hidden, rng);
    blk.b1 = Tensor::zeros({1, hidden}, true);
    blk.w2 = init_linear_weight(hidden, cfg.dim, rng);
    blk.b2 = Tensor::zeros({1, cfg.dim}, true);
    reg.add(prefix + ".mlp.w1", blk.w1);
    reg.add(prefix + ".mlp.b1", blk.b1);
    reg.add(prefix + ".mlp.w2", blk.w2);
    reg.add(prefix + ".mlp.b2", blk.b2);
    return blk;
  }

  Tensor forward(const Tensor& tokens) const {
    Tensor x = add(tokens, mha(norm1.forward(tokens), attn));
    Tensor m = add(matmul(gelu(add(matmul(norm2.forward(x), w1), b1)), w2), b2);
    return add(x, m);
  }
};

inline Tensor vit_block_forward(const Tensor& tokens, const VitBlock& blk) {
  return blk.forward(tokens);
}

// ---------------------------------------------------------------------------
// Backbone
// ---------------------------------------------------------------------------

struct VitBackboneConfig {
  int64_t image_h = 64;
  int64_t image_w = 32;
  int64_t patch = 8;
  int64_t dim = 128;
  int64_t heads = 4;
  int64_t depth = 4;
  int64_t mlp_ratio = 4;

  PatchEmbedConfig patch_cfg() const { return {image_h, image_w, 3, patch, dim}; }
  VitBlockConfig block_cfg() const { return {dim, heads, mlp_ratio}; }
  int64_t tokens() const { return patch_cfg().tokens(); }
};

inline VitBackboneConfig vit_backbone_preset(const std::string& name) {
  if (name == "vit-tiny") return {64, 32, 8, 128, 4, 4, 4};
  if (name == "vit-micro") return {64, 32, 8, 64, 2, 2, 4};
  if (name == "vit-s") return {224, 224, 16, 384, 6, 12, 4};
  if (name == "vit-b") return {224, 224, 16, 768, 12, 12, 4};
  throw ConfigError("unknown vit preset: " + name);
}

struct VitBackbone {
  VitBackboneConfig cfg;
  PatchEmbed patch;
  Tensor pos;
  std::vector<VitBlock> blocks;
  NormParams final_norm;

  static VitBackbone init(const VitBackboneConfig& cfg, Rng& rng, ParamRegistry& reg,
                          const std::string& prefix) {
    if (cfg.depth < 1) throw ConfigError("vit backbone: depth must be >= 1");
    VitBackbone bb;
    bb.cfg = cfg;
    bb.patch = PatchEmbed::init(cfg.patch_cfg(), rng, reg, prefix + ".patch");
    bb.pos = randn({cfg.tokens(), cfg.dim}, rng, 0.02, true);
    reg.add(prefix + ".pos", bb.pos);
    for (int64_t i = 0; i < cfg.depth; ++i)
      bb.blocks.push_back(
          VitBlock::init(cfg.block_cfg(), rng, reg, prefix + ".blk" + std::to_string(i)));
    bb.final_norm = NormParams::init(cfg.dim, reg, prefix + ".norm");
    return bb;
  }

  Tensor embed(const Tensor& image) const { return add_positional(patch.forward(image), pos); }

  Tensor forward(const Tensor& image) const {
    Tensor t = embed(image);
    for (const auto& blk : blocks) t = blk.forward(t);
    return final_norm.forward(t);
  }

  // Per-layer outputs (after each block, pre final norm); last entry equals
  // the pre-final-norm features.
  std::vector<Tensor> forward_layers(const Tensor& image) const {
    std::vector<Tensor> outs;
    Tensor t = embed(image);
    for (const auto& blk : blocks) {
      t = blk.forward(t);
      outs.push_back(t);
    }
    return outs;
  }
};

}  // namespace parlab
