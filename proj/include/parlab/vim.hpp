#pragma once

#include <string>
#include <vector>

#include "parlab/ops.hpp"
#include "parlab/params.hpp"
#include "parlab/random.hpp"
#include "parlab/ssm.hpp"

namespace parlab {

// ---------------------------------------------------------------------------
// Patch embedding: non-overlapping PxP patches, channel-major flattening,
// row-major patch order, linear projection to the model dim.
// ---------------------------------------------------------------------------

struct PatchEmbedConfig {
  int64_t image_h = 64;
  int64_t image_w = 32;
  int64_t channels = 3;
  int64_t patch = 8;
  int64_t dim = 64;

  int64_t tokens() const { return (image_h / patch) * (image_w / patch); }
  int64_t patch_values() const { return channels * patch * patch; }
  void validate() const {
    if (patch < 1 || dim < 1) throw ConfigError("patch_embed: patch and dim must be >= 1");
    if (image_h % patch != 0 || image_w % patch != 0)
      throw ConfigError("patch_embed: patch " + std::to_string(patch) +
                        " must divide image " + std::to_string(image_h) + "x" +
                        std::to_string(image_w));
  }
};

// image [3 x H x W] -> [T x 3P^2]
inline Tensor im2patches(const Tensor& image, const PatchEmbedConfig& cfg) {
  cfg.validate();
  detail::require(image.rank() == 3 && image.dim(0) == cfg.channels &&
                      image.dim(1) == cfg.image_h && image.dim(2) == cfg.image_w,
                  "im2patches: image shape mismatch");
  int64_t P = cfg.patch, H = cfg.image_h, W = cfg.image_w, C = cfg.channels;
  int64_t gh = H / P, gw = W / P, T = gh * gw, F = C * P * P;
  std::vector<Real> out(static_cast<std::size_t>(T * F));
  const Real* px = image.data();
  for (int64_t py = 0; py < gh; ++py)
    for (int64_t pxi = 0; pxi < gw; ++pxi) {
      int64_t tok = py * gw + pxi;
      for (int64_t c = 0; c < C; ++c)
        for (int64_t dy = 0; dy < P; ++dy)
          for (int64_t dx = 0; dx < P; ++dx) {
            int64_t f = (c * P + dy) * P + dx;
            out[static_cast<std::size_t>(tok * F + f)] =
                px[(c * H + py * P + dy) * W + pxi * P + dx];
          }
    }
  Tensor t = Tensor::from({T, F}, std::move(out));
  Tensor img = image;
  record_op("im2patches", t, {image}, [img, t, cfg]() mutable {
    if (!img.requires_grad()) return;
    int64_t P = cfg.patch, H = cfg.image_h, W = cfg.image_w, C = cfg.channels;
    int64_t gh = H / P, gw = W / P, F = C * P * P;
    auto& g = img.grad_buf();
    const auto& gy = t.grad();
    for (int64_t py = 0; py < gh; ++py)
      for (int64_t pxi = 0; pxi < gw; ++pxi) {
        int64_t tok = py * gw + pxi;
        for (int64_t c = 0; c < C; ++c)
          for (int64_t dy = 0; dy < P; ++dy)
            for (int64_t dx = 0; dx < P; ++dx) {
              int64_t f = (c * P + dy) * P + dx;
              g[static_cast<std::size_t>((c * H + py * P + dy) * W + pxi * P + dx)] +=
                  gy[static_cast<std::size_t>(tok * F + f)];
            }
      }
  });
  return t;
}

struct PatchEmbed {
  PatchEmbedConfig cfg;
  Tensor w;  // [3P^2 x D]
  Tensor b;  // [1 x D]

  static PatchEmbed init(const PatchEmbedConfig& cfg, Rng& rng, ParamRegistry& reg,
                         const std::string& prefix) {
    cfg.validate();
    PatchEmbed p;
    p.cfg = cfg;
    p.w = init_linear_weight(cfg.patch_values(), cfg.dim, rng);
    p.b = Tensor::zeros({1, cfg.dim}, true);
    reg.add(prefix + ".w", p.w);
    reg.add(prefix + ".b", p.b);
    return p;
  }

  Tensor forward(const Tensor& image) const { return add(matmul(im2patches(image, cfg), w), b); }
};

inline Tensor add_positional(const Tensor& tokens, const Tensor& pe) {
  detail::require(tokens.shape() == pe.shape(), "add_positional: shapes must match");
  return add(tokens, pe);
}

// ---------------------------------------------------------------------------
// Layer norm parameter pair
// ---------------------------------------------------------------------------

struct NormParams {
  Tensor gamma, beta;

  static NormParams init(int64_t dim, ParamRegistry& reg, const std::string& prefix) {
    NormParams n;
    n.gamma = Tensor::full({dim}, 1.0, true);
    n.beta = Tensor::zeros({dim}, true);
    reg.add(prefix + ".g", n.gamma);
    reg.add(prefix + ".b", n.beta);
    return n;
  }
  Tensor forward(const Tensor& x) const { return layer_norm(x, gamma, beta); }
};

// ---------------------------------------------------------------------------
// Mamba block. Bidirectional version (the Vim block) runs a second branch on
// the reversed sequence with its own parameters:
//   u = norm(in); (x, z) = split(u W_in);
//   f = SSM(silu(conv(x)));  bk = rev(SSM(silu(conv(rev(x)))));
//   out = in + (silu(z) ⊙ f + silu(z) ⊙ bk) W_out
// Unidirectional blocks drop the bk term.
// ---------------------------------------------------------------------------

struct MambaBlockConfig {
  int64_t dim = 64;
  int64_t inner = 128;  // expansion x2
  int64_t state = 8;
  int64_t conv_kernel = 4;
  bool bidirectional = true;
};

struct SsmBranch {
  Tensor conv_w;  // [k x E]
  Tensor conv_b;  // [E]
  SelectiveSSMParams ssm;

  static SsmBranch init(const MambaBlockConfig& cfg, Rng& rng, ParamRegistry& reg,
                        const std::string& prefix) {
    SsmBranch br;
    Real s = static_cast<Real>(std::sqrt(1.0 / static_cast<double>(cfg.conv_kernel)));
    br.conv_w = rand_uniform({cfg.conv_kernel, cfg.inner}, rng, -s, s, true);
    br.conv_b = Tensor::zeros({cfg.inner}, true);
    br.ssm = SelectiveSSMParams::init(cfg.inner, cfg.state, rng);
    reg.add(prefix + ".conv.w", br.conv_w);
    reg.add(prefix + ".conv.b", br.conv_b);
    reg.add(prefix + ".ssm.w_delta", br.ssm.w_delta);
    reg.add(prefix + ".ssm.b_delta", br.ssm.b_delta);
    reg.add(prefix + ".ssm.w_b", br.ssm.w_b);
    reg.add(prefix + ".ssm.w_c", br.ssm.w_c);
    reg.add(prefix + ".ssm.a_log", br.ssm.a_log);
    reg.add(prefix + ".ssm.d_skip", br.ssm.d_skip);
    return br;
  }

  Tensor forward(const Tensor& x) const {
    return selective_scan(silu(conv1d_causal_depthwise(x, conv_w, conv_b)), ssm);
  }
};

struct MambaBlock {
  MambaBlockConfig cfg;
  NormParams norm;
  Tensor w_in;   // [D x 2E]
  Tensor b_in;   // [1 x 2E]
  SsmBranch fwd;
  SsmBranch bwd;  // unused when unidirectional
  Tensor w_out;  // [E x D]
  Tensor b_out;  // [1 x D]

  static MambaBlock init(const MambaBlockConfig& cfg, Rng& rng, ParamRegistry& reg,
                         const std::string& prefix) {
    MambaBlock blk;
    blk.cfg = cfg;
    blk.norm = NormParams::init(cfg.dim, reg, prefix + ".norm");
    blk.w_in = init_linear_weight(cfg.dim, 2 * cfg.inner, rng);
    blk.b_in = Tensor::zeros({1, 2 * cfg.inner}, true);
    reg.add(prefix + ".in.w", blk.w_in);
    reg.add(prefix + ".in.b", blk.b_in);
    blk.fwd = SsmBranch::init(cfg, rng, reg, prefix + ".fwd");
    if (cfg.bidirectional) blk.bwd = SsmBranch::init(cfg, rng, reg, prefix + ".bwd");
    blk.w_out = init_linear_weight(cfg.inner, cfg.dim, rng);
    blk.b_out = Tensor::zeros({1, cfg.dim}, true);
    reg.add(prefix + ".out.w", blk.w_out);
    reg.add(prefix + ".out.b", blk.b_out);
    return blk;
  }

  Tensor forward(const Tensor& tokens) const {
    detail::require(tokens.rank() == 2 && tokens.dim(1) == cfg.dim,
                    "mamba block: token dim mismatch");
    Tensor u = norm.forward(tokens);
    Tensor xz = add(matmul(u, w_in), b_in);
    Tensor x = slice_cols(xz, 0, cfg.inner);
    Tensor z = slice_cols(xz, cfg.inner, 2 * cfg.inner);
    Tensor gate = silu(z);
    Tensor f = fwd.forward(x);
    Tensor mix = mul(gate, f);
    if (cfg.bidirectional) {
      Tensor bk = reverse_rows(bwd.forward(reverse_rows(x)));
      mix = add(mix, mul(gate, bk));
    }
    Tensor out = add(matmul(mix, w_out), b_out);
    return add(tokens, out);
  }
};

using VimBlockParams = MambaBlock;

inline Tensor vim_block_forward(const Tensor& tokens, const MambaBlock& blk) {
  return blk.forward(tokens);
}

// ---------------------------------------------------------------------------
// Backbone: patch embed -> positional -> N bidirectional blocks -> final norm
// ---------------------------------------------------------------------------

struct VimBackboneConfig {
  int64_t image_h = 64;
  int64_t image_w = 32;
  int64_t patch = 8;
  int64_t dim = 64;
  int64_t inner = 128;
  int64_t state = 8;
  int64_t depth = 4;
  int64_t conv_kernel = 4;

  PatchEmbedConfig patch_cfg() const { return {image_h, image_w, 3, patch, dim}; }
  MambaBlockConfig block_cfg() const { return {dim, inner, state, conv_kernel, true}; }
  int64_t tokens() const { return patch_cfg().tokens(); }
};

// Desk-scale named configs; vim-s carries the paper-scale constants.
inline VimBackboneConfig vim_backbone_preset(const std::string& name) {
  if (name == "vim-tiny") return {64, 32, 8, 64, 128, 8, 4, 4};
  if (name == "vim-micro") return {64, 32, 8, 32, 64, 4, 2, 4};
  if (name == "vim-s") return {224, 224, 16, 384, 768, 16, 24, 4};
  throw ConfigError("unknown vim preset: " + name);
}

struct VimBackbone {
  VimBackboneConfig cfg;
  PatchEmbed patch;
  Tensor pos;  // [T x D]
  std::vector<MambaBlock> blocks;
  NormParams final_norm;

  static VimBackbone init(const VimBackboneConfig& cfg, Rng& rng, ParamRegistry& reg,
                          const std::string& prefix) {
    if (cfg.depth < 1) throw ConfigError("vim backbone: depth must be >= 1");
    VimBackbone bb;
    bb.cfg = cfg;
    bb.patch = PatchEmbed::init(cfg.patch_cfg(), rng, reg, prefix + ".patch");
    bb.pos = randn({cfg.tokens(), cfg.dim}, rng, 0.02, true);
    reg.add(prefix + ".pos", bb.pos);
    for (int64_t i = 0; i < cfg.depth; ++i)
      bb.blocks.push_back(
          MambaBlock::init(cfg.block_cfg(), rng, reg, prefix + ".blk" + std::to_string(i)));
    bb.final_norm = NormParams::init(cfg.dim, reg, prefix + ".norm");
    return bb;
  }

  Tensor embed(const Tensor& image) const {
    return add_positional(patch.forward(image), pos);
  }

  Tensor forward(const Tensor& image) const {
    Tensor t = embed(image);
    for (const auto& blk : blocks) t = blk.forward(t);
    return final_norm.forward(t);
  }

  // Streams after each block, before the final norm.
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
