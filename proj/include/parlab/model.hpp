#pragma once

#include <memory>
#include <string>
#include <vector>

#include "parlab/config.hpp"
#include "parlab/head.hpp"
#include "parlab/params.hpp"
#include "parlab/text_vsf.hpp"
#include "parlab/vim.hpp"
#include "parlab/vit.hpp"

namespace parlab {

// ---------------------------------------------------------------------------
// Distillation loss (returns the distillation term alone; callers weight it).
// ---------------------------------------------------------------------------

struct DistillLossConfig {
  std::string mode = "logit";  // logit | feature
  Real tau = Real(2);
  Real lambda = Real(1);
};

inline Tensor mse(const Tensor& a, const Tensor& b) {
  detail::require(a.shape() == b.shape(),
                  "mse: shapes differ after adaptation: " + shape_str(a.shape()) + " vs " +
                      shape_str(b.shape()));
  Tensor d = sub(a, b);
  return scale(sum_all(mul(d, d)), Real(1) / static_cast<Real>(a.numel()));
}

inline Tensor distill_loss(const std::vector<Tensor>& student_feats_projected,
                           const std::vector<Tensor>& teacher_feats,
                           const Tensor& student_logits, const Tensor& teacher_logits,
                           const DistillLossConfig& cfg) {
  if (cfg.tau <= 0) throw ConfigError("distill: tau must be > 0");
  if (cfg.mode == "feature") {
    if (student_feats_projected.size() != teacher_feats.size() || student_feats_projected.empty())
      throw ShapeError("distill: stage-matched feature lists must align");
    Tensor total = mse(student_feats_projected[0], teacher_feats[0]);
    for (std::size_t i = 1; i < student_feats_projected.size(); ++i)
      total = add(total, mse(student_feats_projected[i], teacher_feats[i]));
    return scale(total, Real(1) / static_cast<Real>(student_feats_projected.size()));
  }
  if (cfg.mode != "logit") throw ConfigError("distill: unknown mode " + cfg.mode);
  // KL(softened teacher || softened student) per attribute binary distribution
  detail::require(student_logits.shape() == teacher_logits.shape(),
                  "distill: logit shapes differ");
  int64_t L = student_logits.numel();
  std::vector<Real> q(static_cast<std::size_t>(L)), lnq(q.size()), ln1mq(q.size());
  for (int64_t j = 0; j < L; ++j) {
    Real qi = detail::sigmoid_s(teacher_logits.v(j) / cfg.tau);
    qi = std::min(Real(1) - kProbClamp, std::max(kProbClamp, qi));
    q[static_cast<std::size_t>(j)] = qi;
    lnq[static_cast<std::size_t>(j)] = std::log(qi);
    ln1mq[static_cast<std::size_t>(j)] = std::log(Real(1) - qi);
  }
  Tensor tq = Tensor::from(student_logits.shape(), std::move(q));
  Tensor tlnq = Tensor::from(student_logits.shape(), std::move(lnq));
  Tensor tln1mq = Tensor::from(student_logits.shape(), std::move(ln1mq));
  Tensor ones = Tensor::full(student_logits.shape(), Real(1));
  Tensor p = clamp(sigmoid(scale(student_logits, Real(1) / cfg.tau)), kProbClamp,
                   Real(1) - kProbClamp);
  Tensor kl_pos = mul(tq, sub(tlnq, log_t(p)));
  Tensor kl_neg = mul(sub(ones, tq), sub(tln1mq, log_t(sub(ones, p))));
  Tensor kl = scale(sum_all(add(kl_pos, kl_neg)), Real(1) / static_cast<Real>(L));
  return scale(kl, cfg.tau * cfg.tau);
}

// ---------------------------------------------------------------------------
// Model interface: per-sample probability vector and training loss.
// ---------------------------------------------------------------------------

class ParModel {
 public:
  ModelConfig cfg;
  std::vector<std::string> attr_names;
  ParamRegistry reg;
  LossWeights weights;
  DistillLossConfig distill;

  virtual ~ParModel() = default;

  int64_t attrs() const { return static_cast<int64_t>(attr_names.size()); }
  std::vector<Tensor> trainable() const { return reg.trainable(); }

  virtual Tensor probs(const Tensor& image) const = 0;
  virtual Tensor sample_loss(const Tensor& image, const std::vector<uint8_t>& y) const {
    return weighted_bce(probs(image), y, weights);
  }

 protected:
  ParModel(ModelConfig c, std::vector<std::string> names)
      : cfg(std::move(c)), attr_names(std::move(names)) {
    if (attr_names.empty()) throw ConfigError("model: no attributes");
    weights = LossWeights::uniform(attr_names.size());
  }
};

inline VimBackboneConfig vim_backbone_config(const ModelConfig& m) {
  return {m.image_h, m.image_w, m.patch, m.vim_dim, m.vim_expand * m.vim_dim,
          m.vim_state, m.vim_depth, 4};
}

inline VitBackboneConfig vit_backbone_config(const ModelConfig& m) {
  return {m.image_h, m.image_w, m.patch, m.vit_dim, m.vit_heads, m.vit_depth, 4};
}

// Vision-only, Vim backbone.
class VimModel : public ParModel {
 public:
  VimBackbone backbone;
  ParHead head;

  VimModel(ModelConfig c, std::vector<std::string> names, Rng& rng)
      : ParModel(std::move(c), std::move(names)) {
    backbone = VimBackbone::init(vim_backbone_config(cfg), rng, reg, "backbone");
    head = ParHead::init(HeadMode::pooled, cfg.vim_dim, attrs(), rng, reg, "head");
  }

  Tensor probs(const Tensor& image) const override {
    return head_forward(backbone.forward(image), head);
  }
};

// Vision-only, ViT backbone.
class VitModel : public ParModel {
 public:
  VitBackbone backbone;
  ParHead head;

  VitModel(ModelConfig c, std::vector<std::string> names, Rng& rng)
      : ParModel(std::move(c), std::move(names)) {
    backbone = VitBackbone::init(vit_backbone_config(cfg), rng, reg, "backbone");
    head = ParHead::init(HeadMode::pooled, cfg.vit_dim, attrs(), rng, reg, "head");
  }

  Tensor probs(const Tensor& image) const override {
    return head_forward(backbone.forward(image), head);
  }

  Tensor logits(const Tensor& image) const {
    return head.logits(backbone.forward(image));
  }
};

// Image-text fusion: Vim backbone + semantic branch + VSF fusion + one FFN
// per attribute on its own fused feature row.
class VsfModel : public ParModel {
 public:
  VimBackbone backbone;
  SemanticEncoder text;
  VsfFusion fusion;
  ParHead head;

  VsfModel(ModelConfig c, std::vector<std::string> names, Rng& rng)
      : ParModel(std::move(c), std::move(names)) {
    backbone = VimBackbone::init(vim_backbone_config(cfg), rng, reg, "backbone");
    SemanticEncoderConfig tc;
    tc.embed_dim = cfg.text_embed_dim;
    tc.model_dim = cfg.vim_dim;
    tc.text_blocks = cfg.text_blocks;
    tc.state = cfg.vim_state;
    tc.import_file = cfg.attr_embed_file;
    text = SemanticEncoder::init(tc, AttributeVocab::build(attr_names), rng, reg, "text");
    VsfFusionConfig fc{cfg.vim_dim, cfg.fusion_blocks, cfg.vim_state, cfg.fusion_bidirectional};
    fusion = VsfFusion::init(fc, rng, reg, "fusion");
    head = ParHead::init(HeadMode::per_attribute, cfg.vim_dim, attrs(), rng, reg, "head");
  }

  Tensor fused_features(const Tensor& image) const {
    Tensor xv = backbone.forward(image);
    Tensor xs = text.forward();
    return fusion.fuse(xv, xs);
  }

  Tensor probs(const Tensor& image) const override {
    return head_forward(fused_features(image), head);
  }
};

// Frozen teacher handle used by the hybrid wirings.
struct Teacher {
  std::shared_ptr<VitModel> model;

  static Teacher freeze(std::shared_ptr<VitModel> m) {
    for (auto& [name, t] : m->reg.items) t.set_requires_grad(false);
    return Teacher{std::move(m)};
  }
  bool frozen() const {
    for (const auto& [name, t] : model->reg.items)
      if (t.requires_grad()) return false;
    return true;
  }
};

}  // namespace parlab
