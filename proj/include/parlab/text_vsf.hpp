#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "parlab/ops.hpp"
#include "parlab/params.hpp"
#include "parlab/random.hpp"
#include "parlab/vim.hpp"

namespace parlab {

// ---------------------------------------------------------------------------
// Attribute vocabulary: deterministic lowercase-whitespace tokenizer over the
// attribute phrases themselves; id 0 is reserved for <unk>.
// ---------------------------------------------------------------------------

inline std::vector<std::string> tokenize_phrase(const std::string& phrase) {
  std::vector<std::string> words;
  std::string cur;
  for (char c : phrase) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) words.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) words.push_back(cur);
  return words;
}

struct AttributeVocab {
  std::vector<std::string> phrases;                 // fixed attribute order
  std::vector<std::string> words;                   // id -> word; words[0] == "<unk>"
  std::vector<std::vector<int64_t>> phrase_ids;     // per phrase

  static AttributeVocab build(const std::vector<std::string>& phrases) {
    if (phrases.empty()) throw ConfigError("attribute vocab: no phrases");
    AttributeVocab v;
    v.phrases = phrases;
    std::map<std::string, int64_t> index;  // ordered for determinism
    for (const auto& p : phrases)
      for (const auto& w : tokenize_phrase(p)) index.emplace(w, 0);
    v.words.push_back("<unk>");
    for (auto& [w, id] : index) {
      id = static_cast<int64_t>(v.words.size());
      v.words.push_back(w);
    }
    for (const auto& p : phrases) {
      std::vector<int64_t> ids;
      auto toks = tokenize_phrase(p);
      if (toks.empty()) ids.push_back(0);
      for (const auto& w : toks) {
        auto it = index.find(w);
        ids.push_back(it == index.end() ? 0 : it->second);
      }
      v.phrase_ids.push_back(std::move(ids));
    }
    return v;
  }

  int64_t size() const { return static_cast<int64_t>(phrases.size()); }
  int64_t vocab_size() const { return static_cast<int64_t>(words.size()); }

  // id sequence for an arbitrary phrase; unseen words map to <unk>
  std::vector<int64_t> lookup(const std::string& phrase) const {
    std::vector<int64_t> ids;
    for (const auto& w : tokenize_phrase(phrase)) {
      int64_t id = 0;
      for (std::size_t k = 1; k < words.size(); ++k)
        if (words[k] == w) {
          id = static_cast<int64_t>(k);
          break;
        }
      ids.push_back(id);
    }
    if (ids.empty()) ids.push_back(0);
    return ids;
  }
};

// ---------------------------------------------------------------------------
// Optional attribute-embedding import: magic "AEMB", u32 count, u32 dim,
// then count x dim little-endian f32 rows in vocabulary order.
// ---------------------------------------------------------------------------

inline void write_attr_embeddings(const std::string& path, int64_t count, int64_t dim,
                                  const std::vector<float>& rows) {
  if (static_cast<int64_t>(rows.size()) != count * dim)
    throw ShapeError("write_attr_embeddings: row data does not match count x dim");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path);
  f.write("AEMB", 4);
  uint32_t c = static_cast<uint32_t>(count), d = static_cast<uint32_t>(dim);
  f.write(reinterpret_cast<const char*>(&c), 4);
  f.write(reinterpret_cast<const char*>(&d), 4);
  f.write(reinterpret_cast<const char*>(rows.data()), static_cast<std::streamsize>(rows.size() * 4));
}

inline std::pair<int64_t, std::vector<float>> read_attr_embeddings(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "AEMB", 4) != 0)
    throw ParseError("attribute embedding file " + path + ": bad magic");
  uint32_t c = 0, d = 0;
  f.read(reinterpret_cast<char*>(&c), 4);
  f.read(reinterpret_cast<char*>(&d), 4);
  if (!f) throw ParseError("attribute embedding file " + path + ": truncated header");
  std::vector<float> rows(static_cast<std::size_t>(c) * d);
  f.read(reinterpret_cast<char*>(rows.data()), static_cast<std::streamsize>(rows.size() * 4));
  if (!f) throw ParseError("attribute embedding file " + path + ": truncated rows");
  return {static_cast<int64_t>(d), std::move(rows)};
}

// ---------------------------------------------------------------------------
// Semantic branch: per-attribute mean of word embeddings (or imported rows),
// projected to the model dim; then K unidirectional text-Mamba blocks.
// ---------------------------------------------------------------------------

struct SemanticEncoderConfig {
  int64_t embed_dim = 32;   // word-embedding width D_t
  int64_t model_dim = 64;   // output width D
  int64_t text_blocks = 2;  // K
  int64_t state = 4;
  std::string import_file;  // optional AEMB path
};

struct SemanticEncoder {
  SemanticEncoderConfig cfg;
  AttributeVocab vocab;
  Tensor table;      // [V x D_t]; unused when imported
  Tensor imported;   // [L x dim] frozen base when import_file is set
  Tensor proj_w;     // [D_t x D]
  Tensor proj_b;     // [1 x D]
  std::vector<MambaBlock> text_blocks;

  static SemanticEncoder init(const SemanticEncoderConfig& cfg, AttributeVocab vocab, Rng& rng,
                              ParamRegistry& reg, const std::string& prefix) {
    SemanticEncoder enc;
    enc.cfg = cfg;
    enc.vocab = std::move(vocab);
    int64_t base_dim = cfg.embed_dim;
    if (!cfg.import_file.empty()) {
      auto [dim, rows] = read_attr_embeddings(cfg.import_file);
      if (static_cast<int64_t>(rows.size()) != enc.vocab.size() * dim)
        throw ConfigError("attribute embedding file rows do not match attribute count");
      std::vector<Real> vals(rows.begin(), rows.end());
      enc.imported = Tensor::from({enc.vocab.size(), dim}, std::move(vals));
      base_dim = dim;
    } else {
      enc.table = randn({enc.vocab.vocab_size(), cfg.embed_dim}, rng, 0.02, true);
      reg.add(prefix + ".table", enc.table);
    }
    enc.proj_w = init_linear_weight(base_dim, cfg.model_dim, rng);
    enc.proj_b = Tensor::zeros({1, cfg.model_dim}, true);
    reg.add(prefix + ".proj.w", enc.proj_w);
    reg.add(prefix + ".proj.b", enc.proj_b);
    MambaBlockConfig bc{cfg.model_dim, 2 * cfg.model_dim, cfg.state, 4, /*bidirectional=*/false};
    for (int64_t i = 0; i < cfg.text_blocks; ++i)
      enc.text_blocks.push_back(
          MambaBlock::init(bc, rng, reg, prefix + ".blk" + std::to_string(i)));
    return enc;
  }

  // X_s: one pooled token per attribute, projected to the model dim.
  Tensor embed_attributes() const {
    Tensor base;
    if (imported.defined()) {
      base = imported;
    } else {
      std::vector<Tensor> rows;
      rows.reserve(static_cast<std::size_t>(vocab.size()));
      for (const auto& ids : vocab.phrase_ids)
        rows.push_back(mean_axis0(embedding(table, ids)));  // [1 x D_t]
      base = rows.size() == 1 ? rows[0] : rows[0];
      for (std::size_t i = 1; i < rows.size(); ++i) base = concat_rows(base, rows[i]);
    }
    return add(matmul(base, proj_w), proj_b);  // [L x D]
  }

  Tensor text_mamba_forward(const Tensor& xs) const {
    Tensor t = xs;
    for (const auto& blk : text_blocks) t = blk.forward(t);
    return t;
  }

  Tensor forward() const { return text_mamba_forward(embed_attributes()); }
};

// ---------------------------------------------------------------------------
// Vision-Semantic Fusion: run fusion Mamba blocks over [X_v, X_s] and keep
// the trailing attribute rows as classification features X_F.
// ---------------------------------------------------------------------------

struct VsfFusionConfig {
  int64_t dim = 64;
  int64_t fusion_blocks = 2;  // F
  int64_t state = 4;
  bool bidirectional = true;
};

struct VsfFusion {
  VsfFusionConfig cfg;
  std::vector<MambaBlock> blocks;

  static VsfFusion init(const VsfFusionConfig& cfg, Rng& rng, ParamRegistry& reg,
                        const std::string& prefix) {
    VsfFusion f;
    f.cfg = cfg;
    MambaBlockConfig bc{cfg.dim, 2 * cfg.dim, cfg.state, 4, cfg.bidirectional};
    for (int64_t i = 0; i < cfg.fusion_blocks; ++i)
      f.blocks.push_back(MambaBlock::init(bc, rng, reg, prefix + ".blk" + std::to_string(i)));
    return f;
  }

  // X_v [T x D], X_s_enh [L x D] -> X_F [L x D]
  Tensor fuse(const Tensor& xv, const Tensor& xs_enh) const {
    detail::require(xv.rank() == 2 && xs_enh.rank() == 2 && xv.dim(1) == xs_enh.dim(1),
                    "vsf_fuse: feature dims differ");
    if (xv.dim(1) != cfg.dim) throw ConfigError("vsf_fuse: configured dim mismatch");
    int64_t L = xs_enh.dim(0);
    Tensor x = concat_rows(xv, xs_enh);  // visual tokens first
    for (const auto& blk : blocks) x = blk.forward(x);
    return slice_rows(x, x.dim(0) - L, x.dim(0));
  }
};

inline Tensor vsf_fuse(const Tensor& xv, const Tensor& xs_enh, const VsfFusion& fusion) {
  return fusion.fuse(xv, xs_enh);
}

}  // namespace parlab
