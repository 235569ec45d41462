#pragma once

#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "parlab/tensor.hpp"

namespace parlab {

// ---------------------------------------------------------------------------
// INI-style config: [section] headers, key = value lines, #/; comments.
// ---------------------------------------------------------------------------

struct IniFile {
  // section -> ordered (key, value) pairs
  std::vector<std::pair<std::string, std::vector<std::pair<std::string, std::string>>>> sections;

  std::vector<std::pair<std::string, std::string>>* find(const std::string& name) {
    for (auto& [n, kv] : sections)
      if (n == name) return &kv;
    return nullptr;
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace detail

inline IniFile parse_ini(const std::string& text) {
  IniFile ini;
  std::istringstream is(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw ParseError("config line " + std::to_string(lineno) + ": unterminated section");
      section = detail::trim(t.substr(1, t.size() - 2));
      if (!ini.find(section)) ini.sections.push_back({section, {}});
      continue;
    }
    auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ParseError("config line " + std::to_string(lineno) + ": expected key = value");
    if (section.empty())
      throw ParseError("config line " + std::to_string(lineno) + ": key outside any section");
    std::string key = detail::trim(t.substr(0, eq));
    std::string val = detail::trim(t.substr(eq + 1));
    if (key.empty()) throw ParseError("config line " + std::to_string(lineno) + ": empty key");
    ini.find(section)->push_back({key, val});
  }
  return ini;
}

namespace detail {

inline int64_t to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    int64_t r = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return r;
  } catch (...) {
    throw ParseError("config key " + key + ": expected integer, got '" + v + "'");
  }
}

inline double to_real(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("");
    return r;
  } catch (...) {
    throw ParseError("config key " + key + ": expected number, got '" + v + "'");
  }
}

inline bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ParseError("config key " + key + ": expected boolean, got '" + v + "'");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Model configuration (resolved, preset-free).
// ---------------------------------------------------------------------------

struct ModelConfig {
  std::string variant = "vim";  // vim | vit | vsf | a..h
  int64_t image_h = 64, image_w = 32, patch = 8;
  int64_t vim_dim = 64, vim_depth = 4, vim_expand = 2, vim_state = 8;
  int64_t vit_dim = 128, vit_depth = 4, vit_heads = 4;
  int64_t text_blocks = 2, fusion_blocks = 2, text_embed_dim = 32;
  bool fusion_bidirectional = true;
  int64_t token_reduce = 4;
  int64_t ratio = 2;
  int64_t transition_layer = 0;  // 0 -> midpoint
  std::string distill_mode = "logit";
  std::string teacher_ckpt;
  std::string attr_embed_file;

  bool is_hybrid() const { return variant.size() == 1 && variant[0] >= 'a' && variant[0] <= 'h'; }
  bool needs_teacher() const {
    return variant == "e" || variant == "g" || variant == "h";
  }
};

inline void apply_vim_preset(ModelConfig& m, const std::string& name) {
  if (name == "vim-tiny") {
    m.vim_dim = 64; m.vim_depth = 4; m.vim_expand = 2; m.vim_state = 8;
    m.patch = 8; m.image_h = 64; m.image_w = 32;
  } else if (name == "vim-micro") {
    m.vim_dim = 32; m.vim_depth = 2; m.vim_expand = 2; m.vim_state = 4;
    m.patch = 8; m.image_h = 64; m.image_w = 32;
  } else if (name == "vim-s") {
    m.vim_dim = 384; m.vim_depth = 24; m.vim_expand = 2; m.vim_state = 16;
    m.patch = 16; m.image_h = 224; m.image_w = 224;
  } else {
    throw ConfigError("unknown vim preset: " + name);
  }
}

inline void apply_vit_preset(ModelConfig& m, const std::string& name) {
  if (name == "vit-tiny") {
    m.vit_dim = 128; m.vit_depth = 4; m.vit_heads = 4;
    m.patch = 8; m.image_h = 64; m.image_w = 32;
  } else if (name == "vit-micro") {
    m.vit_dim = 64; m.vit_depth = 2; m.vit_heads = 2;
    m.patch = 8; m.image_h = 64; m.image_w = 32;
  } else if (name == "vit-s") {
    m.vit_dim = 384; m.vit_depth = 12; m.vit_heads = 6;
    m.patch = 16; m.image_h = 224; m.image_w = 224;
  } else if (name == "vit-b") {
    m.vit_dim = 768; m.vit_depth = 12; m.vit_heads = 12;
    m.patch = 16; m.image_h = 224; m.image_w = 224;
  } else {
    throw ConfigError("unknown vit preset: " + name);
  }
}

inline ModelConfig model_config_from(const std::vector<std::pair<std::string, std::string>>& kv) {
  ModelConfig m;
  for (const auto& [k, v] : kv) {
    if (k == "variant") m.variant = v;
    else if (k == "vim_preset") apply_vim_preset(m, v);
    else if (k == "vit_preset") apply_vit_preset(m, v);
    else if (k == "patch") m.patch = detail::to_int(k, v);
    else if (k == "image_h") m.image_h = detail::to_int(k, v);
    else if (k == "image_w") m.image_w = detail::to_int(k, v);
    else if (k == "vim_dim") m.vim_dim = detail::to_int(k, v);
    else if (k == "vim_depth") m.vim_depth = detail::to_int(k, v);
    else if (k == "vim_expand") m.vim_expand = detail::to_int(k, v);
    else if (k == "vim_state") m.vim_state = detail::to_int(k, v);
    else if (k == "vit_dim") m.vit_dim = detail::to_int(k, v);
    else if (k == "vit_depth") m.vit_depth = detail::to_int(k, v);
    else if (k == "vit_heads") m.vit_heads = detail::to_int(k, v);
    else if (k == "text_blocks") m.text_blocks = detail::to_int(k, v);
    else if (k == "fusion_blocks") m.fusion_blocks = detail::to_int(k, v);
    else if (k == "text_embed_dim") m.text_embed_dim = detail::to_int(k, v);
    else if (k == "fusion_bidirectional") m.fusion_bidirectional = detail::to_bool(k, v);
    else if (k == "token_reduce") m.token_reduce = detail::to_int(k, v);
    else if (k == "ratio") m.ratio = detail::to_int(k, v);
    else if (k == "transition_layer") m.transition_layer = detail::to_int(k, v);
    else if (k == "distill_mode") m.distill_mode = v;
    else if (k == "teacher_ckpt") m.teacher_ckpt = v;
    else if (k == "attr_embed_file") m.attr_embed_file = v;
    else throw ConfigError("unknown [model] key: " + k);
  }
  static const char* variants[] = {"vim", "vit", "vsf", "a", "b", "c", "d", "e", "f", "g", "h"};
  bool ok = false;
  for (const char* s : variants) ok = ok || (m.variant == s);
  if (!ok) throw ConfigError("unknown model variant: " + m.variant);
  if (m.distill_mode != "logit" && m.distill_mode != "feature")
    throw ConfigError("distill_mode must be logit or feature");
  return m;
}

// Canonical resolved snapshot used inside checkpoints.
inline std::string model_config_to_text(const ModelConfig& m,
                                        const std::vector<std::string>& attr_names) {
  std::ostringstream os;
  os << "[model]\n";
  os << "variant = " << m.variant << "\n";
  os << "patch = " << m.patch << "\n";
  os << "image_h = " << m.image_h << "\n";
  os << "image_w = " << m.image_w << "\n";
  os << "vim_dim = " << m.vim_dim << "\n";
  os << "vim_depth = " << m.vim_depth << "\n";
  os << "vim_expand = " << m.vim_expand << "\n";
  os << "vim_state = " << m.vim_state << "\n";
  os << "vit_dim = " << m.vit_dim << "\n";
  os << "vit_depth = " << m.vit_depth << "\n";
  os << "vit_heads = " << m.vit_heads << "\n";
  os << "text_blocks = " << m.text_blocks << "\n";
  os << "fusion_blocks = " << m.fusion_blocks << "\n";
  os << "text_embed_dim = " << m.text_embed_dim << "\n";
  os << "fusion_bidirectional = " << (m.fusion_bidirectional ? "true" : "false") << "\n";
  os << "token_reduce = " << m.token_reduce << "\n";
  os << "ratio = " << m.ratio << "\n";
  os << "transition_layer = " << m.transition_layer << "\n";
  os << "distill_mode = " << m.distill_mode << "\n";
  os << "[attrs]\n";
  os << "names = ";
  for (std::size_t i = 0; i < attr_names.size(); ++i) os << (i ? "," : "") << attr_names[i];
  os << "\n";
  return os.str();
}

inline std::pair<ModelConfig, std::vector<std::string>> model_config_from_text(
    const std::string& text) {
  IniFile ini = parse_ini(text);
  auto* model_kv = ini.find("model");
  if (!model_kv) throw ConfigError("config snapshot: missing [model] section");
  ModelConfig m = model_config_from(*model_kv);
  std::vector<std::string> attrs;
  if (auto* akv = ini.find("attrs")) {
    for (const auto& [k, v] : *akv) {
      if (k != "names") throw ConfigError("unknown [attrs] key: " + k);
      std::istringstream is(v);
      std::string name;
      while (std::getline(is, name, ',')) attrs.push_back(detail::trim(name));
    }
  }
  return {m, attrs};
}

// ---------------------------------------------------------------------------
// Full training configuration.
// ---------------------------------------------------------------------------

struct TrainConfig {
  ModelConfig model;
  struct {
    int64_t epochs = 20;
    int64_t batch = 32;
    Real lr = Real(1e-3);
    uint64_t seed = 1;
    std::string weight_mode = "deepmar";
    Real distill_lambda = Real(1);
    Real distill_tau = Real(2);
    Real target_ma = Real(0);  // early stop once both targets hit; 0 disables
    Real target_f1 = Real(0);
  } train;
  struct {
    std::string manifest;
    std::string eval_manifest;
    bool augment = true;
  } data;
};

inline TrainConfig train_config_from_text(const std::string& text) {
  IniFile ini = parse_ini(text);
  for (const auto& [name, kv] : ini.sections)
    if (name != "model" && name != "train" && name != "data")
      throw ConfigError("unknown config section: [" + name + "]");
  TrainConfig cfg;
  if (auto* kv = ini.find("model")) cfg.model = model_config_from(*kv);
  if (auto* kv = ini.find("train")) {
    for (const auto& [k, v] : *kv) {
      if (k == "epochs") cfg.train.epochs = detail::to_int(k, v);
      else if (k == "batch") cfg.train.batch = detail::to_int(k, v);
      else if (k == "lr") cfg.train.lr = static_cast<Real>(detail::to_real(k, v));
      else if (k == "seed") cfg.train.seed = static_cast<uint64_t>(detail::to_int(k, v));
      else if (k == "weight_mode") cfg.train.weight_mode = v;
      else if (k == "distill_lambda") cfg.train.distill_lambda = static_cast<Real>(detail::to_real(k, v));
      else if (k == "distill_tau") cfg.train.distill_tau = static_cast<Real>(detail::to_real(k, v));
      else if (k == "target_ma") cfg.train.target_ma = static_cast<Real>(detail::to_real(k, v));
      else if (k == "target_f1") cfg.train.target_f1 = static_cast<Real>(detail::to_real(k, v));
      else throw ConfigError("unknown [train] key: " + k);
    }
  }
  if (auto* kv = ini.find("data")) {
    for (const auto& [k, v] : *kv) {
      if (k == "manifest") cfg.data.manifest = v;
      else if (k == "eval_manifest") cfg.data.eval_manifest = v;
      else if (k == "augment") cfg.data.augment = detail::to_bool(k, v);
      else throw ConfigError("unknown [data] key: " + k);
    }
  }
  if (cfg.train.lr <= 0) throw ConfigError("train.lr must be > 0");
  if (cfg.train.epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (cfg.train.batch < 1) throw ConfigError("train.batch must be >= 1");
  if (cfg.train.distill_tau <= 0) throw ConfigError("train.distill_tau must be > 0");
  if (cfg.train.distill_lambda < 0) throw ConfigError("train.distill_lambda must be >= 0");
  return cfg;
}

}  // namespace parlab
