/*
 * Copyright 2026 The Myna Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// SimpleViT-style encoder over masked patch tokens.
//
// Each patch configuration owns a linear tokenizer; fixed 2D sinusoidal
// encodings are added at every token's original grid position, so masking
// removes tokens without renumbering the survivors. The encoder is a stack of
// pre-norm transformer blocks followed by a final layer norm and mean pooling
// over tokens. Contrastive models carry a 2-layer projector; MAE models carry
// a light decoder instead.
//
// Several variable-length token sequences ("views") are processed in one
// graph by stacking their rows; attention never crosses view boundaries.

#ifndef MYNA_VIT_HPP_
#define MYNA_VIT_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "myna/autodiff.hpp"
#include "myna/error.hpp"
#include "myna/masking.hpp"
#include "myna/random.hpp"

namespace myna::vit {

enum class ModelKind { kContrastive, kMae };

struct ModelConfig {
  std::size_t dim = 128;
  std::size_t depth = 4;
  std::size_t heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t proj_dim = 128;
  std::vector<PatchConfig> patch_cfgs{PatchConfig::square()};
  std::size_t spec_rows = 128;  // mel bins
  std::size_t spec_cols = 96;   // frames
  ModelKind kind = ModelKind::kContrastive;
  std::size_t decoder_dim = 64;
  std::size_t decoder_depth = 2;
  std::size_t decoder_heads = 4;

  void validate() const {
    if (depth < 1) throw ConfigError("model.depth must be >= 1");
    if (dim == 0 || heads == 0 || dim % heads != 0) {
      throw ConfigError("model.dim must be a positive multiple of model.heads");
    }
    if (dim % 4 != 0) throw ConfigError("model.dim must be divisible by 4 for 2D positional encodings");
    if (mlp_ratio == 0 || proj_dim == 0) throw ConfigError("model.mlp_ratio and model.proj_dim must be positive");
    if (patch_cfgs.empty() || patch_cfgs.size() > 2) throw ConfigError("model needs one or two patch configurations");
    for (const auto& p : patch_cfgs) {
      if (p.patch_h == 0 || p.patch_w == 0 || spec_rows % p.patch_h != 0 || spec_cols % p.patch_w != 0) {
        throw ConfigError("patch '" + p.name + "' does not tile the spectrogram");
      }
    }
    if (patch_cfgs.size() == 2 && patch_cfgs[0].name == patch_cfgs[1].name) {
      throw ConfigError("patch configurations need distinct names");
    }
    if (kind == ModelKind::kMae) {
      if (patch_cfgs.size() != 1) throw ConfigError("MAE models use a single patch configuration");
      if (decoder_depth < 1 || decoder_heads == 0 || decoder_dim % decoder_heads != 0 || decoder_dim % 4 != 0) {
        throw ConfigError("decoder_dim must be a multiple of decoder_heads and of 4");
      }
    }
  }

  const PatchConfig& patch(const std::string& name) const {
    for (const auto& p : patch_cfgs) {
      if (p.name == name) return p;
    }
    throw ConfigError("model has no tokenizer for patch configuration '" + name + "'");
  }

  // Desk-scale default: trains on a CPU in minutes.
  static ModelConfig desk() { return {}; }

  // ViT-S/16 shape with both tokenizers, for parameter-count parity.
  static ModelConfig vit_small() {
    ModelConfig c;
    c.dim = 384;
    c.depth = 12;
    c.heads = 6;
    c.mlp_ratio = 4;
    c.proj_dim = 128;
    c.patch_cfgs = {PatchConfig::square(), PatchConfig::vertical()};
    return c;
  }
};

// Fixed 2D sinusoidal table, (rows*cols) x dim, row-major over grid cells.
// For k < dim/4 with w_k = 10000^(-4k/dim), cell (y, x) holds four groups of
// dim/4 values: sin(y w), cos(y w), sin(x w), cos(x w).
inline std::vector<double> posenc_2d(std::size_t rows, std::size_t cols, std::size_t dim) {
  if (dim == 0 || dim % 4 != 0) throw ConfigError("posenc_2d: dim must be divisible by 4");
  const std::size_t quarter = dim / 4;
  std::vector<double> table(rows * cols * dim);
  for (std::size_t y = 0; y < rows; ++y) {
    for (std::size_t x = 0; x < cols; ++x) {
      double* cell = table.data() + (y * cols + x) * dim;
      for (std::size_t k = 0; k < quarter; ++k) {
        const double omega = std::pow(10000.0, -4.0 * static_cast<double>(k) / static_cast<double>(dim));
        cell[k] = std::sin(static_cast<double>(y) * omega);
        cell[quarter + k] = std::cos(static_cast<double>(y) * omega);
        cell[2 * quarter + k] = std::sin(static_cast<double>(x) * omega);
        cell[3 * quarter + k] = std::cos(static_cast<double>(x) * omega);
      }
    }
  }
  return table;
}

namespace detail {

inline const std::vector<double>& cached_posenc(std::size_t rows, std::size_t cols, std::size_t dim) {
  thread_local std::map<std::tuple<std::size_t, std::size_t, std::size_t>, std::vector<double>> cache;
  auto key = std::make_tuple(rows, cols, dim);
  auto it = cache.find(key);
  if (it == cache.end()) it = cache.emplace(key, posenc_2d(rows, cols, dim)).first;
  return it->second;
}

// Rows of the positional table for the given grid coordinates.
template <class T>
ad::Tensor<T> posenc_rows(std::span<const GridCoord> coords, std::size_t grid_cols,
                          std::size_t grid_rows, std::size_t dim) {
  const auto& table = cached_posenc(grid_rows, grid_cols, dim);
  std::vector<T> out(coords.size() * dim);
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const double* src = table.data() + (coords[i].row * grid_cols + coords[i].col) * dim;
    for (std::size_t j = 0; j < dim; ++j) out[i * dim + j] = static_cast<T>(src[j]);
  }
  return ad::Tensor<T>::from({coords.size(), dim}, std::move(out));
}

}  // namespace detail

// Named parameter table. Names are dotted paths such as
// "enc.blocks.0.attn.qkv.weight"; the map keeps them sorted, which fixes the
// iteration order everywhere (optimizer, checkpoints).
template <class T>
struct ModelParams {
  using value_type = T;

  ModelConfig config;
  std::map<std::string, ad::Tensor<T>> tensors;

  const ad::Tensor<T>& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ConfigError("missing parameter '" + name + "'");
    return it->second;
  }
  bool contains(const std::string& name) const { return tensors.count(name) != 0; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : tensors) n += t.numel();
    return n;
  }

  void zero_grad() {
    for (auto& [name, t] : tensors) t.zero_grad();
  }
};

inline std::string tokenizer_prefix(const PatchConfig& cfg) { return "tok." + cfg.name; }

// Parameter names and shapes for a configuration, in construction order.
inline std::vector<std::pair<std::string, ad::Shape>> parameter_layout(const ModelConfig& cfg) {
  std::vector<std::pair<std::string, ad::Shape>> layout;
  auto block = [&](const std::string& prefix, std::size_t d) {
    const std::size_t hidden = d * cfg.mlp_ratio;
    layout.push_back({prefix + "ln1.gamma", {d}});
    layout.push_back({prefix + "ln1.beta", {d}});
    layout.push_back({prefix + "attn.qkv.weight", {d, 3 * d}});
    layout.push_back({prefix + "attn.qkv.bias", {3 * d}});
    layout.push_back({prefix + "attn.out.weight", {d, d}});
    layout.push_back({prefix + "attn.out.bias", {d}});
    layout.push_back({prefix + "ln2.gamma", {d}});
    layout.push_back({prefix + "ln2.beta", {d}});
    layout.push_back({prefix + "mlp.fc1.weight", {d, hidden}});
    layout.push_back({prefix + "mlp.fc1.bias", {hidden}});
    layout.push_back({prefix + "mlp.fc2.weight", {hidden, d}});
    layout.push_back({prefix + "mlp.fc2.bias", {d}});
  };
  for (const auto& p : cfg.patch_cfgs) {
    layout.push_back({tokenizer_prefix(p) + ".weight", {p.patch_size(), cfg.dim}});
    layout.push_back({tokenizer_prefix(p) + ".bias", {cfg.dim}});
  }
  for (std::size_t i = 0; i < cfg.depth; ++i) block("enc.blocks." + std::to_string(i) + ".", cfg.dim);
  layout.push_back({"enc.norm.gamma", {cfg.dim}});
  layout.push_back({"enc.norm.beta", {cfg.dim}});
  if (cfg.kind == ModelKind::kContrastive) {
    layout.push_back({"proj.fc1.weight", {cfg.dim, cfg.dim}});
    layout.push_back({"proj.fc1.bias", {cfg.dim}});
    layout.push_back({"proj.fc2.weight", {cfg.dim, cfg.proj_dim}});
    layout.push_back({"proj.fc2.bias", {cfg.proj_dim}});
  } else {
    const std::size_t dd = cfg.decoder_dim;
    layout.push_back({"dec.embed.weight", {cfg.dim, dd}});
    layout.push_back({"dec.embed.bias", {dd}});
    layout.push_back({"dec.mask_token", {1, dd}});
    for (std::size_t i = 0; i < cfg.decoder_depth; ++i) block("dec.blocks." + std::to_string(i) + ".", dd);
    layout.push_back({"dec.norm.gamma", {dd}});
    layout.push_back({"dec.norm.beta", {dd}});
    layout.push_back({"dec.head.weight", {dd, cfg.patch_cfgs.front().patch_size()}});
    layout.push_back({"dec.head.bias", {cfg.patch_cfgs.front().patch_size()}});
  }
  return layout;
}

// Xavier-uniform matrices, zero biases, unit layer-norm scales, N(0, 0.02)
// mask token.
inline ModelParams<float> init_params(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ModelParams<float> params;
  params.config = cfg;
  Rng rng = derive_rng(seed, 0x1417);
  auto ends_with = [](const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  for (const auto& [name, shape] : parameter_layout(cfg)) {
    std::vector<float> v(ad::numel_of(shape), 0.0f);
    if (ends_with(name, ".gamma")) {
      std::fill(v.begin(), v.end(), 1.0f);
    } else if (ends_with(name, "mask_token")) {
      std::normal_distribution<double> normal(0.0, 0.02);
      for (float& x : v) x = static_cast<float>(normal(rng));
    } else if (shape.size() == 2) {
      const double bound = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
      for (float& x : v) x = static_cast<float>((2.0 * uniform01(rng) - 1.0) * bound);
    }
    params.tensors.emplace(name, ad::Tensor<float>::from(shape, std::move(v), true));
  }
  return params;
}

template <class To, class From>
ModelParams<To> cast_params(const ModelParams<From>& src, bool requires_grad = true) {
  ModelParams<To> out;
  out.config = src.config;
  for (const auto& [name, t] : src.tensors) out.tensors.emplace(name, ad::cast<To>(t, requires_grad));
  return out;
}

template <class T>
ad::Tensor<T> linear(const ad::Tensor<T>& x, const ModelParams<T>& params, const std::string& prefix) {
  return ad::add(ad::matmul(x, params.at(prefix + ".weight")), params.at(prefix + ".bias"));
}

// Linear projection of each kept patch plus the positional encoding of its
// original grid cell. Output kept() x dim.
template <class T>
ad::Tensor<T> tokenize(const TokenSet& tokens, const PatchConfig& cfg, const ModelParams<T>& params) {
  const ModelConfig& mc = params.config;
  const PatchConfig& own = mc.patch(cfg.name);
  if (!(own == cfg) || tokens.patch_size != cfg.patch_size() ||
      tokens.grid_rows != mc.spec_rows / cfg.patch_h || tokens.grid_cols != mc.spec_cols / cfg.patch_w) {
    throw ConfigError("tokens were not produced with patch configuration '" + cfg.name + "'");
  }
  if (tokens.kept() == 0) throw ShapeError("tokenize: empty token set");
  std::vector<T> values(tokens.values.begin(), tokens.values.end());
  auto x = ad::Tensor<T>::from({tokens.kept(), tokens.patch_size}, std::move(values));
  auto projected = linear(x, params, tokenizer_prefix(cfg));
  return ad::add(projected, detail::posenc_rows<T>(tokens.coords, tokens.grid_cols, tokens.grid_rows, mc.dim));
}

// Multi-head self-attention restricted to each view's rows.
template <class T>
ad::Tensor<T> attention(const ad::Tensor<T>& h, std::span<const std::size_t> lengths,
                        const ModelParams<T>& params, const std::string& prefix, std::size_t heads) {
  const std::size_t d = h.cols();
  const std::size_t dh = d / heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
  auto qkv = linear(h, params, prefix + "attn.qkv");
  std::vector<ad::Tensor<T>> views;
  views.reserve(lengths.size());
  std::size_t offset = 0;
  for (std::size_t len : lengths) {
    ad::Tensor<T> view = qkv;
    if (lengths.size() > 1) {
      std::vector<std::size_t> rows(len);
      for (std::size_t i = 0; i < len; ++i) rows[i] = offset + i;
      view = ad::gather_rows(qkv, std::move(rows));
    }
    std::vector<ad::Tensor<T>> head_out;
    head_out.reserve(heads);
    for (std::size_t hd = 0; hd < heads; ++hd) {
      auto q = ad::slice_cols(view, hd * dh, dh);
      auto k = ad::slice_cols(view, d + hd * dh, dh);
      auto v = ad::slice_cols(view, 2 * d + hd * dh, dh);
      auto scores = ad::scale(ad::matmul(q, ad::transpose(k)), inv_sqrt);
      head_out.push_back(ad::matmul(ad::softmax(scores, 1), v));
    }
    views.push_back(heads == 1 ? head_out.front() : ad::concat(head_out, 1));
    offset += len;
  }
  auto merged = views.size() == 1 ? views.front() : ad::concat(views, 0);
  return linear(merged, params, prefix + "attn.out");
}

// Pre-norm block: x + attn(ln1(x)), then x + mlp(ln2(x)).
template <class T>
ad::Tensor<T> transformer_block(const ad::Tensor<T>& x, std::span<const std::size_t> lengths,
                                const ModelParams<T>& params, const std::string& prefix, std::size_t heads) {
  constexpr T kEps = T(1e-5);
  auto h = ad::layer_norm(x, params.at(prefix + "ln1.gamma"), params.at(prefix + "ln1.beta"), kEps);
  auto y = ad::add(x, attention(h, lengths, params, prefix, heads));
  auto h2 = ad::layer_norm(y, params.at(prefix + "ln2.gamma"), params.at(prefix + "ln2.beta"), kEps);
  auto mlp = linear(ad::gelu(linear(h2, params, prefix + "mlp.fc1")), params, prefix + "mlp.fc2");
  return ad::add(y, mlp);
}

// Encoder over stacked views; returns per-token states after the final norm.
template <class T>
ad::Tensor<T> encode_tokens(const ad::Tensor<T>& x, std::span<const std::size_t> lengths,
                            const ModelParams<T>& params) {
  const ModelConfig& mc = params.config;
  std::size_t total = 0;
  for (std::size_t len : lengths) {
    if (len == 0) throw ShapeError("encode: every view needs at least one token");
    total += len;
  }
  if (x.rank() != 2 || x.rows() != total || x.cols() != mc.dim) {
    throw ShapeError("encode: token matrix " + ad::shape_str(x.shape()) + " does not match view lengths");
  }
  ad::Tensor<T> h = x;
  for (std::size_t i = 0; i < mc.depth; ++i) {
    h = transformer_block(h, lengths, params, "enc.blocks." + std::to_string(i) + ".", mc.heads);
  }
  return ad::layer_norm(h, params.at("enc.norm.gamma"), params.at("enc.norm.beta"), T(1e-5));
}

// Mean over each view's rows: N x cols.
template <class T>
ad::Tensor<T> pool_views(const ad::Tensor<T>& x, std::span<const std::size_t> lengths) {
  std::size_t total = 0;
  for (std::size_t len : lengths) total += len;
  std::vector<T> avg(lengths.size() * total, T(0));
  std::size_t offset = 0;
  for (std::size_t v = 0; v < lengths.size(); ++v) {
    for (std::size_t i = 0; i < lengths[v]; ++i) avg[v * total + offset + i] = T(1) / static_cast<T>(lengths[v]);
    offset += lengths[v];
  }
  return ad::matmul(ad::Tensor<T>::from({lengths.size(), total}, std::move(avg)), x);
}

// Pooled encoder output for several views: N x dim.
template <class T>
ad::Tensor<T> encode_batch(const ad::Tensor<T>& x, std::span<const std::size_t> lengths,
                           const ModelParams<T>& params) {
  return pool_views(encode_tokens(x, lengths, params), lengths);
}

// Single view: K x dim tokens -> 1 x dim.
template <class T>
ad::Tensor<T> encode(const ad::Tensor<T>& tokens, const ModelParams<T>& params) {
  const std::size_t lengths[1] = {tokens.rows()};
  return encode_batch(tokens, std::span<const std::size_t>(lengths), params);
}

// dim -> dim (GELU) -> proj_dim, then unit L2 norm per row.
template <class T>
ad::Tensor<T> project_and_normalize(const ad::Tensor<T>& h, const ModelParams<T>& params) {
  if (params.config.kind != ModelKind::kContrastive) throw ConfigError("model has no projector");
  auto z = linear(ad::gelu(linear(h, params, "proj.fc1")), params, "proj.fc2");
  return ad::l2_normalize(z, 1);
}

// MAE reconstruction for a batch of token sets drawn from grids of the same
// shape. Returns (items * grid_total) x patch_size, item-major.
template <class T>
ad::Tensor<T> mae_forward_batch(std::span<const TokenSet> items, const ModelParams<T>& params) {
  const ModelConfig& mc = params.config;
  if (mc.kind != ModelKind::kMae || !params.contains("dec.mask_token")) {
    throw ConfigError("model has no MAE decoder");
  }
  if (items.empty()) throw ShapeError("mae_forward: empty batch");
  const PatchConfig& cfg = mc.patch_cfgs.front();
  std::vector<ad::Tensor<T>> token_rows;
  std::vector<std::size_t> kept_lengths;
  for (const auto& tokens : items) {
    token_rows.push_back(tokenize(tokens, cfg, params));
    kept_lengths.push_back(tokens.kept());
  }
  auto stacked = token_rows.size() == 1 ? token_rows.front() : ad::concat(token_rows, 0);
  auto encoded = encode_tokens(stacked, kept_lengths, params);
  auto embedded = linear(encoded, params, "dec.embed");

  // Scatter: row K_total of `pool` is the mask token.
  const std::size_t kept_total = embedded.rows();
  auto pool = ad::concat(std::vector<ad::Tensor<T>>{embedded, params.at("dec.mask_token")}, 0);
  std::vector<std::size_t> index;
  std::vector<GridCoord> coords;
  std::vector<std::size_t> full_lengths;
  std::size_t offset = 0;
  const std::size_t grid_rows = items.front().grid_rows, grid_cols = items.front().grid_cols;
  for (const auto& tokens : items) {
    const std::size_t total = tokens.grid_total();
    std::vector<std::size_t> slot(total, kept_total);
    for (std::size_t j = 0; j < tokens.kept(); ++j) slot[tokens.kept_indices[j]] = offset + j;
    for (std::size_t t = 0; t < total; ++t) {
      index.push_back(slot[t]);
      coords.push_back({t / grid_cols, t % grid_cols});
    }
    full_lengths.push_back(total);
    offset += tokens.kept();
  }
  auto seq = ad::add(ad::gather_rows(pool, std::move(index)),
                     detail::posenc_rows<T>(coords, grid_cols, grid_rows, mc.decoder_dim));
  for (std::size_t i = 0; i < mc.decoder_depth; ++i) {
    seq = transformer_block(seq, full_lengths, params, "dec.blocks." + std::to_string(i) + ".", mc.decoder_heads);
  }
  seq = ad::layer_norm(seq, params.at("dec.norm.gamma"), params.at("dec.norm.beta"), T(1e-5));
  return linear(seq, params, "dec.head");
}

template <class T>
ad::Tensor<T> mae_forward(const TokenSet& tokens, std::size_t grid_total, const ModelParams<T>& params) {
  if (grid_total != tokens.grid_total()) throw ShapeError("mae_forward: grid size mismatch");
  return mae_forward_batch(std::span<const TokenSet>(&tokens, 1), params);
}

// Analytic encoder cost for K tokens: per block 4*K*d^2 (qkv + output),
// 2*K^2*d (attention) and 2*K*d^2*mlp_ratio (MLP), times depth.
inline double flop_estimate(const ModelConfig& cfg, std::size_t tokens) {
  if (tokens < 1) throw ParameterError("flop_estimate: K must be >= 1");
  const double k = static_cast<double>(tokens), d = static_cast<double>(cfg.dim);
  const double per_block = 4.0 * k * d * d + 2.0 * k * k * d + 2.0 * k * d * d * static_cast<double>(cfg.mlp_ratio);
  return per_block * static_cast<double>(cfg.depth);
}

}  // namespace myna::vit

#endif  // MYNA_VIT_HPP_
