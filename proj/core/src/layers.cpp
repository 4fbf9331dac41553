#include "pars/layers.hpp"

#include <cmath>

#include "pars/error.hpp"

namespace pars::nn {

void EncoderConfig::validate() const {
  if (patch_len < 1) throw InvalidInput("encoder: patch_len must be positive");
  if (d_model < 1) throw InvalidInput("encoder: d_model must be positive");
  if (n_blocks < 1) throw InvalidInput("encoder: n_blocks must be positive");
  if (n_heads < 1) throw InvalidInput("encoder: n_heads must be positive");
  if (ff_hidden < 1) throw InvalidInput("encoder: ff_hidden must be positive");
  if (d_model % n_heads != 0) throw InvalidInput("encoder: d_model must divide evenly into heads");
}

Tensor sinusoidal_position_embedding(const std::vector<double>& positions, int64_t d_model) {
  if (d_model < 1) throw InvalidInput("position embedding: d_model must be positive");
  const int64_t n = static_cast<int64_t>(positions.size());
  Tensor pe = Tensor::zeros({n, d_model});
  for (int64_t i = 0; i < n; ++i) {
    const double pos = positions[static_cast<size_t>(i)];
    for (int64_t j = 0; j < d_model; ++j) {
      const int64_t k = j / 2;
      const double rate = std::pow(10000.0, -2.0 * static_cast<double>(k) / static_cast<double>(d_model));
      pe.at(i, j) = (j % 2 == 0) ? std::sin(pos * rate) : std::cos(pos * rate);
    }
  }
  return pe;
}

std::vector<double> patch_positions(const std::vector<int64_t>& start_times, int64_t patch_len) {
  if (patch_len < 1) throw InvalidInput("patch_positions: patch_len must be positive");
  std::vector<double> out(start_times.size());
  for (size_t i = 0; i < start_times.size(); ++i)
    out[i] = static_cast<double>(start_times[i]) / static_cast<double>(patch_len);
  return out;
}

Tensor patches_to_tensor(const PatchSet& ps) {
  const int64_t n = ps.n(), m = ps.patch_len();
  Tensor t = Tensor::zeros({n, m});
  for (int64_t i = 0; i < n; ++i) {
    const auto& p = ps.patches[static_cast<size_t>(i)];
    if (static_cast<int64_t>(p.size()) != m) throw InvalidInput("patch set has ragged patch lengths");
    for (int64_t j = 0; j < m; ++j) t.at(i, j) = p[static_cast<size_t>(j)];
  }
  return t;
}

void register_linear(ParameterStore& store, const std::string& prefix, int64_t in, int64_t out,
                     Rng& rng, bool bias) {
  init_truncated_normal(store, prefix + ".weight", {in, out}, rng);
  if (bias) init_constant(store, prefix + ".bias", {out}, 0.0);
}

void register_layer_norm(ParameterStore& store, const std::string& prefix, int64_t f) {
  init_constant(store, prefix + ".gain", {f}, 1.0);
  init_constant(store, prefix + ".shift", {f}, 0.0);
}

void register_attention(ParameterStore& store, const std::string& prefix, int64_t f, Rng& rng) {
  for (const char* part : {"q", "k", "v", "o"}) {
    init_truncated_normal(store, prefix + ".w" + part, {f, f}, rng);
    init_constant(store, prefix + ".b" + part, {f}, 0.0);
  }
}

void register_transformer_block(ParameterStore& store, const std::string& prefix, int64_t d_model,
                                int64_t ff_hidden, Rng& rng) {
  register_layer_norm(store, prefix + ".ln1", d_model);
  register_attention(store, prefix + ".attn", d_model, rng);
  register_layer_norm(store, prefix + ".ln2", d_model);
  init_truncated_normal(store, prefix + ".ff.w1", {d_model, ff_hidden}, rng);
  init_constant(store, prefix + ".ff.b1", {ff_hidden}, 0.0);
  init_truncated_normal(store, prefix + ".ff.w2", {ff_hidden, d_model}, rng);
  init_constant(store, prefix + ".ff.b2", {d_model}, 0.0);
}

void register_encoder(ParameterStore& store, const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  init_truncated_normal(store, "encoder.tokenizer.weight", {cfg.patch_len, cfg.d_model}, rng);
  init_constant(store, "encoder.tokenizer.bias", {cfg.d_model}, 0.0);
  for (int b = 0; b < cfg.n_blocks; ++b)
    register_transformer_block(store, "encoder.block" + std::to_string(b), cfg.d_model,
                               cfg.ff_hidden, rng);
  register_layer_norm(store, "encoder.final_ln", cfg.d_model);
}

void register_mask_token(ParameterStore& store, const EncoderConfig& cfg, Rng& rng) {
  init_truncated_normal(store, "pe.mask_token", {1, cfg.d_model}, rng);
}

Value linear_layer(Graph& g, const std::string& prefix, Value x, bool bias) {
  Value w = g.param(prefix + ".weight");
  Value b = bias ? g.param(prefix + ".bias") : Value{};
  return g.linear(x, w, b);
}

Value layer_norm_layer(Graph& g, const std::string& prefix, Value x) {
  return g.layer_norm(x, g.param(prefix + ".gain"), g.param(prefix + ".shift"));
}

Value attention_layer(Graph& g, const std::string& prefix, Value q_in, Value kv_in, int n_heads,
                      const std::vector<std::uint8_t>* kv_keep, AttentionTrace* trace) {
  Value q = g.linear(q_in, g.param(prefix + ".wq"), g.param(prefix + ".bq"));
  Value k = g.linear(kv_in, g.param(prefix + ".wk"), g.param(prefix + ".bk"));
  Value v = g.linear(kv_in, g.param(prefix + ".wv"), g.param(prefix + ".bv"));
  Value core = g.attention(q, k, v, n_heads, kv_keep, trace);
  return g.linear(core, g.param(prefix + ".wo"), g.param(prefix + ".bo"));
}

Value transformer_block(Graph& g, const std::string& prefix, int n_heads, Value x,
                        const std::vector<std::uint8_t>* kv_keep) {
  Value normed = layer_norm_layer(g, prefix + ".ln1", x);
  Value attn = attention_layer(g, prefix + ".attn", normed, normed, n_heads, kv_keep);
  Value x2 = g.add(x, attn);
  Value normed2 = layer_norm_layer(g, prefix + ".ln2", x2);
  Value h = g.gelu(g.linear(normed2, g.param(prefix + ".ff.w1"), g.param(prefix + ".ff.b1")));
  Value ff = g.linear(h, g.param(prefix + ".ff.w2"), g.param(prefix + ".ff.b2"));
  return g.add(x2, ff);
}

Value tokenize(Graph& g, const EncoderConfig& cfg, const Tensor& patches) {
  if (patches.cols() != cfg.patch_len)
    throw InvalidInput("tokenize: patch length differs from the encoder patch_len");
  Value x = g.constant(patches);
  return g.linear(x, g.param("encoder.tokenizer.weight"), g.param("encoder.tokenizer.bias"));
}

Value encode_tokens(Graph& g, const EncoderConfig& cfg, Value tokens,
                    const std::vector<double>& positions,
                    const std::vector<int64_t>& masked_rows, const EncodeOptions& opt) {
  const int64_t n = tokens.tensor().rows();
  Value x = tokens;
  if (opt.use_positions) {
    if (static_cast<int64_t>(positions.size()) != n)
      throw InvalidInput("encode: one position per token required");
    Tensor pe = sinusoidal_position_embedding(positions, cfg.d_model);
    for (int64_t r : masked_rows) {
      if (r < 0 || r >= n) throw InvalidInput("encode: masked row out of range");
      for (int64_t j = 0; j < cfg.d_model; ++j) pe.at(r, j) = 0.0;
    }
    x = g.add(tokens, g.constant(std::move(pe)));
    if (!masked_rows.empty())
      x = g.scatter_add_row(x, g.param("pe.mask_token"), masked_rows);
  }
  for (int b = 0; b < cfg.n_blocks; ++b)
    x = transformer_block(g, "encoder.block" + std::to_string(b), cfg.n_heads, x, opt.kv_keep);
  return layer_norm_layer(g, "encoder.final_ln", x);
}

Value encode_patchset(Graph& g, const EncoderConfig& cfg, const PatchSet& ps,
                      const EncodeOptions& opt) {
  Value tokens = tokenize(g, cfg, patches_to_tensor(ps));
  return encode_tokens(g, cfg, tokens, patch_positions(ps.start_times, cfg.patch_len),
                       ps.masked_indices(), opt);
}

}  // namespace pars::nn
