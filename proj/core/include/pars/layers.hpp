#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pars/graph.hpp"
#include "pars/params.hpp"
#include "pars/rng.hpp"
#include "pars/signal.hpp"
#include "pars/tensor.hpp"

namespace pars::nn {

// Patch-token transformer encoder dimensions. The defaults give the full-size
// model; tests and the toy preset shrink everything.
struct EncoderConfig {
  int64_t patch_len = 200;  // samples per patch (M)
  int64_t d_model = 512;    // token width (F)
  int n_blocks = 8;
  int n_heads = 8;
  int64_t ff_hidden = 512;

  void validate() const;
};

// Classic fixed sinusoidal embedding, one row per position. Positions are
// real-valued (patch starts divided by the patch length, so a patch starting
// mid-stride lands between integer grid points).
Tensor sinusoidal_position_embedding(const std::vector<double>& positions, int64_t d_model);

// start_time / patch_len for each patch.
std::vector<double> patch_positions(const std::vector<int64_t>& start_times, int64_t patch_len);

Tensor patches_to_tensor(const PatchSet& ps);

// --- parameter registration -------------------------------------------------
// Weights are truncated-normal (std 0.02), biases zero, norm gains one.

void register_linear(ParameterStore& store, const std::string& prefix, int64_t in, int64_t out,
                     Rng& rng, bool bias = true);
void register_layer_norm(ParameterStore& store, const std::string& prefix, int64_t f);
// Full q/k/v/output projection set for one attention layer.
void register_attention(ParameterStore& store, const std::string& prefix, int64_t f, Rng& rng);
// One pre-norm transformer block's parameters under an arbitrary prefix.
void register_transformer_block(ParameterStore& store, const std::string& prefix, int64_t d_model,
                                int64_t ff_hidden, Rng& rng);
// "encoder.*": tokenizer, n_blocks transformer blocks, final norm.
void register_encoder(ParameterStore& store, const EncoderConfig& cfg, Rng& rng);
// "pe.mask_token": the learnable stand-in for a withheld positional embedding.
void register_mask_token(ParameterStore& store, const EncoderConfig& cfg, Rng& rng);

// --- forward builders --------------------------------------------------------

Value linear_layer(Graph& g, const std::string& prefix, Value x, bool bias = true);
Value layer_norm_layer(Graph& g, const std::string& prefix, Value x);
// Projected multi-head attention; self-attention when q_in == kv_in.
Value attention_layer(Graph& g, const std::string& prefix, Value q_in, Value kv_in, int n_heads,
                      const std::vector<std::uint8_t>* kv_keep = nullptr,
                      AttentionTrace* trace = nullptr);
// Pre-norm residual block: x + attn(norm(x)), then + ff(norm(.)).
Value transformer_block(Graph& g, const std::string& prefix, int n_heads, Value x,
                        const std::vector<std::uint8_t>* kv_keep = nullptr);

struct EncodeOptions {
  // Add sinusoidal positions (withheld rows get the mask token instead).
  // Turned off for pretext tasks that must not see position information.
  bool use_positions = true;
  // Restrict keys and values in every block to this token subset.
  const std::vector<std::uint8_t>* kv_keep = nullptr;
};

// patches [n, patch_len] -> tokens [n, d_model] through the linear tokenizer.
Value tokenize(Graph& g, const EncoderConfig& cfg, const Tensor& patches);

// tokens + positions (mask token substituted on masked_rows), then the block
// stack and final norm. masked_rows indexes token order.
Value encode_tokens(Graph& g, const EncoderConfig& cfg, Value tokens,
                    const std::vector<double>& positions,
                    const std::vector<int64_t>& masked_rows,
                    const EncodeOptions& opt = {});

// Convenience wrapper: tokenize a patch set and encode it, reading positions
// and mask flags from the patch set itself.
Value encode_patchset(Graph& g, const EncoderConfig& cfg, const PatchSet& ps,
                      const EncodeOptions& opt = {});

}  // namespace pars::nn
