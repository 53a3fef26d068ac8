#pragma once

#include <string>
#include <utility>
#include <vector>

#include "courant/tensor.hpp"

namespace courant {

// Ordered (name, tensor) pairs; registration order is the checkpoint order.
using ParamList = std::vector<std::pair<std::string, Tensor>>;

struct Linear {
  Tensor weight;  // [in, out], applied on the right: y = x W + b
  Tensor bias;    // [out], absent when has_bias == false
  bool has_bias = true;

  static Linear create(std::int64_t in, std::int64_t out, std::mt19937_64& rng,
                       bool with_bias = true);
  static Linear create_zero(std::int64_t in, std::int64_t out, bool with_bias = true);

  Tensor forward(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

struct LayerNorm {
  Tensor gain;  // [d], init 1
  Tensor bias;  // [d], init 0

  static LayerNorm create(std::int64_t d);
  Tensor forward(const Tensor& x) const { return layernorm(x, gain, bias); }
  void collect(const std::string& prefix, ParamList& out) const;
};

// Two-layer MLP with GELU. `zero_last` zero-initializes the final linear
// layer including its bias (used for residual anchor updates).
struct Mlp {
  Linear l1, l2;

  static Mlp create(std::int64_t in, std::int64_t hidden, std::int64_t out,
                    std::mt19937_64& rng, bool zero_last = false);
  Tensor forward(const Tensor& x) const { return l2.forward(gelu(l1.forward(x))); }
  void collect(const std::string& prefix, ParamList& out) const;
};

// Per-head post-softmax attention weights, one [n_q, n_k] tensor per head.
struct AttnTrace {
  std::vector<Tensor> head_weights;
};

struct MultiHeadAttention {
  std::int64_t heads = 1;
  std::int64_t dim = 0;  // model width d; head width is d / heads
  Linear q_proj, k_proj, v_proj, o_proj;

  static MultiHeadAttention create(std::int64_t query_width, std::int64_t kv_width,
                                   std::int64_t dim, std::int64_t heads,
                                   std::mt19937_64& rng);

  // logit_bias, when defined, is an [n_q, n_k] matrix added to the pre-softmax
  // logits of every head.
  Tensor forward(const Tensor& queries, const Tensor& keys_values,
                 const Tensor& logit_bias = {}, AttnTrace* trace = nullptr) const;

  void collect(const std::string& prefix, ParamList& out) const;
};

}  // namespace courant
