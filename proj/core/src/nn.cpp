#include "courant/nn.hpp"

#include <cmath>

namespace courant {

Linear Linear::create(std::int64_t in, std::int64_t out, std::mt19937_64& rng,
                      bool with_bias) {
  Linear l;
  l.weight = Tensor::randn({in, out}, rng, 1.0 / std::sqrt(static_cast<double>(in)), true);
  l.has_bias = with_bias;
  if (with_bias) l.bias = Tensor::zeros({out}, true);
  return l;
}

Linear Linear::create_zero(std::int64_t in, std::int64_t out, bool with_bias) {
  Linear l;
  l.weight = Tensor::zeros({in, out}, true);
  l.has_bias = with_bias;
  if (with_bias) l.bias = Tensor::zeros({out}, true);
  return l;
}

Tensor Linear::forward(const Tensor& x) const {
  Tensor y = matmul(x, weight);
  if (has_bias) y = add_bias(y, bias);
  return y;
}

void Linear::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".weight", weight);
  if (has_bias) out.emplace_back(prefix + ".bias", bias);
}

LayerNorm LayerNorm::create(std::int64_t d) {
  LayerNorm ln;
  ln.gain = Tensor::full({d}, 1.0, true);
  ln.bias = Tensor::zeros({d}, true);
  return ln;
}

void LayerNorm::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".gain", gain);
  out.emplace_back(prefix + ".bias", bias);
}

Mlp Mlp::create(std::int64_t in, std::int64_t hidden, std::int64_t out,
                std::mt19937_64& rng, bool zero_last) {
  Mlp m;
  m.l1 = Linear::create(in, hidden, rng);
  m.l2 = zero_last ? Linear::create_zero(hidden, out) : Linear::create(hidden, out, rng);
  return m;
}

void Mlp::collect(const std::string& prefix, ParamList& out) const {
  l1.collect(prefix + ".l1", out);
  l2.collect(prefix + ".l2", out);
}

MultiHeadAttention MultiHeadAttention::create(std::int64_t query_width,
                                              std::int64_t kv_width, std::int64_t dim,
                                              std::int64_t heads, std::mt19937_64& rng) {
  if (dim % heads != 0)
    throw ContractError("attention width " + std::to_string(dim) +
                        " not divisible by head count " + std::to_string(heads));
  MultiHeadAttention a;
  a.heads = heads;
  a.dim = dim;
  a.q_proj = Linear::create(query_width, dim, rng);
  a.k_proj = Linear::create(kv_width, dim, rng);
  a.v_proj = Linear::create(kv_width, dim, rng);
  // zero-initialized output projection: residual blocks start as identities
  a.o_proj = Linear::create_zero(dim, dim);
  return a;
}

Tensor MultiHeadAttention::forward(const Tensor& queries, const Tensor& keys_values,
                                   const Tensor& logit_bias, AttnTrace* trace) const {
  const Tensor q = q_proj.forward(queries);
  const Tensor k = k_proj.forward(keys_values);
  const Tensor v = v_proj.forward(keys_values);
  const std::int64_t dh = dim / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor merged;
  for (std::int64_t h = 0; h < heads; ++h) {
    const Tensor qh = slice_cols(q, h * dh, (h + 1) * dh);
    const Tensor kh = slice_cols(k, h * dh, (h + 1) * dh);
    const Tensor vh = slice_cols(v, h * dh, (h + 1) * dh);
    Tensor logits = scale(matmul(qh, transpose(kh)), inv_sqrt_dh);
    if (logit_bias.defined()) logits = add(logits, logit_bias);
    const Tensor w = softmax(logits, 1);
    if (trace) trace->head_weights.push_back(w);
    const Tensor oh = matmul(w, vh);
    merged = (h == 0) ? oh : concat_cols(merged, oh);
  }
  return o_proj.forward(merged);
}

void MultiHeadAttention::collect(const std::string& prefix, ParamList& out) const {
  q_proj.collect(prefix + ".q_proj", out);
  k_proj.collect(prefix + ".k_proj", out);
  v_proj.collect(prefix + ".v_proj", out);
  o_proj.collect(prefix + ".o_proj", out);
}

}  // namespace courant
