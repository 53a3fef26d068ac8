#pragma once

#include <string>
#include <vector>

#include "courant/geometry.hpp"
#include "courant/nn.hpp"

namespace courant {

struct DecoderConfig {
  std::int64_t heads = 3;
  std::int64_t latent_dim = 128;
  std::int64_t out_dim = 1;
  std::int64_t xi_dim = 0;  // query extra-feature width (distance field)
  bool gwa = false;
  bool single_head_no_ln = false;  // single-head mode without layernorm

  void validate() const;
};

// Exact additive split of a decoded field: prediction == offset + sum_k
// contribution_k entrywise, with per-head attention weights forming a
// partition of unity over anchors at every query.
struct FieldDecomposition {
  std::int64_t n = 0;        // queries
  std::int64_t anchors = 0;  // L
  std::int64_t heads = 0;
  std::int64_t out_dim = 0;
  std::vector<double> prediction;     // [n][out_dim]
  std::vector<double> contributions;  // [anchors][n][out_dim]
  std::vector<double> offset;         // u0: [n][out_dim], all-latents-zero output
  std::vector<double> weights;        // [heads][n][anchors]

  double weight(std::int64_t h, std::int64_t i, std::int64_t k) const {
    return weights[(h * n + i) * anchors + k];
  }
  double contribution(std::int64_t k, std::int64_t i, std::int64_t c) const {
    return contributions[(k * n + i) * out_dim + c];
  }
  // Max-abs residual of prediction - (offset + sum_k contributions).
  double reconstruction_residual() const;
};

enum class RankMode { Norm, Peak };

// Conditioned neural field: one multi-head cross-attention over layernormed
// latents, affine in the values, no feed-forward network.
class Decoder {
 public:
  static Decoder create(const DecoderConfig& cfg, std::mt19937_64& rng);

  // e = MLP([gamma(x), W_xi xi]); xi may be undefined when xi_dim == 0.
  Tensor embed_queries(const RffEmbedding& emb, const Tensor& coords,
                       const Tensor& xi) const;

  // Taped prediction [n, out_dim]. logit_bias [n, L] is added to every head.
  Tensor forward(const Tensor& z, const Tensor& query_emb, const Tensor& logit_bias = {},
                 AttnTrace* trace = nullptr) const;

  // Full decomposition; the offset is a literal second forward pass with all
  // latents zeroed.
  FieldDecomposition decompose(const Tensor& z, const Tensor& query_emb,
                               const Tensor& logit_bias = {}) const;

  struct PodFactors {
    std::vector<double> basis;   // [L][n] spatial partition-of-unity functions
    std::vector<double> coeffs;  // [L][out_dim] per-anchor field coefficients
    std::int64_t n = 0, anchors = 0, out_dim = 0;
  };
  // Separable factors of the single-head no-layernorm mode; sum_l coeff_l *
  // basis_l(x) reproduces forward().
  PodFactors decode_single_head_pod(const Tensor& z, const Tensor& query_emb,
                                    const Tensor& logit_bias = {}) const;

  // Value path under externally fixed attention weights (testing hook for
  // the affine-in-values property).
  std::vector<double> predict_given_weights(const std::vector<Tensor>& head_weights,
                                            const Tensor& z_tilde) const;

  Tensor normalize_latents(const Tensor& z) const;

  void collect(const std::string& prefix, ParamList& out) const;
  const DecoderConfig& config() const { return cfg_; }

 private:
  DecoderConfig cfg_;
  std::vector<Tensor> wq_, wk_, wv_;  // per head [d, d_h]
  std::vector<Tensor> wo_;            // per head [d_h, d]
  Linear out_;                        // [d, out_dim] with bias
  Linear xi_proj_;                    // [xi_dim, d], no bias
  Mlp query_mlp_;
  LayerNorm ln_;
};

// Per query, argmax over anchors of head-averaged weight; ties break to the
// lowest anchor index.
std::vector<std::int64_t> dominant_latent_map(const FieldDecomposition& d);

// Anchor indices ordered by contribution magnitude, descending; ties keep
// ascending index order.
std::vector<std::int64_t> rank_contributions(const FieldDecomposition& d, RankMode mode);

// Writes manifest.json, prediction.csv and delta_<k>.csv for the top_k ranked
// anchors; columns are coordinates then field components.
void export_decomposition(const std::string& dir, const FieldDecomposition& d,
                          std::span<const double> coords, std::int64_t coord_dim,
                          RankMode mode, std::int64_t top_k);

}  // namespace courant
