#pragma once

#include <optional>
#include <vector>

#include "courant/geometry.hpp"
#include "courant/nn.hpp"

namespace courant {

enum class QueryMode { FpsAnchored, LearnedAnchored, AbstractLearned };

struct EncoderConfig {
  std::int64_t levels = 3;
  std::int64_t latent_dim = 128;
  std::int64_t heads = 3;
  std::int64_t ffn_mult = 2;
  std::int64_t self_attn_loops = 1;
  std::int64_t num_anchors = 64;
  std::int64_t feature_dim = 0;  // width of raw per-point features in kv tokens
  std::int64_t coord_dim = 2;
  std::int64_t global_dim = 0;  // raw design-parameter count; 0 disables conditioning
  QueryMode query_mode = QueryMode::FpsAnchored;
  bool gwa = false;

  void validate() const;
};

// kv tokens [gamma(x)+g, f]; g is added to the embedded-coordinate block only.
Tensor build_kv(const Tensor& coords, const Tensor& features, const Tensor& global_vec,
                const RffEmbedding& emb);

struct EncoderTrace {
  std::vector<AttnTrace> cross;  // one per level
};

class Encoder {
 public:
  static Encoder create(const EncoderConfig& cfg, std::mt19937_64& rng);

  // fps/learned modes embed the anchor positions; abstract mode returns the
  // free learnable query matrix.
  Tensor init_queries(const AnchorSet& anchors, const RffEmbedding& emb) const;

  // globals: raw design parameters (may be empty). Returns [L, d].
  Tensor encode(const Tensor& coords, const Tensor& features,
                const std::vector<double>& globals, const AnchorSet& anchors,
                const RffEmbedding& emb, EncoderTrace* trace = nullptr) const;

  void collect(const std::string& prefix, ParamList& out) const;
  const EncoderConfig& config() const { return cfg_; }

 private:
  struct SelfBlock {
    LayerNorm ln;
    MultiHeadAttention attn;
    LayerNorm ffn_ln;
    Mlp ffn;
  };
  struct Level {
    LayerNorm ca_ln_q;
    LayerNorm ca_ln_kv;
    MultiHeadAttention cross;
    LayerNorm ca_ffn_ln;
    Mlp ca_ffn;
    std::vector<SelfBlock> self_blocks;
  };

  EncoderConfig cfg_;
  std::vector<Level> levels_;
  Tensor abstract_queries_;  // [L, d], abstract mode only
  std::optional<Mlp> global_mlp_;
};

}  // namespace courant
