#include "courant/encoder.hpp"

namespace courant {

void EncoderConfig::validate() const {
  if (levels < 1) throw ContractError("encoder needs at least one level");
  if (latent_dim % heads != 0) throw ContractError("latent dim must be divisible by heads");
  if (latent_dim % 2 != 0) throw ContractError("latent dim must be even");
  if (num_anchors < 1) throw ContractError("encoder needs at least one anchor");
  if (self_attn_loops < 0) throw ContractError("self-attention loop count must be >= 0");
}

Tensor build_kv(const Tensor& coords, const Tensor& features, const Tensor& global_vec,
                const RffEmbedding& emb) {
  Tensor embedded = emb.embed(coords);
  if (global_vec.defined())
    embedded = add(embedded, broadcast_row(global_vec, embedded.rows()));
  if (!features.defined() || features.cols() == 0) return embedded;
  if (features.rows() != coords.rows())
    throw ContractError("feature rows (" + std::to_string(features.rows()) +
                        ") do not match point count (" + std::to_string(coords.rows()) + ")");
  return concat_cols(embedded, features);
}

Encoder Encoder::create(const EncoderConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  Encoder e;
  e.cfg_ = cfg;
  const std::int64_t d = cfg.latent_dim;
  const std::int64_t kv_width = d + cfg.feature_dim;
  for (std::int64_t l = 0; l < cfg.levels; ++l) {
    Level lev;
    lev.ca_ln_q = LayerNorm::create(d);
    lev.ca_ln_kv = LayerNorm::create(kv_width);
    lev.cross = MultiHeadAttention::create(d, kv_width, d, cfg.heads, rng);
    lev.ca_ffn_ln = LayerNorm::create(d);
    lev.ca_ffn = Mlp::create(d, cfg.ffn_mult * d, d, rng, /*zero_last=*/true);
    for (std::int64_t s = 0; s < cfg.self_attn_loops; ++s) {
      SelfBlock sb;
      sb.ln = LayerNorm::create(d);
      sb.attn = MultiHeadAttention::create(d, d, d, cfg.heads, rng);
      sb.ffn_ln = LayerNorm::create(d);
      sb.ffn = Mlp::create(d, cfg.ffn_mult * d, d, rng, /*zero_last=*/true);
      lev.self_blocks.push_back(std::move(sb));
    }
    e.levels_.push_back(std::move(lev));
  }
  if (cfg.query_mode == QueryMode::AbstractLearned)
    e.abstract_queries_ = Tensor::randn({cfg.num_anchors, d}, rng,
                                        1.0 / std::sqrt(static_cast<double>(d)), true);
  if (cfg.global_dim > 0)
    e.global_mlp_ = Mlp::create(cfg.global_dim, d, d, rng);
  return e;
}

Tensor Encoder::init_queries(const AnchorSet& anchors, const RffEmbedding& emb) const {
  if (cfg_.query_mode == QueryMode::AbstractLearned) return abstract_queries_;
  return emb.embed(anchors.positions0);
}

Tensor Encoder::encode(const Tensor& coords, const Tensor& features,
                       const std::vector<double>& globals, const AnchorSet& anchors,
                       const RffEmbedding& emb, EncoderTrace* trace) const {
  if (!coords.defined() || coords.rows() == 0)
    throw ContractError("cannot encode an empty point cloud");

  Tensor g;
  if (global_mlp_.has_value()) {
    if (static_cast<std::int64_t>(globals.size()) != cfg_.global_dim)
      throw ContractError("expected " + std::to_string(cfg_.global_dim) +
                          " global parameters, got " + std::to_string(globals.size()));
    g = global_mlp_->forward(Tensor::from({1, cfg_.global_dim}, globals));
  }
  const Tensor kv = build_kv(coords, features, g, emb);

  Tensor z = init_queries(anchors, emb);
  for (std::size_t l = 0; l < levels_.size(); ++l) {
    const Level& lev = levels_[l];
    Tensor bias;
    if (cfg_.gwa) {
      const Tensor pos = anchors.positions_at(static_cast<std::int64_t>(l), z);
      bias = gwa_bias(pos, coords, anchors.widths_at(static_cast<std::int64_t>(l)));
    }
    AttnTrace* ct = nullptr;
    if (trace) {
      trace->cross.emplace_back();
      ct = &trace->cross.back();
    }
    z = add(z, lev.cross.forward(lev.ca_ln_q.forward(z), lev.ca_ln_kv.forward(kv), bias, ct));
    z = add(z, lev.ca_ffn.forward(lev.ca_ffn_ln.forward(z)));
    for (const SelfBlock& sb : lev.self_blocks) {
      const Tensor zn = sb.ln.forward(z);
      z = add(z, sb.attn.forward(zn, zn));
      z = add(z, sb.ffn.forward(sb.ffn_ln.forward(z)));
    }
  }
  return z;
}

void Encoder::collect(const std::string& prefix, ParamList& out) const {
  if (abstract_queries_.defined())
    out.emplace_back(prefix + ".abstract_queries", abstract_queries_);
  if (global_mlp_.has_value()) global_mlp_->collect(prefix + ".global_mlp", out);
  for (std::size_t l = 0; l < levels_.size(); ++l) {
    const std::string p = prefix + ".level" + std::to_string(l);
    const Level& lev = levels_[l];
    lev.ca_ln_q.collect(p + ".ca_ln_q", out);
    lev.ca_ln_kv.collect(p + ".ca_ln_kv", out);
    lev.cross.collect(p + ".cross", out);
    lev.ca_ffn_ln.collect(p + ".ca_ffn_ln", out);
    lev.ca_ffn.collect(p + ".ca_ffn", out);
    for (std::size_t s = 0; s < lev.self_blocks.size(); ++s) {
      const std::string sp = p + ".self" + std::to_string(s);
      lev.self_blocks[s].ln.collect(sp + ".ln", out);
      lev.self_blocks[s].attn.collect(sp + ".attn", out);
      lev.self_blocks[s].ffn_ln.collect(sp + ".ffn_ln", out);
      lev.self_blocks[s].ffn.collect(sp + ".ffn", out);
    }
  }
}

}  // namespace courant
