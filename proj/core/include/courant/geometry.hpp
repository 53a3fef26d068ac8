#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "courant/nn.hpp"
#include "courant/tensor.hpp"

namespace courant {

// Shared sinusoidal coordinate lifting through a learnable Gaussian frequency
// matrix; one instance is reused by encoder and decoder when embeddings are
// shared.
struct RffEmbedding {
  Tensor freq;       // [d/2, d_c], entries init i.i.d. N(0,1), learnable
  Tensor log_sigma;  // [1]; bandwidth sigma = exp(log_sigma) stays positive
  std::int64_t dim = 0;

  static RffEmbedding create(std::int64_t dim, std::int64_t coord_dim,
                             std::mt19937_64& rng, double sigma = 0.3);

  // [n, d_c] -> [n, d]: cos block first, then sin block.
  Tensor embed(const Tensor& coords) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

// Greedy farthest-point sampling; the first pick is a seeded uniform draw and
// distance ties break toward the lowest index, so results are deterministic.
std::vector<std::int64_t> fps_sample(std::span<const double> coords, std::int64_t n,
                                     std::int64_t coord_dim, std::int64_t count,
                                     std::uint64_t seed);
std::vector<std::int64_t> fps_sample_from(std::span<const double> coords, std::int64_t n,
                                          std::int64_t coord_dim, std::int64_t count,
                                          std::int64_t first);

// Exact brute-force minimum Euclidean distance from each query to the
// boundary set.
std::vector<double> distance_field(std::span<const double> queries, std::int64_t n,
                                   std::span<const double> boundary, std::int64_t m,
                                   std::int64_t coord_dim);

double bbox_diagonal(std::span<const double> coords, std::int64_t n,
                     std::int64_t coord_dim);

// Anchor positions with per-level residual updates and per-level, per-anchor
// Gaussian window widths. Width multipliers are kept positive through a
// softplus parameterization; update MLPs have zero-initialized last layers so
// positions equal positions0 at initialization.
struct AnchorSet {
  Tensor positions0;  // [L, d_c]
  std::vector<Mlp> enc_updates;
  std::optional<Mlp> dec_update;
  Tensor kappa_enc;  // [levels, L] raw; softplus(raw) = 1 at init
  Tensor kappa_dec;  // [1, L]
  double sigma0 = 1.0;

  static AnchorSet create(Tensor positions0, std::int64_t encoder_levels,
                          bool decoder_level, std::int64_t latent_dim,
                          std::mt19937_64& rng, bool learned_positions);

  std::int64_t count() const { return positions0.rows(); }
  std::int64_t coord_dim() const { return positions0.cols(); }

  // positions0 + Delta_level(latents); level == count of encoder levels
  // addresses the decoder update.
  Tensor positions_at(std::int64_t level, const Tensor& latents) const;
  Tensor widths_at(std::int64_t level) const;  // [L], sigma0 * softplus(kappa)

  void collect(const std::string& prefix, ParamList& out) const;
};

// Nonpositive attention-logit bias -|p - x|^2 / sigma^2, rows indexed by
// anchor, columns by key coordinate.
Tensor gwa_bias(const Tensor& anchor_positions, const Tensor& key_positions,
                const Tensor& widths);

// Initial window scale sigma0 = alpha * bbox_diagonal / sqrt(L).
double gwa_sigma0(std::span<const double> coords, std::int64_t n, std::int64_t coord_dim,
                  std::int64_t num_anchors, double alpha);

constexpr double kKappaRawInit = 0.5413248546129181;  // softplus^-1(1)

}  // namespace courant
