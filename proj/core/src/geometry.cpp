#include "courant/geometry.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace courant {

RffEmbedding RffEmbedding::create(std::int64_t dim, std::int64_t coord_dim,
                                  std::mt19937_64& rng, double sigma) {
  if (dim <= 0 || dim % 2 != 0)
    throw ContractError("embedding dim must be positive and even, got " + std::to_string(dim));
  if (sigma <= 0) throw ContractError("rff sigma must be positive");
  RffEmbedding e;
  e.dim = dim;
  e.freq = Tensor::randn({dim / 2, coord_dim}, rng, 1.0, true);
  e.log_sigma = Tensor::scalar(std::log(sigma), true);
  return e;
}

Tensor RffEmbedding::embed(const Tensor& coords) const {
  if (coords.cols() != freq.cols())
    throw ShapeError("coordinate dim " + std::to_string(coords.cols()) +
                     " does not match embedding, expected " + std::to_string(freq.cols()));
  const Tensor proj = matmul(coords, transpose(freq));  // [n, d/2]
  const Tensor arg = scale(mul_scalar(proj, exp(log_sigma)), 2.0 * std::numbers::pi);
  return concat_cols(cos(arg), sin(arg));
}

void RffEmbedding::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".freq", freq);
  out.emplace_back(prefix + ".log_sigma", log_sigma);
}

std::vector<std::int64_t> fps_sample_from(std::span<const double> coords, std::int64_t n,
                                          std::int64_t coord_dim, std::int64_t count,
                                          std::int64_t first) {
  if (count > n)
    throw ContractError("fps count " + std::to_string(count) + " exceeds cloud size " +
                        std::to_string(n));
  if (count <= 0) throw ContractError("fps count must be positive");
  if (first < 0 || first >= n) throw ContractError("fps first index out of range");

  std::vector<std::int64_t> picked;
  picked.reserve(static_cast<std::size_t>(count));
  std::vector<double> min_d2(static_cast<std::size_t>(n),
                             std::numeric_limits<double>::infinity());
  std::int64_t cur = first;
  picked.push_back(cur);
  for (std::int64_t it = 1; it < count; ++it) {
    const double* p = coords.data() + cur * coord_dim;
    std::int64_t best = -1;
    double best_d2 = -1.0;
    for (std::int64_t i = 0; i < n; ++i) {
      double d2 = 0.0;
      for (std::int64_t c = 0; c < coord_dim; ++c) {
        const double diff = coords[i * coord_dim + c] - p[c];
        d2 += diff * diff;
      }
      if (d2 < min_d2[static_cast<std::size_t>(i)]) min_d2[static_cast<std::size_t>(i)] = d2;
      if (min_d2[static_cast<std::size_t>(i)] > best_d2) {
        best_d2 = min_d2[static_cast<std::size_t>(i)];
        best = i;
      }
    }
    cur = best;
    picked.push_back(cur);
  }
  return picked;
}

std::vector<std::int64_t> fps_sample(std::span<const double> coords, std::int64_t n,
                                     std::int64_t coord_dim, std::int64_t count,
                                     std::uint64_t seed) {
  if (n <= 0) throw ContractError("fps requires a nonempty cloud");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::int64_t> pick(0, n - 1);
  return fps_sample_from(coords, n, coord_dim, count, pick(rng));
}

std::vector<double> distance_field(std::span<const double> queries, std::int64_t n,
                                   std::span<const double> boundary, std::int64_t m,
                                   std::int64_t coord_dim) {
  if (m < 1) throw ContractError("distance_field requires a nonempty boundary set");
  std::vector<double> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    const double* q = queries.data() + i * coord_dim;
    for (std::int64_t j = 0; j < m; ++j) {
      const double* b = boundary.data() + j * coord_dim;
      double d2 = 0.0;
      for (std::int64_t c = 0; c < coord_dim; ++c) {
        const double diff = q[c] - b[c];
        d2 += diff * diff;
      }
      best = std::min(best, d2);
    }
    out[static_cast<std::size_t>(i)] = std::sqrt(best);
  }
  return out;
}

double bbox_diagonal(std::span<const double> coords, std::int64_t n, std::int64_t coord_dim) {
  double diag2 = 0.0;
  for (std::int64_t c = 0; c < coord_dim; ++c) {
    double lo = coords[c], hi = coords[c];
    for (std::int64_t i = 1; i < n; ++i) {
      lo = std::min(lo, coords[i * coord_dim + c]);
      hi = std::max(hi, coords[i * coord_dim + c]);
    }
    diag2 += (hi - lo) * (hi - lo);
  }
  return std::sqrt(diag2);
}

AnchorSet AnchorSet::create(Tensor positions0, std::int64_t encoder_levels,
                            bool decoder_level, std::int64_t latent_dim,
                            std::mt19937_64& rng, bool learned_positions) {
  AnchorSet a;
  a.positions0 = std::move(positions0);
  a.positions0.set_requires_grad(learned_positions);
  const std::int64_t l = a.positions0.rows();
  const std::int64_t dc = a.positions0.cols();
  for (std::int64_t i = 0; i < encoder_levels; ++i)
    a.enc_updates.push_back(Mlp::create(latent_dim, latent_dim, dc, rng, /*zero_last=*/true));
  if (encoder_levels > 0)
    a.kappa_enc = Tensor::full({encoder_levels, l}, kKappaRawInit, true);
  if (decoder_level) {
    a.dec_update = Mlp::create(latent_dim, latent_dim, dc, rng, /*zero_last=*/true);
    a.kappa_dec = Tensor::full({1, l}, kKappaRawInit, true);
  }
  return a;
}

Tensor AnchorSet::positions_at(std::int64_t level, const Tensor& latents) const {
  const std::int64_t n_enc = static_cast<std::int64_t>(enc_updates.size());
  const Mlp* update = nullptr;
  if (level < n_enc) {
    update = &enc_updates[static_cast<std::size_t>(level)];
  } else if (level == n_enc && dec_update.has_value()) {
    update = &*dec_update;
  } else {
    throw ContractError("anchor update level " + std::to_string(level) + " out of range");
  }
  return add(positions0, update->forward(latents));
}

Tensor AnchorSet::widths_at(std::int64_t level) const {
  const std::int64_t n_enc = kappa_enc.defined() ? kappa_enc.rows() : 0;
  Tensor row;
  if (level < n_enc) {
    row = slice_rows(kappa_enc, level, level + 1);
  } else if (kappa_dec.defined()) {
    row = slice_rows(kappa_dec, 0, 1);
  } else {
    throw ContractError("no gaussian-window widths at level " + std::to_string(level));
  }
  return scale(softplus(row), sigma0);
}

void AnchorSet::collect(const std::string& prefix, ParamList& out) const {
  out.emplace_back(prefix + ".positions0", positions0);
  for (std::size_t i = 0; i < enc_updates.size(); ++i)
    enc_updates[i].collect(prefix + ".enc_update" + std::to_string(i), out);
  if (kappa_enc.defined()) out.emplace_back(prefix + ".kappa_enc", kappa_enc);
  if (dec_update.has_value()) dec_update->collect(prefix + ".dec_update", out);
  if (kappa_dec.defined()) out.emplace_back(prefix + ".kappa_dec", kappa_dec);
}

Tensor gwa_bias(const Tensor& anchor_positions, const Tensor& key_positions,
                const Tensor& widths) {
  if (widths.numel() != anchor_positions.rows())
    throw ShapeError("gwa width count does not match anchor count");
  for (double w : widths.data())
    if (!(w > 0.0)) throw ContractError("gwa widths must be strictly positive");
  const Tensor d2 = pairwise_sqdist(anchor_positions, key_positions);
  const Tensor inv_sigma2 = reciprocal(square(widths));
  return scale(scale_rows(d2, inv_sigma2), -1.0);
}

double gwa_sigma0(std::span<const double> coords, std::int64_t n, std::int64_t coord_dim,
                  std::int64_t num_anchors, double alpha) {
  return alpha * bbox_diagonal(coords, n, coord_dim) /
         std::sqrt(static_cast<double>(num_anchors));
}

}  // namespace courant
