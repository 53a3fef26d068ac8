#include "courant/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "courant/csv.hpp"
#include "json.hpp"

namespace courant {

void DecoderConfig::validate() const {
  if (heads < 1) throw ContractError("decoder needs at least one head");
  if (latent_dim % heads != 0)
    throw ContractError("decoder latent dim must be divisible by heads");
  if (single_head_no_ln && heads != 1)
    throw ContractError("single-head mode requires exactly one head");
}

double FieldDecomposition::reconstruction_residual() const {
  double worst = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t c = 0; c < out_dim; ++c) {
      double acc = offset[i * out_dim + c];
      for (std::int64_t k = 0; k < anchors; ++k) acc += contribution(k, i, c);
      worst = std::max(worst, std::abs(acc - prediction[i * out_dim + c]));
    }
  }
  return worst;
}

Decoder Decoder::create(const DecoderConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  Decoder d;
  d.cfg_ = cfg;
  const std::int64_t dim = cfg.latent_dim;
  const std::int64_t dh = dim / cfg.heads;
  const double s = 1.0 / std::sqrt(static_cast<double>(dim));
  for (std::int64_t h = 0; h < cfg.heads; ++h) {
    d.wq_.push_back(Tensor::randn({dim, dh}, rng, s, true));
    d.wk_.push_back(Tensor::randn({dim, dh}, rng, s, true));
    d.wv_.push_back(Tensor::randn({dim, dh}, rng, s, true));
    d.wo_.push_back(Tensor::randn({dh, dim}, rng, 1.0 / std::sqrt(static_cast<double>(dh)), true));
  }
  d.out_ = Linear::create(dim, cfg.out_dim, rng);
  // damp the output head so fresh models start near the standardized mean
  for (auto& v : d.out_.weight.data()) v *= 0.1;
  if (cfg.xi_dim > 0) d.xi_proj_ = Linear::create(cfg.xi_dim, dim, rng, /*with_bias=*/false);
  const std::int64_t q_in = cfg.xi_dim > 0 ? 2 * dim : dim;
  d.query_mlp_ = Mlp::create(q_in, dim, dim, rng);
  if (!cfg.single_head_no_ln) d.ln_ = LayerNorm::create(dim);
  return d;
}

Tensor Decoder::embed_queries(const RffEmbedding& emb, const Tensor& coords,
                              const Tensor& xi) const {
  Tensor e = emb.embed(coords);
  if (cfg_.xi_dim > 0) {
    if (!xi.defined() || xi.cols() != cfg_.xi_dim)
      throw ContractError("query extra features must have width " +
                          std::to_string(cfg_.xi_dim));
    e = concat_cols(e, xi_proj_.forward(xi));
  }
  return query_mlp_.forward(e);
}

Tensor Decoder::normalize_latents(const Tensor& z) const {
  return cfg_.single_head_no_ln ? z : ln_.forward(z);
}

Tensor Decoder::forward(const Tensor& z, const Tensor& query_emb, const Tensor& logit_bias,
                        AttnTrace* trace) const {
  if (!all_finite(z.data())) throw NumericError("decoder latents contain NaN/Inf");
  const Tensor zt = normalize_latents(z);
  const std::int64_t dh = cfg_.latent_dim / cfg_.heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor acc;
  for (std::int64_t h = 0; h < cfg_.heads; ++h) {
    const Tensor q = matmul(query_emb, wq_[h]);
    const Tensor k = matmul(zt, wk_[h]);
    Tensor logits = scale(matmul(q, transpose(k)), inv_sqrt_dh);
    if (logit_bias.defined()) logits = add(logits, logit_bias);
    const Tensor w = softmax(logits, 1);
    if (trace) trace->head_weights.push_back(w);
    const Tensor head = matmul(matmul(w, matmul(zt, wv_[h])), wo_[h]);
    acc = (h == 0) ? head : add(acc, head);
  }
  return out_.forward(acc);
}

FieldDecomposition Decoder::decompose(const Tensor& z, const Tensor& query_emb,
                                      const Tensor& logit_bias) const {
  const std::int64_t l = z.rows();
  const std::int64_t n = query_emb.rows();
  const std::int64_t h = cfg_.heads;
  const std::int64_t dout = cfg_.out_dim;

  AttnTrace trace;
  const Tensor pred = forward(z, query_emb, logit_bias, &trace);

  FieldDecomposition d;
  d.n = n;
  d.anchors = l;
  d.heads = h;
  d.out_dim = dout;
  d.prediction.assign(pred.data().begin(), pred.data().end());
  d.weights.resize(static_cast<std::size_t>(h * n * l));
  for (std::int64_t hh = 0; hh < h; ++hh) {
    const auto w = trace.head_weights[static_cast<std::size_t>(hh)].data();
    std::copy(w.begin(), w.end(), d.weights.begin() + hh * n * l);
  }

  // Affine offset: literal second pass with all latents zeroed.
  const Tensor u0 = forward(Tensor::zeros(z.shape()), query_emb, logit_bias);
  d.offset.assign(u0.data().begin(), u0.data().end());

  // Per-anchor value mass relative to the zero-latent baseline. Attributing
  // w_{h,k} * (value at LN(0)) to anchor k makes the split exact even with
  // layernorm affine offsets and gaussian-window biased weights.
  const Tensor zt = normalize_latents(z);
  const Tensor zt0 = normalize_latents(Tensor::zeros(z.shape()));
  const Tensor diff = sub(zt, zt0);
  // base[h]: [L, out_dim] = (zt - zt0) Wv Wo Wout per head
  std::vector<Tensor> base;
  base.reserve(static_cast<std::size_t>(h));
  for (std::int64_t hh = 0; hh < h; ++hh)
    base.push_back(matmul(matmul(matmul(diff, wv_[hh]), wo_[hh]), out_.weight));

  d.contributions.assign(static_cast<std::size_t>(l * n * dout), 0.0);
  for (std::int64_t hh = 0; hh < h; ++hh) {
    const auto b = base[static_cast<std::size_t>(hh)].data();
    for (std::int64_t k = 0; k < l; ++k) {
      for (std::int64_t i = 0; i < n; ++i) {
        const double w = d.weight(hh, i, k);
        for (std::int64_t c = 0; c < dout; ++c)
          d.contributions[(k * n + i) * dout + c] += w * b[k * dout + c];
      }
    }
  }
  return d;
}

Decoder::PodFactors Decoder::decode_single_head_pod(const Tensor& z, const Tensor& query_emb,
                                                    const Tensor& logit_bias) const {
  if (!cfg_.single_head_no_ln)
    throw ContractError("decode_single_head_pod requires single-head no-layernorm mode");
  const std::int64_t l = z.rows();
  const std::int64_t n = query_emb.rows();

  AttnTrace trace;
  (void)forward(z, query_emb, logit_bias, &trace);
  const auto w = trace.head_weights[0].data();  // [n, l]

  PodFactors f;
  f.n = n;
  f.anchors = l;
  f.out_dim = cfg_.out_dim;
  f.basis.resize(static_cast<std::size_t>(l * n));
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t k = 0; k < l; ++k) f.basis[k * n + i] = w[i * l + k];

  // coeff_l = z_l Wv Wo Wout + b_out; the affine terms fold into each
  // coefficient because the basis rows sum to one.
  Tensor coeffs = out_.forward(matmul(matmul(z, wv_[0]), wo_[0]));
  f.coeffs.assign(coeffs.data().begin(), coeffs.data().end());
  return f;
}

std::vector<double> Decoder::predict_given_weights(const std::vector<Tensor>& head_weights,
                                                   const Tensor& z_tilde) const {
  if (static_cast<std::int64_t>(head_weights.size()) != cfg_.heads)
    throw ContractError("expected one weight matrix per head");
  Tensor acc;
  for (std::int64_t h = 0; h < cfg_.heads; ++h) {
    const Tensor head =
        matmul(matmul(head_weights[static_cast<std::size_t>(h)], matmul(z_tilde, wv_[h])),
               wo_[h]);
    acc = (h == 0) ? head : add(acc, head);
  }
  const Tensor out = out_.forward(acc);
  return {out.data().begin(), out.data().end()};
}

void Decoder::collect(const std::string& prefix, ParamList& out) const {
  for (std::int64_t h = 0; h < cfg_.heads; ++h) {
    const std::string p = prefix + ".head" + std::to_string(h);
    out.emplace_back(p + ".wq", wq_[static_cast<std::size_t>(h)]);
    out.emplace_back(p + ".wk", wk_[static_cast<std::size_t>(h)]);
    out.emplace_back(p + ".wv", wv_[static_cast<std::size_t>(h)]);
    out.emplace_back(p + ".wo", wo_[static_cast<std::size_t>(h)]);
  }
  out_.collect(prefix + ".out", out);
  if (cfg_.xi_dim > 0) xi_proj_.collect(prefix + ".xi_proj", out);
  query_mlp_.collect(prefix + ".query_mlp", out);
  if (!cfg_.single_head_no_ln) ln_.collect(prefix + ".ln", out);
}

std::vector<std::int64_t> dominant_latent_map(const FieldDecomposition& d) {
  std::vector<std::int64_t> labels(static_cast<std::size_t>(d.n), 0);
  for (std::int64_t i = 0; i < d.n; ++i) {
    double best = -1.0;
    std::int64_t arg = 0;
    for (std::int64_t k = 0; k < d.anchors; ++k) {
      double avg = 0.0;
      for (std::int64_t h = 0; h < d.heads; ++h) avg += d.weight(h, i, k);
      avg /= static_cast<double>(d.heads);
      if (avg > best) {
        best = avg;
        arg = k;
      }
    }
    labels[static_cast<std::size_t>(i)] = arg;
  }
  return labels;
}

std::vector<std::int64_t> rank_contributions(const FieldDecomposition& d, RankMode mode) {
  std::vector<double> score(static_cast<std::size_t>(d.anchors), 0.0);
  for (std::int64_t k = 0; k < d.anchors; ++k) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < d.n; ++i) {
      for (std::int64_t c = 0; c < d.out_dim; ++c) {
        const double v = d.contribution(k, i, c);
        if (mode == RankMode::Norm)
          acc += v * v;
        else
          acc = std::max(acc, std::abs(v));
      }
    }
    score[static_cast<std::size_t>(k)] = (mode == RankMode::Norm) ? std::sqrt(acc) : acc;
  }
  std::vector<std::int64_t> order(static_cast<std::size_t>(d.anchors));
  for (std::int64_t k = 0; k < d.anchors; ++k) order[static_cast<std::size_t>(k)] = k;
  std::stable_sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
    return score[static_cast<std::size_t>(a)] > score[static_cast<std::size_t>(b)];
  });
  return order;
}

void export_decomposition(const std::string& dir, const FieldDecomposition& d,
                          std::span<const double> coords, std::int64_t coord_dim,
                          RankMode mode, std::int64_t top_k) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto ranking = rank_contributions(d, mode);
  top_k = std::min<std::int64_t>(top_k, d.anchors);

  std::vector<std::string> header;
  const char* axes[] = {"x", "y", "z"};
  for (std::int64_t c = 0; c < coord_dim; ++c)
    header.push_back(c < 3 ? axes[c] : "x" + std::to_string(c));
  for (std::int64_t c = 0; c < d.out_dim; ++c) header.push_back("u" + std::to_string(c));

  auto write_field = [&](const std::string& path, const double* field) {
    CsvWriter w(path, header);
    std::vector<double> row(static_cast<std::size_t>(coord_dim + d.out_dim));
    for (std::int64_t i = 0; i < d.n; ++i) {
      for (std::int64_t c = 0; c < coord_dim; ++c) row[c] = coords[i * coord_dim + c];
      for (std::int64_t c = 0; c < d.out_dim; ++c)
        row[coord_dim + c] = field[i * d.out_dim + c];
      w.write_row(row);
    }
  };

  write_field((fs::path(dir) / "prediction.csv").string(), d.prediction.data());
  write_field((fs::path(dir) / "offset.csv").string(), d.offset.data());
  for (std::int64_t r = 0; r < top_k; ++r) {
    const std::int64_t k = ranking[static_cast<std::size_t>(r)];
    write_field((fs::path(dir) / ("delta_" + std::to_string(k) + ".csv")).string(),
                d.contributions.data() + k * d.n * d.out_dim);
  }

  nlohmann::json manifest;
  manifest["n_points"] = d.n;
  manifest["n_anchors"] = d.anchors;
  manifest["heads"] = d.heads;
  manifest["out_dim"] = d.out_dim;
  manifest["coord_dim"] = coord_dim;
  manifest["rank_mode"] = (mode == RankMode::Norm) ? "norm" : "peak";
  manifest["ranking"] = ranking;
  manifest["exported"] = std::vector<std::int64_t>(ranking.begin(), ranking.begin() + top_k);
  manifest["reconstruction_residual"] = d.reconstruction_residual();
  manifest["columns"] = header;
  std::ofstream mf(fs::path(dir) / "manifest.json");
  mf << manifest.dump(2) << "\n";
}

}  // namespace courant
