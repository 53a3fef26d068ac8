#pragma once

#include <complex>
#include <functional>
#include <optional>
#include <vector>

#include "courant/nn.hpp"

namespace courant {

enum class OdeRhsMode { SelfAttention, Mlp };

struct OdeConfig {
  OdeRhsMode mode = OdeRhsMode::SelfAttention;
  double step = 1.0;  // latent-time Euler step h

  void validate() const;
};

struct LatentTrajectory {
  std::vector<Tensor> states;  // T+1 matrices [L, d]; states[0] is the encoder output
  double t0 = 0.0;
  double dt = 0.0;  // physical seconds per predicted step (metadata only)

  std::int64_t steps() const { return static_cast<std::int64_t>(states.size()) - 1; }
  double time_at(std::int64_t k) const { return t0 + static_cast<double>(k) * dt; }
};

// Latent dynamics dZ/dtau = f(Z) where f is a pre-LN self-attention block
// (no residual inside f; the Euler update provides it) or a per-token MLP.
class OdeProcessor {
 public:
  static OdeProcessor create(const OdeConfig& cfg, std::int64_t latent_dim,
                             std::int64_t heads, std::mt19937_64& rng);

  Tensor rhs(const Tensor& z) const;

  // Z_{k+1} = Z_k + h * rhs(Z_k), exactly; raises NumericError naming the
  // step index if a state goes non-finite.
  LatentTrajectory rollout(const Tensor& z0, std::int64_t steps) const;

  void collect(const std::string& prefix, ParamList& out) const;
  const OdeConfig& config() const { return cfg_; }

 private:
  OdeConfig cfg_;
  LayerNorm ln_;
  MultiHeadAttention attn_;
  Mlp mlp_;
};

struct JacobianResult {
  std::int64_t n = 0;
  std::vector<double> matrix;  // row-major; matrix[i*n+j] = d f_i / d z_j
  std::vector<std::complex<double>> rhs_eigenvalues;   // spectrum of J
  std::vector<std::complex<double>> step_eigenvalues;  // spectrum of I + h J
};

// Exact dense Jacobian of a latent-space map assembled from reverse-mode
// passes with unit cotangents; flattening is row-major (token-major).
JacobianResult jacobian(const std::function<Tensor(const Tensor&)>& f, const Tensor& z,
                        double step, std::int64_t dim_cap = 4096);

}  // namespace courant
