#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "courant/errors.hpp"

namespace courant {

using Shape = std::vector<std::int64_t>;

std::string shape_str(const Shape& s);

struct TensorData {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on first use, same length as value
  bool requires_grad = false;

  std::int64_t numel() const { return static_cast<std::int64_t>(value.size()); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

// Value-semantic handle to a shared tensor node. Values are immutable once a
// tensor participates in a taped computation; gradient buffers accumulate.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor randn(Shape shape, std::mt19937_64& rng, double stddev = 1.0,
                      bool requires_grad = false);

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  std::int64_t numel() const { return d_->numel(); }
  std::int64_t rank() const { return static_cast<std::int64_t>(d_->shape.size()); }
  std::int64_t rows() const;
  std::int64_t cols() const;
  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool on);

  std::span<double> data() { return d_->value; }
  std::span<const double> data() const { return d_->value; }
  std::span<const double> grad() const;
  double& at(std::int64_t r, std::int64_t c);
  double at(std::int64_t r, std::int64_t c) const;
  double item() const;

  void zero_grad();
  void add_to_grad(std::span<const double> g);
  std::shared_ptr<TensorData> node() const { return d_; }

  Tensor clone() const;  // deep copy of values; grad not copied

 private:
  explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}
  std::shared_ptr<TensorData> d_;
};

// Records one backward rule per forward op; replay in reverse order performs
// reverse-mode accumulation. Recording order is a topological order of the
// graph, so the reverse visits each node after all of its consumers.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* active();

  void record(std::function<void()> backward,
              std::initializer_list<Tensor> touched);

  // Seeds d(loss)/d(loss) = 1 and accumulates into every requires_grad
  // tensor reachable on this tape. Repeated calls accumulate.
  void backward(const Tensor& loss);

  // Zeroes every gradient touched by this tape, seeds the given cotangent on
  // `out`, and replays. Used for Jacobian assembly from unit cotangents.
  void backward_cotangent(const Tensor& out, std::span<const double> cotangent);

  std::size_t num_ops() const { return ops_.size(); }
  void zero_touched_grads();

 private:
  void replay();
  std::vector<std::function<void()>> ops_;
  std::vector<std::shared_ptr<TensorData>> touched_;
  Tape* parent_ = nullptr;
};

// ---- differentiable operations ------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_bias(const Tensor& a, const Tensor& bias);     // [n,d] + [d]
Tensor broadcast_row(const Tensor& v, std::int64_t rows); // [d] -> [rows,d]
Tensor mul_scalar(const Tensor& a, const Tensor& s);      // s has numel 1
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor softmax(const Tensor& a, int axis);
Tensor layernorm(const Tensor& a, const Tensor& gain, const Tensor& bias);
Tensor gelu(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor reciprocal(const Tensor& a);
Tensor square(const Tensor& a);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& a, std::int64_t c0, std::int64_t c1);
Tensor slice_rows(const Tensor& a, std::int64_t r0, std::int64_t r1);
Tensor pairwise_sqdist(const Tensor& a, const Tensor& b);  // [l,dc]x[n,dc]->[l,n]
Tensor scale_rows(const Tensor& a, const Tensor& r);       // row i scaled by r[i]

constexpr double kLayerNormEps = 1e-5;

bool all_finite(std::span<const double> x);

}  // namespace courant
