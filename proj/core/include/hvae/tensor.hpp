#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hvae/rng.hpp"

// Minimal dense-tensor reverse-mode tape. Double precision throughout,
// rank 1 and 2 only, scalars are 1-element tensors. A tape is
// single-threaded; independent tapes may run concurrently.

namespace hvae {

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor from_values(std::vector<int> shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double v);
  // Named trainable parameter, zero-initialized; fill via values_mutable().
  static Tensor param(std::vector<int> shape, std::string name);

  bool defined() const { return static_cast<bool>(d_); }
  const std::vector<int>& shape() const { return d_->shape; }
  int rows() const { return d_->shape[0]; }
  int cols() const { return d_->shape.size() == 2 ? d_->shape[1] : 1; }
  std::size_t size() const { return d_->values.size(); }
  bool is_scalar() const { return size() == 1; }

  const std::vector<double>& values() const { return d_->values; }
  std::vector<double>& values_mutable() { return d_->values; }
  double value() const { return d_->values[0]; }  // scalar convenience

  bool requires_grad() const { return d_->requires_grad; }
  const std::vector<double>& grad() const { return d_->grad; }
  void zero_grad();

  const std::string& name() const { return d_->name; }

  bool same_node(const Tensor& other) const { return d_ == other.d_; }

 private:
  struct Data {
    std::vector<int> shape;
    std::vector<double> values;
    std::vector<double> grad;  // sized with values iff requires_grad
    bool requires_grad = false;
    std::string name;
  };
  std::shared_ptr<Data> d_;

  static Tensor wrap(std::shared_ptr<Data> d) {
    Tensor t;
    t.d_ = std::move(d);
    return t;
  }
  friend class Tape;
};

class Tape {
 public:
  // matmul: (m,k)x(k,n)->(m,n), (m,k)x(k)->(m), (k)x(k,n)->(n)
  Tensor matmul(const Tensor& a, const Tensor& b);
  // add broadcasts a rank-1 operand over the other's leading batch axis
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b) { return add(a, negate(b)); }
  Tensor negate(const Tensor& x);
  Tensor multiply(const Tensor& a, const Tensor& b);  // elementwise, same shape
  Tensor scale(const Tensor& x, double c);
  Tensor tanh(const Tensor& x);
  Tensor sigmoid(const Tensor& x);
  Tensor softplus(const Tensor& x);
  Tensor exp(const Tensor& x);
  Tensor log(const Tensor& x);
  Tensor concat(const Tensor& a, const Tensor& b);  // last axis
  Tensor embedding_lookup(const Tensor& table, std::span<const int> ids);
  Tensor embedding_row(const Tensor& table, int id);
  Tensor l2_normalize(const Tensor& x);  // rank-1; input norm must exceed 1e-12
  Tensor sum(const Tensor& x);
  Tensor mean(const Tensor& x);
  Tensor log_softmax(const Tensor& x);  // last axis
  // Sum over unmasked rows of -log_softmax(logits)[target]. Rank-1 logits
  // are a single row. Empty mask means all rows count.
  Tensor masked_nll(const Tensor& logits, std::span<const int> targets,
                    std::span<const double> mask = {});
  // y = f(x) for scalar x, with f's value and df/dx supplied by the caller
  // (for scalar functions whose derivative is known analytically but not
  // expressible in the primitive set).
  Tensor scalar_chain(const Tensor& x, double value, double derivative);

  // Populates d(loss)/d(tensor) for every requires_grad tensor reachable
  // from the recorded ops, accumulating additively, then clears the tape.
  void backward(const Tensor& scalar_loss);

  std::size_t recorded() const { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  Tensor make_output(std::vector<int> shape, std::vector<double> values,
                     bool requires_grad);
  void record(std::function<void()> fn) { entries_.push_back(std::move(fn)); }

  std::vector<std::function<void()>> entries_;
};

// Global-norm gradient clipping followed by p <- p - lr * grad; zeroes all
// gradients. Throws NumericError on any non-finite gradient.
void sgd_step(std::span<Tensor> params, double learning_rate, double clip_norm);

// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) initialization in place.
void init_uniform_fan_in(Tensor& w, int fan_in, Rng& rng);

}  // namespace hvae
