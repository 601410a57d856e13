#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "xlight/rng.hpp"

namespace xlight::nn {

struct NnError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Node {
  int rows = 0;
  int cols = 0;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool grad_done = false;  // backward already ran through this graph root
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void()> backward_fn;

  int size() const { return rows * cols; }
  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

// 2-D double tensor with reverse-mode autodiff. Value semantics over a
// shared node; graphs are freed when the last tensor referencing them dies.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(int rows, int cols, bool requires_grad = false);
  static Tensor constant(std::vector<double> v, int rows, int cols);
  static Tensor scalar(double v) { return constant({v}, 1, 1); }
  static Tensor param(std::vector<double> v, int rows, int cols);

  bool defined() const { return node_ != nullptr; }
  int rows() const { return node_->rows; }
  int cols() const { return node_->cols; }
  int size() const { return node_->size(); }
  bool requires_grad() const { return node_->requires_grad; }

  double* data() { return node_->value.data(); }
  const double* data() const { return node_->value.data(); }
  const std::vector<double>& values() const { return node_->value; }
  std::vector<double>& mutable_values() { return node_->value; }
  const std::vector<double>& grad() const;
  double item() const;
  double at(int r, int c) const { return node_->value[r * node_->cols + c]; }

  // value-only copy detached from the graph
  Tensor detach() const;

  std::shared_ptr<Node> node() const { return node_; }
  static Tensor wrap(std::shared_ptr<Node> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

 private:
  std::shared_ptr<Node> node_;
};

// ---- elementwise and arithmetic ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);
Tensor sigmoid(const Tensor& a);
Tensor tanh_t(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor exp_t(const Tensor& a);
Tensor log_t(const Tensor& a);
Tensor minimum(const Tensor& a, const Tensor& b);  // ties route grad to a
Tensor clamp(const Tensor& a, double lo, double hi);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);
// y = x W + b; b may be undefined for no bias
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor add_rowvec(const Tensor& x, const Tensor& v);   // v: [1, cols]
Tensor mul_colvec(const Tensor& x, const Tensor& m);   // m: [rows, 1]
// adds v to the rows flagged in mask (mask.size() == rows)
Tensor add_rowvec_masked(const Tensor& x, const Tensor& v,
                         const std::vector<std::uint8_t>& mask);
// adds a [block_rows, cols] block to every consecutive block of rows
Tensor add_rowblock(const Tensor& x, const Tensor& block);

// ---- shape ----
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, int r0, int r1);
Tensor slice_cols(const Tensor& x, int c0, int c1);
Tensor gather_rows(const Tensor& x, std::vector<int> idx);
// rows offset, offset+stride, offset+2*stride, ...
Tensor take_every(const Tensor& x, int stride, int offset);

// ---- reductions / losses ----
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
// row-wise mean of squared error against a detached target, then mean
Tensor mse(const Tensor& pred, const Tensor& target);

// ---- normalization / attention ----
Tensor softmax_rows(const Tensor& x);
Tensor log_softmax_rows(const Tensor& x);
Tensor layer_norm_rows(const Tensor& x, const Tensor& gain, const Tensor& bias);

struct AttnCapture {
  int batch = 0;
  int heads = 0;
  int len = 0;
  // probs[b*heads + h] is an L x L row-major attention matrix
  std::vector<std::vector<double>> probs;
};

// Multi-head scaled dot-product attention over a batch of sequences of
// length L stacked row-wise: q/k/v are [B*L, d], d divisible by heads.
// With `causal`, position i attends to j <= i. `valid` (size B*L) masks
// padded positions out of everyone's context; an invalid query row falls
// back to attending itself so softmax stays finite.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads,
                 int len, bool causal,
                 const std::vector<std::uint8_t>* valid = nullptr,
                 AttnCapture* capture = nullptr);

// Backpropagate from a scalar root. Throws if called twice on the same root.
void backward(const Tensor& root);

// ---- parameters ----
class ParamStore {
 public:
  // Gaussian init scaled by 1/sqrt(fan_in); scale 0 gives zeros
  Tensor& add(const std::string& name, int rows, int cols, Rng& rng,
              double scale = -1.0);
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.count(name); }
  void zero_grad();
  std::map<std::string, Tensor>& items() { return params_; }
  const std::map<std::string, Tensor>& items() const { return params_; }

 private:
  std::map<std::string, Tensor> params_;  // ordered: deterministic iteration
};

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}
  // bias-corrected update from accumulated grads; caller zeroes grads after
  void step(ParamStore& params);
  long steps_taken() const { return t_; }
  AdamConfig& config() { return cfg_; }

 private:
  AdamConfig cfg_;
  long t_ = 0;
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>>
      state_;  // name -> (m, v)
};

}  // namespace xlight::nn
