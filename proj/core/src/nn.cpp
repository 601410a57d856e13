#include "xlight/nn.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <cblas.h>

namespace xlight::nn {

namespace {

// single-threaded BLAS: reproducible reductions, no spin-wait overhead
const bool kBlasSingleThread = [] {
  openblas_set_num_threads(1);
  return true;
}();

std::shared_ptr<Node> make_node(int rows, int cols,
                                std::vector<std::shared_ptr<Node>> parents) {
  auto n = std::make_shared<Node>();
  n->rows = rows;
  n->cols = cols;
  n->value.assign(static_cast<size_t>(rows) * cols, 0.0);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  return n;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw NnError(std::string(op) + ": shape mismatch " +
                  std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                  " vs " + std::to_string(b.rows()) + "x" +
                  std::to_string(b.cols()));
}

// generic unary op: y = f(x), dx += df(x, y) * dy
template <typename F, typename DF>
Tensor unary_op(const Tensor& a, F f, DF df) {
  auto out = make_node(a.rows(), a.cols(), {a.node()});
  auto pa = a.node();
  for (int i = 0; i < out->size(); ++i) out->value[i] = f(pa->value[i]);
  if (out->requires_grad) {
    Node* self = out.get();
    out->backward_fn = [pa, self, df]() {
      if (!pa->requires_grad) return;
      pa->ensure_grad();
      for (int i = 0; i < self->size(); ++i)
        pa->grad[i] += df(pa->value[i], self->value[i]) * self->grad[i];
    };
  }
  return Tensor::wrap(out);
}

}  // namespace

Tensor Tensor::zeros(int rows, int cols, bool requires_grad) {
  auto n = make_node(rows, cols, {});
  n->requires_grad = requires_grad;
  return wrap(n);
}

Tensor Tensor::constant(std::vector<double> v, int rows, int cols) {
  if (static_cast<int>(v.size()) != rows * cols)
    throw NnError("constant: value count does not match shape");
  auto n = make_node(rows, cols, {});
  n->value = std::move(v);
  return wrap(n);
}

Tensor Tensor::param(std::vector<double> v, int rows, int cols) {
  Tensor t = constant(std::move(v), rows, cols);
  t.node()->requires_grad = true;
  return t;
}

const std::vector<double>& Tensor::grad() const {
  if (!node_->requires_grad) throw NnError("grad(): tensor is not tracked");
  node_->ensure_grad();
  return node_->grad;
}

double Tensor::item() const {
  if (size() != 1) throw NnError("item(): tensor is not a scalar");
  return node_->value[0];
}

Tensor Tensor::detach() const {
  return constant(node_->value, node_->rows, node_->cols);
}

// ---- arithmetic ----

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  auto out = make_node(a.rows(), a.cols(), {a.node(), b.node()});
  auto pa = a.node(), pb = b.node();
  for (int i = 0; i < out->size(); ++i)
    out->value[i] = pa->value[i] + pb->value[i];
  if (out->requires_grad) {
    Node* self = out.get();
    out->backward_fn = [pa, pb, self]() {
      for (auto& p : {pa, pb}) {
        if (!p->requires_grad) continue;
        p->ensure_grad();
        for (int i = 0; i < self->size(); ++i) p->grad[i] += self->grad[i];
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  auto out = make_node(a.rows(), a.cols(), {a.node(), b.node()});
  auto pa = a.node(), pb = b.node();
  for (int i = 0; i < out->size(); ++i)
    out->value[i] = pa->value[i] - pb->value[i];
  if (out->requires_grad) {
    Node* self = out.get();
    out->backward_fn = [pa, pb, self]() {
      if (pa->requires_grad) {
        pa->ensure_grad();
        for (int i = 0; i < self->size(); ++i) pa->grad[i] += self->grad[i];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (int i = 0; i < self->size(); ++i) pb->grad[i] -= self->grad[i];
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  auto out = make_node(a.rows(), a.cols(), {a.node(), b.node()});
  auto pa = a.node(), pb = b.node();
  for (int i = 0; i < out->size(); ++i)
    out->value[i] = pa->value[i] * pb->value[i];
  if (out->requires_grad) {
    Node* self = out.get();
    out->backward_fn = [pa, pb, self]() {
      if (pa->requires_grad) {
        pa->ensure_grad();
        for (int i = 0; i < self->size(); ++i)
          pa->grad[i] += pb->value[i] * self->grad[i];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (int i = 0; i < self->size(); ++i)
          pb->grad[i] += pa->value[i] * self->grad[i];
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor neg(const Tensor& a) {
  return unary_op(a, [](double x) { return -x; },
                  [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& a, double s) {
  return unary_op(a, [s](double x) { return s * x; },
                  [s](double, double) { return s; });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary_op(a, [s](double x) { return x + s; },
                  [](double, double) { return 1.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
                  [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh_t(const Tensor& a) {
  return unary_op(a, [](double x) { return std::tanh(x); },
                  [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(const Tensor& a) {
  return unary_op(a, [](double x) { return x > 0.0 ? x : 0.0; },
                  [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  constexpr double inv_sqrt2 = 0.7071067811865475;
  constexpr double inv_sqrt2pi = 0.3989422804014327;
  return unary_op(
      a,
      [=](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
      [=](double x, double) {
        double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
        return cdf + x * inv_sqrt2pi * std::exp(-0.5 * x * x);
      });
}

Tensor exp_t(const Tensor& a) {
  return unary_op(a, [](double x) { return std::exp(x); },
                  [](double, double y) { return y; });
}

Tensor log_t(const Tensor& a) {
  return unary_op(a, [](double x) { return std::log(x); },
                  [](double x, double) { return 1.0 / x; });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "minimum");
  auto out = make_node(a.rows(), a.cols(), {a.node(), b.node()});
  auto pa = a.node(), pb = b.node();
  for (int i = 0; i < out->size(); ++i)
    out->value[i] = std::min(pa->value[i], pb->value[i]);
  if (out->requires_grad) {
    Node* self = out.get();
    out->backward_fn = [pa, pb, self]() {
      for (int i = 0; i < self->size(); ++i) {
        Node* target = pa->value[i] <= pb->value[i] ? pa.get() : pb.get();
        if (!target->requires_grad) continue;
        target->ensure_grad();
        target->grad[i] += self->grad[i];
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  return unary_op(
      a, [lo, hi](double x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

// ---- linear algebra ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw NnError("matmul: inner dimensions disagree: " +
                  std::to_string(a.cols()) + " vs " + std::to_string(b.rows()));
  const int m = a.rows(), k = a.cols(), n = b.cols();
  auto out = make_node(m, n, {a.node(), b.node()});
  auto pa = a.node(), pb = b.node();
  cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, m, n, k, 1.0,
              pa->value.data(), k, pb->value.data(), n, 0.0, out->value.data(),
              n);
  if (out->requires_grad) {
    Node* self = out.get();
    out->backward_fn = [pa, pb, self, m, k, n]() {
      if (pa->requires_grad) {
        pa->ensure_grad();  // dA += dC * B^T
        cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, m, k, n, 1.0,
                    self->grad.data(), n, pb->value.data(), n, 1.0,
                    pa->grad.data(), k);
      }
      if (pb->requires_grad) {
        pb->ensure_grad();  // dB += A^T * dC
        cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, k, n, m, 1.0,
                    pa->value.data(), k, self->grad.data(), n, 1.0,
                    pb->grad.data(), n);
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  if (v.rows() != 1 || v.cols() != x.cols())
    throw NnError("add_rowvec: vector must be [1, cols]");
  auto out = make_node(x.rows(), x.cols(), {x.node(), v.node()});
  auto px = x.node(), pv = v.node();
  const int r = x.rows(), c = x.cols();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out->value[i * c + j] = px->value[i * c + j] + pv->value[j];
  if (out->requires_grad) {
    Node* self = out.get();
    out->backward_fn = [px, pv, self, r, c]() {
      if (px->requires_grad) {
        px->ensure_grad();
        for (int i = 0; i < r * c; ++i) px->grad[i] += self->grad[i];
      }
      if (pv->requires_grad) {
        pv->ensure_grad();
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j) pv->grad[j] += self->grad[i * c + j];
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor y = matmul(x, w);
  if (b.defined()) y = add_rowvec(y, b);
  return y;
}

Tensor mul_colvec(const Tensor& x, const Tensor& m) {
  if (m.cols() != 1 || m.rows() != x.rows())
    throw NnError("mul_colvec: vector must be [rows, 1]");
  auto out = make_node(x.rows(), x.cols(), {x.node(), m.node()});
  auto px = x.node(), pm = m.node();
  const int r = x.rows(), c = x.cols();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out->value[i * c + j] = px->value[i * c + j] * pm->value[i];
  if (out->requires_grad) {
    Node* self = out.get();
    out->backward_fn = [px, pm, self, r, c]() {
      if (px->requires_grad) {
        px->ensure_grad();
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j)
            px->grad[i * c + j] += pm->value[i] * self->grad[i * c + j];
      }
      if (pm->requires_grad) {
        pm->ensure_grad();
        for (int i = 0; i < r; ++i) {
          double acc = 0.0;
          for (int j = 0; j < c; ++j)
            acc += px->value[i * c + j] * self->grad[i * c + j];
          pm->grad[i] += acc;
        }
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor add_rowvec_masked(const Tensor& x, const Tensor& v,
                         const std::vector<std::uint8_t>& mask) {
  if (v.rows() != 1 || v.cols() != x.cols())
    throw NnError("add_rowvec_masked: vector must be [1, cols]");
  if (static_cast<int>(mask.size()) != x.rows())
    throw NnError("add_rowvec_masked: mask size must equal rows");
  auto out = make_node(x.rows(), x.cols(), {x.node(), v.node()});
  auto px = x.node(), pv = v.node();
  const int r = x.rows(), c = x.cols();
  out->value = px->value;
  for (int i = 0; i < r; ++i)
    if (mask[i])
      for (int j = 0; j < c; ++j) out->value[i * c + j] += pv->value[j];
  if (out->requires_grad) {
    Node* self = out.get();
    auto mk = mask;
    out->backward_fn = [px, pv, self, mk, r, c]() {
      if (px->requires_grad) {
        px->ensure_grad();
        for (int i = 0; i < r * c; ++i) px->grad[i] += self->grad[i];
      }
      if (pv->requires_grad) {
        pv->ensure_grad();
        for (int i = 0; i < r; ++i)
          if (mk[i])
            for (int j = 0; j < c; ++j) pv->grad[j] += self->grad[i * c + j];
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor add_rowblock(const Tensor& x, const Tensor& block) {
  if (block.cols() != x.cols() || x.rows() % block.rows() != 0)
    throw NnError("add_rowblock: rows must tile the input");
  auto out = make_node(x.rows(), x.cols(), {x.node(), block.node()});
  auto px = x.node(), pb = block.node();
  const int r = x.rows(), c = x.cols(), br = block.rows();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out->value[i * c + j] = px->value[i * c + j] + pb->value[(i % br) * c + j];
  if (out->requires_grad) {
    Node* self = out.get();
    out->backward_fn = [px, pb, self, r, c, br]() {
      if (px->requires_grad) {
        px->ensure_grad();
        for (int i = 0; i < r * c; ++i) px->grad[i] += self->grad[i];
      }
      if (pb->requires_grad) {
        pb->ensure_grad();
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j)
            pb->grad[(i % br) * c + j] += self->grad[i * c + j];
      }
    };
  }
  return Tensor::wrap(out);
}

// ---- shape ----

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw NnError("concat_rows: no inputs");
  int rows = 0;
  const int cols = parts[0].cols();
  std::vector<std::shared_ptr<Node>> parents;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw NnError("concat_rows: column mismatch");
    rows += p.rows();
    parents.push_back(p.node());
  }
  auto out = make_node(rows, cols, parents);
  int at = 0;
  for (const auto& p : parents) {
    std::copy(p->value.begin(), p->value.end(), out->value.begin() + at);
    at += p->size();
  }
  if (out->requires_grad) {
    Node* self = out.get();
    out->backward_fn = [self]() {
      int at = 0;
      for (auto& p : self->parents) {
        if (p->requires_grad) {
          p->ensure_grad();
          for (int i = 0; i < p->size(); ++i) p->grad[i] += self->grad[at + i];
        }
        at += p->size();
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw NnError("concat_cols: no inputs");
  const int rows = parts[0].rows();
  int cols = 0;
  std::vector<std::shared_ptr<Node>> parents;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw NnError("concat_cols: row mismatch");
    cols += p.cols();
    parents.push_back(p.node());
  }
  auto out = make_node(rows, cols, parents);
  int at = 0;
  for (const auto& p : parents) {
    for (int i = 0; i < rows; ++i)
      std::copy(p->value.begin() + i * p->cols,
                p->value.begin() + (i + 1) * p->cols,
                out->value.begin() + i * cols + at);
    at += p->cols;
  }
  if (out->requires_grad) {
    Node* self = out.get();
    out->backward_fn = [self, rows, cols]() {
      int at = 0;
      for (auto& p : self->parents) {
        if (p->requires_grad) {
          p->ensure_grad();
          for (int i = 0; i < rows; ++i)
            for (int j = 0; j < p->cols; ++j)
              p->grad[i * p->cols + j] += self->grad[i * cols + at + j];
        }
        at += p->cols;
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor slice_rows(const Tensor& x, int r0, int r1) {
  if (r0 < 0 || r1 > x.rows() || r0 >= r1)
    throw NnError("slice_rows: bad range");
  auto out = make_node(r1 - r0, x.cols(), {x.node()});
  auto px = x.node();
  const int c = x.cols();
  std::copy(px->value.begin() + r0 * c, px->value.begin() + r1 * c,
            out->value.begin());
  if (out->requires_grad) {
    Node* self = out.get();
    out->backward_fn = [px, self, r0, c]() {
      if (!px->requires_grad) return;
      px->ensure_grad();
      for (int i = 0; i < self->size(); ++i)
        px->grad[r0 * c + i] += self->grad[i];
    };
  }
  return Tensor::wrap(out);
}

Tensor slice_cols(const Tensor& x, int c0, int c1) {
  if (c0 < 0 || c1 > x.cols() || c0 >= c1)
    throw NnError("slice_cols: bad range");
  auto out = make_node(x.rows(), c1 - c0, {x.node()});
  auto px = x.node();
  const int c = x.cols(), w = c1 - c0;
  for (int i = 0; i < x.rows(); ++i)
    std::copy(px->value.begin() + i * c + c0, px->value.begin() + i * c + c1,
              out->value.begin() + i * w);
  if (out->requires_grad) {
    Node* self = out.get();
    const int rows = x.rows();
    out->backward_fn = [px, self, c0, c, w, rows]() {
      if (!px->requires_grad) return;
      px->ensure_grad();
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < w; ++j)
          px->grad[i * c + c0 + j] += self->grad[i * w + j];
    };
  }
  return Tensor::wrap(out);
}

Tensor gather_rows(const Tensor& x, std::vector<int> idx) {
  auto out = make_node(static_cast<int>(idx.size()), x.cols(), {x.node()});
  auto px = x.node();
  const int c = x.cols();
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= x.rows())
      throw NnError("gather_rows: index out of range");
    std::copy(px->value.begin() + idx[i] * c,
              px->value.begin() + (idx[i] + 1) * c, out->value.begin() + i * c);
  }
  if (out->requires_grad) {
    Node* self = out.get();
    auto ids = std::move(idx);
    out->backward_fn = [px, self, ids, c]() {
      if (!px->requires_grad) return;
      px->ensure_grad();
      for (size_t i = 0; i < ids.size(); ++i)
        for (int j = 0; j < c; ++j)
          px->grad[ids[i] * c + j] += self->grad[i * c + j];
    };
  }
  return Tensor::wrap(out);
}

Tensor take_every(const Tensor& x, int stride, int offset) {
  std::vector<int> idx;
  for (int i = offset; i < x.rows(); i += stride) idx.push_back(i);
  return gather_rows(x, std::move(idx));
}

// ---- reductions ----

Tensor sum_all(const Tensor& a) {
  auto out = make_node(1, 1, {a.node()});
  auto pa = a.node();
  double s = 0.0;
  for (double v : pa->value) s += v;
  out->value[0] = s;
  if (out->requires_grad) {
    Node* self = out.get();
    out->backward_fn = [pa, self]() {
      if (!pa->requires_grad) return;
      pa->ensure_grad();
      for (auto& g : pa->grad) g += self->grad[0];
    };
  }
  return Tensor::wrap(out);
}

Tensor mean_all(const Tensor& a) {
  return scale(sum_all(a), 1.0 / a.size());
}

Tensor mse(const Tensor& pred, const Tensor& target) {
  check_same_shape(pred, target, "mse");
  auto out = make_node(1, 1, {pred.node()});  // target is constant
  auto pp = pred.node();
  auto pt = target.node();
  double s = 0.0;
  for (int i = 0; i < pred.size(); ++i) {
    double d = pp->value[i] - pt->value[i];
    s += d * d;
  }
  out->value[0] = s / pred.size();
  if (out->requires_grad) {
    Node* self = out.get();
    auto tval = pt->value;
    out->backward_fn = [pp, self, tval]() {
      if (!pp->requires_grad) return;
      pp->ensure_grad();
      const double k = 2.0 / pp->value.size() * self->grad[0];
      for (size_t i = 0; i < pp->value.size(); ++i)
        pp->grad[i] += k * (pp->value[i] - tval[i]);
    };
  }
  return Tensor::wrap(out);
}

// ---- normalization ----

Tensor softmax_rows(const Tensor& x) {
  auto out = make_node(x.rows(), x.cols(), {x.node()});
  auto px = x.node();
  const int r = x.rows(), c = x.cols();
  for (int i = 0; i < r; ++i) {
    const double* xi = px->value.data() + i * c;
    double* yi = out->value.data() + i * c;
    double mx = *std::max_element(xi, xi + c);
    double s = 0.0;
    for (int j = 0; j < c; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      s += yi[j];
    }
    for (int j = 0; j < c; ++j) yi[j] /= s;
  }
  if (out->requires_grad) {
    Node* self = out.get();
    out->backward_fn = [px, self, r, c]() {
      if (!px->requires_grad) return;
      px->ensure_grad();
      for (int i = 0; i < r; ++i) {
        const double* y = self->value.data() + i * c;
        const double* dy = self->grad.data() + i * c;
        double dot = 0.0;
        for (int j = 0; j < c; ++j) dot += y[j] * dy[j];
        for (int j = 0; j < c; ++j)
          px->grad[i * c + j] += y[j] * (dy[j] - dot);
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor log_softmax_rows(const Tensor& x) {
  auto out = make_node(x.rows(), x.cols(), {x.node()});
  auto px = x.node();
  const int r = x.rows(), c = x.cols();
  for (int i = 0; i < r; ++i) {
    const double* xi = px->value.data() + i * c;
    double* yi = out->value.data() + i * c;
    double mx = *std::max_element(xi, xi + c);
    double s = 0.0;
    for (int j = 0; j < c; ++j) s += std::exp(xi[j] - mx);
    double lse = mx + std::log(s);
    for (int j = 0; j < c; ++j) yi[j] = xi[j] - lse;
  }
  if (out->requires_grad) {
    Node* self = out.get();
    out->backward_fn = [px, self, r, c]() {
      if (!px->requires_grad) return;
      px->ensure_grad();
      for (int i = 0; i < r; ++i) {
        const double* y = self->value.data() + i * c;
        const double* dy = self->grad.data() + i * c;
        double sum_dy = 0.0;
        for (int j = 0; j < c; ++j) sum_dy += dy[j];
        for (int j = 0; j < c; ++j)
          px->grad[i * c + j] += dy[j] - std::exp(y[j]) * sum_dy;
      }
    };
  }
  return Tensor::wrap(out);
}

Tensor layer_norm_rows(const Tensor& x, const Tensor& gain,
                       const Tensor& bias) {
  if (gain.rows() != 1 || gain.cols() != x.cols() || bias.rows() != 1 ||
      bias.cols() != x.cols())
    throw NnError("layer_norm_rows: gain/bias must be [1, cols]");
  constexpr double eps = 1e-5;
  auto out = make_node(x.rows(), x.cols(), {x.node(), gain.node(), bias.node()});
  auto px = x.node(), pg = gain.node(), pb = bias.node();
  const int r = x.rows(), c = x.cols();
  auto xhat = std::make_shared<std::vector<double>>(px->value.size());
  auto inv_sigma = std::make_shared<std::vector<double>>(r);
  for (int i = 0; i < r; ++i) {
    const double* xi = px->value.data() + i * c;
    double mu = 0.0;
    for (int j = 0; j < c; ++j) mu += xi[j];
    mu /= c;
    double var = 0.0;
    for (int j = 0; j < c; ++j) var += (xi[j] - mu) * (xi[j] - mu);
    var /= c;
    double is = 1.0 / std::sqrt(var + eps);
    (*inv_sigma)[i] = is;
    for (int j = 0; j < c; ++j) {
      double h = (xi[j] - mu) * is;
      (*xhat)[i * c + j] = h;
      out->value[i * c + j] = pg->value[j] * h + pb->value[j];
    }
  }
  if (out->requires_grad) {
    Node* self = out.get();
    out->backward_fn = [px, pg, pb, self, xhat, inv_sigma, r, c]() {
      for (int i = 0; i < r; ++i) {
        const double* dy = self->grad.data() + i * c;
        const double* h = xhat->data() + i * c;
        if (pg->requires_grad) {
          pg->ensure_grad();
          for (int j = 0; j < c; ++j) pg->grad[j] += dy[j] * h[j];
        }
        if (pb->requires_grad) {
          pb->ensure_grad();
          for (int j = 0; j < c; ++j) pb->grad[j] += dy[j];
        }
        if (px->requires_grad) {
          px->ensure_grad();
          double mean_dh = 0.0, mean_dh_h = 0.0;
          for (int j = 0; j < c; ++j) {
            double dh = dy[j] * pg->value[j];
            mean_dh += dh;
            mean_dh_h += dh * h[j];
          }
          mean_dh /= c;
          mean_dh_h /= c;
          for (int j = 0; j < c; ++j) {
            double dh = dy[j] * pg->value[j];
            px->grad[i * c + j] +=
                (*inv_sigma)[i] * (dh - mean_dh - h[j] * mean_dh_h);
          }
        }
      }
    };
  }
  return Tensor::wrap(out);
}

// ---- attention ----

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads,
                 int len, bool causal, const std::vector<std::uint8_t>* valid,
                 AttnCapture* capture) {
  const int d = q.cols();
  if (d % heads != 0)
    throw NnError("attention: embedding dimension " + std::to_string(d) +
                  " not divisible by " + std::to_string(heads) + " heads");
  if (q.rows() % len != 0) throw NnError("attention: rows not a multiple of len");
  check_same_shape(q, k, "attention(q,k)");
  check_same_shape(q, v, "attention(q,v)");
  if (valid && static_cast<int>(valid->size()) != q.rows())
    throw NnError("attention: valid mask size mismatch");

  const int batch = q.rows() / len;
  const int dk = d / heads;
  const double scl = 1.0 / std::sqrt(static_cast<double>(dk));

  auto out = make_node(q.rows(), d, {q.node(), k.node(), v.node()});
  auto pq = q.node(), pk = k.node(), pv = v.node();

  // per (seq, head) attention probabilities, kept for the backward pass
  auto probs =
      std::make_shared<std::vector<double>>(static_cast<size_t>(batch) * heads *
                                            len * len);
  std::vector<std::uint8_t> vmask;
  if (valid) vmask = *valid;

  auto allowed = [len, causal](const std::vector<std::uint8_t>& vm, int b,
                               int i, int j) {
    if (causal && j > i) return false;
    if (!vm.empty()) {
      if (!vm[b * len + i]) return i == j;  // invalid query: self only
      if (!vm[b * len + j]) return false;
    }
    return true;
  };

  for (int b = 0; b < batch; ++b) {
    for (int h = 0; h < heads; ++h) {
      double* P = probs->data() + (static_cast<size_t>(b) * heads + h) * len * len;
      for (int i = 0; i < len; ++i) {
        const double* qi = pq->value.data() + (b * len + i) * d + h * dk;
        double mx = -1e300;
        for (int j = 0; j < len; ++j) {
          double s;
          if (!allowed(vmask, b, i, j)) {
            s = -1e300;
          } else {
            const double* kj = pk->value.data() + (b * len + j) * d + h * dk;
            s = 0.0;
            for (int t = 0; t < dk; ++t) s += qi[t] * kj[t];
            s *= scl;
          }
          P[i * len + j] = s;
          mx = std::max(mx, s);
        }
        double sum = 0.0;
        for (int j = 0; j < len; ++j) {
          double e = P[i * len + j] <= -1e299 ? 0.0 : std::exp(P[i * len + j] - mx);
          P[i * len + j] = e;
          sum += e;
        }
        for (int j = 0; j < len; ++j) P[i * len + j] /= sum;
        double* oi = out->value.data() + (b * len + i) * d + h * dk;
        for (int t = 0; t < dk; ++t) oi[t] = 0.0;
        for (int j = 0; j < len; ++j) {
          double p = P[i * len + j];
          if (p == 0.0) continue;
          const double* vj = pv->value.data() + (b * len + j) * d + h * dk;
          for (int t = 0; t < dk; ++t) oi[t] += p * vj[t];
        }
      }
    }
  }

  if (capture) {
    capture->batch = batch;
    capture->heads = heads;
    capture->len = len;
    capture->probs.clear();
    for (int b = 0; b < batch; ++b)
      for (int h = 0; h < heads; ++h) {
        auto first = probs->begin() +
                     (static_cast<size_t>(b) * heads + h) * len * len;
        capture->probs.emplace_back(first, first + len * len);
      }
  }

  if (out->requires_grad) {
    Node* self = out.get();
    out->backward_fn = [pq, pk, pv, self, probs, batch, heads, len, dk, d,
                        scl]() {
      std::vector<double> dS(static_cast<size_t>(len) * len);
      if (pq->requires_grad) pq->ensure_grad();
      if (pk->requires_grad) pk->ensure_grad();
      if (pv->requires_grad) pv->ensure_grad();
      for (int b = 0; b < batch; ++b) {
        for (int h = 0; h < heads; ++h) {
          const double* P =
              probs->data() + (static_cast<size_t>(b) * heads + h) * len * len;
          // dP then dS = (dP - rowdot(dP, P)) .* P
          for (int i = 0; i < len; ++i) {
            const double* doi = self->grad.data() + (b * len + i) * d + h * dk;
            double rowdot = 0.0;
            for (int j = 0; j < len; ++j) {
              double dp = 0.0;
              const double* vj = pv->value.data() + (b * len + j) * d + h * dk;
              for (int t = 0; t < dk; ++t) dp += doi[t] * vj[t];
              dS[i * len + j] = dp;
              rowdot += dp * P[i * len + j];
            }
            for (int j = 0; j < len; ++j)
              dS[i * len + j] = (dS[i * len + j] - rowdot) * P[i * len + j];
          }
          if (pv->requires_grad) {
            for (int j = 0; j < len; ++j) {
              double* dvj = pv->grad.data() + (b * len + j) * d + h * dk;
              for (int i = 0; i < len; ++i) {
                double p = P[i * len + j];
                if (p == 0.0) continue;
                const double* doi =
                    self->grad.data() + (b * len + i) * d + h * dk;
                for (int t = 0; t < dk; ++t) dvj[t] += p * doi[t];
              }
            }
          }
          if (pq->requires_grad) {
            for (int i = 0; i < len; ++i) {
              double* dqi = pq->grad.data() + (b * len + i) * d + h * dk;
              for (int j = 0; j < len; ++j) {
                double ds = dS[i * len + j] * scl;
                if (ds == 0.0) continue;
                const double* kj =
                    pk->value.data() + (b * len + j) * d + h * dk;
                for (int t = 0; t < dk; ++t) dqi[t] += ds * kj[t];
              }
            }
          }
          if (pk->requires_grad) {
            for (int j = 0; j < len; ++j) {
              double* dkj = pk->grad.data() + (b * len + j) * d + h * dk;
              for (int i = 0; i < len; ++i) {
                double ds = dS[i * len + j] * scl;
                if (ds == 0.0) continue;
                const double* qi =
                    pq->value.data() + (b * len + i) * d + h * dk;
                for (int t = 0; t < dk; ++t) dkj[t] += ds * qi[t];
              }
            }
          }
        }
      }
    };
  }
  return Tensor::wrap(out);
}

// ---- backward ----

void backward(const Tensor& root) {
  if (!root.defined() || root.size() != 1)
    throw NnError("backward: root must be a scalar tensor");
  Node* rn = root.node().get();
  if (rn->grad_done)
    throw NnError("backward: already called on this graph; reset grads first");
  if (!rn->requires_grad)
    throw NnError("backward: root does not require grad");

  // iterative post-order DFS over parents; reversed gives topological order
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack{{rn, 0}};
  seen.insert(rn);
  while (!stack.empty()) {
    auto& [n, i] = stack.back();
    if (i < n->parents.size()) {
      Node* p = n->parents[i++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  rn->ensure_grad();
  rn->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    n->ensure_grad();
    if (n->backward_fn) n->backward_fn();
  }
  rn->grad_done = true;
}

// ---- parameters ----

Tensor& ParamStore::add(const std::string& name, int rows, int cols, Rng& rng,
                        double scale) {
  if (params_.count(name)) throw NnError("duplicate parameter: " + name);
  double s = scale >= 0.0 ? scale : 1.0 / std::sqrt(static_cast<double>(rows));
  std::vector<double> v(static_cast<size_t>(rows) * cols);
  for (auto& x : v) x = s == 0.0 ? 0.0 : rng.normal() * s;
  auto [it, ok] = params_.emplace(name, Tensor::param(std::move(v), rows, cols));
  (void)ok;
  return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw NnError("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw NnError("unknown parameter: " + name);
  return it->second;
}

void ParamStore::zero_grad() {
  for (auto& [name, t] : params_) {
    (void)name;
    auto n = t.node();
    std::fill(n->grad.begin(), n->grad.end(), 0.0);
    n->grad_done = false;
  }
}

void Adam::step(ParamStore& params) {
  t_ += 1;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (auto& [name, p] : params.items()) {
    auto n = p.node();
    n->ensure_grad();
    auto& [m, v] = state_[name];
    if (m.empty()) {
      m.assign(n->value.size(), 0.0);
      v.assign(n->value.size(), 0.0);
    }
    for (size_t i = 0; i < n->value.size(); ++i) {
      double g = n->grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      double mhat = m[i] / bc1;
      double vhat = v[i] / bc2;
      n->value[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace xlight::nn
