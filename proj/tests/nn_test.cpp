#include <doctest.h>

#include <cmath>
#include <vector>

#include "test_util.hpp"
#include "xlight/nn.hpp"
#include "xlight/rng.hpp"

using namespace xlight;
using nn::Tensor;
using testutil::fd_grad;
using testutil::max_rel_err;

namespace {

Tensor random_param(int rows, int cols, Rng& rng, double lo = -1.0,
                    double hi = 1.0) {
  std::vector<double> v(static_cast<size_t>(rows) * cols);
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::param(std::move(v), rows, cols);
}

// clears accumulated gradients so repeated backward calls stay independent
void reset_grad(Tensor& t) { t.node()->grad.assign(t.size(), 0.0); }

// checks d(sum f(x))/dx against central differences
void check_unary(const std::function<Tensor(const Tensor&)>& f, double lo,
                 double hi, double tol, int rows = 3, int cols = 4,
                 std::uint64_t seed = 7) {
  Rng rng(seed);
  Tensor x = random_param(rows, cols, rng, lo, hi);
  auto forward = [&] { return nn::sum_all(f(x)).item(); };
  Tensor loss = nn::sum_all(f(x));
  nn::backward(loss);
  CHECK(max_rel_err(x.grad(), fd_grad(x, forward)) < tol);
}

}  // namespace

TEST_SUITE("nn") {

TEST_CASE("linear identity and arithmetic") {
  Tensor x = Tensor::constant({1.0, 2.0}, 1, 2);
  Tensor w = Tensor::constant({1.0, 0.0, 0.0, 1.0}, 2, 2);
  Tensor b0 = Tensor::constant({0.0, 0.0}, 1, 2);
  Tensor y = nn::linear(x, w, b0);
  CHECK(y.at(0, 0) == 1.0);
  CHECK(y.at(0, 1) == 2.0);

  Tensor b = Tensor::constant({3.0, 3.0}, 1, 2);
  Tensor z = nn::linear(x, w, b);
  CHECK(z.at(0, 0) == 4.0);
  CHECK(z.at(0, 1) == 5.0);
}

TEST_CASE("linear shape mismatch is reported") {
  Tensor x = Tensor::constant({1.0, 2.0, 3.0}, 1, 3);
  Tensor w = Tensor::constant({1.0, 0.0, 0.0, 1.0}, 2, 2);
  CHECK_THROWS_AS(nn::matmul(x, w), nn::NnError);
}

TEST_CASE("elementwise gradients match finite differences") {
  check_unary([](const Tensor& x) { return nn::sigmoid(x); }, -2, 2, 1e-6);
  check_unary([](const Tensor& x) { return nn::tanh_t(x); }, -2, 2, 1e-6);
  // keep relu/clamp inputs away from their kinks
  check_unary([](const Tensor& x) { return nn::relu(x); }, 0.5, 2, 1e-6);
  check_unary([](const Tensor& x) { return nn::relu(x); }, -2, -0.5, 1e-6);
  check_unary([](const Tensor& x) { return nn::gelu(x); }, -2, 2, 1e-5);
  check_unary([](const Tensor& x) { return nn::exp_t(x); }, -1, 1, 1e-6);
  check_unary([](const Tensor& x) { return nn::log_t(x); }, 0.5, 3, 1e-6);
  check_unary([](const Tensor& x) { return nn::clamp(x, -0.4, 0.4); }, 0.5, 2,
              1e-6);
  check_unary([](const Tensor& x) { return nn::neg(x); }, -1, 1, 1e-9);
  check_unary([](const Tensor& x) { return nn::scale(x, 2.5); }, -1, 1, 1e-9);
  check_unary([](const Tensor& x) { return nn::add_scalar(x, 1.5); }, -1, 1,
              1e-9);
  check_unary([](const Tensor& x) { return nn::mean_all(x); }, -1, 1, 1e-9);
  check_unary([](const Tensor& x) { return nn::softmax_rows(x); }, -2, 2, 1e-6);
  check_unary(
      [](const Tensor& x) {
        return nn::mul(nn::log_softmax_rows(x), nn::softmax_rows(x));
      },
      -2, 2, 1e-6);
}

TEST_CASE("binary op gradients match finite differences") {
  Rng rng(11);
  Tensor a = random_param(3, 4, rng);
  Tensor b = random_param(3, 4, rng, 0.5, 1.5);  // keep |a-b| off zero ties
  for (auto f : {+[](const Tensor& x, const Tensor& y) { return nn::add(x, y); },
                 +[](const Tensor& x, const Tensor& y) { return nn::sub(x, y); },
                 +[](const Tensor& x, const Tensor& y) { return nn::mul(x, y); },
                 +[](const Tensor& x, const Tensor& y) {
                   return nn::minimum(x, y);
                 }}) {
    auto forward = [&] { return nn::sum_all(f(a, b)).item(); };
    reset_grad(a);
    reset_grad(b);
    Tensor loss = nn::sum_all(f(a, b));
    nn::backward(loss);
    CHECK(max_rel_err(a.grad(), fd_grad(a, forward)) < 1e-6);
    CHECK(max_rel_err(b.grad(), fd_grad(b, forward)) < 1e-6);
  }
}

TEST_CASE("matmul and linear gradients") {
  Rng rng(13);
  Tensor x = random_param(3, 5, rng);
  Tensor w = random_param(5, 2, rng);
  Tensor b = random_param(1, 2, rng);
  auto forward = [&] {
    return nn::sum_all(nn::mul(nn::linear(x, w, b), nn::linear(x, w, b)))
        .item();
  };
  Tensor y = nn::linear(x, w, b);
  Tensor loss = nn::sum_all(nn::mul(y, y));
  nn::backward(loss);
  CHECK(max_rel_err(x.grad(), fd_grad(x, forward)) < 1e-6);
  CHECK(max_rel_err(w.grad(), fd_grad(w, forward)) < 1e-6);
  CHECK(max_rel_err(b.grad(), fd_grad(b, forward)) < 1e-6);
}

TEST_CASE("structural op gradients") {
  Rng rng(17);
  Tensor x = random_param(4, 6, rng);
  Tensor v = random_param(1, 6, rng);
  Tensor m = random_param(4, 1, rng);
  Tensor blk = random_param(2, 6, rng);
  std::vector<std::uint8_t> mask = {1, 0, 0, 1};

  auto check = [&](const std::function<Tensor()>& f, Tensor& p) {
    auto forward = [&] { return nn::sum_all(nn::mul(f(), f())).item(); };
    reset_grad(p);
    Tensor y = f();
    Tensor loss = nn::sum_all(nn::mul(y, y));
    nn::backward(loss);
    CHECK(max_rel_err(p.grad(), fd_grad(p, forward)) < 1e-6);
  };
  check([&] { return nn::add_rowvec(x, v); }, v);
  check([&] { return nn::mul_colvec(x, m); }, m);
  check([&] { return nn::add_rowvec_masked(x, v, mask); }, v);
  check([&] { return nn::add_rowblock(x, blk); }, blk);
  check([&] { return nn::concat_rows({x, x}); }, x);
  check([&] { return nn::concat_cols({x, x}); }, x);
  check([&] { return nn::slice_rows(x, 1, 3); }, x);
  check([&] { return nn::slice_cols(x, 2, 5); }, x);
  check([&] { return nn::gather_rows(x, {2, 0, 2, 3}); }, x);
  check([&] { return nn::take_every(x, 2, 1); }, x);
}

TEST_CASE("layer norm gradient") {
  Rng rng(19);
  Tensor x = random_param(3, 6, rng);
  Tensor g = random_param(1, 6, rng, 0.5, 1.5);
  Tensor b = random_param(1, 6, rng);
  auto forward = [&] {
    Tensor y = nn::layer_norm_rows(x, g, b);
    return nn::sum_all(nn::mul(y, y)).item();
  };
  Tensor y = nn::layer_norm_rows(x, g, b);
  Tensor loss = nn::sum_all(nn::mul(y, y));
  nn::backward(loss);
  CHECK(max_rel_err(x.grad(), fd_grad(x, forward)) < 1e-5);
  CHECK(max_rel_err(g.grad(), fd_grad(g, forward)) < 1e-5);
  CHECK(max_rel_err(b.grad(), fd_grad(b, forward)) < 1e-5);
}

TEST_CASE("mse value and gradient; target is constant") {
  Tensor p = Tensor::param({1.0, 3.0, 5.0, 7.0}, 2, 2);
  Tensor t = Tensor::param({-1.0, 1.0, 3.0, 5.0}, 2, 2);
  Tensor loss = nn::mse(p, t);
  CHECK(loss.item() == doctest::Approx(4.0).epsilon(1e-12));
  nn::backward(loss);
  // gradient reaches the prediction but not the target
  double gp = 0.0, gt = 0.0;
  for (double g : p.grad()) gp += std::fabs(g);
  for (double g : t.grad()) gt += std::fabs(g);
  CHECK(gp > 0.0);
  CHECK(gt == 0.0);

  Rng rng(23);
  Tensor a = random_param(3, 4, rng);
  Tensor b = random_param(3, 4, rng);
  auto forward = [&] { return nn::mse(a, b).item(); };
  Tensor l2 = nn::mse(a, b);
  nn::backward(l2);
  CHECK(max_rel_err(a.grad(), fd_grad(a, forward)) < 1e-6);
}

TEST_CASE("softmax properties") {
  Tensor x = Tensor::constant({0.0, 0.0}, 1, 2);
  Tensor y = nn::softmax_rows(x);
  CHECK(y.at(0, 0) == doctest::Approx(0.5).epsilon(1e-15));

  Tensor big = Tensor::constant({1000.0, 1000.0}, 1, 2);
  Tensor yb = nn::softmax_rows(big);
  CHECK(std::isfinite(yb.at(0, 0)));
  CHECK(yb.at(0, 0) == doctest::Approx(0.5).epsilon(1e-15));

  Rng rng(29);
  Tensor r = random_param(8, 5, rng, -4, 4);
  Tensor s = nn::softmax_rows(r);
  for (int i = 0; i < s.rows(); ++i) {
    double sum = 0.0;
    for (int j = 0; j < s.cols(); ++j) sum += s.at(i, j);
    CHECK(std::fabs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("attention: uniform weights for identical keys, L=1 identity") {
  Rng rng(31);
  const int L = 4, d = 6, heads = 2;
  std::vector<double> kv(L * d);
  for (int i = 0; i < L; ++i)
    for (int j = 0; j < d; ++j) kv[i * d + j] = 0.3 * j;  // identical rows
  Tensor k = Tensor::constant(kv, L, d);
  Tensor q = random_param(L, d, rng);
  Tensor v = random_param(L, d, rng);
  nn::AttnCapture cap;
  nn::attention(q, k, v, heads, L, /*causal=*/false, nullptr, &cap);
  for (const auto& probs : cap.probs)
    for (double p : probs) CHECK(p == doctest::Approx(1.0 / L).epsilon(1e-12));

  Tensor q1 = random_param(1, d, rng);
  Tensor k1 = random_param(1, d, rng);
  Tensor v1 = random_param(1, d, rng);
  Tensor out = nn::attention(q1, k1, v1, heads, 1, false);
  for (int j = 0; j < d; ++j)
    CHECK(out.at(0, j) == doctest::Approx(v1.at(0, j)).epsilon(1e-12));
}

TEST_CASE("attention gradients (full, causal, masked, batched)") {
  Rng rng(37);
  const int B = 2, L = 3, d = 6, heads = 2;
  Tensor q = random_param(B * L, d, rng);
  Tensor k = random_param(B * L, d, rng);
  Tensor v = random_param(B * L, d, rng);
  std::vector<std::uint8_t> valid = {1, 1, 0, 1, 1, 1};

  for (int mode = 0; mode < 3; ++mode) {
    bool causal = mode == 1;
    const std::vector<std::uint8_t>* vp = mode == 2 ? &valid : nullptr;
    auto forward = [&] {
      Tensor y = nn::attention(q, k, v, heads, L, causal, vp);
      return nn::sum_all(nn::mul(y, y)).item();
    };
    reset_grad(q);
    reset_grad(k);
    reset_grad(v);
    Tensor y = nn::attention(q, k, v, heads, L, causal, vp);
    Tensor loss = nn::sum_all(nn::mul(y, y));
    nn::backward(loss);
    CHECK(max_rel_err(q.grad(), fd_grad(q, forward)) < 1e-4);
    CHECK(max_rel_err(k.grad(), fd_grad(k, forward)) < 1e-4);
    CHECK(max_rel_err(v.grad(), fd_grad(v, forward)) < 1e-4);
  }
}

TEST_CASE("causal attention blocks future positions") {
  Rng rng(41);
  const int L = 4, d = 4, heads = 2;
  Tensor q = random_param(L, d, rng);
  Tensor k = random_param(L, d, rng);
  Tensor v = random_param(L, d, rng);
  nn::AttnCapture cap;
  nn::attention(q, k, v, heads, L, /*causal=*/true, nullptr, &cap);
  for (const auto& probs : cap.probs)
    for (int i = 0; i < L; ++i)
      for (int j = i + 1; j < L; ++j) CHECK(probs[i * L + j] == 0.0);
}

TEST_CASE("backward twice on one root throws") {
  Tensor x = Tensor::param({1.0, 2.0}, 1, 2);
  Tensor loss = nn::sum_all(nn::mul(x, x));
  nn::backward(loss);
  CHECK_THROWS_AS(nn::backward(loss), nn::NnError);
}

TEST_CASE("forward passes are deterministic") {
  Rng rng(43);
  Tensor q = random_param(6, 6, rng);
  Tensor a = nn::attention(q, q, q, 2, 3, true);
  Tensor b = nn::attention(q, q, q, 2, 3, true);
  CHECK(a.values() == b.values());
}

TEST_CASE("adam: zero grad is a no-op; first step magnitude is about lr") {
  Rng rng(47);
  nn::ParamStore params;
  Tensor& w = params.add("w", 2, 2, rng);
  std::vector<double> before = w.values();

  nn::AdamConfig cfg;
  CHECK(cfg.lr == 5e-4);
  nn::Adam opt(cfg);
  params.zero_grad();
  opt.step(params);
  CHECK(w.values() == before);

  // first bias-corrected step moves every entry by lr against the gradient
  nn::Adam fresh(cfg);
  w.node()->ensure_grad();
  w.node()->grad = {1.0, -2.0, 0.5, 3.0};
  fresh.step(params);
  for (int i = 0; i < 4; ++i) {
    double delta = w.values()[i] - before[i];
    double expect = -cfg.lr * (w.node()->grad[i] > 0 ? 1.0 : -1.0);
    CHECK(delta == doctest::Approx(expect).epsilon(1e-3));
  }
}

}  // TEST_SUITE
