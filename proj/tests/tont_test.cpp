#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "test_util.hpp"
#include "xlight/tont.hpp"

using namespace xlight;

namespace {

StepFeature feat(Rng& rng, int action = -1, double reward = 0.0) {
  StepFeature f;
  f.raw_o.resize(kRawFeatureDim);
  for (double& v : f.raw_o) v = rng.uniform(0.0, 1.0);
  f.a_prev = action;
  f.r_prev = reward;
  return f;
}

EncodeRecord record(Rng& rng, const ModelConfig& cfg, int valid_from = 0) {
  EncodeRecord r;
  for (int k = 0; k < cfg.k_history; ++k) {
    StepGroup g;
    g.push_back(feat(rng, k % kNumPhases, rng.uniform(-1.0, 0.0)));
    for (int n = 0; n < cfg.neighbors; ++n)
      g.push_back(feat(rng, (k + n) % kNumPhases, rng.uniform(-1.0, 0.0)));
    r.steps.push_back(g);
    r.valid.push_back(k >= valid_from ? 1 : 0);
  }
  return r;
}

}  // namespace

TEST_SUITE("tont") {

TEST_CASE("token count is 3(1+n)+1 for n in 0..4") {
  for (int n = 0; n <= 4; ++n) {
    ModelConfig cfg = testutil::toy_model(n);
    CHECK(cfg.tokens() == 3 * (1 + n) + 1);

    Rng rng(n + 1);
    nn::ParamStore params;
    add_tont_params(params, cfg, rng);
    StepGroup g{feat(rng)};
    nn::Tensor tokens = assemble_tokens({g}, params, cfg);
    CHECK(tokens.rows() == cfg.tokens());
    CHECK(tokens.cols() == cfg.dim);
    CHECK(token_labels(cfg).size() == static_cast<size_t>(cfg.tokens()));
  }
}

TEST_CASE("missing neighbors behave like explicitly absent ones") {
  ModelConfig cfg = testutil::toy_model(2);
  Rng rng(3);
  nn::ParamStore params;
  add_tont_params(params, cfg, rng);

  Rng data(7);
  StepFeature target = feat(data, 4, -0.3);
  StepGroup implicit{target};  // neighbors simply not listed
  StepGroup expl{target};
  StepFeature absent;
  absent.present = false;
  expl.push_back(absent);
  expl.push_back(absent);

  nn::Tensor a = assemble_tokens({implicit}, params, cfg);
  nn::Tensor b = assemble_tokens({expl}, params, cfg);
  CHECK(a.values() == b.values());
}

TEST_CASE("permuting neighbor order changes the token matrix") {
  ModelConfig cfg = testutil::toy_model(2);
  Rng rng(5);
  nn::ParamStore params;
  add_tont_params(params, cfg, rng);

  Rng data(9);
  StepFeature target = feat(data, 1, -0.1);
  StepFeature n1 = feat(data, 2, -0.2);
  StepFeature n2 = feat(data, 3, -0.3);
  nn::Tensor a = assemble_tokens({{target, n1, n2}}, params, cfg);
  nn::Tensor b = assemble_tokens({{target, n2, n1}}, params, cfg);
  CHECK(a.values() != b.values());
}

TEST_CASE("lower attention rows sum to one in every layer and head") {
  ModelConfig cfg;  // full-size: d=114, 6 heads, 3 layers
  Rng rng(11);
  nn::ParamStore params;
  add_tont_params(params, cfg, rng);

  Rng data(13);
  std::vector<StepGroup> groups;
  for (int r = 0; r < 2; ++r) {
    StepGroup g{feat(data, 0, -0.5)};
    for (int n = 0; n < 3; ++n) g.push_back(feat(data, n, -0.2));
    groups.push_back(g);
  }
  LowerStepResult low = lower_step(groups, params, cfg, /*capture_attn=*/true);
  CHECK(low.c.rows() == 2);
  CHECK(low.c.cols() == cfg.dim);
  REQUIRE(low.attn.size() == static_cast<size_t>(cfg.lower_layers));
  for (const nn::AttnCapture& cap : low.attn) {
    CHECK(cap.len == cfg.tokens());
    for (const auto& probs : cap.probs)
      for (int i = 0; i < cap.len; ++i) {
        double sum = 0.0;
        for (int j = 0; j < cap.len; ++j) sum += probs[i * cap.len + j];
        CHECK(std::fabs(sum - 1.0) < 1e-9);
      }
  }
}

TEST_CASE("duplicating the target as its own neighbor stays finite") {
  ModelConfig cfg = testutil::toy_model(1);
  Rng rng(15);
  nn::ParamStore params;
  add_tont_params(params, cfg, rng);
  Rng data(17);
  StepFeature t = feat(data, 2, -0.4);
  nn::Tensor a = lower_step({{t, t}}, params, cfg).c;
  nn::Tensor b = lower_step({{t, t}}, params, cfg).c;
  for (double v : a.values()) CHECK(std::isfinite(v));
  CHECK(a.values() == b.values());
}

TEST_CASE("upper stage is causal: future perturbations cannot leak back") {
  ModelConfig cfg = testutil::toy_model(1, /*k_history=*/4);
  Rng rng(19);
  nn::ParamStore params;
  add_tont_params(params, cfg, rng);

  const int K = cfg.k_history;
  std::vector<double> window(K * cfg.dim);
  for (double& v : window) v = rng.uniform(-1.0, 1.0);
  std::vector<std::uint8_t> valid(K, 1);

  nn::Tensor base = upper_from_window(
      nn::Tensor::constant(window, K, cfg.dim), valid, params, cfg);
  CHECK(base.rows() == K);
  CHECK(base.cols() == cfg.dim);

  for (int j = 1; j < K; ++j) {
    std::vector<double> w2 = window;
    for (int c = 0; c < cfg.dim; ++c) w2[j * cfg.dim + c] += 0.7;
    nn::Tensor out = upper_from_window(nn::Tensor::constant(w2, K, cfg.dim),
                                       valid, params, cfg);
    for (int t = 0; t < j; ++t)
      for (int c = 0; c < cfg.dim; ++c)
        CHECK(out.at(t, c) == base.at(t, c));  // exact, not approximate
  }
}

TEST_CASE("perturbing masked window slots leaves valid outputs unchanged") {
  ModelConfig cfg = testutil::toy_model(1, 4);
  Rng rng(21);
  nn::ParamStore params;
  add_tont_params(params, cfg, rng);

  const int K = cfg.k_history;
  std::vector<double> window(K * cfg.dim);
  for (double& v : window) v = rng.uniform(-1.0, 1.0);
  std::vector<std::uint8_t> valid = {0, 0, 1, 1};

  nn::Tensor base = upper_from_window(
      nn::Tensor::constant(window, K, cfg.dim), valid, params, cfg);
  std::vector<double> w2 = window;
  for (int c = 0; c < cfg.dim; ++c) {
    w2[0 * cfg.dim + c] = 99.0;
    w2[1 * cfg.dim + c] = -99.0;
  }
  nn::Tensor out = upper_from_window(nn::Tensor::constant(w2, K, cfg.dim),
                                     valid, params, cfg);
  for (int t = 2; t < K; ++t)
    for (int c = 0; c < cfg.dim; ++c) CHECK(out.at(t, c) == base.at(t, c));
}

TEST_CASE("gru path freezes its state across invalid slots") {
  ModelConfig cfg = testutil::toy_model(1, 4);
  cfg.gru_upper = true;
  Rng rng(23);
  nn::ParamStore params;
  add_tont_params(params, cfg, rng);
  const int K = cfg.k_history;
  std::vector<double> window(K * cfg.dim);
  for (double& v : window) v = rng.uniform(-1.0, 1.0);
  std::vector<std::uint8_t> valid = {0, 1, 1, 1};
  nn::Tensor base = upper_from_window(
      nn::Tensor::constant(window, K, cfg.dim), valid, params, cfg);
  std::vector<double> w2 = window;
  for (int c = 0; c < cfg.dim; ++c) w2[c] = 5.0;  // invalid slot 0
  nn::Tensor out = upper_from_window(nn::Tensor::constant(w2, K, cfg.dim),
                                     valid, params, cfg);
  for (int t = 1; t < K; ++t)
    for (int c = 0; c < cfg.dim; ++c) CHECK(out.at(t, c) == base.at(t, c));
}

TEST_CASE("predictor input width and zero-weight behavior") {
  ModelConfig full;
  CHECK(full.predictor_input() == 114 + 5 * 8 + 5);  // = 159

  ModelConfig cfg = testutil::toy_model(1);
  Rng rng(25);
  nn::ParamStore params;
  add_tont_params(params, cfg, rng);
  for (const char* name : {"pred.w1", "pred.b1", "pred.w2", "pred.b2"}) {
    nn::Tensor& p = params.get(name);
    std::fill(p.mutable_values().begin(), p.mutable_values().end(), 0.0);
  }
  std::vector<double> in(cfg.predictor_input());
  for (double& v : in) v = rng.uniform(-1.0, 1.0);
  nn::Tensor out = predict_dynamics(
      nn::Tensor::constant(in, 1, cfg.predictor_input()), params, cfg);
  CHECK(out.cols() == cfg.dim);
  for (double v : out.values()) CHECK(v == 0.0);
}

TEST_CASE("predictor loss is zero without a consecutive valid pair") {
  ModelConfig cfg = testutil::toy_model(1, 3);
  Rng rng(27);
  nn::ParamStore params;
  add_tont_params(params, cfg, rng);

  Rng data(29);
  EncodeRecord r = record(data, cfg, /*valid_from=*/cfg.k_history - 1);
  EncodeResult enc = encode_batch({r}, params, cfg);
  nn::Tensor l = predictor_loss({r}, enc.z_seq, params, cfg);
  CHECK(l.item() == 0.0);

  // with a full window the loss is a positive finite scalar
  EncodeRecord r2 = record(data, cfg, 0);
  EncodeResult enc2 = encode_batch({r2}, params, cfg);
  nn::Tensor l2 = predictor_loss({r2}, enc2.z_seq, params, cfg);
  CHECK(std::isfinite(l2.item()));
  CHECK(l2.item() > 0.0);
}

TEST_CASE("encode_batch is deterministic and shape-correct") {
  ModelConfig cfg = testutil::toy_model(2, 3);
  Rng rng(31);
  nn::ParamStore params;
  add_tont_params(params, cfg, rng);
  Rng data(33);
  std::vector<EncodeRecord> recs = {record(data, cfg, 1), record(data, cfg, 0)};
  EncodeResult a = encode_batch(recs, params, cfg);
  EncodeResult b = encode_batch(recs, params, cfg);
  CHECK(a.z.rows() == 2);
  CHECK(a.z.cols() == cfg.dim);
  CHECK(a.z_seq.rows() == 2 * cfg.k_history);
  CHECK(a.o_embed.rows() == 2);
  CHECK(a.z.values() == b.z.values());
  CHECK(a.z_seq.values() == b.z_seq.values());
}

TEST_CASE("ablation paths run and differ from the full encoder") {
  Rng data(35);
  ModelConfig base = testutil::toy_model(1, 3);
  EncodeRecord r = record(data, base, 0);

  std::vector<double> full_z;
  {
    Rng rng(37);
    nn::ParamStore params;
    add_tont_params(params, base, rng);
    full_z = encode_batch({r}, params, base).z.values();
  }
  for (int which = 0; which < 3; ++which) {
    ModelConfig cfg = base;
    if (which == 0) cfg.no_lower = true;
    if (which == 1) cfg.gnn_lower = true;
    if (which == 2) cfg.gru_upper = true;
    Rng rng(37);
    nn::ParamStore params;
    add_tont_params(params, cfg, rng);
    EncodeResult enc = encode_batch({r}, params, cfg);
    CHECK(enc.z.rows() == 1);
    CHECK(enc.z.cols() == cfg.dim);
    for (double v : enc.z.values()) CHECK(std::isfinite(v));
    CHECK(enc.z.values() != full_z);
  }
}

TEST_CASE("positional table is fixed and sinusoidal-bounded") {
  nn::Tensor pos = positional_embedding(20, 114);
  CHECK(pos.rows() == 20);
  CHECK(pos.cols() == 114);
  for (double v : pos.values()) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  CHECK(pos.values() == positional_embedding(20, 114).values());
}

}  // TEST_SUITE
