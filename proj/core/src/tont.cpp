#include "xlight/tont.hpp"

#include <cmath>

namespace xlight {

using nn::Tensor;

namespace {

Tensor& add_filled(nn::ParamStore& params, const std::string& name, int rows,
                   int cols, Rng& rng, double value) {
  Tensor& t = params.add(name, rows, cols, rng, 0.0);
  std::fill(t.data(), t.data() + t.size(), value);
  return t;
}

void add_layer_params(nn::ParamStore& params, const std::string& prefix,
                      const ModelConfig& cfg, Rng& rng) {
  const int d = cfg.dim;
  add_filled(params, prefix + "ln1.g", 1, d, rng, 1.0);
  params.add(prefix + "ln1.b", 1, d, rng, 0.0);
  add_filled(params, prefix + "ln2.g", 1, d, rng, 1.0);
  params.add(prefix + "ln2.b", 1, d, rng, 0.0);
  params.add(prefix + "wq", d, d, rng);
  params.add(prefix + "wk", d, d, rng);
  params.add(prefix + "wv", d, d, rng);
  // residual-branch projections start an order of magnitude smaller so each
  // block is near-identity at initialization; the stack then learns temporal
  // mixing gradually instead of fighting large random perturbations
  params.add(prefix + "wo", d, d, rng, 0.1 / std::sqrt(static_cast<double>(d)));
  params.add(prefix + "ffn.w1", d, cfg.ffn(), rng);
  params.add(prefix + "ffn.b1", 1, cfg.ffn(), rng, 0.0);
  params.add(prefix + "ffn.w2", cfg.ffn(), d, rng,
             0.1 / std::sqrt(static_cast<double>(cfg.ffn())));
  params.add(prefix + "ffn.b2", 1, d, rng, 0.0);
}

// pre-norm transformer block shared by both stages
Tensor transformer_layer(const Tensor& x, const std::string& prefix,
                         const nn::ParamStore& p, const ModelConfig& cfg,
                         int len, bool causal,
                         const std::vector<std::uint8_t>* valid,
                         nn::AttnCapture* capture) {
  Tensor h = nn::layer_norm_rows(x, p.get(prefix + "ln1.g"),
                                 p.get(prefix + "ln1.b"));
  Tensor ctx = nn::attention(nn::matmul(h, p.get(prefix + "wq")),
                             nn::matmul(h, p.get(prefix + "wk")),
                             nn::matmul(h, p.get(prefix + "wv")), cfg.heads,
                             len, causal, valid, capture);
  Tensor y = nn::add(x, nn::matmul(ctx, p.get(prefix + "wo")));
  Tensor h2 = nn::layer_norm_rows(y, p.get(prefix + "ln2.g"),
                                  p.get(prefix + "ln2.b"));
  Tensor f = nn::linear(
      nn::gelu(nn::linear(h2, p.get(prefix + "ffn.w1"), p.get(prefix + "ffn.b1"))),
      p.get(prefix + "ffn.w2"), p.get(prefix + "ffn.b2"));
  return nn::add(y, f);
}

// constants stacked per unit for R groups: raw obs [R*U,56], one-hot actions
// [R*U,8], rewards [R*U,1]; absent flags per unit row
struct GroupConstants {
  Tensor raw, actions, rewards;
  std::vector<std::uint8_t> absent;  // size R*U
};

GroupConstants stack_groups(const std::vector<StepGroup>& groups,
                            const ModelConfig& cfg) {
  const int U = 1 + cfg.neighbors;
  const int R = static_cast<int>(groups.size());
  std::vector<double> raw(static_cast<size_t>(R) * U * kRawFeatureDim, 0.0);
  std::vector<double> act(static_cast<size_t>(R) * U * kNumPhases, 0.0);
  std::vector<double> rew(static_cast<size_t>(R) * U, 0.0);
  GroupConstants out;
  out.absent.assign(static_cast<size_t>(R) * U, 1);
  for (int r = 0; r < R; ++r) {
    if (static_cast<int>(groups[r].size()) > U)
      throw nn::NnError("step group larger than 1 + neighbors");
    for (size_t j = 0; j < groups[r].size(); ++j) {
      const StepFeature& f = groups[r][j];
      if (!f.present) continue;
      size_t row = static_cast<size_t>(r) * U + j;
      out.absent[row] = 0;
      if (!f.raw_o.empty()) {
        if (static_cast<int>(f.raw_o.size()) != kRawFeatureDim)
          throw nn::NnError("raw observation has wrong dimension");
        std::copy(f.raw_o.begin(), f.raw_o.end(),
                  raw.begin() + row * kRawFeatureDim);
      }
      if (f.a_prev >= 0) {
        if (f.a_prev >= kNumPhases)
          throw nn::NnError("previous action out of range");
        act[row * kNumPhases + f.a_prev] = 1.0;
      }
      rew[row] = f.r_prev;
    }
  }
  out.raw = Tensor::constant(std::move(raw), R * U, kRawFeatureDim);
  out.actions = Tensor::constant(std::move(act), R * U, kNumPhases);
  out.rewards = Tensor::constant(std::move(rew), R * U, 1);
  return out;
}

Tensor target_rows(const Tensor& per_unit, int U) {
  return nn::take_every(per_unit, U, 0);
}

}  // namespace

Tensor positional_embedding(int len, int dim) {
  std::vector<double> v(static_cast<size_t>(len) * dim);
  for (int p = 0; p < len; ++p)
    for (int i = 0; i < dim; ++i) {
      double freq = std::pow(10000.0, -2.0 * (i / 2) / dim);
      v[p * dim + i] =
          (i % 2 == 0) ? std::sin(p * freq) : std::cos(p * freq);
    }
  return Tensor::constant(std::move(v), len, dim);
}

std::vector<std::string> token_labels(const ModelConfig& cfg) {
  std::vector<std::string> labels{"decision"};
  for (int j = 0; j <= cfg.neighbors; ++j) {
    std::string s = std::to_string(j);
    labels.push_back("o" + s);
    labels.push_back("a" + s);
    labels.push_back("r" + s);
  }
  return labels;
}

void add_tont_params(nn::ParamStore& params, const ModelConfig& cfg, Rng& rng) {
  if (cfg.embed.dim != cfg.dim)
    throw nn::NnError("observation embedding dimension must equal model dim");
  if (cfg.dim % cfg.heads != 0)
    throw nn::NnError("model dim must be divisible by heads");
  add_embed_params(params, cfg.embed, rng);

  const int d = cfg.dim;
  params.add("tont.eo", d, d, rng);
  params.add("tont.ea", kNumPhases, d, rng);
  params.add("tont.er", 1, d, rng);
  params.add("tont.qdec", 1, d, rng, 0.1);
  params.add("tont.indicator", 1, d, rng, 0.1);

  if (cfg.no_lower) {
    params.add("tont.nolower.w", 3 * d, d, rng);
    params.add("tont.nolower.b", 1, d, rng, 0.0);
  } else if (cfg.gnn_lower) {
    const int f = d + kNumPhases + 1;
    params.add("tont.gnn.wself", f, d, rng);
    params.add("tont.gnn.wnbr", f, d, rng);
    params.add("tont.gnn.b", 1, d, rng, 0.0);
  } else {
    for (int l = 0; l < cfg.lower_layers; ++l)
      add_layer_params(params, "lower.l" + std::to_string(l) + ".", cfg, rng);
  }

  params.add("upper.eproj.w", d, d, rng);
  params.add("upper.eproj.b", 1, d, rng, 0.0);
  if (cfg.gru_upper) {
    for (const char* g : {"z", "r", "h"}) {
      params.add(std::string("upper.gru.w") + g, d, d, rng);
      params.add(std::string("upper.gru.u") + g, d, d, rng);
      params.add(std::string("upper.gru.b") + g, 1, d, rng, 0.0);
    }
  } else {
    for (int l = 0; l < cfg.upper_layers; ++l)
      add_layer_params(params, "upper.l" + std::to_string(l) + ".", cfg, rng);
  }

  if (!cfg.no_predictor) {
    params.add("pred.w1", cfg.predictor_input(), cfg.predictor_hidden, rng);
    params.add("pred.b1", 1, cfg.predictor_hidden, rng, 0.0);
    params.add("pred.w2", cfg.predictor_hidden, d, rng);
    params.add("pred.b2", 1, d, rng, 0.0);
  }
}

Tensor assemble_tokens(const std::vector<StepGroup>& groups,
                       const nn::ParamStore& params, const ModelConfig& cfg,
                       Tensor* o_embed_out) {
  const int U = 1 + cfg.neighbors;
  const int L = cfg.tokens();
  const int R = static_cast<int>(groups.size());
  GroupConstants gc = stack_groups(groups, cfg);

  Tensor o_emb = embed_observation(gc.raw, params, cfg.embed);  // [R*U, d]
  if (o_embed_out) *o_embed_out = target_rows(o_emb, U);

  Tensor o_tok = nn::matmul(o_emb, params.get("tont.eo"));
  Tensor a_tok = nn::matmul(gc.actions, params.get("tont.ea"));
  Tensor r_tok = nn::matmul(gc.rewards, params.get("tont.er"));
  Tensor dec = nn::matmul(Tensor::constant(std::vector<double>(R, 1.0), R, 1),
                          params.get("tont.qdec"));

  // interleave [dec | o a r per unit] from the four stacked blocks
  Tensor blocks = nn::concat_rows({dec, o_tok, a_tok, r_tok});
  std::vector<int> idx(static_cast<size_t>(R) * L);
  std::vector<std::uint8_t> o_absent(static_cast<size_t>(R) * L, 0);
  for (int r = 0; r < R; ++r) {
    idx[r * L] = r;
    for (int j = 0; j < U; ++j) {
      int unit = r * U + j;
      idx[r * L + 1 + 3 * j] = R + unit;
      idx[r * L + 2 + 3 * j] = R + R * U + unit;
      idx[r * L + 3 + 3 * j] = R + 2 * R * U + unit;
      o_absent[r * L + 1 + 3 * j] = gc.absent[unit];
    }
  }
  Tensor tokens = nn::gather_rows(blocks, std::move(idx));
  tokens = nn::add_rowvec_masked(tokens, params.get("tont.indicator"), o_absent);
  tokens = nn::add_rowblock(tokens, positional_embedding(L, cfg.dim));
  return tokens;
}

LowerStepResult lower_step(const std::vector<StepGroup>& groups,
                           const nn::ParamStore& params, const ModelConfig& cfg,
                           bool capture_attn) {
  const int U = 1 + cfg.neighbors;
  const int R = static_cast<int>(groups.size());
  LowerStepResult res;

  if (cfg.no_lower) {
    GroupConstants gc = stack_groups(groups, cfg);
    Tensor o_emb = embed_observation(gc.raw, params, cfg.embed);
    res.o_embed = target_rows(o_emb, U);
    Tensor m = nn::concat_cols(
        {target_rows(nn::matmul(o_emb, params.get("tont.eo")), U),
         target_rows(nn::matmul(gc.actions, params.get("tont.ea")), U),
         target_rows(nn::matmul(gc.rewards, params.get("tont.er")), U)});
    res.c = nn::tanh_t(nn::linear(m, params.get("tont.nolower.w"),
                                  params.get("tont.nolower.b")));
    return res;
  }

  if (cfg.gnn_lower) {
    GroupConstants gc = stack_groups(groups, cfg);
    Tensor o_emb = embed_observation(gc.raw, params, cfg.embed);
    res.o_embed = target_rows(o_emb, U);
    Tensor flats = nn::concat_cols({o_emb, gc.actions, gc.rewards});
    // per-record mean over present neighbors
    std::vector<double> w(static_cast<size_t>(R) * U, 0.0);
    for (int r = 0; r < R; ++r) {
      int count = 0;
      for (int j = 1; j < U; ++j)
        if (!gc.absent[r * U + j]) count += 1;
      for (int j = 1; j < U; ++j)
        if (!gc.absent[r * U + j]) w[r * U + j] = 1.0 / count;
    }
    Tensor weighted =
        nn::mul_colvec(flats, Tensor::constant(std::move(w), R * U, 1));
    Tensor nbr = nn::take_every(weighted, U, 1);
    for (int j = 2; j < U; ++j) nbr = nn::add(nbr, nn::take_every(weighted, U, j));
    Tensor mix = nn::add(nn::linear(target_rows(flats, U),
                                    params.get("tont.gnn.wself"),
                                    params.get("tont.gnn.b")),
                         nn::matmul(nbr, params.get("tont.gnn.wnbr")));
    res.c = nn::tanh_t(mix);
    return res;
  }

  const int L = cfg.tokens();
  Tensor x = assemble_tokens(groups, params, cfg, &res.o_embed);
  if (capture_attn) res.attn.resize(cfg.lower_layers);
  for (int l = 0; l < cfg.lower_layers; ++l)
    x = transformer_layer(x, "lower.l" + std::to_string(l) + ".", params, cfg,
                          L, /*causal=*/false, nullptr,
                          capture_attn ? &res.attn[l] : nullptr);
  res.c = nn::take_every(x, L, 0);
  return res;
}

Tensor upper_from_window(const Tensor& c_window,
                         const std::vector<std::uint8_t>& valid,
                         const nn::ParamStore& params, const ModelConfig& cfg) {
  const int K = cfg.k_history;
  if (c_window.rows() % K != 0)
    throw nn::NnError("upper_from_window: rows not a multiple of K");
  if (static_cast<int>(valid.size()) != c_window.rows())
    throw nn::NnError("upper_from_window: validity mask size mismatch");
  const int B = c_window.rows() / K;

  std::vector<double> vm(valid.begin(), valid.end());
  Tensor masked = nn::mul_colvec(
      c_window, Tensor::constant(std::move(vm), c_window.rows(), 1));
  Tensor u = nn::linear(masked, params.get("upper.eproj.w"),
                        params.get("upper.eproj.b"));
  u = nn::add_rowblock(u, positional_embedding(K, cfg.dim));

  if (cfg.gru_upper) {
    Tensor h = Tensor::zeros(B, cfg.dim);
    std::vector<Tensor> hs;
    for (int k = 0; k < K; ++k) {
      Tensor xk = nn::take_every(u, K, k);
      Tensor zg = nn::sigmoid(
          nn::add(nn::linear(xk, params.get("upper.gru.wz"),
                             params.get("upper.gru.bz")),
                  nn::matmul(h, params.get("upper.gru.uz"))));
      Tensor rg = nn::sigmoid(
          nn::add(nn::linear(xk, params.get("upper.gru.wr"),
                             params.get("upper.gru.br")),
                  nn::matmul(h, params.get("upper.gru.ur"))));
      Tensor hh = nn::tanh_t(
          nn::add(nn::linear(xk, params.get("upper.gru.wh"),
                             params.get("upper.gru.bh")),
                  nn::matmul(nn::mul(rg, h), params.get("upper.gru.uh"))));
      Tensor hnew = nn::add(h, nn::mul(zg, nn::sub(hh, h)));
      // frozen through invalid slots
      std::vector<double> on(B), off(B);
      for (int b = 0; b < B; ++b) {
        on[b] = valid[b * K + k] ? 1.0 : 0.0;
        off[b] = 1.0 - on[b];
      }
      h = nn::add(nn::mul_colvec(hnew, Tensor::constant(std::move(on), B, 1)),
                  nn::mul_colvec(h, Tensor::constant(std::move(off), B, 1)));
      hs.push_back(h);
    }
    Tensor stacked = nn::concat_rows(hs);  // k-major [K*B, d]
    std::vector<int> idx(static_cast<size_t>(B) * K);
    for (int b = 0; b < B; ++b)
      for (int k = 0; k < K; ++k) idx[b * K + k] = k * B + b;
    return nn::gather_rows(stacked, std::move(idx));
  }

  Tensor x = u;
  for (int l = 0; l < cfg.upper_layers; ++l)
    x = transformer_layer(x, "upper.l" + std::to_string(l) + ".", params, cfg,
                          K, /*causal=*/true, &valid, nullptr);
  return x;
}

EncodeResult encode_batch(const std::vector<EncodeRecord>& records,
                          const nn::ParamStore& params, const ModelConfig& cfg) {
  const int K = cfg.k_history;
  const int B = static_cast<int>(records.size());
  std::vector<StepGroup> groups;
  groups.reserve(static_cast<size_t>(B) * K);
  std::vector<std::uint8_t> valid;
  valid.reserve(static_cast<size_t>(B) * K);
  for (const EncodeRecord& rec : records) {
    if (static_cast<int>(rec.steps.size()) != K ||
        static_cast<int>(rec.valid.size()) != K)
      throw nn::NnError("encode_batch: record window size != K");
    for (int k = 0; k < K; ++k) {
      groups.push_back(rec.steps[k]);
      valid.push_back(rec.valid[k]);
    }
  }
  LowerStepResult low = lower_step(groups, params, cfg);
  EncodeResult res;
  res.z_seq = upper_from_window(low.c, valid, params, cfg);
  std::vector<int> last(B);
  for (int b = 0; b < B; ++b) last[b] = b * K + K - 1;
  res.z = nn::gather_rows(res.z_seq, last);
  res.o_embed = nn::gather_rows(low.o_embed, last);
  return res;
}

Tensor predict_dynamics(const Tensor& input, const nn::ParamStore& params,
                        const ModelConfig& cfg) {
  if (input.cols() != cfg.predictor_input())
    throw nn::NnError("predict_dynamics: expected input width " +
                      std::to_string(cfg.predictor_input()));
  Tensor h =
      nn::relu(nn::linear(input, params.get("pred.w1"), params.get("pred.b1")));
  return nn::linear(h, params.get("pred.w2"), params.get("pred.b2"));
}

Tensor predictor_loss(const std::vector<EncodeRecord>& records,
                      const Tensor& z_seq, const nn::ParamStore& params,
                      const ModelConfig& cfg) {
  const int K = cfg.k_history;
  const int U = 1 + cfg.neighbors;
  const int aux = U * (kNumPhases + 1);
  std::vector<int> prev_idx, cur_idx;
  std::vector<double> auxv;
  for (size_t b = 0; b < records.size(); ++b) {
    const EncodeRecord& rec = records[b];
    for (int k = 1; k < K; ++k) {
      if (!rec.valid[k - 1] || !rec.valid[k]) continue;
      prev_idx.push_back(static_cast<int>(b) * K + k - 1);
      cur_idx.push_back(static_cast<int>(b) * K + k);
      // step k's stored (a_prev, r_prev) are the interval-(k-1) outcomes
      std::vector<double> row(aux, 0.0);
      const StepGroup& g = rec.steps[k];
      for (size_t j = 0; j < g.size() && j < static_cast<size_t>(U); ++j) {
        if (!g[j].present) continue;
        if (g[j].a_prev >= 0) row[j * kNumPhases + g[j].a_prev] = 1.0;
        row[static_cast<size_t>(U) * kNumPhases + j] = g[j].r_prev;
      }
      auxv.insert(auxv.end(), row.begin(), row.end());
    }
  }
  if (prev_idx.empty()) return Tensor::scalar(0.0);
  const int P = static_cast<int>(prev_idx.size());
  Tensor input = nn::concat_cols(
      {nn::gather_rows(z_seq, prev_idx),
       Tensor::constant(std::move(auxv), P, aux)});
  Tensor pred = predict_dynamics(input, params, cfg);
  // mse treats its target as constant, giving the stop-gradient semantics
  return nn::mse(pred, nn::gather_rows(z_seq, cur_idx));
}

}  // namespace xlight
