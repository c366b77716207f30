#include "streamdf/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "streamdf/kernels.hpp"
#include "streamdf/util.hpp"

namespace streamdf {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr int kStartMarkerId = 1;  // matches Vocabulary::kStartId

void fill_uniform(Rng& rng, Matrix& m, double bound) {
  for (double& v : m.data) v = rng.uniform(-bound, bound);
}

void fill_value(Matrix& m, double value) {
  for (double& v : m.data) v = value;
}

void add_in_place(Matrix& dst, const Matrix& src) {
  for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

void mul_in_place(Matrix& dst, const Matrix& mask) {
  for (size_t i = 0; i < dst.data.size(); ++i) dst.data[i] *= mask.data[i];
}

void scale_in_place(Matrix& m, double s) {
  for (double& v : m.data) v *= s;
}

void colsum_accum(const Matrix& m, Matrix& out) {
  for (int c = 0; c < m.cols; ++c) {
    double s = 0.0;
    for (int r = 0; r < m.rows; ++r) s += m.at(r, c);
    out.at(0, c) += s;
  }
}

// dL/dscores given softmax probabilities and dL/dprobs, row-wise.
void softmax_backward_rows(const Matrix& probs, const Matrix& d_probs, Matrix& d_scores) {
  for (int r = 0; r < probs.rows; ++r) {
    const double* p = probs.row(r);
    const double* dp = d_probs.row(r);
    double* ds = d_scores.row(r);
    double dot = 0.0;
    for (int c = 0; c < probs.cols; ++c) dot += dp[c] * p[c];
    for (int c = 0; c < probs.cols; ++c) ds[c] = p[c] * (dp[c] - dot);
  }
}

// Inverted dropout: entries are 0 with probability rate, else 1/(1-rate).
Matrix draw_dropout_mask(int rows, int cols, double rate, Rng& rng) {
  Matrix mask(rows, cols);
  double keep = 1.0 / (1.0 - rate);
  for (double& v : mask.data) v = rng.bernoulli(rate) ? 0.0 : keep;
  return mask;
}

}  // namespace

void EncoderConfig::validate() const {
  if (vocab_size <= 0) throw std::invalid_argument("EncoderConfig: vocab_size must be positive");
  if (max_len <= 0 || d_model <= 0 || n_layers < 0 || n_heads <= 0 || d_ff <= 0)
    throw std::invalid_argument("EncoderConfig: sizes must be positive");
  if (d_model % n_heads != 0)
    throw std::invalid_argument("EncoderConfig: d_model must be divisible by n_heads");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw std::invalid_argument("EncoderConfig: dropout_rate must be in [0, 1)");
}

Parameters Parameters::zeros(const EncoderConfig& config) {
  config.validate();
  Parameters p;
  p.token_embedding = Matrix(config.vocab_size, config.d_model);
  p.position_embedding = Matrix(config.max_len, config.d_model);
  p.layers.resize(static_cast<size_t>(config.n_layers));
  for (LayerParams& l : p.layers) {
    l.wq = Matrix(config.d_model, config.d_model);
    l.bq = Matrix(1, config.d_model);
    l.wk = Matrix(config.d_model, config.d_model);
    l.bk = Matrix(1, config.d_model);
    l.wv = Matrix(config.d_model, config.d_model);
    l.bv = Matrix(1, config.d_model);
    l.wo = Matrix(config.d_model, config.d_model);
    l.bo = Matrix(1, config.d_model);
    l.ln1_gain = Matrix(1, config.d_model);
    l.ln1_bias = Matrix(1, config.d_model);
    l.w1 = Matrix(config.d_model, config.d_ff);
    l.b1 = Matrix(1, config.d_ff);
    l.w2 = Matrix(config.d_ff, config.d_model);
    l.b2 = Matrix(1, config.d_model);
    l.ln2_gain = Matrix(1, config.d_model);
    l.ln2_bias = Matrix(1, config.d_model);
  }
  p.head_disfluency_w = Matrix(config.d_model, 2);
  p.head_disfluency_b = Matrix(1, 2);
  p.head_wait_w = Matrix(config.d_model, 2);
  p.head_wait_b = Matrix(1, 2);
  return p;
}

Parameters Parameters::init(const EncoderConfig& config) {
  Parameters p = zeros(config);
  Rng rng(config.seed);
  double emb_bound = 1.0 / std::sqrt(static_cast<double>(config.d_model));
  double ff_bound = 1.0 / std::sqrt(static_cast<double>(config.d_ff));
  fill_uniform(rng, p.token_embedding, emb_bound);
  fill_uniform(rng, p.position_embedding, emb_bound);
  for (LayerParams& l : p.layers) {
    fill_uniform(rng, l.wq, emb_bound);
    fill_uniform(rng, l.wk, emb_bound);
    fill_uniform(rng, l.wv, emb_bound);
    fill_uniform(rng, l.wo, emb_bound);
    fill_value(l.ln1_gain, 1.0);
    fill_uniform(rng, l.w1, emb_bound);
    fill_uniform(rng, l.w2, ff_bound);
    fill_value(l.ln2_gain, 1.0);
  }
  fill_uniform(rng, p.head_disfluency_w, emb_bound);
  fill_uniform(rng, p.head_wait_w, emb_bound);
  // Biases stay zero; with symmetric head weights the initial wait
  // probability is ~0.5, neither always-wait nor never-wait.
  return p;
}

namespace {

template <typename Params, typename Mat>
std::vector<std::pair<std::string, Mat*>> collect_tensors(Params& p) {
  std::vector<std::pair<std::string, Mat*>> out;
  out.emplace_back("token_embedding", &p.token_embedding);
  out.emplace_back("position_embedding", &p.position_embedding);
  for (size_t i = 0; i < p.layers.size(); ++i) {
    auto& l = p.layers[i];
    std::string prefix = "layers." + std::to_string(i) + ".";
    out.emplace_back(prefix + "wq", &l.wq);
    out.emplace_back(prefix + "bq", &l.bq);
    out.emplace_back(prefix + "wk", &l.wk);
    out.emplace_back(prefix + "bk", &l.bk);
    out.emplace_back(prefix + "wv", &l.wv);
    out.emplace_back(prefix + "bv", &l.bv);
    out.emplace_back(prefix + "wo", &l.wo);
    out.emplace_back(prefix + "bo", &l.bo);
    out.emplace_back(prefix + "ln1_gain", &l.ln1_gain);
    out.emplace_back(prefix + "ln1_bias", &l.ln1_bias);
    out.emplace_back(prefix + "w1", &l.w1);
    out.emplace_back(prefix + "b1", &l.b1);
    out.emplace_back(prefix + "w2", &l.w2);
    out.emplace_back(prefix + "b2", &l.b2);
    out.emplace_back(prefix + "ln2_gain", &l.ln2_gain);
    out.emplace_back(prefix + "ln2_bias", &l.ln2_bias);
  }
  out.emplace_back("heads.disfluency.w", &p.head_disfluency_w);
  out.emplace_back("heads.disfluency.b", &p.head_disfluency_b);
  out.emplace_back("heads.wait.w", &p.head_wait_w);
  out.emplace_back("heads.wait.b", &p.head_wait_b);
  return out;
}

}  // namespace

std::vector<std::pair<std::string, Matrix*>> Parameters::named_tensors() {
  return collect_tensors<Parameters, Matrix>(*this);
}

std::vector<std::pair<std::string, const Matrix*>> Parameters::named_tensors() const {
  return collect_tensors<const Parameters, const Matrix>(*this);
}

void Parameters::zero_all() {
  for (auto& [name, m] : named_tensors()) m->zero();
}

void Parameters::add_scaled(const Parameters& other, double scale) {
  auto mine = named_tensors();
  auto theirs = other.named_tensors();
  if (mine.size() != theirs.size())
    throw std::invalid_argument("Parameters::add_scaled: shape mismatch");
  for (size_t i = 0; i < mine.size(); ++i) {
    Matrix& a = *mine[i].second;
    const Matrix& b = *theirs[i].second;
    if (!a.same_shape(b)) throw std::invalid_argument("Parameters::add_scaled: shape mismatch");
    for (size_t j = 0; j < a.data.size(); ++j) a.data[j] += scale * b.data[j];
  }
}

bool Parameters::all_finite() const {
  for (const auto& [name, m] : named_tensors())
    if (!m->all_finite()) return false;
  return true;
}

Encoder::Encoder(const EncoderConfig& config) : config_(config), params_(Parameters::init(config)) {
  config_.validate();
}

Encoder::Encoder(const EncoderConfig& config, Parameters params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
}

PrefixOutputs Encoder::forward(std::span<const int> token_ids) const {
  return forward(token_ids, false, 0, nullptr);
}

PrefixOutputs Encoder::forward(std::span<const int> token_ids, bool train_mode,
                               uint64_t dropout_seed, ForwardCache* cache) const {
  if (token_ids.empty()) throw std::invalid_argument("Encoder::forward: empty input");
  ForwardCache local;
  ForwardCache& C = cache ? *cache : local;

  C.ids.clear();
  if (config_.use_start_marker) C.ids.push_back(kStartMarkerId);
  for (int id : token_ids) {
    if (id < 0 || id >= config_.vocab_size)
      throw std::invalid_argument("Encoder::forward: token id " + std::to_string(id) +
                                  " outside vocabulary of size " +
                                  std::to_string(config_.vocab_size));
    C.ids.push_back(id);
  }
  const int n = static_cast<int>(C.ids.size());
  if (n > config_.max_len)
    throw std::invalid_argument("Encoder::forward: input length " + std::to_string(n) +
                                " exceeds max_len " + std::to_string(config_.max_len));

  const int d = config_.d_model;
  const int dh = config_.head_dim();
  const bool drop = train_mode && config_.dropout_rate > 0.0;
  Rng drop_rng(dropout_seed);

  C.embedded = Matrix(n, d);
  for (int t = 0; t < n; ++t) {
    const double* tok = params_.token_embedding.row(C.ids[static_cast<size_t>(t)]);
    const double* pos = params_.position_embedding.row(t);
    double* out = C.embedded.row(t);
    for (int c = 0; c < d; ++c) out[c] = tok[c] + pos[c];
  }
  C.embed_mask = Matrix();
  if (drop) {
    C.embed_mask = draw_dropout_mask(n, d, config_.dropout_rate, drop_rng);
    mul_in_place(C.embedded, C.embed_mask);
  }

  C.layers.assign(static_cast<size_t>(config_.n_layers), LayerCache{});
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int l = 0; l < config_.n_layers; ++l) {
    const LayerParams& p = params_.layers[static_cast<size_t>(l)];
    LayerCache& lc = C.layers[static_cast<size_t>(l)];
    lc.x_in = (l == 0) ? C.embedded : C.layers[static_cast<size_t>(l - 1)].ln2_out;

    lc.q = Matrix(n, d);
    lc.k = Matrix(n, d);
    lc.v = Matrix(n, d);
    kernels::matmul(lc.x_in, p.wq, lc.q);
    kernels::add_bias_rows(lc.q, p.bq);
    kernels::matmul(lc.x_in, p.wk, lc.k);
    kernels::add_bias_rows(lc.k, p.bk);
    kernels::matmul(lc.x_in, p.wv, lc.v);
    kernels::add_bias_rows(lc.v, p.bv);

    lc.ctx = Matrix(n, d);
    lc.attn_probs.assign(static_cast<size_t>(config_.n_heads), Matrix{});
    for (int h = 0; h < config_.n_heads; ++h) {
      Matrix qh = kernels::slice_cols(lc.q, h * dh, (h + 1) * dh);
      Matrix kh = kernels::slice_cols(lc.k, h * dh, (h + 1) * dh);
      Matrix vh = kernels::slice_cols(lc.v, h * dh, (h + 1) * dh);
      Matrix scores(n, n);
      kernels::matmul_transb(qh, kh, scores);
      scale_in_place(scores, scale);
      Matrix& probs = lc.attn_probs[static_cast<size_t>(h)];
      probs = Matrix(n, n);
      kernels::softmax_rows(scores, probs);
      Matrix ctx_h(n, dh);
      kernels::matmul(probs, vh, ctx_h);
      kernels::add_into_cols(lc.ctx, ctx_h, h * dh);
    }

    lc.attn_proj = Matrix(n, d);
    kernels::matmul(lc.ctx, p.wo, lc.attn_proj);
    kernels::add_bias_rows(lc.attn_proj, p.bo);
    Matrix attn_dropped = lc.attn_proj;
    lc.attn_mask = Matrix();
    if (drop) {
      lc.attn_mask = draw_dropout_mask(n, d, config_.dropout_rate, drop_rng);
      mul_in_place(attn_dropped, lc.attn_mask);
    }

    lc.sum1 = lc.x_in;
    add_in_place(lc.sum1, attn_dropped);
    lc.ln1_out = Matrix(n, d);
    lc.ln1_xhat = Matrix(n, d);
    lc.ln1_inv_std.assign(static_cast<size_t>(n), 0.0);
    kernels::layer_norm_forward(lc.sum1, p.ln1_gain, p.ln1_bias, kLayerNormEps, lc.ln1_out,
                                lc.ln1_xhat, lc.ln1_inv_std);

    lc.ff_pre = Matrix(n, config_.d_ff);
    kernels::matmul(lc.ln1_out, p.w1, lc.ff_pre);
    kernels::add_bias_rows(lc.ff_pre, p.b1);
    lc.ff_act = Matrix(n, config_.d_ff);
    kernels::gelu_forward(lc.ff_pre, lc.ff_act);
    lc.ff_proj = Matrix(n, d);
    kernels::matmul(lc.ff_act, p.w2, lc.ff_proj);
    kernels::add_bias_rows(lc.ff_proj, p.b2);
    Matrix ff_dropped = lc.ff_proj;
    lc.ff_mask = Matrix();
    if (drop) {
      lc.ff_mask = draw_dropout_mask(n, d, config_.dropout_rate, drop_rng);
      mul_in_place(ff_dropped, lc.ff_mask);
    }

    lc.sum2 = lc.ln1_out;
    add_in_place(lc.sum2, ff_dropped);
    lc.ln2_out = Matrix(n, d);
    lc.ln2_xhat = Matrix(n, d);
    lc.ln2_inv_std.assign(static_cast<size_t>(n), 0.0);
    kernels::layer_norm_forward(lc.sum2, p.ln2_gain, p.ln2_bias, kLayerNormEps, lc.ln2_out,
                                lc.ln2_xhat, lc.ln2_inv_std);
  }

  const Matrix& hidden = C.hidden();
  Matrix disf(n, 2), wait(n, 2);
  kernels::matmul(hidden, params_.head_disfluency_w, disf);
  kernels::add_bias_rows(disf, params_.head_disfluency_b);
  kernels::matmul(hidden, params_.head_wait_w, wait);
  kernels::add_bias_rows(wait, params_.head_wait_b);

  PrefixOutputs out;
  if (config_.use_start_marker) {
    out.disfluency_logits = Matrix(n - 1, 2);
    out.wait_logits = Matrix(n - 1, 2);
    for (int r = 1; r < n; ++r)
      for (int c = 0; c < 2; ++c) {
        out.disfluency_logits.at(r - 1, c) = disf.at(r, c);
        out.wait_logits.at(r - 1, c) = wait.at(r, c);
      }
  } else {
    out.disfluency_logits = std::move(disf);
    out.wait_logits = std::move(wait);
  }
  if (!out.disfluency_logits.all_finite() || !out.wait_logits.all_finite())
    throw std::runtime_error("Encoder::forward: non-finite logits");
  return out;
}

void Encoder::backward(const ForwardCache& cache, const Matrix& d_disfluency_logits,
                       const Matrix& d_wait_logits, Parameters& grads) const {
  const int n = static_cast<int>(cache.ids.size());
  const int d = config_.d_model;
  const int dh = config_.head_dim();

  Matrix d_disf(n, 2), d_wait(n, 2);
  const int offset = config_.use_start_marker ? 1 : 0;
  if (d_disfluency_logits.rows != n - offset || d_wait_logits.rows != n - offset)
    throw std::invalid_argument("Encoder::backward: logit gradient shape mismatch");
  for (int r = 0; r < n - offset; ++r)
    for (int c = 0; c < 2; ++c) {
      d_disf.at(r + offset, c) = d_disfluency_logits.at(r, c);
      d_wait.at(r + offset, c) = d_wait_logits.at(r, c);
    }

  const Matrix& hidden = cache.hidden();
  Matrix d_hidden(n, d);
  kernels::matmul_transb(d_disf, params_.head_disfluency_w, d_hidden);
  Matrix tmp(n, d);
  kernels::matmul_transb(d_wait, params_.head_wait_w, tmp);
  add_in_place(d_hidden, tmp);
  kernels::matmul_transa_accum(hidden, d_disf, grads.head_disfluency_w);
  colsum_accum(d_disf, grads.head_disfluency_b);
  kernels::matmul_transa_accum(hidden, d_wait, grads.head_wait_w);
  colsum_accum(d_wait, grads.head_wait_b);

  Matrix d_out = std::move(d_hidden);
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int l = config_.n_layers - 1; l >= 0; --l) {
    const LayerParams& p = params_.layers[static_cast<size_t>(l)];
    const LayerCache& lc = cache.layers[static_cast<size_t>(l)];
    LayerParams& g = grads.layers[static_cast<size_t>(l)];

    Matrix d_sum2(n, d);
    kernels::layer_norm_backward(d_out, lc.ln2_xhat, lc.ln2_inv_std, p.ln2_gain, d_sum2,
                                 g.ln2_gain, g.ln2_bias);

    Matrix d_ff_proj = d_sum2;
    if (lc.ff_mask.rows > 0) mul_in_place(d_ff_proj, lc.ff_mask);
    Matrix d_ff_act(n, config_.d_ff);
    kernels::matmul_transb(d_ff_proj, p.w2, d_ff_act);
    kernels::matmul_transa_accum(lc.ff_act, d_ff_proj, g.w2);
    colsum_accum(d_ff_proj, g.b2);
    Matrix d_ff_pre(n, config_.d_ff);
    kernels::gelu_backward(lc.ff_pre, d_ff_act, d_ff_pre);
    Matrix d_ln1(n, d);
    kernels::matmul_transb(d_ff_pre, p.w1, d_ln1);
    kernels::matmul_transa_accum(lc.ln1_out, d_ff_pre, g.w1);
    colsum_accum(d_ff_pre, g.b1);
    add_in_place(d_ln1, d_sum2);  // residual branch

    Matrix d_sum1(n, d);
    kernels::layer_norm_backward(d_ln1, lc.ln1_xhat, lc.ln1_inv_std, p.ln1_gain, d_sum1,
                                 g.ln1_gain, g.ln1_bias);

    Matrix d_attn_proj = d_sum1;
    if (lc.attn_mask.rows > 0) mul_in_place(d_attn_proj, lc.attn_mask);
    Matrix d_ctx(n, d);
    kernels::matmul_transb(d_attn_proj, p.wo, d_ctx);
    kernels::matmul_transa_accum(lc.ctx, d_attn_proj, g.wo);
    colsum_accum(d_attn_proj, g.bo);

    Matrix d_q(n, d), d_k(n, d), d_v(n, d);
    for (int h = 0; h < config_.n_heads; ++h) {
      Matrix d_ctx_h = kernels::slice_cols(d_ctx, h * dh, (h + 1) * dh);
      Matrix qh = kernels::slice_cols(lc.q, h * dh, (h + 1) * dh);
      Matrix kh = kernels::slice_cols(lc.k, h * dh, (h + 1) * dh);
      Matrix vh = kernels::slice_cols(lc.v, h * dh, (h + 1) * dh);
      const Matrix& probs = lc.attn_probs[static_cast<size_t>(h)];

      Matrix d_probs(n, n);
      kernels::matmul_transb(d_ctx_h, vh, d_probs);
      Matrix d_vh(n, dh);
      kernels::matmul_transa_accum(probs, d_ctx_h, d_vh);
      Matrix d_scores(n, n);
      softmax_backward_rows(probs, d_probs, d_scores);
      scale_in_place(d_scores, scale);  // fold in the 1/sqrt(dh) of the forward
      Matrix d_qh(n, dh);
      kernels::matmul(d_scores, kh, d_qh);
      Matrix d_kh(n, dh);
      kernels::matmul_transa_accum(d_scores, qh, d_kh);

      kernels::add_into_cols(d_q, d_qh, h * dh);
      kernels::add_into_cols(d_k, d_kh, h * dh);
      kernels::add_into_cols(d_v, d_vh, h * dh);
    }

    Matrix d_x(n, d);
    kernels::matmul_transb(d_q, p.wq, d_x);
    kernels::matmul_transb(d_k, p.wk, tmp);
    add_in_place(d_x, tmp);
    kernels::matmul_transb(d_v, p.wv, tmp);
    add_in_place(d_x, tmp);
    add_in_place(d_x, d_sum1);  // residual branch
    kernels::matmul_transa_accum(lc.x_in, d_q, g.wq);
    colsum_accum(d_q, g.bq);
    kernels::matmul_transa_accum(lc.x_in, d_k, g.wk);
    colsum_accum(d_k, g.bk);
    kernels::matmul_transa_accum(lc.x_in, d_v, g.wv);
    colsum_accum(d_v, g.bv);

    d_out = std::move(d_x);
  }

  if (cache.embed_mask.rows > 0) mul_in_place(d_out, cache.embed_mask);
  for (int t = 0; t < n; ++t) {
    double* tok = grads.token_embedding.row(cache.ids[static_cast<size_t>(t)]);
    double* pos = grads.position_embedding.row(t);
    const double* src = d_out.row(t);
    for (int c = 0; c < d; ++c) {
      tok[c] += src[c];
      pos[c] += src[c];
    }
  }
}

std::vector<double> wait_probability(const PrefixOutputs& outputs) {
  return wait_probabilities(outputs.wait_logits);
}

namespace {

LossBreakdown run_example(const Encoder& encoder, std::span<const int> token_ids,
                          std::span<const int> labels, const LossConfig& loss_config,
                          Parameters* grads, bool train_mode, uint64_t dropout_seed) {
  loss_config.validate();
  if (token_ids.size() != labels.size())
    throw std::invalid_argument("example loss: token/label length mismatch");
  const int n = static_cast<int>(token_ids.size());
  const bool need_prefixes = loss_config.gamma != 0.0 || loss_config.lambda != 0.0;

  std::vector<PrefixOutputs> prefixes;
  std::vector<ForwardCache> caches;
  if (need_prefixes && n > 1) {
    prefixes.reserve(static_cast<size_t>(n - 1));
    if (grads) caches.resize(static_cast<size_t>(n - 1));
    for (int i = 1; i < n; ++i)
      prefixes.push_back(encoder.forward(token_ids.first(static_cast<size_t>(i)), train_mode,
                                         mix_seed(dropout_seed, static_cast<uint64_t>(i)),
                                         grads ? &caches[static_cast<size_t>(i - 1)] : nullptr));
  }
  ForwardCache full_cache;
  PrefixOutputs full =
      encoder.forward(token_ids, train_mode, mix_seed(dropout_seed, static_cast<uint64_t>(n)),
                      grads ? &full_cache : nullptr);

  LossBreakdown breakdown;
  if (need_prefixes || n == 1) {
    if (grads) {
      LogitGrads lg;
      breakdown = total_loss_with_logit_grads(prefixes, full, labels, loss_config, lg);
      if (!std::isfinite(breakdown.total))
        throw std::runtime_error("example gradient: non-finite loss");
      for (size_t p = 0; p < prefixes.size(); ++p)
        encoder.backward(caches[p], lg.d_disfluency[p], lg.d_wait[p], *grads);
      encoder.backward(full_cache, lg.d_disfluency_full, lg.d_wait_full, *grads);
    } else {
      breakdown = total_loss(prefixes, full, labels, loss_config);
    }
  } else {
    // gamma == lambda == 0: only the full pass contributes (Eq 7 degenerates
    // to l_Full), so the prefix passes above were skipped entirely.
    breakdown.full = full_loss(full, labels);
    breakdown.total = breakdown.full;
    if (grads) {
      if (!std::isfinite(breakdown.total))
        throw std::runtime_error("example gradient: non-finite loss");
      std::vector<double> ce = cross_entropy_per_token(full.disfluency_logits, labels);
      Matrix d_disf(n, 2), d_wait(n, 2);
      for (int j = 0; j < n; ++j) {
        const double* row = full.disfluency_logits.row(j);
        double p1 = 1.0 / (1.0 + std::exp(row[0] - row[1]));
        int y = labels[static_cast<size_t>(j)];
        d_disf.at(j, 0) = (1.0 - p1) - (y == 0 ? 1.0 : 0.0);
        d_disf.at(j, 1) = p1 - (y == 1 ? 1.0 : 0.0);
      }
      encoder.backward(full_cache, d_disf, d_wait, *grads);
    }
  }
  if (!std::isfinite(breakdown.total))
    throw std::runtime_error("example loss: non-finite loss");
  return breakdown;
}

}  // namespace

LossBreakdown example_loss(const Encoder& encoder, std::span<const int> token_ids,
                           std::span<const int> labels, const LossConfig& loss_config) {
  return run_example(encoder, token_ids, labels, loss_config, nullptr, false, 0);
}

LossBreakdown example_gradient(const Encoder& encoder, std::span<const int> token_ids,
                               std::span<const int> labels, const LossConfig& loss_config,
                               Parameters& grads, bool train_mode, uint64_t dropout_seed) {
  return run_example(encoder, token_ids, labels, loss_config, &grads, train_mode, dropout_seed);
}

}  // namespace streamdf
