#include "cloze/encoder.hpp"

#include <cmath>
#include <random>

namespace cloze {

namespace {

constexpr double kLnEps = 1e-5;
constexpr double kInvSqrt2Pi = 0.3989422804014327;

// Row-wise layer norm; fills xhat, rstd and the scaled output.
void layer_norm(const Eigen::MatrixXd& x, const Param& g, const Param& b,
                Eigen::MatrixXd& xhat, Eigen::VectorXd& rstd,
                Eigen::MatrixXd& out) {
  const auto d = x.cols();
  xhat.resize(x.rows(), d);
  rstd.resize(x.rows());
  out.resize(x.rows(), d);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().mean();
    const double rs = 1.0 / std::sqrt(var + kLnEps);
    rstd(r) = rs;
    xhat.row(r) = (x.row(r).array() - mean) * rs;
    out.row(r) = xhat.row(r).cwiseProduct(g.value.row(0)) + b.value.row(0);
  }
}

void layer_norm_backward(const Eigen::MatrixXd& dy,
                         const Eigen::MatrixXd& xhat,
                         const Eigen::VectorXd& rstd, Param& g, Param& b,
                         Eigen::MatrixXd& dx) {
  const double d = static_cast<double>(xhat.cols());
  dx.resize(xhat.rows(), xhat.cols());
  for (Eigen::Index r = 0; r < xhat.rows(); ++r) {
    Eigen::RowVectorXd dxhat = dy.row(r).cwiseProduct(g.value.row(0));
    const double m1 = dxhat.mean();
    const double m2 = dxhat.cwiseProduct(xhat.row(r)).mean();
    dx.row(r) =
        rstd(r) * (dxhat.array() - m1 - xhat.row(r).array() * m2).matrix();
    g.grad.row(0) += dy.row(r).cwiseProduct(xhat.row(r));
    b.grad.row(0) += dy.row(r);
    (void)d;
  }
}

double gelu(double u) { return 0.5 * u * (1.0 + std::erf(u * M_SQRT1_2)); }

double gelu_grad(double u) {
  return 0.5 * (1.0 + std::erf(u * M_SQRT1_2)) +
         u * kInvSqrt2Pi * std::exp(-0.5 * u * u);
}

void uniform_fill(Eigen::MatrixXd& m, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-0.05, 0.05);
  for (Eigen::Index c = 0; c < m.cols(); ++c)
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = dist(rng);
}

}  // namespace

Batch Batch::single(const std::vector<int>& ids,
                    const std::vector<unsigned char>& valid) {
  Batch b;
  b.n_seq = 1;
  b.seq_len = static_cast<int>(ids.size());
  b.ids = ids;
  b.valid = valid.empty() ? std::vector<unsigned char>(ids.size(), 1) : valid;
  return b;
}

void EncoderParams::build(const EncoderConfig& cfg) {
  const int d = cfg.d_model;
  tok_emb.resize(cfg.vocab_size, d, "tok_emb");
  pos_emb.resize(cfg.max_len, d, "pos_emb");
  layers.resize(cfg.n_layers);
  for (int l = 0; l < cfg.n_layers; ++l) {
    auto& p = layers[l];
    const std::string pre = "layer" + std::to_string(l) + ".";
    p.wq.resize(d, d, pre + "wq");
    p.bq.resize(1, d, pre + "bq");
    p.wk.resize(d, d, pre + "wk");
    p.bk.resize(1, d, pre + "bk");
    p.wv.resize(d, d, pre + "wv");
    p.bv.resize(1, d, pre + "bv");
    p.wo.resize(d, d, pre + "wo");
    p.bo.resize(1, d, pre + "bo");
    p.ln1_g.resize(1, d, pre + "ln1_g");
    p.ln1_b.resize(1, d, pre + "ln1_b");
    p.ln2_g.resize(1, d, pre + "ln2_g");
    p.ln2_b.resize(1, d, pre + "ln2_b");
    p.w1.resize(d, cfg.d_ff, pre + "w1");
    p.b1.resize(1, cfg.d_ff, pre + "b1");
    p.w2.resize(cfg.d_ff, d, pre + "w2");
    p.b2.resize(1, d, pre + "b2");
  }
  lnf_g.resize(1, d, "lnf_g");
  lnf_b.resize(1, d, "lnf_b");
}

void EncoderParams::init(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  uniform_fill(tok_emb.value, rng);
  uniform_fill(pos_emb.value, rng);
  for (auto& p : layers) {
    uniform_fill(p.wq.value, rng);
    uniform_fill(p.wk.value, rng);
    uniform_fill(p.wv.value, rng);
    uniform_fill(p.wo.value, rng);
    uniform_fill(p.w1.value, rng);
    uniform_fill(p.w2.value, rng);
    p.ln1_g.value.setOnes();
    p.ln2_g.value.setOnes();
  }
  lnf_g.value.setOnes();
}

void EncoderParams::collect(std::vector<Param*>& out) {
  out.push_back(&tok_emb);
  out.push_back(&pos_emb);
  for (auto& p : layers) {
    for (Param* q : {&p.wq, &p.bq, &p.wk, &p.bk, &p.wv, &p.bv, &p.wo, &p.bo,
                     &p.ln1_g, &p.ln1_b, &p.ln2_g, &p.ln2_b, &p.w1, &p.b1,
                     &p.w2, &p.b2})
      out.push_back(q);
  }
  out.push_back(&lnf_g);
  out.push_back(&lnf_b);
}

Eigen::MatrixXd attention(const Eigen::MatrixXd& queries,
                          const Eigen::MatrixXd& keys,
                          const Eigen::MatrixXd& values,
                          const std::vector<unsigned char>& key_valid,
                          Eigen::MatrixXd* weights_out) {
  if (queries.cols() != keys.cols() || keys.rows() != values.rows())
    throw Error(ErrorKind::ShapeMismatch, "attention shapes incompatible");
  if (static_cast<Eigen::Index>(key_valid.size()) != keys.rows())
    throw Error(ErrorKind::ShapeMismatch, "mask length != key count");
  bool any_valid = false;
  for (auto v : key_valid) any_valid |= (v != 0);
  if (!any_valid)
    throw Error(ErrorKind::NoValidPositions, "no valid key positions");

  const double scale = 1.0 / std::sqrt(static_cast<double>(keys.cols()));
  Eigen::MatrixXd scores = queries * keys.transpose() * scale;
  Eigen::MatrixXd probs(scores.rows(), scores.cols());
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index c = 0; c < scores.cols(); ++c)
      if (key_valid[c] && scores(r, c) > mx) mx = scores(r, c);
    double sum = 0.0;
    for (Eigen::Index c = 0; c < scores.cols(); ++c) {
      const double e = key_valid[c] ? std::exp(scores(r, c) - mx) : 0.0;
      probs(r, c) = e;
      sum += e;
    }
    probs.row(r) /= sum;
  }
  if (weights_out) *weights_out = probs;
  return probs * values;
}

Eigen::MatrixXd encoder_forward(const Batch& batch, const EncoderParams& params,
                                const EncoderConfig& cfg, EncoderCache* cache) {
  if (batch.seq_len > cfg.max_len)
    throw Error(ErrorKind::SequenceTooLong,
                "sequence length " + std::to_string(batch.seq_len) +
                    " exceeds max_len " + std::to_string(cfg.max_len));
  for (int id : batch.ids)
    if (id < 0 || id >= cfg.vocab_size)
      throw Error(ErrorKind::IdOutOfRange,
                  "token id " + std::to_string(id) + " outside vocabulary");

  const int n = batch.n_seq * batch.seq_len;
  const int d = cfg.d_model;
  const int dh = d / cfg.n_heads;
  const int m = batch.seq_len;

  Eigen::MatrixXd x(n, d);
  for (int r = 0; r < n; ++r)
    x.row(r) = params.tok_emb.value.row(batch.ids[r]) +
               params.pos_emb.value.row(r % m);

  if (cache) {
    cache->batch = batch;
    cache->layers.resize(cfg.n_layers);
  }

  Eigen::MatrixXd xhat, ln_out;
  Eigen::VectorXd rstd;
  for (int l = 0; l < cfg.n_layers; ++l) {
    const auto& p = params.layers[l];
    LayerCache* lc = cache ? &cache->layers[l] : nullptr;
    if (lc) lc->x_in = x;

    layer_norm(x, p.ln1_g, p.ln1_b, xhat, rstd, ln_out);
    if (lc) {
      lc->ln1_xhat = xhat;
      lc->ln1_rstd = rstd;
      lc->ln1_out = ln_out;
    }

    Eigen::MatrixXd q = ln_out * p.wq.value;
    q.rowwise() += p.bq.value.row(0);
    Eigen::MatrixXd k = ln_out * p.wk.value;
    k.rowwise() += p.bk.value.row(0);
    Eigen::MatrixXd v = ln_out * p.wv.value;
    v.rowwise() += p.bv.value.row(0);
    if (lc) {
      lc->q = q;
      lc->k = k;
      lc->v = v;
      lc->probs.assign(static_cast<std::size_t>(batch.n_seq) * cfg.n_heads,
                       Eigen::MatrixXd());
    }

    Eigen::MatrixXd attn_cat(n, d);
    std::vector<unsigned char> seq_valid(m);
    for (int s = 0; s < batch.n_seq; ++s) {
      for (int t = 0; t < m; ++t) seq_valid[t] = batch.valid[s * m + t];
      for (int h = 0; h < cfg.n_heads; ++h) {
        Eigen::MatrixXd probs;
        attn_cat.block(s * m, h * dh, m, dh) =
            attention(q.block(s * m, h * dh, m, dh),
                      k.block(s * m, h * dh, m, dh),
                      v.block(s * m, h * dh, m, dh), seq_valid,
                      lc ? &probs : nullptr);
        if (lc) lc->probs[s * cfg.n_heads + h] = std::move(probs);
      }
    }
    if (lc) lc->attn_cat = attn_cat;

    Eigen::MatrixXd attn_out = attn_cat * p.wo.value;
    attn_out.rowwise() += p.bo.value.row(0);
    x += attn_out;
    if (lc) lc->x_mid = x;

    layer_norm(x, p.ln2_g, p.ln2_b, xhat, rstd, ln_out);
    if (lc) {
      lc->ln2_xhat = xhat;
      lc->ln2_rstd = rstd;
      lc->ln2_out = ln_out;
    }

    Eigen::MatrixXd pre = ln_out * p.w1.value;
    pre.rowwise() += p.b1.value.row(0);
    Eigen::MatrixXd act = pre.unaryExpr([](double u) { return gelu(u); });
    if (lc) {
      lc->ff_pre = pre;
      lc->ff_act = act;
    }
    Eigen::MatrixXd ff = act * p.w2.value;
    ff.rowwise() += p.b2.value.row(0);
    x += ff;
  }

  if (cache) cache->x_last = x;
  layer_norm(x, params.lnf_g, params.lnf_b, xhat, rstd, ln_out);
  if (cache) {
    cache->lnf_xhat = xhat;
    cache->lnf_rstd = rstd;
  }
  return ln_out;
}

void encoder_backward(const Eigen::MatrixXd& dH, const EncoderCache& cache,
                      const EncoderConfig& cfg, EncoderParams& params) {
  const Batch& batch = cache.batch;
  const int d = cfg.d_model;
  const int dh = d / cfg.n_heads;
  const int m = batch.seq_len;

  Eigen::MatrixXd dx;
  layer_norm_backward(dH, cache.lnf_xhat, cache.lnf_rstd, params.lnf_g,
                      params.lnf_b, dx);

  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (int l = cfg.n_layers - 1; l >= 0; --l) {
    auto& p = params.layers[l];
    const auto& lc = cache.layers[l];

    // Feed-forward block: x_out = x_mid + gelu(ln2(x_mid) W1 + b1) W2 + b2
    Eigen::MatrixXd dff = dx;  // gradient reaching the block output
    Eigen::MatrixXd dact = dff * p.w2.value.transpose();
    p.w2.grad += lc.ff_act.transpose() * dff;
    p.b2.grad.row(0) += dff.colwise().sum();
    Eigen::MatrixXd dpre =
        dact.cwiseProduct(lc.ff_pre.unaryExpr([](double u) { return gelu_grad(u); }));
    p.w1.grad += lc.ln2_out.transpose() * dpre;
    p.b1.grad.row(0) += dpre.colwise().sum();
    Eigen::MatrixXd dln2_out = dpre * p.w1.value.transpose();
    Eigen::MatrixXd dx_mid;
    layer_norm_backward(dln2_out, lc.ln2_xhat, lc.ln2_rstd, p.ln2_g, p.ln2_b,
                        dx_mid);
    dx_mid += dx;  // residual path

    // Attention block: x_mid = x_in + attn_cat Wo + bo
    Eigen::MatrixXd dattn_cat = dx_mid * p.wo.value.transpose();
    p.wo.grad += lc.attn_cat.transpose() * dx_mid;
    p.bo.grad.row(0) += dx_mid.colwise().sum();

    Eigen::MatrixXd dq = Eigen::MatrixXd::Zero(lc.q.rows(), d);
    Eigen::MatrixXd dk = Eigen::MatrixXd::Zero(lc.k.rows(), d);
    Eigen::MatrixXd dv = Eigen::MatrixXd::Zero(lc.v.rows(), d);
    for (int s = 0; s < batch.n_seq; ++s) {
      for (int h = 0; h < cfg.n_heads; ++h) {
        const Eigen::MatrixXd& probs = lc.probs[s * cfg.n_heads + h];
        auto qs = lc.q.block(s * m, h * dh, m, dh);
        auto ks = lc.k.block(s * m, h * dh, m, dh);
        auto vs = lc.v.block(s * m, h * dh, m, dh);
        auto dctx = dattn_cat.block(s * m, h * dh, m, dh);

        Eigen::MatrixXd dprobs = dctx * vs.transpose();
        dv.block(s * m, h * dh, m, dh) += probs.transpose() * dctx;
        // Softmax backward; masked entries have probs == 0, so their
        // score gradient vanishes automatically.
        Eigen::VectorXd rowdot = (dprobs.cwiseProduct(probs)).rowwise().sum();
        Eigen::MatrixXd dscores =
            probs.cwiseProduct(dprobs - rowdot.replicate(1, m)) * scale;
        dq.block(s * m, h * dh, m, dh) += dscores * ks;
        dk.block(s * m, h * dh, m, dh) += dscores.transpose() * qs;
      }
    }

    Eigen::MatrixXd dln1_out = dq * p.wq.value.transpose() +
                               dk * p.wk.value.transpose() +
                               dv * p.wv.value.transpose();
    p.wq.grad += lc.ln1_out.transpose() * dq;
    p.bq.grad.row(0) += dq.colwise().sum();
    p.wk.grad += lc.ln1_out.transpose() * dk;
    p.bk.grad.row(0) += dk.colwise().sum();
    p.wv.grad += lc.ln1_out.transpose() * dv;
    p.bv.grad.row(0) += dv.colwise().sum();

    Eigen::MatrixXd dx_in;
    layer_norm_backward(dln1_out, lc.ln1_xhat, lc.ln1_rstd, p.ln1_g, p.ln1_b,
                        dx_in);
    dx = dx_in + dx_mid;  // residual path
  }

  for (Eigen::Index r = 0; r < dx.rows(); ++r) {
    params.tok_emb.grad.row(batch.ids[r]) += dx.row(r);
    params.pos_emb.grad.row(r % m) += dx.row(r);
  }
}

}  // namespace cloze
