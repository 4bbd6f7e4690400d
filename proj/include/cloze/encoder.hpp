#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cloze/common.hpp"

namespace cloze {

struct EncoderConfig {
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 4;
  int d_ff = 128;
  int max_len = 128;
  int vocab_size = 0;

  bool operator==(const EncoderConfig&) const = default;
};

// A named tensor with its gradient accumulator.
struct Param {
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;
  std::string name;

  void resize(Eigen::Index rows, Eigen::Index cols, std::string n) {
    value.setZero(rows, cols);
    grad.setZero(rows, cols);
    name = std::move(n);
  }
};

struct LayerParams {
  Param wq, bq, wk, bk, wv, bv, wo, bo;
  Param ln1_g, ln1_b, ln2_g, ln2_b;
  Param w1, b1, w2, b2;
};

struct EncoderParams {
  Param tok_emb;  // vocab_size x d
  Param pos_emb;  // max_len x d (learned positions)
  std::vector<LayerParams> layers;
  Param lnf_g, lnf_b;  // final layer norm

  void build(const EncoderConfig& cfg);
  // Weight matrices uniform in [-0.05, 0.05]; biases and LN shifts zero,
  // LN scales one.
  void init(std::uint64_t seed);
  void collect(std::vector<Param*>& out);
};

// A batch of same-length token sequences, stored row-major:
// row s * seq_len + t is position t of sequence s.
struct Batch {
  int n_seq = 0;
  int seq_len = 0;
  std::vector<int> ids;              // n_seq * seq_len
  std::vector<unsigned char> valid;  // PAD positions are 0

  static Batch single(const std::vector<int>& ids,
                      const std::vector<unsigned char>& valid);
};

// Scaled dot-product attention with key masking. Invalid key positions get
// exactly zero weight; each output row is a convex combination of value rows
// at valid positions. Optionally returns the weight matrix.
Eigen::MatrixXd attention(const Eigen::MatrixXd& queries,
                          const Eigen::MatrixXd& keys,
                          const Eigen::MatrixXd& values,
                          const std::vector<unsigned char>& key_valid,
                          Eigen::MatrixXd* weights_out = nullptr);

struct LayerCache {
  Eigen::MatrixXd x_in;
  Eigen::MatrixXd ln1_xhat, ln1_out;
  Eigen::VectorXd ln1_rstd;
  Eigen::MatrixXd q, k, v;
  std::vector<Eigen::MatrixXd> probs;  // n_seq * n_heads entries, seq x seq
  Eigen::MatrixXd attn_cat;
  Eigen::MatrixXd x_mid;
  Eigen::MatrixXd ln2_xhat, ln2_out;
  Eigen::VectorXd ln2_rstd;
  Eigen::MatrixXd ff_pre, ff_act;
};

struct EncoderCache {
  Batch batch;
  std::vector<LayerCache> layers;
  Eigen::MatrixXd x_last;  // input to the final layer norm
  Eigen::MatrixXd lnf_xhat;
  Eigen::VectorXd lnf_rstd;
};

// Pre-layer-norm transformer encoder. Returns the last hidden layer
// H^L (one row per position, width d_model). Deterministic for fixed
// params and input. Pass a cache to enable encoder_backward.
Eigen::MatrixXd encoder_forward(const Batch& batch, const EncoderParams& params,
                                const EncoderConfig& cfg,
                                EncoderCache* cache = nullptr);

// Accumulates parameter gradients for dLoss/dH into params.grad.
void encoder_backward(const Eigen::MatrixXd& dH, const EncoderCache& cache,
                      const EncoderConfig& cfg, EncoderParams& params);

}  // namespace cloze
