#pragma once

#include <random>
#include <vector>

#include "cloze/corpus.hpp"
#include "cloze/encoder.hpp"

namespace cloze {

// Probability vector over an instance's candidate set D, in the
// candidate order fixed by the instance.
struct CandidateDistribution {
  std::vector<int> candidates;
  Eigen::VectorXd probs;
};

struct MatchHeadParams {
  Param w;  // 1 x d
  Param b;  // 1 x 1
};

struct ClsHeadParams {
  Param w;  // 1 x d
  Param b;  // 1 x 1
};

struct LambdaPolicy {
  double alpha = 8.0;
  double beta = 2.0;
  double floor = 0.7;
  int max_rejections = 64;
};

// Passage ids with the MASK position replaced by the candidate's padded
// token sequence; PAD positions are marked invalid.
struct SplicedSequence {
  std::vector<int> ids;
  std::vector<unsigned char> valid;
};
SplicedSequence splice_candidate(const ClozeInstance& instance,
                                 const IdiomCandidate& candidate);

// Character-sequence head: run the encoder over every candidate-spliced
// sequence, score each CLS row with a linear layer, softmax over D.
// All spliced sequences share one length, so they go through the encoder
// as a single batch; pass a cache/H_out to reuse the forward in training.
CandidateDistribution score_char_sequence(const ClozeInstance& instance,
                                          const std::vector<IdiomCandidate>& inventory,
                                          const EncoderParams& enc,
                                          const EncoderConfig& cfg,
                                          const ClsHeadParams& cls,
                                          EncoderCache* cache = nullptr,
                                          Eigen::MatrixXd* H_out = nullptr);

// Embedding-match head: logit_k = w . (d_k ⊙ h_b) + b over k in D.
CandidateDistribution score_embedding(const Eigen::MatrixXd& H, int mask_pos,
                                      const Eigen::MatrixXd& embeddings,
                                      const MatchHeadParams& match,
                                      const std::vector<int>& D);

// Context-aware pooling head:
// logit_k = d_k . h_b + max over valid positions i of d_k . h_i.
CandidateDistribution score_context_pooling(const Eigen::MatrixXd& H,
                                            int mask_pos,
                                            const Eigen::MatrixXd& embeddings,
                                            const std::vector<int>& D,
                                            const std::vector<unsigned char>& valid);

// Beta(alpha, beta) draw, rejecting values below the floor up to
// max_rejections and then clamping. Result is always in [floor, 1].
double sample_lambda(const LambdaPolicy& policy, std::mt19937_64& rng);

// Mean of the Beta(alpha, beta) distribution truncated to [floor, 1];
// used as the fixed evaluation-time lambda.
double truncated_beta_mean(const LambdaPolicy& policy);

// result_k = lambda * p_char_k + (1 - lambda) * p_embed_k.
CandidateDistribution interpolate(const CandidateDistribution& p_char,
                                  const CandidateDistribution& p_embed,
                                  double lambda);

// Argmax candidate position; ties break toward the lowest index.
int predict(const CandidateDistribution& dist);

}  // namespace cloze
