#include "cloze/heads.hpp"

#include <cmath>

namespace cloze {

SplicedSequence splice_candidate(const ClozeInstance& instance,
                                 const IdiomCandidate& candidate) {
  SplicedSequence out;
  const auto& pid = instance.passage_ids;
  out.ids.reserve(pid.size() - 1 + candidate.padded_ids.size());
  out.valid.reserve(out.ids.capacity());
  for (int i = 0; i < static_cast<int>(pid.size()); ++i) {
    if (i == instance.mask_pos) {
      for (int id : candidate.padded_ids) {
        out.ids.push_back(id);
        out.valid.push_back(id != Vocabulary::kPad);
      }
    } else {
      out.ids.push_back(pid[i]);
      out.valid.push_back(1);
    }
  }
  return out;
}

CandidateDistribution score_char_sequence(const ClozeInstance& instance,
                                          const std::vector<IdiomCandidate>& inventory,
                                          const EncoderParams& enc,
                                          const EncoderConfig& cfg,
                                          const ClsHeadParams& cls,
                                          EncoderCache* cache,
                                          Eigen::MatrixXd* H_out) {
  const auto& D = instance.candidate_ids;
  Batch batch;
  batch.n_seq = static_cast<int>(D.size());
  for (std::size_t j = 0; j < D.size(); ++j) {
    SplicedSequence seq = splice_candidate(instance, inventory.at(D[j]));
    if (j == 0) {
      batch.seq_len = static_cast<int>(seq.ids.size());
      if (batch.seq_len > cfg.max_len)
        throw Error(ErrorKind::SequenceTooLong,
                    "spliced sequence exceeds max_len");
    }
    batch.ids.insert(batch.ids.end(), seq.ids.begin(), seq.ids.end());
    batch.valid.insert(batch.valid.end(), seq.valid.begin(), seq.valid.end());
  }

  Eigen::MatrixXd H = encoder_forward(batch, enc, cfg, cache);
  Eigen::VectorXd logits(D.size());
  for (std::size_t j = 0; j < D.size(); ++j)
    logits(j) = cls.w.value.row(0).dot(H.row(j * batch.seq_len)) +
                cls.b.value(0, 0);

  if (H_out) *H_out = std::move(H);
  return {D, softmax(logits)};
}

CandidateDistribution score_embedding(const Eigen::MatrixXd& H, int mask_pos,
                                      const Eigen::MatrixXd& embeddings,
                                      const MatchHeadParams& match,
                                      const std::vector<int>& D) {
  if (mask_pos < 0 || mask_pos >= H.rows())
    throw Error(ErrorKind::IndexOutOfRange, "mask position outside sequence");
  Eigen::RowVectorXd wh =
      match.w.value.row(0).cwiseProduct(H.row(mask_pos));
  Eigen::VectorXd logits(D.size());
  for (std::size_t j = 0; j < D.size(); ++j) {
    if (D[j] < 0 || D[j] >= embeddings.rows())
      throw Error(ErrorKind::IndexOutOfRange, "candidate index outside table");
    logits(j) = wh.dot(embeddings.row(D[j])) + match.b.value(0, 0);
  }
  return {D, softmax(logits)};
}

CandidateDistribution score_context_pooling(const Eigen::MatrixXd& H,
                                            int mask_pos,
                                            const Eigen::MatrixXd& embeddings,
                                            const std::vector<int>& D,
                                            const std::vector<unsigned char>& valid) {
  if (mask_pos < 0 || mask_pos >= H.rows())
    throw Error(ErrorKind::IndexOutOfRange, "mask position outside sequence");
  if (static_cast<Eigen::Index>(valid.size()) != H.rows())
    throw Error(ErrorKind::ShapeMismatch, "valid mask length != sequence length");
  bool any = false;
  for (auto v : valid) any |= (v != 0);
  if (!any) throw Error(ErrorKind::NoValidPositions, "no valid positions to pool over");

  Eigen::VectorXd logits(D.size());
  for (std::size_t j = 0; j < D.size(); ++j) {
    if (D[j] < 0 || D[j] >= embeddings.rows())
      throw Error(ErrorKind::IndexOutOfRange, "candidate index outside table");
    const Eigen::RowVectorXd e = embeddings.row(D[j]);
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < H.rows(); ++i)
      if (valid[i]) best = std::max(best, e.dot(H.row(i)));
    logits(j) = e.dot(H.row(mask_pos)) + best;
  }
  return {D, softmax(logits)};
}

double sample_lambda(const LambdaPolicy& policy, std::mt19937_64& rng) {
  std::gamma_distribution<double> ga(policy.alpha, 1.0);
  std::gamma_distribution<double> gb(policy.beta, 1.0);
  double draw = policy.floor;
  for (int i = 0; i <= policy.max_rejections; ++i) {
    const double x = ga(rng);
    const double y = gb(rng);
    draw = x / (x + y);
    if (draw >= policy.floor) return draw;
  }
  return policy.floor;  // rejection budget exhausted, clamp
}

double truncated_beta_mean(const LambdaPolicy& policy) {
  // Simpson quadrature on the unnormalized Beta density over [floor, 1].
  const int n = 20000;  // even
  const double a = policy.floor, b = 1.0;
  const double h = (b - a) / n;
  auto pdf = [&](double x) {
    // Endpoints are only singular when the exponent is negative.
    if (x <= 0.0 && policy.alpha < 1.0) return 0.0;
    if (x >= 1.0 && policy.beta < 1.0) return 0.0;
    return std::pow(x, policy.alpha - 1.0) * std::pow(1.0 - x, policy.beta - 1.0);
  };
  double mass = 0.0, moment = 0.0;
  for (int i = 0; i <= n; ++i) {
    const double x = a + i * h;
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    mass += w * pdf(x);
    moment += w * x * pdf(x);
  }
  return moment / mass;
}

CandidateDistribution interpolate(const CandidateDistribution& p_char,
                                  const CandidateDistribution& p_embed,
                                  double lambda) {
  if (p_char.candidates != p_embed.candidates)
    throw Error(ErrorKind::CandidateSetMismatch,
                "distributions cover different candidate sets");
  CandidateDistribution out;
  out.candidates = p_char.candidates;
  out.probs = lambda * p_char.probs + (1.0 - lambda) * p_embed.probs;
  return out;
}

int predict(const CandidateDistribution& dist) {
  int best = 0;
  for (int j = 1; j < dist.probs.size(); ++j)
    if (dist.probs(j) > dist.probs(best)) best = j;
  return best;
}

}  // namespace cloze
