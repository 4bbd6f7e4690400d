#include "cloze/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

namespace cloze {

namespace {

constexpr double kProbFloor = 1e-12;

Batch passage_batch(const ClozeInstance& instance) {
  return Batch::single(instance.passage_ids, {});
}

// dlogits for plain cross-entropy: p - onehot(gold).
Eigen::VectorXd ce_dlogits(const CandidateDistribution& dist, int gold_pos) {
  Eigen::VectorXd d = dist.probs;
  d(gold_pos) -= 1.0;
  return d;
}

struct EmbedForward {
  EncoderCache cache;
  Eigen::MatrixXd H;
  CandidateDistribution dist;
};

EmbedForward embed_forward(const Model& model, const ClozeInstance& instance,
                           bool with_cache) {
  EmbedForward f;
  f.H = encoder_forward(passage_batch(instance), model.enc, model.config(),
                        with_cache ? &f.cache : nullptr);
  f.dist = score_embedding(f.H, instance.mask_pos, model.idiom_emb.value,
                           model.match, instance.candidate_ids);
  return f;
}

void embed_backward(Model& model, const ClozeInstance& instance,
                    const EmbedForward& f, const Eigen::VectorXd& dlogits) {
  const auto& D = instance.candidate_ids;
  const Eigen::RowVectorXd h_b = f.H.row(instance.mask_pos);
  const Eigen::RowVectorXd w = model.match.w.value.row(0);
  Eigen::MatrixXd dH = Eigen::MatrixXd::Zero(f.H.rows(), f.H.cols());
  for (std::size_t j = 0; j < D.size(); ++j) {
    const double dl = dlogits(j);
    const Eigen::RowVectorXd e = model.idiom_emb.value.row(D[j]);
    model.match.w.grad.row(0) += dl * e.cwiseProduct(h_b);
    model.match.b.grad(0, 0) += dl;
    model.idiom_emb.grad.row(D[j]) += dl * w.cwiseProduct(h_b);
    dH.row(instance.mask_pos) += dl * w.cwiseProduct(e);
  }
  encoder_backward(dH, f.cache, model.config(), model.enc);
}

struct PoolingForward {
  EncoderCache cache;
  Eigen::MatrixXd H;
  CandidateDistribution dist;
  std::vector<Eigen::Index> argmax;  // pooled position per candidate
};

PoolingForward pooling_forward(const Model& model, const ClozeInstance& instance,
                               bool with_cache) {
  PoolingForward f;
  f.H = encoder_forward(passage_batch(instance), model.enc, model.config(),
                        with_cache ? &f.cache : nullptr);
  const auto& D = instance.candidate_ids;
  Eigen::VectorXd logits(D.size());
  f.argmax.resize(D.size());
  for (std::size_t j = 0; j < D.size(); ++j) {
    const Eigen::RowVectorXd e = model.idiom_emb.value.row(D[j]);
    Eigen::Index best = 0;
    double best_dot = e.dot(f.H.row(0));
    for (Eigen::Index i = 1; i < f.H.rows(); ++i) {
      const double dot = e.dot(f.H.row(i));
      if (dot > best_dot) {
        best_dot = dot;
        best = i;
      }
    }
    f.argmax[j] = best;
    logits(j) = e.dot(f.H.row(instance.mask_pos)) + best_dot;
  }
  f.dist = {D, softmax(logits)};
  return f;
}

void pooling_backward(Model& model, const ClozeInstance& instance,
                      const PoolingForward& f, const Eigen::VectorXd& dlogits) {
  const auto& D = instance.candidate_ids;
  const Eigen::RowVectorXd h_b = f.H.row(instance.mask_pos);
  Eigen::MatrixXd dH = Eigen::MatrixXd::Zero(f.H.rows(), f.H.cols());
  for (std::size_t j = 0; j < D.size(); ++j) {
    const double dl = dlogits(j);
    const Eigen::RowVectorXd e = model.idiom_emb.value.row(D[j]);
    model.idiom_emb.grad.row(D[j]) +=
        dl * (h_b + f.H.row(f.argmax[j]).eval());
    dH.row(instance.mask_pos) += dl * e;
    dH.row(f.argmax[j]) += dl * e;
  }
  encoder_backward(dH, f.cache, model.config(), model.enc);
}

struct CharForward {
  EncoderCache cache;
  Eigen::MatrixXd H;
  CandidateDistribution dist;
  int seq_len = 0;
};

CharForward char_forward(const Model& model, const ClozeInstance& instance,
                         const std::vector<IdiomCandidate>& inventory,
                         bool with_cache) {
  CharForward f;
  f.dist = score_char_sequence(instance, inventory, model.enc, model.config(),
                               model.cls, with_cache ? &f.cache : nullptr,
                               &f.H);
  f.seq_len = static_cast<int>(f.H.rows() / instance.candidate_ids.size());
  return f;
}

void char_backward(Model& model, const ClozeInstance& instance,
                   const CharForward& f, const Eigen::VectorXd& dlogits) {
  const auto& D = instance.candidate_ids;
  Eigen::MatrixXd dH = Eigen::MatrixXd::Zero(f.H.rows(), f.H.cols());
  for (std::size_t j = 0; j < D.size(); ++j) {
    const double dl = dlogits(j);
    const Eigen::Index cls_row = static_cast<Eigen::Index>(j) * f.seq_len;
    model.cls.w.grad.row(0) += dl * f.H.row(cls_row);
    model.cls.b.grad(0, 0) += dl;
    dH.row(cls_row) = dl * model.cls.w.value.row(0);
  }
  encoder_backward(dH, f.cache, model.config(), model.enc);
}

}  // namespace

int gold_position(const ClozeInstance& instance) {
  const auto& D = instance.candidate_ids;
  auto it = std::find(D.begin(), D.end(), instance.gold);
  if (it == D.end())
    throw Error(ErrorKind::IndexOutOfRange,
                "gold candidate not in the instance candidate set");
  return static_cast<int>(it - D.begin());
}

double cross_entropy(const CandidateDistribution& dist, int gold_pos) {
  if (gold_pos < 0 || gold_pos >= dist.probs.size())
    throw Error(ErrorKind::IndexOutOfRange, "gold position outside distribution");
  return -std::log(std::max(dist.probs(gold_pos), kProbFloor));
}

CandidateDistribution score_instance(const Model& model,
                                     const ClozeInstance& instance,
                                     const std::vector<IdiomCandidate>& inventory,
                                     HeadMode mode, double lambda) {
  switch (mode) {
    case HeadMode::Char:
      return char_forward(model, instance, inventory, false).dist;
    case HeadMode::Embed:
      return embed_forward(model, instance, false).dist;
    case HeadMode::Pooling:
      return pooling_forward(model, instance, false).dist;
    case HeadMode::Dual: {
      auto p_char = char_forward(model, instance, inventory, false).dist;
      auto p_embed = embed_forward(model, instance, false).dist;
      return interpolate(p_char, p_embed, lambda);
    }
  }
  throw Error(ErrorKind::BadConfig, "unknown head mode");
}

double instance_loss_grad(Model& model, const ClozeInstance& instance,
                          const std::vector<IdiomCandidate>& inventory,
                          HeadMode mode, double lambda) {
  const int gold = gold_position(instance);

  if (mode == HeadMode::Embed) {
    auto f = embed_forward(model, instance, true);
    embed_backward(model, instance, f, ce_dlogits(f.dist, gold));
    return cross_entropy(f.dist, gold);
  }
  if (mode == HeadMode::Pooling) {
    auto f = pooling_forward(model, instance, true);
    pooling_backward(model, instance, f, ce_dlogits(f.dist, gold));
    return cross_entropy(f.dist, gold);
  }
  if (mode == HeadMode::Char) {
    auto f = char_forward(model, instance, inventory, true);
    char_backward(model, instance, f, ce_dlogits(f.dist, gold));
    return cross_entropy(f.dist, gold);
  }

  // Dual: cross entropy of the lambda-interpolated distribution, with
  // gradient flowing into both heads (lambda held constant).
  auto fc = char_forward(model, instance, inventory, true);
  auto fe = embed_forward(model, instance, true);
  auto mixed = interpolate(fc.dist, fe.dist, lambda);
  const double p_gold = std::max(mixed.probs(gold), kProbFloor);

  auto mix_dlogits = [&](const CandidateDistribution& d, double weight) {
    // d(-log p_gold)/dlogit_k through one softmax branch of the mixture.
    const double c = weight * d.probs(gold) / p_gold;
    Eigen::VectorXd dl = c * d.probs;
    dl(gold) -= c;
    return dl;
  };
  char_backward(model, instance, fc, mix_dlogits(fc.dist, lambda));
  embed_backward(model, instance, fe, mix_dlogits(fe.dist, 1.0 - lambda));
  return -std::log(p_gold);
}

double finite_diff_check(Model& model, const ClozeInstance& instance,
                         const std::vector<IdiomCandidate>& inventory,
                         HeadMode mode, double lambda, double epsilon,
                         int sample_count, std::uint64_t seed) {
  model.zero_grads();
  instance_loss_grad(model, instance, inventory, mode, lambda);

  const int gold = gold_position(instance);
  auto loss_only = [&]() {
    return cross_entropy(score_instance(model, instance, inventory, mode, lambda),
                         gold);
  };

  std::size_t total = 0;
  for (const Param* p : model.params()) total += p->value.size();

  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, total - 1);
  double worst = 0.0;
  for (int s = 0; s < sample_count; ++s) {
    std::size_t flat = pick(rng);
    Param* p = nullptr;
    for (Param* q : model.params()) {
      if (flat < static_cast<std::size_t>(q->value.size())) {
        p = q;
        break;
      }
      flat -= q->value.size();
    }
    double* theta = p->value.data() + flat;
    const double saved = *theta;
    *theta = saved + epsilon;
    const double up = loss_only();
    *theta = saved - epsilon;
    const double down = loss_only();
    *theta = saved;

    const double numeric = (up - down) / (2.0 * epsilon);
    const double analytic = *(p->grad.data() + flat);
    const double denom = std::max(std::abs(numeric), std::abs(analytic));
    const double err =
        denom < 1e-6 ? std::abs(numeric - analytic)  // absolute fallback
                     : std::abs(numeric - analytic) / denom;
    worst = std::max(worst, err);
  }
  return worst;
}

namespace {

struct AdamState {
  std::vector<Eigen::MatrixXd> m, v;
  long t = 0;
  static constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;

  explicit AdamState(const std::vector<Param*>& params) {
    for (const Param* p : params) {
      m.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
      v.push_back(Eigen::MatrixXd::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void step(std::vector<Param*>& params, double lr) {
    ++t;
    const double c1 = 1.0 - std::pow(kBeta1, t);
    const double c2 = 1.0 - std::pow(kBeta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
      Param& p = *params[i];
      m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * p.grad;
      v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * p.grad.cwiseProduct(p.grad);
      p.value.array() -= lr * (m[i].array() / c1) /
                         ((v[i].array() / c2).sqrt() + kEps);
    }
  }
};

void clip_gradients(std::vector<Param*>& params, double clip_norm) {
  if (clip_norm <= 0) return;
  double sq = 0.0;
  for (const Param* p : params) sq += p->grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > clip_norm)
    for (Param* p : params) p->grad *= clip_norm / norm;
}

void validate(const TrainConfig& c) {
  if (c.epochs < 1 || c.batch_size < 1 || c.learning_rate < 0)
    throw Error(ErrorKind::BadConfig, "invalid training configuration");
  if (c.lambda_policy.alpha <= 0 || c.lambda_policy.beta <= 0 ||
      c.lambda_policy.floor <= 0 || c.lambda_policy.floor >= 1)
    throw Error(ErrorKind::BadConfig, "invalid lambda policy");
}

}  // namespace

TrainResult train(Model& model, const DatasetSplits& splits,
                  const std::vector<IdiomCandidate>& inventory,
                  const TrainConfig& config) {
  validate(config);
  TrainResult result;
  const bool dual = config.head == HeadMode::Dual;
  const double eval_lambda =
      dual ? truncated_beta_mean(config.lambda_policy) : 0.0;

  std::mt19937_64 shuffle_rng(config.seed);
  std::mt19937_64 lambda_rng(config.seed ^ 0xd1b54a32d192ed03ull);
  AdamState adam(model.params());

  std::vector<std::size_t> order(splits.train.size());
  std::iota(order.begin(), order.end(), 0);
  auto snapshot = model.snapshot();

  for (int e = 0; e < config.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0, lambda_sum = 0.0;
    std::size_t n_seen = 0, n_batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += config.batch_size) {
      const std::size_t stop =
          std::min(order.size(), start + config.batch_size);
      const double lambda =
          dual ? sample_lambda(config.lambda_policy, lambda_rng) : 0.0;
      lambda_sum += lambda;
      ++n_batches;

      model.zero_grads();
      double batch_loss = 0.0;
      for (std::size_t i = start; i < stop; ++i)
        batch_loss += instance_loss_grad(model, splits.train[order[i]],
                                         inventory, config.head, lambda);
      const double bn = static_cast<double>(stop - start);
      batch_loss /= bn;
      if (!std::isfinite(batch_loss)) {
        model.restore(snapshot);
        result.diverged = true;
        return result;
      }
      for (Param* p : model.params()) p->grad /= bn;
      clip_gradients(model.params(), config.clip_norm);
      if (config.optimizer == TrainConfig::Optimizer::Adam) {
        adam.step(model.params(), config.learning_rate);
      } else {
        for (Param* p : model.params())
          p->value -= config.learning_rate * p->grad;
      }
      loss_sum += batch_loss * bn;
      n_seen += stop - start;
    }

    EpochMetrics em;
    em.epoch = ++model.trained_epochs;
    em.train_loss = n_seen ? loss_sum / n_seen : 0.0;
    em.lambda = n_batches && dual ? lambda_sum / n_batches : 0.0;
    em.val_accuracy =
        splits.validation.empty()
            ? 0.0
            : evaluate(model, splits.validation, inventory, config.head,
                       eval_lambda)
                  .accuracy;
    em.seconds = std::chrono::duration<double>(
                     std::chrono::steady_clock::now() - t0)
                     .count();
    result.metrics.push_back(em);
    snapshot = model.snapshot();
  }
  return result;
}

EvalResult evaluate(const Model& model,
                    const std::vector<ClozeInstance>& instances,
                    const std::vector<IdiomCandidate>& inventory,
                    HeadMode mode, double lambda) {
  if (instances.empty())
    throw Error(ErrorKind::EmptyEvalSet, "evaluation set is empty");
  EvalResult result;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const auto& inst = instances[i];
    const auto dist = score_instance(model, inst, inventory, mode, lambda);
    const int gold = gold_position(inst);
    const int pred = predict(dist);
    if (pred == gold) ++correct;
    result.predictions.push_back({static_cast<int>(i), inst.gold,
                                  dist.candidates[pred], dist.probs(gold)});
  }
  result.accuracy = static_cast<double>(correct) / instances.size();
  return result;
}

}  // namespace cloze
