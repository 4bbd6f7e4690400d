#pragma once

#include <cstdint>
#include <vector>

#include "cloze/heads.hpp"
#include "cloze/model.hpp"

namespace cloze {

enum class HeadMode { Char, Embed, Pooling, Dual };

struct TrainConfig {
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
  HeadMode head = HeadMode::Dual;
  double clip_norm = 1.0;
  enum class Optimizer { Adam, Sgd } optimizer = Optimizer::Adam;
  LambdaPolicy lambda_policy;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  double seconds = 0.0;
  double lambda = 0.0;  // mean of the per-batch draws; only set in dual mode
};

struct TrainResult {
  std::vector<EpochMetrics> metrics;
  bool diverged = false;
};

struct Prediction {
  int instance_id = 0;
  int gold = 0;
  int predicted = 0;
  double prob_gold = 0.0;
};

struct EvalResult {
  double accuracy = 0.0;
  std::vector<Prediction> predictions;
};

// Position of the instance's gold candidate inside its candidate set.
int gold_position(const ClozeInstance& instance);

// -log(dist[gold_pos]) with the probability floored at 1e-12.
double cross_entropy(const CandidateDistribution& dist, int gold_pos);

// Forward-only scoring of one instance under the chosen head. Lambda is
// only consulted in dual mode.
CandidateDistribution score_instance(const Model& model,
                                     const ClozeInstance& instance,
                                     const std::vector<IdiomCandidate>& inventory,
                                     HeadMode mode, double lambda);

// Loss of one instance, accumulating parameter gradients into the model.
double instance_loss_grad(Model& model, const ClozeInstance& instance,
                          const std::vector<IdiomCandidate>& inventory,
                          HeadMode mode, double lambda);

// Compares analytic gradients against central differences at sample_count
// randomly chosen scalar parameters; returns the max relative error
// (absolute error where both gradients are near zero).
double finite_diff_check(Model& model, const ClozeInstance& instance,
                         const std::vector<IdiomCandidate>& inventory,
                         HeadMode mode, double lambda, double epsilon,
                         int sample_count, std::uint64_t seed);

// Mini-batch training with gradient clipping. Deterministic under the
// config seed. On divergence the model is rolled back to the last epoch
// boundary and the result is flagged.
TrainResult train(Model& model, const DatasetSplits& splits,
                  const std::vector<IdiomCandidate>& inventory,
                  const TrainConfig& config);

// Deterministic evaluation; dual mode uses the fixed lambda passed in
// (callers use truncated_beta_mean of the policy).
EvalResult evaluate(const Model& model,
                    const std::vector<ClozeInstance>& instances,
                    const std::vector<IdiomCandidate>& inventory,
                    HeadMode mode, double lambda);

}  // namespace cloze
