#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "cloze/training.hpp"
#include "test_util.hpp"

using namespace cloze;
using namespace cloze::testutil;
using Eigen::VectorXd;

namespace {

TinyWorld small_world(int idioms, int instances, std::uint64_t seed,
                      double test_frac = 0.2) {
  SynthConfig sc;
  sc.n_idioms = idioms;
  sc.n_instances = instances;
  sc.n_templates = 4;
  sc.seed = seed;
  return make_world(sc, 1.0 - test_frac, 0.0, test_frac);
}

double dataset_loss(Model& model, const std::vector<ClozeInstance>& instances,
                    const std::vector<IdiomCandidate>& inventory,
                    HeadMode mode) {
  double total = 0.0;
  for (const auto& inst : instances)
    total += cross_entropy(score_instance(model, inst, inventory, mode, 0.8),
                           gold_position(inst));
  return total / instances.size();
}

}  // namespace

TEST_CASE("cross_entropy values") {
  CandidateDistribution certain{{0, 1}, VectorXd(2)};
  certain.probs << 0.0, 1.0;
  CHECK(cross_entropy(certain, 1) == doctest::Approx(0.0));

  CandidateDistribution uniform{{0, 1, 2, 3}, VectorXd::Constant(4, 0.25)};
  CHECK(cross_entropy(uniform, 2) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    VectorXd p = VectorXd::Random(5).cwiseAbs();
    p /= p.sum();
    CandidateDistribution d{{0, 1, 2, 3, 4}, p};
    const int gold = static_cast<int>(rng() % 5);
    CHECK(std::abs(cross_entropy(d, gold) + std::log(p(gold))) <= 1e-12);
  }

  CHECK_THROWS_AS(cross_entropy(uniform, 9), Error);
}

TEST_CASE("gradients of the frozen-encoder embedding head match central differences") {
  auto w = small_world(4, 40, 21);
  EncoderConfig cfg;
  cfg.d_model = 4;
  cfg.n_layers = 1;
  cfg.n_heads = 1;
  cfg.d_ff = 8;
  cfg.max_len = 32;
  auto model = make_model(w, cfg, 31);
  const auto& inst = w.splits.train.at(0);
  const int gold = gold_position(inst);

  model.zero_grads();
  instance_loss_grad(model, inst, w.inventory, HeadMode::Embed, 0.0);

  const double eps = 1e-5;
  auto loss_at = [&] {
    return cross_entropy(
        score_instance(model, inst, w.inventory, HeadMode::Embed, 0.0), gold);
  };
  // Only head parameters move; the encoder stays frozen.
  for (Param* p : {&model.match.w, &model.match.b, &model.idiom_emb}) {
    for (Eigen::Index i = 0; i < p->value.size(); ++i) {
      double* theta = p->value.data() + i;
      const double saved = *theta;
      *theta = saved + eps;
      const double up = loss_at();
      *theta = saved - eps;
      const double down = loss_at();
      *theta = saved;
      const double numeric = (up - down) / (2 * eps);
      const double analytic = *(p->grad.data() + i);
      const double denom = std::max(std::abs(numeric), std::abs(analytic));
      const double err = denom < 1e-6 ? std::abs(numeric - analytic)
                                      : std::abs(numeric - analytic) / denom;
      CHECK(err <= 1e-6);
    }
  }
}

TEST_CASE("finite_diff_check on a small model, every head mode") {
  auto w = small_world(4, 40, 22);
  auto model = make_model(w, small_encoder(), 33);
  const auto& inst = w.splits.train.at(1);
  for (HeadMode mode : {HeadMode::Char, HeadMode::Embed, HeadMode::Pooling,
                        HeadMode::Dual}) {
    const double err =
        finite_diff_check(model, inst, w.inventory, mode, 0.85, 1e-4, 20, 7);
    CHECK(err <= 1e-4);
  }
}

TEST_CASE("zero-gradient parameters fall back to absolute error") {
  // Two candidates with identical embeddings and w = 0: symmetric, so the
  // match-head gradient vanishes.
  auto w = small_world(2, 20, 23);
  auto model = make_model(w, small_encoder(), 35);
  model.match.w.value.setZero();
  model.idiom_emb.value.row(1) = model.idiom_emb.value.row(0);

  auto inst = w.splits.train.at(0);
  inst.candidate_ids = {0, 1};
  const int gold = gold_position(inst);

  model.zero_grads();
  instance_loss_grad(model, inst, w.inventory, HeadMode::Embed, 0.0);
  CHECK(model.match.w.grad.cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(std::abs(model.match.b.grad(0, 0)) <= 1e-12);

  const double eps = 1e-5;
  auto loss_at = [&] {
    return cross_entropy(
        score_instance(model, inst, w.inventory, HeadMode::Embed, 0.0), gold);
  };
  double* theta = model.match.b.value.data();
  const double saved = *theta;
  *theta = saved + eps;
  const double up = loss_at();
  *theta = saved - eps;
  const double down = loss_at();
  *theta = saved;
  CHECK(std::abs((up - down) / (2 * eps)) <= 1e-8);
}

TEST_CASE("one small full-batch step does not increase the frozen-encoder loss") {
  auto w = small_world(4, 60, 24);
  auto model = make_model(w, small_encoder(), 41);

  model.zero_grads();
  double before = 0.0;
  for (const auto& inst : w.splits.train)
    before += instance_loss_grad(model, inst, w.inventory, HeadMode::Embed, 0.0);
  before /= w.splits.train.size();

  const double lr = 1e-3;
  const double n = static_cast<double>(w.splits.train.size());
  for (Param* p : {&model.match.w, &model.match.b, &model.idiom_emb})
    p->value -= (lr / n) * p->grad;

  const double after = dataset_loss(model, w.splits.train, w.inventory,
                                    HeadMode::Embed);
  CHECK(after <= before + 1e-12);
}

TEST_CASE("train: zero learning rate leaves parameters and loss unchanged") {
  auto w = small_world(3, 30, 25);
  auto model = make_model(w, small_encoder(), 43);
  auto before = model.snapshot();

  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 8;
  tc.learning_rate = 0.0;
  tc.head = HeadMode::Embed;
  tc.seed = 5;
  auto result = train(model, w.splits, w.inventory, tc);

  REQUIRE(result.metrics.size() == 3);
  CHECK(result.metrics[0].train_loss ==
        doctest::Approx(result.metrics[2].train_loss).epsilon(1e-15));
  auto after = model.snapshot();
  for (std::size_t i = 0; i < before.size(); ++i)
    CHECK((before[i] - after[i]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("train: identical seeds give identical metrics and checkpoints") {
  auto w = small_world(3, 40, 26);
  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 8;
  tc.head = HeadMode::Dual;
  tc.seed = 77;

  auto run = [&] {
    auto model = make_model(w, small_encoder(), 55);
    auto result = train(model, w.splits, w.inventory, tc);
    return std::pair{result.metrics, model.snapshot()};
  };
  auto [m1, s1] = run();
  auto [m2, s2] = run();
  REQUIRE(m1.size() == m2.size());
  for (std::size_t i = 0; i < m1.size(); ++i) {
    CHECK(m1[i].train_loss == m2[i].train_loss);
    CHECK(m1[i].val_accuracy == m2[i].val_accuracy);
    CHECK(m1[i].lambda == m2[i].lambda);
  }
  for (std::size_t i = 0; i < s1.size(); ++i)
    CHECK((s1[i].array() == s2[i].array()).all());
}

TEST_CASE("train: loss decreases on a separable corpus and losses stay finite") {
  auto w = small_world(4, 160, 27);
  auto model = make_model(w, small_encoder(), 61);
  TrainConfig tc;
  tc.epochs = 8;
  tc.batch_size = 16;
  tc.learning_rate = 3e-3;
  tc.head = HeadMode::Embed;
  tc.seed = 3;
  auto result = train(model, w.splits, w.inventory, tc);
  REQUIRE(result.metrics.size() == 8);
  for (const auto& m : result.metrics) CHECK(m.train_loss >= 0.0);
  CHECK(result.metrics.back().train_loss < result.metrics.front().train_loss);
  CHECK(!result.diverged);
}

TEST_CASE("train: divergence rolls back to the last good snapshot") {
  auto w = small_world(3, 40, 28);
  auto model = make_model(w, small_encoder(), 63);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 8;
  tc.learning_rate = 1e14;
  tc.clip_norm = 0.0;  // disabled
  tc.optimizer = TrainConfig::Optimizer::Sgd;
  tc.head = HeadMode::Embed;
  auto result = train(model, w.splits, w.inventory, tc);
  CHECK(result.diverged);
  for (const auto* p : model.params()) CHECK(p->value.allFinite());
}

TEST_CASE("evaluate: contracts") {
  auto w = small_world(4, 40, 29);
  auto model = make_model(w, small_encoder(), 65);

  // Singleton candidate set is always correct.
  auto one = w.splits.test;
  for (auto& inst : one) inst.candidate_ids = {inst.gold};
  auto forced = evaluate(model, one, w.inventory, HeadMode::Embed, 0.0);
  CHECK(forced.accuracy == 1.0);
  CHECK(forced.predictions.size() == one.size());

  CHECK_THROWS_AS(evaluate(model, {}, w.inventory, HeadMode::Embed, 0.0),
                  Error);

  auto rerun1 = evaluate(model, w.splits.test, w.inventory, HeadMode::Dual, 0.85);
  auto rerun2 = evaluate(model, w.splits.test, w.inventory, HeadMode::Dual, 0.85);
  CHECK(rerun1.accuracy == rerun2.accuracy);
}

TEST_CASE("evaluate: untrained model scores at chance on a balanced set") {
  auto w = small_world(4, 1000, 30, 1.0);  // everything in the test split
  auto model = make_model(w, small_encoder(), 67);
  auto res = evaluate(model, w.splits.test, w.inventory, HeadMode::Embed, 0.0);
  CHECK(std::abs(res.accuracy - 0.25) <= 0.05);
}

TEST_CASE("checkpoint round trip and corruption detection") {
  auto w = small_world(3, 30, 31);
  auto model = make_model(w, small_encoder(), 71);
  model.vocab_fingerprint = w.vocab.fingerprint();
  model.trained_epochs = 4;

  const std::string path = "checkpoint_test.bin";
  save_model(model, path);
  auto loaded = load_model(path);
  CHECK(loaded.config() == model.config());
  CHECK(loaded.vocab_fingerprint == model.vocab_fingerprint);
  CHECK(loaded.trained_epochs == 4);
  auto a = model.snapshot(), b = loaded.snapshot();
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK((a[i].array() == b[i].array()).all());

  // Flip one byte: the checksum must catch it.
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(100);
    char c;
    f.seekg(100);
    f.get(c);
    f.seekp(100);
    f.put(static_cast<char>(c ^ 0x40));
  }
  CHECK_THROWS_AS(load_model(path), Error);
}
