#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "cloze/corpus.hpp"
#include "cloze/dataio.hpp"
#include "cloze/model.hpp"
#include "cloze/synth.hpp"
#include "cloze/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitDivergence = 3;

struct Settings {
  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 1;

  // preprocess
  std::string corpus_path;
  int min_freq = 1;
  double train_frac = 0.68, val_frac = 0.23, test_frac = 0.09;

  // encoder
  cloze::EncoderConfig enc;

  // training
  int epochs = 30;
  int batch_size = 32;
  double learning_rate = 1e-3;
  std::string head = "dual";
  double clip_norm = 1.0;
  std::string optimizer = "adam";
  double lambda_alpha = 8.0, lambda_beta = 2.0, lambda_floor = 0.7;
  int lambda_max_rejections = 64;
  int num_candidates = 0;  // 0 = full inventory
  std::string data_dir;
  std::string resume_path;

  // eval/predict
  std::string checkpoint_path;
  std::string split = "test";

  // synth
  int synth_idioms = 20;
  int synth_instances = 2000;
  int synth_templates = 8;
};

void apply_config_file(Settings& s) {
  if (s.config_path.empty()) return;
  std::ifstream is(s.config_path);
  if (!is) throw cloze::Error(cloze::ErrorKind::BadFile,
                              "cannot read config " + s.config_path);
  json j = json::parse(is);
  auto get = [&](const char* key, auto& dst) {
    if (j.contains(key)) dst = j[key].get<std::decay_t<decltype(dst)>>();
  };
  get("out", s.out_dir);
  get("seed", s.seed);
  get("corpus", s.corpus_path);
  get("min_freq", s.min_freq);
  get("train_frac", s.train_frac);
  get("val_frac", s.val_frac);
  get("test_frac", s.test_frac);
  get("d_model", s.enc.d_model);
  get("n_layers", s.enc.n_layers);
  get("n_heads", s.enc.n_heads);
  get("d_ff", s.enc.d_ff);
  get("max_len", s.enc.max_len);
  get("epochs", s.epochs);
  get("batch_size", s.batch_size);
  get("learning_rate", s.learning_rate);
  get("head", s.head);
  get("clip_norm", s.clip_norm);
  get("optimizer", s.optimizer);
  get("lambda_alpha", s.lambda_alpha);
  get("lambda_beta", s.lambda_beta);
  get("lambda_floor", s.lambda_floor);
  get("lambda_max_rejections", s.lambda_max_rejections);
  get("num_candidates", s.num_candidates);
  get("data", s.data_dir);
  get("split", s.split);
  get("idioms", s.synth_idioms);
  get("instances", s.synth_instances);
  get("templates", s.synth_templates);
}

cloze::HeadMode parse_head(const std::string& name) {
  if (name == "char") return cloze::HeadMode::Char;
  if (name == "embed") return cloze::HeadMode::Embed;
  if (name == "pooling") return cloze::HeadMode::Pooling;
  if (name == "dual") return cloze::HeadMode::Dual;
  throw cloze::Error(cloze::ErrorKind::BadConfig, "unknown head '" + name + "'");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

cloze::LambdaPolicy lambda_policy(const Settings& s) {
  return {s.lambda_alpha, s.lambda_beta, s.lambda_floor,
          s.lambda_max_rejections};
}

struct Dataset {
  cloze::Vocabulary vocab;
  std::vector<cloze::IdiomCandidate> inventory;
  cloze::DatasetSplits splits;
  int P = 0;
};

Dataset load_dataset(const Settings& s) {
  Dataset d;
  d.vocab = cloze::load_vocabulary(s.data_dir + "/vocab.txt");
  d.inventory = cloze::load_inventory(s.data_dir + "/inventory.txt");
  const std::uint64_t fp = d.vocab.fingerprint();
  for (auto [name, dst] : {std::pair{"train", &d.splits.train},
                           {"validation", &d.splits.validation},
                           {"test", &d.splits.test}}) {
    auto loaded =
        cloze::load_instances(s.data_dir + "/" + name + ".ids");
    if (loaded.header.fingerprint != fp)
      throw cloze::Error(cloze::ErrorKind::FingerprintMismatch,
                         std::string(name) +
                             ".ids was built with a different vocabulary");
    d.P = loaded.header.P;
    *dst = std::move(loaded.instances);
  }
  if (s.num_candidates > 0) {
    for (auto* split :
         {&d.splits.train, &d.splits.validation, &d.splits.test})
      cloze::subsample_candidates(*split, s.num_candidates, s.seed);
  }
  return d;
}

void write_metrics_csv(const std::string& path,
                       const std::vector<cloze::EpochMetrics>& metrics,
                       bool dual) {
  std::ofstream os(path);
  os << "epoch,train_loss,val_accuracy,seconds";
  if (dual) os << ",lambda";
  os << "\n";
  for (const auto& m : metrics) {
    os << m.epoch << ',' << fmt(m.train_loss) << ',' << fmt(m.val_accuracy)
       << ',' << fmt(m.seconds);
    if (dual) os << ',' << fmt(m.lambda);
    os << "\n";
  }
}

void write_predictions_csv(const std::string& path,
                           const std::vector<cloze::Prediction>& preds) {
  std::ofstream os(path);
  os << "instance_id,gold,predicted,prob_gold\n";
  for (const auto& p : preds)
    os << p.instance_id << ',' << p.gold << ',' << p.predicted << ','
       << fmt(p.prob_gold) << "\n";
}

int cmd_synth(const Settings& s) {
  cloze::SynthConfig cfg{s.synth_idioms, s.synth_instances, s.synth_templates,
                         s.seed};
  fs::create_directories(s.out_dir);
  const std::string path = s.out_dir + "/corpus.bio";
  std::ofstream os(path);
  if (!os) throw cloze::Error(cloze::ErrorKind::BadFile, "cannot write " + path);
  os << cloze::generate_synthetic_corpus(cfg);
  std::cout << "wrote " << path << "\n";
  return 0;
}

int cmd_preprocess(const Settings& s) {
  std::ifstream is(s.corpus_path);
  if (!is)
    throw cloze::Error(cloze::ErrorKind::BadFile,
                       "cannot read corpus " + s.corpus_path);
  std::ostringstream ss;
  ss << is.rdbuf();

  const auto sentences = cloze::parse_bio_corpus(ss.str());
  auto built = cloze::build_inventory(sentences);
  if (built.inventory.empty())
    throw cloze::Error(cloze::ErrorKind::EmptyInventory, "no instances produced");

  auto vocab = cloze::build_vocab(sentences, s.min_freq);
  const int P = cloze::pad_candidates(built.inventory, vocab);

  std::vector<cloze::ClozeInstance> instances;
  for (const auto& sent : sentences) {
    try {
      instances.push_back(
          cloze::make_cloze_instance(sent, built.inventory, vocab));
    } catch (const cloze::Error& e) {
      if (e.kind() != cloze::ErrorKind::NoIdiom &&
          e.kind() != cloze::ErrorKind::MultipleIdioms)
        throw;  // skip counters already tracked by build_inventory
    }
  }
  if (instances.empty())
    throw cloze::Error(cloze::ErrorKind::EmptyInventory, "no instances produced");

  auto splits = cloze::split_dataset(instances, s.train_frac, s.val_frac,
                                     s.test_frac, s.seed);

  fs::create_directories(s.out_dir);
  const int T = static_cast<int>(built.inventory.size());
  const std::uint64_t fp = vocab.fingerprint();
  cloze::save_vocabulary(s.out_dir + "/vocab.txt", vocab);
  cloze::save_inventory(s.out_dir + "/inventory.txt", built.inventory, P);
  cloze::save_instances(s.out_dir + "/train.ids", splits.train, T, P, fp);
  cloze::save_instances(s.out_dir + "/validation.ids", splits.validation, T, P, fp);
  cloze::save_instances(s.out_dir + "/test.ids", splits.test, T, P, fp);

  std::ostringstream stats;
  stats << "T=" << T << "\nN=" << instances.size() << "\nP=" << P
        << "\nvocab_size=" << vocab.size()
        << "\ntrain=" << splits.train.size()
        << "\nvalidation=" << splits.validation.size()
        << "\ntest=" << splits.test.size()
        << "\nskipped_no_idiom=" << built.skipped_no_idiom
        << "\nskipped_multiple_idioms=" << built.skipped_multiple << "\n";
  std::ofstream(s.out_dir + "/stats.txt") << stats.str();
  std::cout << stats.str();
  return 0;
}

int cmd_train(const Settings& s) {
  Dataset d = load_dataset(s);

  cloze::Model model;
  if (!s.resume_path.empty()) {
    model = cloze::load_model(s.resume_path);
    if (model.vocab_fingerprint != d.vocab.fingerprint())
      throw cloze::Error(cloze::ErrorKind::FingerprintMismatch,
                         "checkpoint was trained with a different vocabulary");
  } else {
    cloze::EncoderConfig cfg = s.enc;
    cfg.vocab_size = d.vocab.size();
    model.build(cfg, static_cast<int>(d.inventory.size()));
    model.init(s.seed);
    model.init_idiom_embeddings(d.inventory);
    model.vocab_fingerprint = d.vocab.fingerprint();
  }

  cloze::TrainConfig tc;
  tc.epochs = s.epochs;
  tc.batch_size = s.batch_size;
  tc.learning_rate = s.learning_rate;
  tc.seed = s.seed;
  tc.head = parse_head(s.head);
  tc.clip_norm = s.clip_norm;
  tc.optimizer = s.optimizer == "sgd" ? cloze::TrainConfig::Optimizer::Sgd
                                      : cloze::TrainConfig::Optimizer::Adam;
  tc.lambda_policy = lambda_policy(s);

  const bool dual = tc.head == cloze::HeadMode::Dual;
  auto result = cloze::train(model, d.splits, d.inventory, tc);
  for (const auto& m : result.metrics) {
    std::cout << "epoch " << m.epoch << "  loss " << fmt(m.train_loss)
              << "  val_acc " << fmt(m.val_accuracy);
    if (dual) std::cout << "  lambda " << fmt(m.lambda);
    std::cout << "  (" << fmt(m.seconds) << "s)\n";
  }

  fs::create_directories(s.out_dir);
  write_metrics_csv(s.out_dir + "/metrics.csv", result.metrics, dual);
  cloze::save_model(model, s.out_dir + "/checkpoint.bin");
  if (result.diverged) {
    std::cerr << "error: training diverged; last good checkpoint saved\n";
    return kExitDivergence;
  }
  return 0;
}

const std::vector<cloze::ClozeInstance>& pick_split(const Dataset& d,
                                                    const std::string& name) {
  if (name == "train") return d.splits.train;
  if (name == "validation") return d.splits.validation;
  if (name == "test") return d.splits.test;
  throw cloze::Error(cloze::ErrorKind::BadConfig, "unknown split '" + name + "'");
}

int cmd_eval(const Settings& s, bool predictions_only) {
  Dataset d = load_dataset(s);
  cloze::Model model = cloze::load_model(s.checkpoint_path);
  if (model.vocab_fingerprint != d.vocab.fingerprint())
    throw cloze::Error(cloze::ErrorKind::FingerprintMismatch,
                       "checkpoint was trained with a different vocabulary");
  const auto& instances = pick_split(d, s.split);
  const double eval_lambda = cloze::truncated_beta_mean(lambda_policy(s));

  std::vector<std::string> heads =
      s.head == "all" ? std::vector<std::string>{"char", "embed", "pooling", "dual"}
                      : std::vector<std::string>{s.head};
  fs::create_directories(s.out_dir);
  if (!predictions_only) std::cout << "head\taccuracy\n";
  for (const auto& name : heads) {
    auto res = cloze::evaluate(model, instances, d.inventory, parse_head(name),
                               eval_lambda);
    if (!predictions_only)
      std::cout << name << '\t' << fmt(res.accuracy) << "\n";
    write_predictions_csv(s.out_dir + "/predictions_" + name + ".csv",
                          res.predictions);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  Settings s;
  // The config file provides defaults; explicit flags win.
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--config") s.config_path = argv[i + 1];
  try {
    apply_config_file(s);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }

  CLI::App app{"Idiom cloze pipeline: corpus preprocessing, transformer "
               "training and candidate-ranking evaluation"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  app.add_option("--config", s.config_path, "JSON config file");
  app.add_option("--seed", s.seed, "global random seed");
  app.add_option("--out", s.out_dir, "output directory");

  auto* synth = app.add_subcommand("synth", "generate a synthetic BIO corpus");
  synth->fallthrough();
  synth->add_option("--idioms", s.synth_idioms)->check(CLI::Range(2, 1 << 20));
  synth->add_option("--instances", s.synth_instances);
  synth->add_option("--templates", s.synth_templates);

  auto* pre = app.add_subcommand("preprocess", "corpus -> instances + vocab");
  pre->fallthrough();
  pre->add_option("--corpus", s.corpus_path, "BIO corpus file")->required();
  pre->add_option("--min-freq", s.min_freq);
  pre->add_option("--train-frac", s.train_frac);
  pre->add_option("--val-frac", s.val_frac);
  pre->add_option("--test-frac", s.test_frac);

  auto* tr = app.add_subcommand("train", "train encoder and heads");
  tr->fallthrough();
  tr->add_option("--data", s.data_dir, "preprocessed directory")->required();
  tr->add_option("--resume", s.resume_path, "checkpoint to continue from");
  tr->add_option("--epochs", s.epochs);
  tr->add_option("--batch-size", s.batch_size);
  tr->add_option("--lr", s.learning_rate);
  tr->add_option("--head", s.head, "char|embed|pooling|dual");
  tr->add_option("--clip-norm", s.clip_norm);
  tr->add_option("--optimizer", s.optimizer, "adam|sgd");
  tr->add_option("--d-model", s.enc.d_model);
  tr->add_option("--layers", s.enc.n_layers);
  tr->add_option("--heads", s.enc.n_heads);
  tr->add_option("--d-ff", s.enc.d_ff);
  tr->add_option("--max-len", s.enc.max_len);
  tr->add_option("--lambda-alpha", s.lambda_alpha);
  tr->add_option("--lambda-beta", s.lambda_beta);
  tr->add_option("--lambda-floor", s.lambda_floor);
  tr->add_option("--num-candidates", s.num_candidates,
                 "distractor sampling; 0 keeps the full inventory");

  auto* ev = app.add_subcommand("eval", "accuracy table + predictions");
  ev->fallthrough();
  ev->add_option("--checkpoint", s.checkpoint_path)->required();
  ev->add_option("--data", s.data_dir)->required();
  ev->add_option("--split", s.split, "train|validation|test");
  ev->add_option("--head", s.head, "char|embed|pooling|dual|all");
  ev->add_option("--num-candidates", s.num_candidates);
  ev->add_option("--lambda-alpha", s.lambda_alpha);
  ev->add_option("--lambda-beta", s.lambda_beta);
  ev->add_option("--lambda-floor", s.lambda_floor);

  auto* pr = app.add_subcommand("predict", "predictions CSV only");
  pr->fallthrough();
  pr->add_option("--checkpoint", s.checkpoint_path)->required();
  pr->add_option("--data", s.data_dir)->required();
  pr->add_option("--split", s.split);
  pr->add_option("--head", s.head);
  pr->add_option("--num-candidates", s.num_candidates);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(s);
    if (pre->parsed()) return cmd_preprocess(s);
    if (tr->parsed()) return cmd_train(s);
    if (ev->parsed()) return cmd_eval(s, false);
    if (pr->parsed()) return cmd_eval(s, true);
  } catch (const cloze::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == cloze::ErrorKind::DivergenceDetected ? kExitDivergence
                                                            : kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
