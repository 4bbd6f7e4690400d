#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace {

const std::string kCli = CLOZE_CLI_PATH;

int run(const std::string& args) {
  const std::string cmd = kCli + " " + args + " >> cli_test_output.log 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::vector<std::string> lines_of(const std::string& path) {
  std::istringstream is(slurp(path));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(is, line)) lines.push_back(line);
  return lines;
}

struct Workspace {
  fs::path root;
  explicit Workspace(const std::string& name) : root(fs::path("cli_ws") / name) {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  std::string operator/(const std::string& sub) const {
    return (root / sub).string();
  }
};

}  // namespace

TEST_CASE("synth is deterministic and produces a valid BIO corpus") {
  Workspace ws("synth");
  CHECK(run("synth --seed 5 --idioms 4 --instances 30 --out " + ws / "a") == 0);
  CHECK(run("synth --seed 5 --idioms 4 --instances 30 --out " + ws / "b") == 0);
  CHECK(slurp(ws / "a/corpus.bio") == slurp(ws / "b/corpus.bio"));
  CHECK(run("synth --seed 6 --idioms 4 --instances 30 --out " + ws / "c") == 0);
  CHECK(slurp(ws / "a/corpus.bio") != slurp(ws / "c/corpus.bio"));
  // Minimal boundary corpus.
  CHECK(run("synth --seed 1 --idioms 2 --instances 10 --out " + ws / "d") == 0);
}

TEST_CASE("preprocess emits stats and is byte-identical under a fixed seed") {
  Workspace ws("pre");
  REQUIRE(run("synth --seed 7 --idioms 4 --instances 50 --out " + ws / "raw") == 0);
  CHECK(run("preprocess --corpus " + ws / "raw/corpus.bio" + " --seed 3 --out " +
            ws / "p1") == 0);
  CHECK(run("preprocess --corpus " + ws / "raw/corpus.bio" + " --seed 3 --out " +
            ws / "p2") == 0);
  for (const char* f :
       {"vocab.txt", "inventory.txt", "train.ids", "validation.ids",
        "test.ids", "stats.txt"}) {
    CHECK(fs::exists(fs::path(ws / "p1") / f));
    CHECK(slurp(ws / ("p1/" + std::string(f))) ==
          slurp(ws / ("p2/" + std::string(f))));
  }
  const std::string stats = slurp(ws / "p1/stats.txt");
  CHECK(stats.find("T=4") != std::string::npos);
  CHECK(stats.find("N=50") != std::string::npos);
}

TEST_CASE("preprocess failure modes exit nonzero") {
  Workspace ws("prefail");
  std::ofstream(ws / "empty.bio").close();
  CHECK(run("preprocess --corpus " + ws / "empty.bio" + " --out " + ws / "out") == 2);
  std::ofstream(ws / "bad.bio") << "word\tB-WRONG\n";
  CHECK(run("preprocess --corpus " + ws / "bad.bio" + " --out " + ws / "out") == 2);
  CHECK(run("preprocess --corpus " + ws / "missing.bio" + " --out " + ws / "out") == 2);
  CHECK(run("") == 1);           // no subcommand
  CHECK(run("preprocess") == 1);  // missing required flag
}

TEST_CASE("train, resume, eval and predict") {
  Workspace ws("train");
  REQUIRE(run("synth --seed 11 --idioms 3 --instances 60 --out " + ws / "raw") == 0);
  REQUIRE(run("preprocess --corpus " + ws / "raw/corpus.bio" +
              " --seed 2 --train-frac 0.6 --val-frac 0.2 --test-frac 0.2 --out " +
              ws / "data") == 0);

  const std::string small =
      " --d-model 16 --layers 1 --heads 2 --d-ff 24 --epochs 3 --batch-size 8";
  CHECK(run("train --data " + ws / "data" + small + " --head embed --seed 4 --out " +
            ws / "run") == 0);
  auto metrics = lines_of(ws / "run/metrics.csv");
  REQUIRE(metrics.size() == 4);  // header + 3 epochs
  CHECK(metrics[0] == "epoch,train_loss,val_accuracy,seconds");
  CHECK(metrics[1].rfind("1,", 0) == 0);

  // Resume continues the epoch numbering.
  CHECK(run("train --data " + ws / "data" + small +
            " --head embed --seed 4 --epochs 2 --resume " + ws /
            "run/checkpoint.bin" + " --out " + ws / "resumed") == 0);
  auto resumed = lines_of(ws / "resumed/metrics.csv");
  REQUIRE(resumed.size() == 3);
  CHECK(resumed[1].rfind("4,", 0) == 0);
  CHECK(resumed[2].rfind("5,", 0) == 0);

  // Dual-mode metrics log the per-epoch lambda.
  CHECK(run("train --data " + ws / "data" + small + " --head dual --seed 4 --out " +
            ws / "dual") == 0);
  CHECK(lines_of(ws / "dual/metrics.csv")[0] ==
        "epoch,train_loss,val_accuracy,seconds,lambda");

  // Eval prints one row per head and writes predictions.
  CHECK(run("eval --checkpoint " + ws / "run/checkpoint.bin" + " --data " +
            ws / "data" + " --split test --head all --out " + ws / "eval") == 0);
  for (const char* head : {"char", "embed", "pooling", "dual"})
    CHECK(fs::exists(fs::path(ws / "eval") /
                     ("predictions_" + std::string(head) + ".csv")));
  auto preds = lines_of(ws / "eval/predictions_embed.csv");
  CHECK(preds[0] == "instance_id,gold,predicted,prob_gold");
  auto test_records = lines_of(ws / "data/test.ids").size() - 1;
  CHECK(preds.size() == test_records + 1);

  // Deterministic eval: rerunning gives identical predictions.
  CHECK(run("eval --checkpoint " + ws / "run/checkpoint.bin" + " --data " +
            ws / "data" + " --split test --head all --out " + ws / "eval2") == 0);
  CHECK(slurp(ws / "eval/predictions_dual.csv") ==
        slurp(ws / "eval2/predictions_dual.csv"));

  CHECK(run("predict --checkpoint " + ws / "run/checkpoint.bin" + " --data " +
            ws / "data" + " --split test --head embed --out " + ws / "pred") == 0);
  CHECK(slurp(ws / "pred/predictions_embed.csv") ==
        slurp(ws / "eval/predictions_embed.csv"));

  // Unknown split is a clean data error.
  CHECK(run("eval --checkpoint " + ws / "run/checkpoint.bin" + " --data " +
            ws / "data" + " --split bogus --out " + ws / "x") == 2);
}

TEST_CASE("fingerprint mismatch between vocabulary and checkpoint is fatal") {
  Workspace ws("fp");
  REQUIRE(run("synth --seed 21 --idioms 3 --instances 40 --out " + ws / "raw1") == 0);
  REQUIRE(run("synth --seed 99 --idioms 5 --instances 40 --out " + ws / "raw2") == 0);
  REQUIRE(run("preprocess --corpus " + ws / "raw1/corpus.bio" + " --out " +
              ws / "d1") == 0);
  REQUIRE(run("preprocess --corpus " + ws / "raw2/corpus.bio" + " --out " +
              ws / "d2") == 0);
  REQUIRE(run("train --data " + ws / "d1" +
              " --d-model 16 --layers 1 --heads 2 --d-ff 24 --epochs 1 --out " +
              ws / "run") == 0);
  CHECK(run("eval --checkpoint " + ws / "run/checkpoint.bin" + " --data " +
            ws / "d2" + " --out " + ws / "e") == 2);

  // Mixing instance files across vocabularies is caught on load.
  fs::copy_file(ws / "d2/train.ids", ws / "d1/train.ids",
                fs::copy_options::overwrite_existing);
  CHECK(run("train --data " + ws / "d1" + " --epochs 1 --out " + ws / "r2") == 2);
}

TEST_CASE("config file supplies defaults and flags win") {
  Workspace ws("cfg");
  std::ofstream(ws / "conf.json")
      << R"({"idioms": 4, "instances": 25, "seed": 13})";
  CHECK(run("--config " + ws / "conf.json" + " synth --out " + ws / "a") == 0);
  CHECK(run("synth --seed 13 --idioms 4 --instances 25 --out " + ws / "b") == 0);
  CHECK(slurp(ws / "a/corpus.bio") == slurp(ws / "b/corpus.bio"));
  // Flag overrides the config value.
  CHECK(run("--config " + ws / "conf.json" + " synth --instances 10 --out " +
            ws / "c") == 0);
  CHECK(slurp(ws / "c/corpus.bio") != slurp(ws / "a/corpus.bio"));
}
