#include "cloze/synth.hpp"

#include <random>
#include <vector>

#include "cloze/common.hpp"

namespace cloze {

namespace {

const char* kFillers[] = {"the",  "a",   "it",  "was",  "said",
                          "today", "then", "so",  "well", "now"};
constexpr int kNumFillers = 10;

enum Slot { kFiller, kCueA, kCueB, kIdiom };

}  // namespace

std::string generate_synthetic_corpus(const SynthConfig& config) {
  if (config.n_idioms < 2)
    throw Error(ErrorKind::BadConfig, "need at least 2 idioms");
  if (config.n_instances < 1 || config.n_templates < 1)
    throw Error(ErrorKind::BadConfig, "need at least 1 instance and template");

  std::mt19937_64 rng(config.seed);

  // Idiom surfaces alternate between two and three tokens.
  std::vector<std::vector<std::string>> idioms(config.n_idioms);
  for (int i = 0; i < config.n_idioms; ++i) {
    const int len = 2 + i % 2;
    for (int t = 0; t < len; ++t)
      idioms[i].push_back("idiom" + std::to_string(i) + "w" + std::to_string(t));
  }

  // A template is a slot layout: the idiom plus both cue slots placed at
  // distinct positions among six slots, fillers elsewhere.
  std::vector<std::vector<Slot>> templates;
  std::uniform_int_distribution<int> pos_dist(0, 5);
  while (static_cast<int>(templates.size()) < config.n_templates) {
    int a = pos_dist(rng), b = pos_dist(rng), c = pos_dist(rng);
    if (a == b || a == c || b == c) continue;
    std::vector<Slot> t(6, kFiller);
    t[a] = kCueA;
    t[b] = kCueB;
    t[c] = kIdiom;
    templates.push_back(std::move(t));
  }

  std::uniform_int_distribution<int> idiom_dist(0, config.n_idioms - 1);
  std::uniform_int_distribution<int> template_dist(0, config.n_templates - 1);
  std::uniform_int_distribution<int> filler_dist(0, kNumFillers - 1);

  std::string out;
  for (int n = 0; n < config.n_instances; ++n) {
    const int i = idiom_dist(rng);
    const auto& tmpl = templates[template_dist(rng)];
    for (Slot slot : tmpl) {
      switch (slot) {
        case kFiller:
          out += kFillers[filler_dist(rng)];
          out += "\tO\n";
          break;
        case kCueA:
          out += "cue" + std::to_string(i) + "a\tO\n";
          break;
        case kCueB:
          out += "cue" + std::to_string(i) + "b\tO\n";
          break;
        case kIdiom:
          for (std::size_t t = 0; t < idioms[i].size(); ++t) {
            out += idioms[i][t];
            out += t == 0 ? "\tB-IDIOM\n" : "\tI-IDIOM\n";
          }
          break;
      }
    }
    out += "\n";
  }
  return out;
}

}  // namespace cloze
