#pragma once

#include <cstdint>
#include <string>

namespace cloze {

// Desk-scale corpus generator. Every idiom co-occurs with two
// idiom-specific cue words under a fixed set of sentence templates, so the
// blank is predictable from its context and a correct model can learn the
// task to near-perfect accuracy.
struct SynthConfig {
  int n_idioms = 20;
  int n_instances = 2000;
  int n_templates = 8;
  std::uint64_t seed = 1;
};

// BIO corpus text in the standard format: "<token>\t<tag>" lines,
// blank-line sentence separators.
std::string generate_synthetic_corpus(const SynthConfig& config);

}  // namespace cloze
