#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cloze/common.hpp"
#include "cloze/tokenizer.hpp"

namespace cloze {

enum class Tag { O, BIdiom, IIdiom };

struct TaggedSentence {
  std::vector<std::string> tokens;
  std::vector<Tag> tags;  // same length as tokens
};

struct IdiomSpan {
  std::vector<std::string> tokens;
  std::size_t start = 0;  // inclusive token indices
  std::size_t end = 0;
};

struct IdiomCandidate {
  int id = -1;
  std::vector<std::string> surface;
  std::vector<int> padded_ids;  // length P after pad_candidates
};

struct ClozeInstance {
  std::vector<int> passage_ids;  // CLS ... MASK ... SEP
  int mask_pos = -1;
  int gold = -1;
  std::vector<int> candidate_ids;  // candidate subset D, indices into inventory
};

struct DatasetSplits {
  std::vector<ClozeInstance> train;
  std::vector<ClozeInstance> validation;
  std::vector<ClozeInstance> test;
};

// One TaggedSentence per blank-line-separated block; lines are
// "<token>\t<tag>" with tags in {O, B-IDIOM, I-IDIOM}.
// Throws UnknownTag / LengthMismatch naming the offending line.
std::vector<TaggedSentence> parse_bio_corpus(const std::string& text);

// Maximal contiguous run starting at the single B-IDIOM and extending
// through consecutive I-IDIOM tokens. Throws NoIdiom / MultipleIdioms.
IdiomSpan extract_idiom_span(const TaggedSentence& sentence);

// Candidate inventory in first-occurrence order; sentences without exactly
// one span are skipped and counted.
struct InventoryBuild {
  std::vector<IdiomCandidate> inventory;
  int skipped_no_idiom = 0;
  int skipped_multiple = 0;
};
InventoryBuild build_inventory(const std::vector<TaggedSentence>& sentences);

// Passage = CLS + tokens with the whole span collapsed to one MASK + SEP.
// The candidate set defaults to the full inventory. Throws UnknownIdiom.
ClozeInstance make_cloze_instance(const TaggedSentence& sentence,
                                  const std::vector<IdiomCandidate>& inventory,
                                  const Vocabulary& vocab);

// Right-pads every candidate with PAD to the corpus-wide maximum surface
// length P and returns P. Throws EmptyInventory.
int pad_candidates(std::vector<IdiomCandidate>& inventory,
                   const Vocabulary& vocab);

// Deterministic shuffle under seed, then contiguous partition; leftover
// instances go to train. Throws BadFractions.
DatasetSplits split_dataset(const std::vector<ClozeInstance>& instances,
                            double train_frac, double val_frac,
                            double test_frac, std::uint64_t seed);

// Efficiency escape hatch: shrink each instance's candidate set to the gold
// candidate plus k-1 deterministically sampled distractors. The inventory
// size is taken from the current candidate sets.
void subsample_candidates(std::vector<ClozeInstance>& instances, int k,
                          std::uint64_t seed);

std::string surface_key(const std::vector<std::string>& tokens);

}  // namespace cloze
