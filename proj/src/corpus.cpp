#include "cloze/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

namespace cloze {

namespace {

Tag parse_tag(const std::string& s, int line_no) {
  if (s == "O") return Tag::O;
  if (s == "B-IDIOM") return Tag::BIdiom;
  if (s == "I-IDIOM") return Tag::IIdiom;
  throw Error(ErrorKind::UnknownTag,
              "line " + std::to_string(line_no) + ": unknown tag '" + s + "'");
}

}  // namespace

std::string surface_key(const std::vector<std::string>& tokens) {
  std::string key;
  for (const auto& t : tokens) {
    if (!key.empty()) key.push_back(' ');
    key += t;
  }
  return key;
}

std::vector<TaggedSentence> parse_bio_corpus(const std::string& text) {
  std::vector<TaggedSentence> sentences;
  TaggedSentence current;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;

  auto flush = [&] {
    if (!current.tokens.empty()) {
      sentences.push_back(std::move(current));
      current = {};
    }
  };

  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 ||
        line.find('\t', tab + 1) != std::string::npos)
      throw Error(ErrorKind::LengthMismatch,
                  "line " + std::to_string(line_no) +
                      ": expected '<token>\\t<tag>', got '" + line + "'");
    current.tokens.push_back(line.substr(0, tab));
    current.tags.push_back(parse_tag(line.substr(tab + 1), line_no));
  }
  flush();
  return sentences;
}

IdiomSpan extract_idiom_span(const TaggedSentence& sentence) {
  std::size_t begin_count = 0;
  std::size_t start = 0;
  for (std::size_t i = 0; i < sentence.tags.size(); ++i) {
    if (sentence.tags[i] == Tag::BIdiom) {
      ++begin_count;
      start = i;
    }
  }
  if (begin_count == 0)
    throw Error(ErrorKind::NoIdiom, "sentence has no B-IDIOM tag");
  if (begin_count > 1)
    throw Error(ErrorKind::MultipleIdioms,
                "sentence has " + std::to_string(begin_count) + " B-IDIOM tags");

  std::size_t end = start;
  while (end + 1 < sentence.tags.size() &&
         sentence.tags[end + 1] == Tag::IIdiom)
    ++end;

  IdiomSpan span;
  span.start = start;
  span.end = end;
  span.tokens.assign(sentence.tokens.begin() + start,
                     sentence.tokens.begin() + end + 1);
  return span;
}

InventoryBuild build_inventory(const std::vector<TaggedSentence>& sentences) {
  InventoryBuild out;
  std::unordered_map<std::string, int> seen;
  for (const auto& s : sentences) {
    IdiomSpan span;
    try {
      span = extract_idiom_span(s);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::NoIdiom)
        ++out.skipped_no_idiom;
      else
        ++out.skipped_multiple;
      continue;
    }
    const std::string key = surface_key(span.tokens);
    if (seen.emplace(key, static_cast<int>(out.inventory.size())).second) {
      IdiomCandidate c;
      c.id = static_cast<int>(out.inventory.size());
      c.surface = span.tokens;
      out.inventory.push_back(std::move(c));
    }
  }
  return out;
}

ClozeInstance make_cloze_instance(const TaggedSentence& sentence,
                                  const std::vector<IdiomCandidate>& inventory,
                                  const Vocabulary& vocab) {
  const IdiomSpan span = extract_idiom_span(sentence);
  const std::string key = surface_key(span.tokens);

  int gold = -1;
  for (const auto& c : inventory)
    if (surface_key(c.surface) == key) {
      gold = c.id;
      break;
    }
  if (gold < 0)
    throw Error(ErrorKind::UnknownIdiom, "idiom '" + key + "' not in inventory");

  ClozeInstance inst;
  inst.passage_ids.push_back(Vocabulary::kCls);
  for (std::size_t i = 0; i < sentence.tokens.size(); ++i) {
    if (i == span.start) {
      inst.mask_pos = static_cast<int>(inst.passage_ids.size());
      inst.passage_ids.push_back(Vocabulary::kMask);
      i = span.end;  // span collapses to a single MASK
      continue;
    }
    inst.passage_ids.push_back(vocab.token_id(sentence.tokens[i]));
  }
  inst.passage_ids.push_back(Vocabulary::kSep);
  inst.gold = gold;
  inst.candidate_ids.resize(inventory.size());
  std::iota(inst.candidate_ids.begin(), inst.candidate_ids.end(), 0);
  return inst;
}

int pad_candidates(std::vector<IdiomCandidate>& inventory,
                   const Vocabulary& vocab) {
  if (inventory.empty())
    throw Error(ErrorKind::EmptyInventory, "candidate inventory is empty");
  std::size_t pad_len = 0;
  for (const auto& c : inventory)
    pad_len = std::max(pad_len, c.surface.size());
  for (auto& c : inventory) {
    c.padded_ids = encode(c.surface, vocab, /*add_frame=*/false);
    c.padded_ids.resize(pad_len, Vocabulary::kPad);
  }
  return static_cast<int>(pad_len);
}

void subsample_candidates(std::vector<ClozeInstance>& instances, int k,
                          std::uint64_t seed) {
  for (std::size_t idx = 0; idx < instances.size(); ++idx) {
    auto& inst = instances[idx];
    const int t = static_cast<int>(inst.candidate_ids.size());
    if (k < 2 || k >= t) continue;
    std::mt19937_64 rng(seed ^ fnv1a_bytes(&idx, sizeof(idx)));
    std::vector<int> pool = inst.candidate_ids;
    pool.erase(std::remove(pool.begin(), pool.end(), inst.gold), pool.end());
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(k - 1);
    pool.push_back(inst.gold);
    std::sort(pool.begin(), pool.end());
    inst.candidate_ids = std::move(pool);
  }
}

DatasetSplits split_dataset(const std::vector<ClozeInstance>& instances,
                            double train_frac, double val_frac,
                            double test_frac, std::uint64_t seed) {
  if (train_frac < 0 || val_frac < 0 || test_frac < 0 ||
      train_frac + val_frac + test_frac > 1.0 + 1e-12 ||
      train_frac + val_frac + test_frac <= 0)
    throw Error(ErrorKind::BadFractions, "split fractions must be positive and sum to at most 1");

  std::vector<std::size_t> order(instances.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  const auto n = instances.size();
  const auto n_val = static_cast<std::size_t>(std::floor(val_frac * n));
  const auto n_test = static_cast<std::size_t>(std::floor(test_frac * n));
  // Leftover from flooring goes to train.
  const auto n_train = n - n_val - n_test;

  DatasetSplits splits;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& inst = instances[order[i]];
    if (i < n_train)
      splits.train.push_back(inst);
    else if (i < n_train + n_val)
      splits.validation.push_back(inst);
    else
      splits.test.push_back(inst);
  }
  return splits;
}

}  // namespace cloze
