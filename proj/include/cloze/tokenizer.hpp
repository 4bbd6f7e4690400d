#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "cloze/common.hpp"

namespace cloze {

struct TaggedSentence;  // corpus.hpp

// Word-level vocabulary with a fixed reserved-id block. PAD is id 0 so
// zero-padding a candidate sequence is literal.
class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kMask = 4;
  static constexpr int kReserved = 5;

  Vocabulary();

  int size() const { return static_cast<int>(id_to_token_.size()); }
  int min_freq() const { return min_freq_; }

  // UNK for tokens outside the vocabulary.
  int token_id(const std::string& token) const;
  const std::string& token(int id) const;  // IdOutOfRange

  // Content hash over the ordered token list; ties instance files and
  // checkpoints to the vocabulary they were produced with.
  std::uint64_t fingerprint() const;

  void save(std::ostream& os) const;
  static Vocabulary load(std::istream& is);

  friend Vocabulary build_vocab(const std::vector<TaggedSentence>& sentences,
                                int min_freq);

 private:
  void add(const std::string& token);

  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
  int min_freq_ = 1;
};

// Every token with frequency >= min_freq gets an id; ordering is frequency
// descending, ties lexicographic, after the reserved block.
Vocabulary build_vocab(const std::vector<TaggedSentence>& sentences,
                       int min_freq);

// Unknown tokens map to UNK. With add_frame the output is CLS + ids + SEP.
std::vector<int> encode(const std::vector<std::string>& tokens,
                        const Vocabulary& vocab, bool add_frame);

std::vector<std::string> decode(const std::vector<int>& ids,
                                const Vocabulary& vocab);

}  // namespace cloze
