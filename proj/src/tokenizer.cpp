#include "cloze/tokenizer.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <ostream>

#include "cloze/corpus.hpp"

namespace cloze {

namespace {
const char* kReservedNames[Vocabulary::kReserved] = {"[PAD]", "[UNK]", "[CLS]",
                                                     "[SEP]", "[MASK]"};
}

Vocabulary::Vocabulary() {
  for (const char* name : kReservedNames) add(name);
}

void Vocabulary::add(const std::string& token) {
  token_to_id_.emplace(token, static_cast<int>(id_to_token_.size()));
  id_to_token_.push_back(token);
}

int Vocabulary::token_id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size())
    throw Error(ErrorKind::IdOutOfRange,
                "token id " + std::to_string(id) + " outside vocabulary of " +
                    std::to_string(size()));
  return id_to_token_[id];
}

std::uint64_t Vocabulary::fingerprint() const {
  std::uint64_t h = fnv1a("vocab-v1");
  for (const auto& t : id_to_token_) {
    h = fnv1a(t, h);
    h = fnv1a("\n", h);
  }
  return h;
}

void Vocabulary::save(std::ostream& os) const {
  os << "#cloze-vocab v1 min_freq=" << min_freq_ << "\n";
  for (const auto& t : id_to_token_) os << t << "\n";
}

Vocabulary Vocabulary::load(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line.rfind("#cloze-vocab v1", 0) != 0)
    throw Error(ErrorKind::BadFile, "not a vocabulary file");
  Vocabulary v;
  auto pos = line.find("min_freq=");
  if (pos != std::string::npos) v.min_freq_ = std::stoi(line.substr(pos + 9));
  int id = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (id < kReserved) {
      if (line != kReservedNames[id])
        throw Error(ErrorKind::BadFile, "reserved token mismatch: " + line);
    } else {
      v.add(line);
    }
    ++id;
  }
  return v;
}

Vocabulary build_vocab(const std::vector<TaggedSentence>& sentences,
                       int min_freq) {
  std::map<std::string, long> freq;
  for (const auto& s : sentences)
    for (const auto& t : s.tokens) ++freq[t];

  // Frequency descending, then lexicographic: build is deterministic.
  std::vector<std::pair<std::string, long>> order(freq.begin(), freq.end());
  std::stable_sort(order.begin(), order.end(),
                   [](const auto& a, const auto& b) {
                     if (a.second != b.second) return a.second > b.second;
                     return a.first < b.first;
                   });

  Vocabulary v;
  v.min_freq_ = min_freq;
  for (const auto& [token, count] : order)
    if (count >= min_freq) v.add(token);
  return v;
}

std::vector<int> encode(const std::vector<std::string>& tokens,
                        const Vocabulary& vocab, bool add_frame) {
  std::vector<int> ids;
  ids.reserve(tokens.size() + (add_frame ? 2 : 0));
  if (add_frame) ids.push_back(Vocabulary::kCls);
  for (const auto& t : tokens) ids.push_back(vocab.token_id(t));
  if (add_frame) ids.push_back(Vocabulary::kSep);
  return ids;
}

std::vector<std::string> decode(const std::vector<int>& ids,
                                const Vocabulary& vocab) {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(vocab.token(id));
  return out;
}

}  // namespace cloze
