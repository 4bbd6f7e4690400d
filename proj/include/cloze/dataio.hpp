#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cloze/corpus.hpp"
#include "cloze/tokenizer.hpp"

namespace cloze {

// Instance files: a header line recording T, N, P and the tokenizer
// fingerprint, then one record per line with space-separated passage ids,
// mask position and gold index, tab-separated.
struct InstanceFileHeader {
  int T = 0;
  int N = 0;
  int P = 0;
  std::uint64_t fingerprint = 0;
};

void save_instances(const std::string& path,
                    const std::vector<ClozeInstance>& instances, int T, int P,
                    std::uint64_t fingerprint);

struct LoadedInstances {
  InstanceFileHeader header;
  std::vector<ClozeInstance> instances;  // candidate set = full inventory
};
LoadedInstances load_instances(const std::string& path);

void save_inventory(const std::string& path,
                    const std::vector<IdiomCandidate>& inventory, int P);
std::vector<IdiomCandidate> load_inventory(const std::string& path);

void save_vocabulary(const std::string& path, const Vocabulary& vocab);
Vocabulary load_vocabulary(const std::string& path);

}  // namespace cloze
