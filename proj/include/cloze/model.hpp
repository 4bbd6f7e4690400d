#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cloze/corpus.hpp"
#include "cloze/encoder.hpp"
#include "cloze/heads.hpp"

namespace cloze {

// Encoder, both scoring heads and the idiom embedding table, with a flat
// parameter view for the optimizer and the gradient checker.
class Model {
 public:
  Model() = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  void build(const EncoderConfig& cfg, int n_candidates);
  void init(std::uint64_t seed);
  // Row k starts as the mean of candidate k's token input embeddings.
  void init_idiom_embeddings(const std::vector<IdiomCandidate>& inventory);

  void zero_grads();
  std::vector<Eigen::MatrixXd> snapshot() const;
  void restore(const std::vector<Eigen::MatrixXd>& snap);

  const EncoderConfig& config() const { return cfg_; }
  int n_candidates() const { return n_candidates_; }
  std::vector<Param*>& params() { return params_; }
  const std::vector<Param*>& params() const { return params_; }

  EncoderParams enc;
  ClsHeadParams cls;
  MatchHeadParams match;
  Param idiom_emb;  // T x d

  std::uint64_t vocab_fingerprint = 0;
  int trained_epochs = 0;

 private:
  EncoderConfig cfg_;
  int n_candidates_ = 0;
  std::vector<Param*> params_;
};

// Versioned binary container: magic, config, tensor data in registration
// order, trailing FNV-1a checksum. Loading verifies magic and checksum.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

}  // namespace cloze
