#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace cloze {

enum class ErrorKind {
  UnknownTag,
  LengthMismatch,
  NoIdiom,
  MultipleIdioms,
  UnknownIdiom,
  EmptyInventory,
  BadFractions,
  IdOutOfRange,
  ShapeMismatch,
  SequenceTooLong,
  IndexOutOfRange,
  NoValidPositions,
  CandidateSetMismatch,
  DivergenceDetected,
  EmptyEvalSet,
  FingerprintMismatch,
  BadFile,
  BadConfig,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

// Softmax with max-subtraction. Input logits, output probabilities.
inline Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp();
  return e / e.sum();
}

// FNV-1a over a byte range; used for file fingerprints and checksums. The
// byte and string forms have distinct names so a pointer argument can never
// slide silently between them.
inline std::uint64_t fnv1a_bytes(const void* data, std::size_t n,
                                 std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a(std::string_view s,
                           std::uint64_t h = 0xcbf29ce484222325ull) {
  return fnv1a_bytes(s.data(), s.size(), h);
}

}  // namespace cloze
