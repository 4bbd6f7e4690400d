#include "cloze/model.hpp"

#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace cloze {

namespace {
constexpr char kMagic[8] = {'C', 'L', 'Z', 'C', 'K', 'P', '0', '1'};
}

void Model::build(const EncoderConfig& cfg, int n_candidates) {
  cfg_ = cfg;
  n_candidates_ = n_candidates;
  enc.build(cfg);
  cls.w.resize(1, cfg.d_model, "cls.w");
  cls.b.resize(1, 1, "cls.b");
  match.w.resize(1, cfg.d_model, "match.w");
  match.b.resize(1, 1, "match.b");
  idiom_emb.resize(n_candidates, cfg.d_model, "idiom_emb");

  params_.clear();
  enc.collect(params_);
  params_.push_back(&cls.w);
  params_.push_back(&cls.b);
  params_.push_back(&match.w);
  params_.push_back(&match.b);
  params_.push_back(&idiom_emb);
}

void Model::init(std::uint64_t seed) {
  enc.init(seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_real_distribution<double> dist(-0.05, 0.05);
  for (Param* p : {&cls.w, &match.w, &idiom_emb})
    for (Eigen::Index c = 0; c < p->value.cols(); ++c)
      for (Eigen::Index r = 0; r < p->value.rows(); ++r)
        p->value(r, c) = dist(rng);
}

void Model::init_idiom_embeddings(const std::vector<IdiomCandidate>& inventory) {
  for (const auto& c : inventory) {
    Eigen::RowVectorXd mean = Eigen::RowVectorXd::Zero(cfg_.d_model);
    int n = 0;
    for (int id : c.padded_ids) {
      if (id == Vocabulary::kPad) continue;
      mean += enc.tok_emb.value.row(id);
      ++n;
    }
    if (n > 0) idiom_emb.value.row(c.id) = mean / n;
  }
}

void Model::zero_grads() {
  for (Param* p : params_) p->grad.setZero();
}

std::vector<Eigen::MatrixXd> Model::snapshot() const {
  std::vector<Eigen::MatrixXd> snap;
  snap.reserve(params_.size());
  for (const Param* p : params_) snap.push_back(p->value);
  return snap;
}

void Model::restore(const std::vector<Eigen::MatrixXd>& snap) {
  for (std::size_t i = 0; i < params_.size(); ++i) params_[i]->value = snap[i];
}

namespace {

template <typename T>
void put(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(const std::string& buf, std::size_t& off) {
  if (off + sizeof(T) > buf.size())
    throw Error(ErrorKind::BadFile, "checkpoint truncated");
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace

void save_model(const Model& model, const std::string& path) {
  std::string buf;
  buf.append(kMagic, sizeof(kMagic));
  const auto& cfg = model.config();
  for (int v : {cfg.d_model, cfg.n_layers, cfg.n_heads, cfg.d_ff, cfg.max_len,
                cfg.vocab_size, model.n_candidates(), model.trained_epochs})
    put(buf, static_cast<std::int32_t>(v));
  put(buf, model.vocab_fingerprint);
  put(buf, static_cast<std::int32_t>(model.params().size()));
  for (const Param* p : model.params()) {
    put(buf, static_cast<std::int32_t>(p->value.rows()));
    put(buf, static_cast<std::int32_t>(p->value.cols()));
    buf.append(reinterpret_cast<const char*>(p->value.data()),
               sizeof(double) * p->value.size());
  }
  put(buf, fnv1a_bytes(buf.data(), buf.size()));

  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::BadFile, "cannot write checkpoint: " + path);
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

Model load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::BadFile, "cannot read checkpoint: " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  const std::string buf = ss.str();

  if (buf.size() < sizeof(kMagic) + sizeof(std::uint64_t) ||
      std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
    throw Error(ErrorKind::BadFile, "not a checkpoint file: " + path);
  std::size_t body = buf.size() - sizeof(std::uint64_t);
  std::size_t coff = body;
  if (take<std::uint64_t>(buf, coff) != fnv1a_bytes(buf.data(), body))
    throw Error(ErrorKind::BadFile, "checkpoint checksum mismatch: " + path);

  std::size_t off = sizeof(kMagic);
  EncoderConfig cfg;
  cfg.d_model = take<std::int32_t>(buf, off);
  cfg.n_layers = take<std::int32_t>(buf, off);
  cfg.n_heads = take<std::int32_t>(buf, off);
  cfg.d_ff = take<std::int32_t>(buf, off);
  cfg.max_len = take<std::int32_t>(buf, off);
  cfg.vocab_size = take<std::int32_t>(buf, off);
  const int n_candidates = take<std::int32_t>(buf, off);
  const int epochs = take<std::int32_t>(buf, off);
  const std::uint64_t fp = take<std::uint64_t>(buf, off);

  Model model;
  model.build(cfg, n_candidates);
  model.vocab_fingerprint = fp;
  model.trained_epochs = epochs;

  const int n_tensors = take<std::int32_t>(buf, off);
  if (n_tensors != static_cast<int>(model.params().size()))
    throw Error(ErrorKind::BadFile, "checkpoint tensor count mismatch");
  for (Param* p : model.params()) {
    const int rows = take<std::int32_t>(buf, off);
    const int cols = take<std::int32_t>(buf, off);
    if (rows != p->value.rows() || cols != p->value.cols())
      throw Error(ErrorKind::BadFile,
                  "checkpoint shape mismatch for tensor " + p->name);
    if (off + sizeof(double) * p->value.size() > body)
      throw Error(ErrorKind::BadFile, "checkpoint truncated");
    std::memcpy(p->value.data(), buf.data() + off,
                sizeof(double) * p->value.size());
    off += sizeof(double) * p->value.size();
  }
  return model;
}

}  // namespace cloze
