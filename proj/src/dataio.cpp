#include "cloze/dataio.hpp"

#include <fstream>
#include <numeric>
#include <sstream>

namespace cloze {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw Error(ErrorKind::BadFile, "cannot write " + path);
  return os;
}

std::ifstream open_in(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::BadFile, "cannot read " + path);
  return is;
}

std::uint64_t parse_header_field(const std::string& line,
                                 const std::string& key, int base = 10) {
  const std::string needle = " " + key + "=";
  auto pos = line.find(needle);
  if (pos == std::string::npos)
    throw Error(ErrorKind::BadFile, "missing header field " + key);
  return std::stoull(line.substr(pos + needle.size()), nullptr, base);
}

}  // namespace

void save_instances(const std::string& path,
                    const std::vector<ClozeInstance>& instances, int T, int P,
                    std::uint64_t fingerprint) {
  auto os = open_out(path);
  os << "#cloze-instances v1 T=" << T << " N=" << instances.size()
     << " P=" << P << " fingerprint=" << std::hex << fingerprint << std::dec
     << "\n";
  for (const auto& inst : instances) {
    for (std::size_t i = 0; i < inst.passage_ids.size(); ++i) {
      if (i) os << ' ';
      os << inst.passage_ids[i];
    }
    os << '\t' << inst.mask_pos << '\t' << inst.gold << "\n";
  }
}

LoadedInstances load_instances(const std::string& path) {
  auto is = open_in(path);
  std::string line;
  if (!std::getline(is, line) || line.rfind("#cloze-instances v1", 0) != 0)
    throw Error(ErrorKind::BadFile, "not an instance file: " + path);

  LoadedInstances out;
  out.header.T = static_cast<int>(parse_header_field(line, "T"));
  out.header.N = static_cast<int>(parse_header_field(line, "N"));
  out.header.P = static_cast<int>(parse_header_field(line, "P"));
  out.header.fingerprint = parse_header_field(line, "fingerprint", 16);

  std::vector<int> full(out.header.T);
  std::iota(full.begin(), full.end(), 0);

  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string ids_part, mask_part, gold_part;
    if (!std::getline(ls, ids_part, '\t') ||
        !std::getline(ls, mask_part, '\t') || !std::getline(ls, gold_part))
      throw Error(ErrorKind::BadFile, "malformed instance record in " + path);
    ClozeInstance inst;
    std::istringstream idss(ids_part);
    int id;
    while (idss >> id) inst.passage_ids.push_back(id);
    inst.mask_pos = std::stoi(mask_part);
    inst.gold = std::stoi(gold_part);
    inst.candidate_ids = full;
    out.instances.push_back(std::move(inst));
  }
  if (static_cast<int>(out.instances.size()) != out.header.N)
    throw Error(ErrorKind::BadFile, "instance count disagrees with header in " + path);
  return out;
}

void save_inventory(const std::string& path,
                    const std::vector<IdiomCandidate>& inventory, int P) {
  auto os = open_out(path);
  os << "#cloze-inventory v1 T=" << inventory.size() << " P=" << P << "\n";
  for (const auto& c : inventory) {
    os << surface_key(c.surface) << '\t';
    for (std::size_t i = 0; i < c.padded_ids.size(); ++i) {
      if (i) os << ' ';
      os << c.padded_ids[i];
    }
    os << "\n";
  }
}

std::vector<IdiomCandidate> load_inventory(const std::string& path) {
  auto is = open_in(path);
  std::string line;
  if (!std::getline(is, line) || line.rfind("#cloze-inventory v1", 0) != 0)
    throw Error(ErrorKind::BadFile, "not an inventory file: " + path);

  std::vector<IdiomCandidate> inventory;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos)
      throw Error(ErrorKind::BadFile, "malformed inventory record in " + path);
    IdiomCandidate c;
    c.id = static_cast<int>(inventory.size());
    std::istringstream ts(line.substr(0, tab));
    std::string tok;
    while (ts >> tok) c.surface.push_back(tok);
    std::istringstream idss(line.substr(tab + 1));
    int id;
    while (idss >> id) c.padded_ids.push_back(id);
    inventory.push_back(std::move(c));
  }
  return inventory;
}

void save_vocabulary(const std::string& path, const Vocabulary& vocab) {
  auto os = open_out(path);
  vocab.save(os);
}

Vocabulary load_vocabulary(const std::string& path) {
  auto is = open_in(path);
  return Vocabulary::load(is);
}

}  // namespace cloze
