#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "mad/checkpoint.hpp"

namespace mad {

namespace {

constexpr uint32_t kMagic = 0x4d414443;  // "MADC"
constexpr uint32_t kVersion = 1;

template <typename T>
void write_raw(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T read_raw(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

void write_string(std::ostream& os, const std::string& s) {
  write_raw<uint32_t>(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& is) {
  const uint32_t n = read_raw<uint32_t>(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  if (!is) throw std::runtime_error("checkpoint: truncated string");
  return s;
}

}  // namespace

void save_checkpoint(const std::string& path, const Model& m, const Vocab& vocab) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  write_raw(os, kMagic);
  write_raw(os, kVersion);
  write_raw<uint64_t>(os, vocab.manifest_hash());
  write_raw<uint32_t>(os, static_cast<uint32_t>(m.params().size()));
  for (const auto& p : m.params()) {
    write_string(os, p->name);
    write_raw<uint32_t>(os, static_cast<uint32_t>(p->val.rows()));
    write_raw<uint32_t>(os, static_cast<uint32_t>(p->val.cols()));
    // Eigen default storage is column-major; stream in that order.
    os.write(reinterpret_cast<const char*>(p->val.data()),
             static_cast<std::streamsize>(sizeof(double) * p->val.size()));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

void load_checkpoint(const std::string& path, Model& m, const Vocab& vocab) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  if (read_raw<uint32_t>(is) != kMagic) throw std::runtime_error("checkpoint: bad magic");
  if (read_raw<uint32_t>(is) != kVersion) throw std::runtime_error("checkpoint: bad version");
  if (read_raw<uint64_t>(is) != vocab.manifest_hash())
    throw std::runtime_error("checkpoint: vocab manifest hash mismatch");
  const uint32_t count = read_raw<uint32_t>(is);
  if (count != m.params().size()) throw std::runtime_error("checkpoint: tensor count mismatch");
  for (uint32_t i = 0; i < count; ++i) {
    const std::string name = read_string(is);
    const auto rows = read_raw<uint32_t>(is);
    const auto cols = read_raw<uint32_t>(is);
    nn::Param& p = m.p(name);  // throws on unknown name
    if (p.val.rows() != static_cast<int>(rows) || p.val.cols() != static_cast<int>(cols))
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    is.read(reinterpret_cast<char*>(p.val.data()),
            static_cast<std::streamsize>(sizeof(double) * p.val.size()));
    if (!is) throw std::runtime_error("checkpoint: truncated tensor " + name);
  }
}

}  // namespace mad
