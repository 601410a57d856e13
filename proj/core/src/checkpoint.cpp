#include "xlight/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace xlight {

namespace {

constexpr char kMagic[4] = {'X', 'L', 'T', '1'};

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

void write_f64(std::ostream& os, const double* p, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    std::uint64_t bits;
    std::memcpy(&bits, p + i, 8);
    unsigned char b[8];
    for (int k = 0; k < 8; ++k)
      b[k] = static_cast<unsigned char>(bits >> (8 * k));
    os.write(reinterpret_cast<const char*>(b), 8);
  }
}

void read_f64(std::istream& is, double* p, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t bits = 0;
    for (int k = 0; k < 8; ++k)
      bits |= static_cast<std::uint64_t>(b[k]) << (8 * k);
    std::memcpy(p + i, &bits, 8);
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const nn::ParamStore& params) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open '" + path + "' for writing");
  os.write(kMagic, 4);
  write_u32(os, static_cast<std::uint32_t>(params.items().size()));
  for (const auto& [name, t] : params.items()) {
    write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<std::uint32_t>(t.rows()));
    write_u32(os, static_cast<std::uint32_t>(t.cols()));
    write_f64(os, t.data(), t.values().size());
  }
  if (!os) throw CheckpointError("write failed for '" + path + "'");
}

void load_checkpoint(const std::string& path, nn::ParamStore& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw CheckpointError("'" + path + "' is not a parameter checkpoint");
  std::uint32_t count = read_u32(is);
  std::uint32_t seen = 0;
  for (std::uint32_t r = 0; r < count; ++r) {
    std::uint32_t nlen = read_u32(is);
    std::string name(nlen, '\0');
    is.read(name.data(), nlen);
    std::uint32_t rows = read_u32(is);
    std::uint32_t cols = read_u32(is);
    if (!is) throw CheckpointError("truncated checkpoint '" + path + "'");
    if (!params.contains(name))
      throw CheckpointError("checkpoint parameter '" + name +
                            "' unknown to this model");
    auto& t = params.get(name);
    if (t.rows() != static_cast<int>(rows) || t.cols() != static_cast<int>(cols))
      throw CheckpointError("shape mismatch for '" + name + "'");
    read_f64(is, t.data(), t.values().size());
    if (!is) throw CheckpointError("truncated checkpoint '" + path + "'");
    seen += 1;
  }
  if (seen != params.items().size())
    throw CheckpointError("checkpoint has " + std::to_string(seen) +
                          " parameters, model expects " +
                          std::to_string(params.items().size()));
}

}  // namespace xlight
