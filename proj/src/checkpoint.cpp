#include "elden/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace elden::tc {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

namespace {
template <typename T>
void put(std::ofstream& f, const T& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::ifstream& f) {
  T v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!f) throw std::runtime_error("checkpoint: truncated file");
  return v;
}
}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& store) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot open for write: " + path);
  f.write(kCheckpointMagic, sizeof(kCheckpointMagic));
  put<std::uint32_t>(f, kCheckpointVersion);
  put<std::uint64_t>(f, store.count());
  for (const auto& e : store.entries()) {
    put<std::uint32_t>(f, (std::uint32_t)e.name.size());
    f.write(e.name.data(), (std::streamsize)e.name.size());
    put<std::uint32_t>(f, (std::uint32_t)e.value.shape.size());
    for (auto d : e.value.shape) put<std::uint64_t>(f, d);
    f.write(reinterpret_cast<const char*>(e.value.data.data()),
            (std::streamsize)(e.value.data.size() * sizeof(double)));
  }
  if (!f) throw std::runtime_error("checkpoint: write failed: " + path);
}

void load_checkpoint(const std::string& path, ParamStore& store) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("checkpoint: cannot open: " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kCheckpointMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  auto ver = get<std::uint32_t>(f);
  if (ver != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(ver));
  auto count = get<std::uint64_t>(f);
  for (std::uint64_t i = 0; i < count; ++i) {
    auto nlen = get<std::uint32_t>(f);
    std::string name(nlen, '\0');
    f.read(name.data(), nlen);
    auto rank = get<std::uint32_t>(f);
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = (std::size_t)get<std::uint64_t>(f);
    std::size_t n = Tensor::count(shape);
    int id = store.find(name);
    if (id < 0) throw std::runtime_error("checkpoint: unknown parameter '" + name + "'");
    auto& e = store.entry(id);
    if (e.value.shape != shape)
      throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
    f.read(reinterpret_cast<char*>(e.value.data.data()), (std::streamsize)(n * sizeof(double)));
    if (!f) throw std::runtime_error("checkpoint: truncated tensor '" + name + "'");
  }
}

}  // namespace elden::tc
