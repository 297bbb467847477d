#include "relseg/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "relseg/error.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

namespace relseg {

namespace {

constexpr char kMagic[4] = {'R', 'S', 'E', 'G'};
constexpr std::uint32_t kVersion = 1;

[[noreturn]] void io_fail(const std::filesystem::path& path,
                          const std::string& why) {
  throw IoError(path.string() + ": " + why);
}

template <typename T>
void write_raw(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in, const std::filesystem::path& path) {
  T value;
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (in.gcount() != sizeof(T)) io_fail(path, "truncated checkpoint");
  return value;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const UNet& net) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) io_fail(path, "cannot open for writing");

  out.write(kMagic, 4);
  write_raw(out, kVersion);

  const std::string config_text = net.config().to_text();
  write_raw(out, static_cast<std::uint32_t>(config_text.size()));
  out.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));

  const auto params = net.named_parameters();
  write_raw(out, static_cast<std::uint64_t>(params.size()));
  for (const auto& [name, tensor] : params) {
    write_raw(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_raw(out, static_cast<std::uint32_t>(tensor.rank()));
    for (int d : tensor.shape()) {
      write_raw(out, static_cast<std::uint32_t>(d));
    }
  }
  for (const auto& [name, tensor] : params) {
    const auto data = tensor.data();
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(double)));
  }
  if (!out) io_fail(path, "write failed");
}

UNet load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_fail(path, "cannot open for reading");

  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
    io_fail(path, "not an RSEG checkpoint");
  }
  const auto version = read_raw<std::uint32_t>(in, path);
  if (version != kVersion) {
    io_fail(path, "unsupported checkpoint version " + std::to_string(version));
  }

  const auto config_len = read_raw<std::uint32_t>(in, path);
  std::string config_text(config_len, '\0');
  in.read(config_text.data(), config_len);
  if (in.gcount() != static_cast<std::streamsize>(config_len)) {
    io_fail(path, "truncated config block");
  }
  const ModelConfig config = ModelConfig::from_text(config_text);

  // seed is irrelevant: every value is overwritten below
  UNet net(config, 0);
  auto params = net.named_parameters();

  const auto tensor_count = read_raw<std::uint64_t>(in, path);
  if (tensor_count != params.size()) {
    io_fail(path, "checkpoint holds " + std::to_string(tensor_count) +
                      " tensors, model expects " + std::to_string(params.size()));
  }
  for (auto& [name, tensor] : params) {
    const auto name_len = read_raw<std::uint32_t>(in, path);
    std::string stored_name(name_len, '\0');
    in.read(stored_name.data(), name_len);
    if (in.gcount() != static_cast<std::streamsize>(name_len)) {
      io_fail(path, "truncated manifest");
    }
    if (stored_name != name) {
      io_fail(path, "manifest tensor '" + stored_name + "' does not match '" +
                        name + "'");
    }
    const auto rank = read_raw<std::uint32_t>(in, path);
    if (rank != static_cast<std::uint32_t>(tensor.rank())) {
      io_fail(path, "rank mismatch for '" + name + "'");
    }
    for (int i = 0; i < tensor.rank(); ++i) {
      const auto dim = read_raw<std::uint32_t>(in, path);
      if (dim != static_cast<std::uint32_t>(tensor.dim(i))) {
        io_fail(path, "dimension mismatch for '" + name + "'");
      }
    }
  }
  for (auto& [name, tensor] : params) {
    auto data = tensor.data();
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (in.gcount() !=
        static_cast<std::streamsize>(data.size() * sizeof(double))) {
      io_fail(path, "truncated payload at '" + name + "'");
    }
  }
  return net;
}

}  // namespace relseg
