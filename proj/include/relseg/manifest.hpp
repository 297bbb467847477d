#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

namespace relseg {

inline constexpr const char* kToolVersion = "0.1.0";

struct RunManifest {
  std::string command_line;
  std::uint64_t config_digest = 0;  // FNV-1a of the config file bytes
  std::uint64_t seed = 0;
  std::string output_dir;
  std::string started;
  std::string finished;

  // writes run_manifest.txt atomically (temp file + rename)
  void write(const std::filesystem::path& out_dir) const;
};

std::uint64_t fnv1a64(const std::string& bytes);
std::uint64_t digest_file(const std::filesystem::path& path);
std::string timestamp_utc();

}  // namespace relseg
