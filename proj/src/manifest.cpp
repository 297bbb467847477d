#include "relseg/manifest.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "relseg/error.hpp"

namespace relseg {

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::uint64_t digest_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open for digest");
  std::ostringstream buf;
  buf << in.rdbuf();
  return fnv1a64(buf.str());
}

std::string timestamp_utc() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void RunManifest::write(const std::filesystem::path& out_dir) const {
  std::filesystem::create_directories(out_dir);
  const auto tmp = out_dir / "run_manifest.txt.tmp";
  const auto final_path = out_dir / "run_manifest.txt";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError(tmp.string() + ": cannot open");
    char digest[32];
    std::snprintf(digest, sizeof(digest), "%016llx",
                  static_cast<unsigned long long>(config_digest));
    out << "command_line=" << command_line << "\n"
        << "config_digest=" << digest << "\n"
        << "seed=" << seed << "\n"
        << "tool_version=" << kToolVersion << "\n"
        << "output_dir=" << output_dir << "\n"
        << "started=" << started << "\n"
        << "finished=" << finished << "\n";
    if (!out) throw IoError(tmp.string() + ": write failed");
  }
  std::filesystem::rename(tmp, final_path);
}

}  // namespace relseg
