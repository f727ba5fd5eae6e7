#include "finematch/manifest.hpp"

#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

#include "finematch/version.hpp"

namespace finematch {

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::invalid_argument("cannot open file for digest: '" + path + "'");
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  char buffer[1 << 16];
  while (in) {
    in.read(buffer, sizeof(buffer));
    const std::streamsize got = in.gcount();
    for (std::streamsize i = 0; i < got; ++i) {
      hash ^= static_cast<unsigned char>(buffer[i]);
      hash *= 0x100000001b3ULL;
    }
  }
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << hash;
  return out.str();
}

std::string RunManifest::to_json() const {
  nlohmann::json j;
  j["command"] = command;
  j["version"] = kVersion;
  j["config"] = config;
  j["inputs"] = input_digests;
  j["outputs"] = outputs;
  if (has_seed) j["seed"] = seed;
  j["wall_clock_seconds"] = wall_clock_seconds;
  return j.dump(2);
}

}  // namespace finematch
