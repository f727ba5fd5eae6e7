#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace finematch {

/// FNV-1a 64-bit digest of a file's bytes, as 16 hex characters.
std::string file_digest(const std::string& path);

/// Record of one CLI invocation: command, resolved configuration, input
/// digests, outputs, seed, wall-clock.
struct RunManifest {
  std::string command;
  std::map<std::string, std::string> config;
  std::map<std::string, std::string> input_digests;  // path -> digest
  std::vector<std::string> outputs;
  std::uint64_t seed = 0;
  bool has_seed = false;
  double wall_clock_seconds = 0.0;

  std::string to_json() const;
};

}  // namespace finematch
