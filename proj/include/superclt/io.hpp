#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace superclt {

// Shortest round-trip decimal rendering of a double ("%.17g"-equivalent
// precision); all numeric file output goes through this so that reruns are
// byte-identical.
std::string format_double(double x);

std::uint64_t fnv1a64(std::string_view bytes);
std::string fnv1a64_hex(std::string_view bytes);

std::string read_text_file(const std::string& path);

// Writes `content` to `path`. If the file already exists with different
// content, throws instead of overwriting (results from a different run are
// never silently clobbered); identical content is left in place. Set
// `allow_overwrite` for files that legitimately change between runs.
void write_guarded(const std::string& path, const std::string& content,
                   bool allow_overwrite = false);

// Version stamp embedded in every machine-readable output.
inline constexpr int kOutputSchemaVersion = 1;
inline constexpr const char* kArtifactVersion = "1.0.0";

struct RunManifest {
  std::string scenario_hash;
  std::string subcommand;
  std::vector<std::pair<std::string, std::string>> flags;
  std::uint64_t master_seed = 0;
  std::string artifact_version = kArtifactVersion;
  int schema_version = kOutputSchemaVersion;
  std::string started_at;   // ISO-8601 UTC
  std::string finished_at;
  std::vector<std::string> outputs;

  std::string to_json() const;
};

std::string iso8601_utc_now();

}  // namespace superclt
