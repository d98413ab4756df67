#include "manifest.hpp"

#include <array>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <stdexcept>

#include <json.hpp>
#include <openssl/evp.h>

namespace bridgeforge::cli {

std::string sha256_hex(std::string_view bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int length = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &length, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 computation failed");
  }
  std::string hex;
  hex.reserve(2 * length);
  for (unsigned int i = 0; i < length; ++i) {
    std::array<char, 3> pair{};
    std::snprintf(pair.data(), pair.size(), "%02x", digest[i]);
    hex += pair.data();
  }
  return hex;
}

std::string utc_timestamp(std::chrono::system_clock::time_point when) {
  const auto seconds = std::chrono::floor<std::chrono::seconds>(when);
  const auto millis = std::chrono::duration_cast<std::chrono::milliseconds>(when - seconds).count();
  const std::time_t t = std::chrono::system_clock::to_time_t(seconds);
  std::tm utc{};
  gmtime_r(&t, &utc);
  std::array<char, 32> text{};
  std::strftime(text.data(), text.size(), "%Y-%m-%dT%H:%M:%S", &utc);
  std::array<char, 8> frac{};
  std::snprintf(frac.data(), frac.size(), ".%03dZ", static_cast<int>(millis));
  return std::string(text.data()) + frac.data();
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  nlohmann::ordered_json j;
  j["config_sha256"] = m.config_sha256;
  j["seed"] = m.seed;
  j["command"] = m.command;
  j["started_at"] = m.started_at;
  j["wall_time_ms"] = m.wall_time_ms;
  j["artifact_paths"] = m.artifact_paths;
  j["workers"] = m.workers;
  j["version"] = BRIDGEFORGE_VERSION;
  std::ofstream out(path);
  out << j.dump(2) << '\n';
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
}

}  // namespace bridgeforge::cli
