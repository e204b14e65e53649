#ifndef OULAB_CSV_HPP
#define OULAB_CSV_HPP

#include <cstdint>
#include <cstdio>
#include <ostream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

// Minimal CSV plumbing shared by the exporters: "# key: value" header lines,
// then a column header, then rows. Numbers are written with 17 significant
// digits so files round-trip and compare byte-for-byte across runs.

namespace oulab::csv {

using Metadata = std::vector<std::pair<std::string, std::string>>;

inline std::string number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string number(std::uint64_t v) { return std::to_string(v); }

inline void write_header(std::ostream& os, const Metadata& meta, std::string_view columns) {
  for (const auto& [k, v] : meta) os << "# " << k << ": " << v << '\n';
  os << columns << '\n';
}

/// FNV-1a, 64 bit. Used for content hashes in manifests and metadata.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace oulab::csv

#endif
