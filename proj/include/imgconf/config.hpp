#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace imgconf {

// Flat key = value configuration with [section] headers and # comments.
// Parsing is strict in two stages: the file is tokenized here, consumers
// pull the keys they understand, and finalize() rejects everything left
// over, naming the key and line. Silent typos in DGP parameters would
// corrupt conclusions downstream, so unknown keys are fatal.
class ConfigMap {
 public:
  static ConfigMap parse_file(const std::string& path);
  static ConfigMap parse_string(const std::string& text, const std::string& origin = "<string>");

  bool has(const std::string& key) const;

  // take_* consume the key; missing keys fall back to the default.
  std::string take_string(const std::string& key, const std::string& dflt);
  double take_double(const std::string& key, double dflt);
  long long take_int(const std::string& key, long long dflt);
  std::uint64_t take_uint64(const std::string& key, std::uint64_t dflt);
  bool take_bool(const std::string& key, bool dflt);
  std::vector<double> take_double_list(const std::string& key, const std::vector<double>& dflt);
  std::vector<std::string> take_string_list(const std::string& key,
                                            const std::vector<std::string>& dflt);

  // Throws naming every unconsumed key with its line number.
  void finalize() const;

  // Stable under key reordering: FNV-1a over the sorted canonical
  // "section.key=value" lines.
  std::uint64_t hash() const;

  const std::string& origin() const { return origin_; }

 private:
  struct Entry {
    std::string value;
    int line = 0;
    bool consumed = false;
  };
  std::string origin_;
  std::map<std::string, Entry> entries_;

  const Entry* find(const std::string& key) const;
  Entry* find(const std::string& key);
  [[noreturn]] void fail(const std::string& key, const std::string& what) const;
};

struct RunManifest {
  std::uint64_t config_hash = 0;
  std::uint64_t root_seed = 0;
  std::string version;
  std::string started;   // ISO 8601 UTC
  std::string finished;  // ISO 8601 UTC
  std::vector<std::string> outputs;
};

std::string iso8601_utc_now();
void write_manifest(const std::string& path, const RunManifest& m);
RunManifest read_manifest(const std::string& path);

}  // namespace imgconf
