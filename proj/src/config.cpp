#include "imgconf/config.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "imgconf/csv.hpp"

namespace imgconf {

ConfigMap ConfigMap::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_string(buf.str(), path);
}

ConfigMap ConfigMap::parse_string(const std::string& text, const std::string& origin) {
  ConfigMap cfg;
  cfg.origin_ = origin;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#' || s[0] == ';') continue;
    if (s.front() == '[') {
      if (s.back() != ']') {
        throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": unterminated section header");
      }
      section = trim(s.substr(1, s.size() - 2));
      if (section.empty()) {
        throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": empty section name");
      }
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": expected key = value");
    }
    std::string key = trim(s.substr(0, eq));
    if (key.empty()) {
      throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": empty key");
    }
    if (!section.empty()) key = section + "." + key;
    if (cfg.entries_.count(key)) {
      throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key + "'");
    }
    cfg.entries_[key] = Entry{trim(s.substr(eq + 1)), lineno, false};
  }
  return cfg;
}

bool ConfigMap::has(const std::string& key) const { return entries_.count(key) != 0; }

const ConfigMap::Entry* ConfigMap::find(const std::string& key) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

ConfigMap::Entry* ConfigMap::find(const std::string& key) {
  auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

void ConfigMap::fail(const std::string& key, const std::string& what) const {
  const Entry* e = find(key);
  const std::string at = e ? ":" + std::to_string(e->line) : "";
  throw std::runtime_error(origin_ + at + ": key '" + key + "': " + what);
}

std::string ConfigMap::take_string(const std::string& key, const std::string& dflt) {
  Entry* e = find(key);
  if (!e) return dflt;
  e->consumed = true;
  return e->value;
}

double ConfigMap::take_double(const std::string& key, double dflt) {
  Entry* e = find(key);
  if (!e) return dflt;
  e->consumed = true;
  try {
    return parse_double(e->value);
  } catch (const std::exception& ex) {
    fail(key, ex.what());
  }
}

long long ConfigMap::take_int(const std::string& key, long long dflt) {
  Entry* e = find(key);
  if (!e) return dflt;
  e->consumed = true;
  try {
    return parse_int(e->value);
  } catch (const std::exception& ex) {
    fail(key, ex.what());
  }
}

std::uint64_t ConfigMap::take_uint64(const std::string& key, std::uint64_t dflt) {
  Entry* e = find(key);
  if (!e) return dflt;
  e->consumed = true;
  try {
    return parse_uint64(e->value);
  } catch (const std::exception& ex) {
    fail(key, ex.what());
  }
}

bool ConfigMap::take_bool(const std::string& key, bool dflt) {
  Entry* e = find(key);
  if (!e) return dflt;
  e->consumed = true;
  const std::string v = e->value;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  fail(key, "expected a boolean, got '" + v + "'");
}

std::vector<double> ConfigMap::take_double_list(const std::string& key,
                                                const std::vector<double>& dflt) {
  Entry* e = find(key);
  if (!e) return dflt;
  e->consumed = true;
  std::vector<double> out;
  try {
    for (const auto& tok : split_csv_line(e->value)) out.push_back(parse_double(tok));
  } catch (const std::exception& ex) {
    fail(key, ex.what());
  }
  return out;
}

std::vector<std::string> ConfigMap::take_string_list(const std::string& key,
                                                     const std::vector<std::string>& dflt) {
  Entry* e = find(key);
  if (!e) return dflt;
  e->consumed = true;
  std::vector<std::string> out;
  for (const auto& tok : split_csv_line(e->value)) out.push_back(trim(tok));
  return out;
}

void ConfigMap::finalize() const {
  for (const auto& [key, entry] : entries_) {
    if (!entry.consumed) {
      throw std::runtime_error(origin_ + ":" + std::to_string(entry.line) +
                               ": unknown config key '" + key + "'");
    }
  }
}

std::uint64_t ConfigMap::hash() const {
  // entries_ is an ordered map, so iteration is already canonical.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& [key, entry] : entries_) {
    mix(key);
    mix("=");
    mix(entry.value);
    mix("\n");
  }
  return h;
}

std::string iso8601_utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_manifest(const std::string& path, const RunManifest& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "config_hash = " << m.config_hash << '\n';
  out << "root_seed = " << m.root_seed << '\n';
  out << "version = " << m.version << '\n';
  out << "started = " << m.started << '\n';
  out << "finished = " << m.finished << '\n';
  for (const auto& o : m.outputs) out << "output = " << o << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

RunManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest: " + path);
  RunManifest m;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "config_hash") m.config_hash = parse_uint64(val);
    else if (key == "root_seed") m.root_seed = parse_uint64(val);
    else if (key == "version") m.version = val;
    else if (key == "started") m.started = val;
    else if (key == "finished") m.finished = val;
    else if (key == "output") m.outputs.push_back(val);
  }
  return m;
}

}  // namespace imgconf
