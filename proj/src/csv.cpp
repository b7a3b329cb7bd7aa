#include "imgconf/csv.hpp"

#include <cstdio>
#include <cstdlib>
#include <stdexcept>

namespace imgconf {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& s) {
  const std::string t = trim(s);
  if (t.empty()) throw std::invalid_argument("empty numeric field");
  char* end = nullptr;
  double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size()) {
    throw std::invalid_argument("malformed number: '" + s + "'");
  }
  return v;
}

long long parse_int(const std::string& s) {
  const std::string t = trim(s);
  if (t.empty()) throw std::invalid_argument("empty integer field");
  char* end = nullptr;
  long long v = std::strtoll(t.c_str(), &end, 10);
  if (end != t.c_str() + t.size()) {
    throw std::invalid_argument("malformed integer: '" + s + "'");
  }
  return v;
}

std::uint64_t parse_uint64(const std::string& s) {
  const std::string t = trim(s);
  if (t.empty()) throw std::invalid_argument("empty integer field");
  char* end = nullptr;
  unsigned long long v = std::strtoull(t.c_str(), &end, 10);
  if (end != t.c_str() + t.size()) {
    throw std::invalid_argument("malformed integer: '" + s + "'");
  }
  return static_cast<std::uint64_t>(v);
}

}  // namespace imgconf
