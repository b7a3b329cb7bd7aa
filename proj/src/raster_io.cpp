#include "imgconf/raster_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

#include "imgconf/csv.hpp"

namespace imgconf {

namespace {

std::ifstream open_in(const std::string& path, std::ios_base::openmode mode = std::ios_base::in) {
  std::ifstream in(path, mode);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  return in;
}

std::ofstream open_out(const std::string& path, std::ios_base::openmode mode = std::ios_base::out) {
  std::ofstream out(path, mode);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  return out;
}

}  // namespace

void write_raster_csv(const std::string& path, const Raster& r) {
  r.validate();
  auto out = open_out(path);
  out << "H,W,C\n" << r.height << ',' << r.width << ',' << r.channels << '\n';
  for (int h = 0; h < r.height; ++h) {
    for (int w = 0; w < r.width; ++w) {
      for (int c = 0; c < r.channels; ++c) {
        if (w != 0 || c != 0) out << ',';
        out << format_double(r.at(h, w, c));
      }
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

Raster read_raster_csv(const std::string& path) {
  auto in = open_in(path);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "H,W,C") {
    throw std::runtime_error(path + ": expected 'H,W,C' header");
  }
  if (!std::getline(in, line)) throw std::runtime_error(path + ": missing dimension row");
  auto dims = split_csv_line(line);
  if (dims.size() != 3) throw std::runtime_error(path + ": dimension row needs 3 fields");
  Raster r(static_cast<int>(parse_int(dims[0])), static_cast<int>(parse_int(dims[1])),
           static_cast<int>(parse_int(dims[2])));
  for (int h = 0; h < r.height; ++h) {
    if (!std::getline(in, line)) throw std::runtime_error(path + ": truncated pixel rows");
    auto cells = split_csv_line(line);
    const std::size_t expected = static_cast<std::size_t>(r.width) * r.channels;
    if (cells.size() != expected) {
      throw std::runtime_error(path + ": row " + std::to_string(h) + " has " +
                               std::to_string(cells.size()) + " fields, expected " +
                               std::to_string(expected));
    }
    for (int w = 0; w < r.width; ++w) {
      for (int c = 0; c < r.channels; ++c) {
        r.at(h, w, c) = parse_double(cells[static_cast<std::size_t>(w) * r.channels + c]);
      }
    }
  }
  r.validate();
  return r;
}

void write_raster_pgm(const std::string& path, const Raster& r) {
  r.validate();
  if (r.channels != 1) throw std::invalid_argument("write_raster_pgm: single-channel rasters only");

  double lo = r.values[0], hi = r.values[0];
  bool integral = true;
  for (double v : r.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    if (v != std::floor(v)) integral = false;
  }
  const bool verbatim = integral && lo >= 0.0 && hi <= 65535.0;

  auto out = open_out(path, std::ios_base::out | std::ios_base::binary);
  out << "P5\n";
  int maxval = 65535;
  if (verbatim) {
    if (hi <= 255.0) maxval = 255;
  } else {
    out << "# scale " << format_double(lo) << ' ' << format_double(hi) << '\n';
  }
  out << r.width << ' ' << r.height << '\n' << maxval << '\n';

  const double span = hi - lo;
  for (int h = 0; h < r.height; ++h) {
    for (int w = 0; w < r.width; ++w) {
      double v = r.at(h, w, 0);
      std::uint32_t q;
      if (verbatim) {
        q = static_cast<std::uint32_t>(v);
      } else if (span == 0.0) {
        q = 0;
      } else {
        q = static_cast<std::uint32_t>(std::lround((v - lo) / span * 65535.0));
      }
      if (maxval > 255) {
        unsigned char bytes[2] = {static_cast<unsigned char>(q >> 8),
                                  static_cast<unsigned char>(q & 0xff)};
        out.write(reinterpret_cast<const char*>(bytes), 2);
      } else {
        unsigned char byte = static_cast<unsigned char>(q);
        out.write(reinterpret_cast<const char*>(&byte), 1);
      }
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

Raster read_raster_pgm(const std::string& path) {
  auto in = open_in(path, std::ios_base::in | std::ios_base::binary);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw std::runtime_error(path + ": not a P5 PGM");
  in.get();  // newline after magic

  bool scaled = false;
  double lo = 0.0, hi = 0.0;
  // Header tokens with optional comment lines between them.
  std::vector<std::string> tokens;
  std::string line;
  while (tokens.size() < 3 && std::getline(in, line)) {
    line = trim(line);
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream cs(line.substr(1));
      std::string tag;
      cs >> tag;
      if (tag == "scale") {
        if (!(cs >> lo >> hi)) throw std::runtime_error(path + ": malformed scale comment");
        scaled = true;
      }
      continue;
    }
    std::istringstream ts(line);
    std::string tok;
    while (ts >> tok) tokens.push_back(tok);
  }
  if (tokens.size() < 3) throw std::runtime_error(path + ": truncated PGM header");
  const int width = static_cast<int>(parse_int(tokens[0]));
  const int height = static_cast<int>(parse_int(tokens[1]));
  const int maxval = static_cast<int>(parse_int(tokens[2]));
  if (maxval != 255 && maxval != 65535) {
    throw std::runtime_error(path + ": unsupported maxval " + std::to_string(maxval));
  }

  Raster r(height, width, 1);
  const int bytes_per = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> buf(static_cast<std::size_t>(width) * height * bytes_per);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
    throw std::runtime_error(path + ": truncated PGM data");
  }
  for (int h = 0; h < height; ++h) {
    for (int w = 0; w < width; ++w) {
      const std::size_t o = (static_cast<std::size_t>(h) * width + w) * bytes_per;
      std::uint32_t q = bytes_per == 2
                            ? (static_cast<std::uint32_t>(buf[o]) << 8) | buf[o + 1]
                            : buf[o];
      double v = static_cast<double>(q);
      if (scaled) v = lo + v / 65535.0 * (hi - lo);
      r.at(h, w, 0) = v;
    }
  }
  return r;
}

}  // namespace imgconf
