#pragma once

#include <string>

#include "imgconf/raster.hpp"

namespace imgconf {

// Plain-text raster: line 1 is the literal header "H,W,C", line 2 the three
// integers, then one line per pixel row with W*C comma-separated values,
// channels interleaved within each pixel (w-major, channel-minor).
void write_raster_csv(const std::string& path, const Raster& r);
Raster read_raster_csv(const std::string& path);

// Binary PGM (P5), single channel only. Values that are already integers in
// [0, 65535] are written verbatim (maxval 255 when they fit in a byte).
// Anything else is affine-mapped onto 0..65535 and the original span is
// recorded in a "# scale <min> <max>" comment so reading inverts the map.
// Samples wider than one byte are big-endian per the PGM convention.
void write_raster_pgm(const std::string& path, const Raster& r);
Raster read_raster_pgm(const std::string& path);

}  // namespace imgconf
