#include "imgconf/raster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace imgconf {

Raster::Raster(int h, int w, int c, double fill)
    : height(h), width(w), channels(c),
      values(static_cast<std::size_t>(h) * static_cast<std::size_t>(w) * static_cast<std::size_t>(c), fill) {
  if (h <= 0 || w <= 0 || c <= 0) {
    throw std::invalid_argument("Raster dimensions must be positive");
  }
}

void Raster::validate() const {
  if (height <= 0 || width <= 0 || channels <= 0) {
    throw std::invalid_argument("Raster dimensions must be positive");
  }
  const std::size_t expected =
      static_cast<std::size_t>(height) * static_cast<std::size_t>(width) * static_cast<std::size_t>(channels);
  if (values.size() != expected) {
    throw std::invalid_argument("Raster buffer size does not match dimensions");
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw std::invalid_argument("Raster contains non-finite values");
  }
}

Kernel::Kernel(int z, double fill)
    : size(z), weights(static_cast<std::size_t>(z) * static_cast<std::size_t>(z), fill) {
  if (z <= 0) throw std::invalid_argument("Kernel size must be >= 1");
}

void Kernel::validate() const {
  if (size <= 0) throw std::invalid_argument("Kernel size must be >= 1");
  if (weights.size() != static_cast<std::size_t>(size) * static_cast<std::size_t>(size)) {
    throw std::invalid_argument("Kernel buffer size does not match size");
  }
  for (double w : weights) {
    if (!std::isfinite(w)) throw std::invalid_argument("Kernel contains non-finite weights");
  }
}

Neighborhood kernel_neighborhood(int image_height, int image_width, int z, int h, int w) {
  if (z < 1) throw std::invalid_argument("kernel_neighborhood: z must be >= 1");
  if (image_height <= 0 || image_width <= 0) {
    throw std::invalid_argument("kernel_neighborhood: image dimensions must be positive");
  }
  const int off = z / 2;
  Neighborhood nb;
  nb.center_h = h;
  nb.center_w = w;
  for (int a = 0; a < z; ++a) {
    const int hh = h + a - off;
    if (hh < 0 || hh >= image_height) continue;
    for (int b = 0; b < z; ++b) {
      const int ww = w + b - off;
      if (ww < 0 || ww >= image_width) continue;
      nb.indices.emplace_back(hh, ww);
    }
  }
  return nb;
}

Kernel make_diagonal_kernel(int z) {
  if (z < 1) throw std::invalid_argument("make_diagonal_kernel: z must be >= 1");
  Kernel k(z, 0.0);
  for (int i = 0; i < z; ++i) k.at(i, i) = 1.0;
  return k;
}

Grid convolve2d(const Raster& raster, const Kernel& kernel, ChannelReduce reduce) {
  raster.validate();
  kernel.validate();
  (void)reduce;  // mean is the only reduction
  if (kernel.size > 2 * std::min(raster.height, raster.width)) {
    throw std::invalid_argument("convolve2d: kernel wider than twice the smaller image side");
  }

  const int H = raster.height, W = raster.width, C = raster.channels;
  const int z = kernel.size, off = z / 2;

  // Channel-mean plane first; the kernel is 2D.
  Grid plane(H, W);
  if (C == 1) {
    std::copy(raster.values.begin(), raster.values.end(), plane.values.begin());
  } else {
    const double inv_c = 1.0 / C;
    for (int h = 0; h < H; ++h) {
      for (int w = 0; w < W; ++w) {
        double s = 0.0;
        for (int c = 0; c < C; ++c) s += raster.at(h, w, c);
        plane.at(h, w) = s * inv_c;
      }
    }
  }

  Grid out(H, W);
  for (int h = 0; h < H; ++h) {
    const int a_lo = std::max(0, off - h);
    const int a_hi = std::min(z, H + off - h);
    for (int w = 0; w < W; ++w) {
      const int b_lo = std::max(0, off - w);
      const int b_hi = std::min(z, W + off - w);
      double acc = 0.0;
      for (int a = a_lo; a < a_hi; ++a) {
        const double* prow = &plane.values[plane.idx(h + a - off, 0)];
        const double* krow = &kernel.weights[kernel.idx(a, 0)];
        for (int b = b_lo; b < b_hi; ++b) {
          acc += krow[b] * prow[w + b - off];
        }
      }
      out.at(h, w) = acc;
    }
  }
  return out;
}

double max_pool_scene(const Grid& field, const std::vector<std::pair<int, int>>& region) {
  if (region.empty()) throw std::invalid_argument("max_pool_scene: empty region");
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& [h, w] : region) {
    if (h < 0 || h >= field.height || w < 0 || w >= field.width) {
      throw std::invalid_argument("max_pool_scene: region index out of bounds");
    }
    best = std::max(best, field.at(h, w));
  }
  return best;
}

double max_pool_scene(const Grid& field) {
  if (field.values.empty()) throw std::invalid_argument("max_pool_scene: empty field");
  return *std::max_element(field.values.begin(), field.values.end());
}

std::vector<double> global_normalize(const std::vector<double>& values) {
  const std::size_t n = values.size();
  if (n < 2) throw std::invalid_argument("global_normalize: need at least 2 values");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  var /= static_cast<double>(n);
  if (var <= 0.0) throw DegenerateInputError("global_normalize: zero variance");
  const double inv_sd = 1.0 / std::sqrt(var);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = (values[i] - mean) * inv_sd;
  return out;
}

}  // namespace imgconf
