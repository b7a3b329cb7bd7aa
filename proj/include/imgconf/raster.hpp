#pragma once

#include <stdexcept>
#include <utility>
#include <vector>

namespace imgconf {

// Structurally valid input that is statistically unusable (e.g. zero
// variance where standardization is required).
class DegenerateInputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// H x W single-band field, row-major.
struct Grid {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  Grid() = default;
  Grid(int h, int w, double fill = 0.0)
      : height(h), width(w), values(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill) {}

  std::size_t idx(int h, int w) const { return static_cast<std::size_t>(h) * width + w; }
  double& at(int h, int w) { return values[idx(h, w)]; }
  double at(int h, int w) const { return values[idx(h, w)]; }
};

// One scene's image: H x W x C real reflectance values, channel-minor
// row-major layout.
struct Raster {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<double> values;

  Raster() = default;
  Raster(int h, int w, int c, double fill = 0.0);

  std::size_t idx(int h, int w, int c) const {
    return (static_cast<std::size_t>(h) * width + w) * channels + c;
  }
  double& at(int h, int w, int c) { return values[idx(h, w, c)]; }
  double at(int h, int w, int c) const { return values[idx(h, w, c)]; }

  // Positive dimensions, buffer of exactly height*width*channels entries,
  // all finite. Throws std::invalid_argument otherwise.
  void validate() const;
};

// z x z filter weights, row-major.
struct Kernel {
  int size = 0;
  std::vector<double> weights;

  Kernel() = default;
  explicit Kernel(int z, double fill = 0.0);

  std::size_t idx(int a, int b) const { return static_cast<std::size_t>(a) * size + b; }
  double& at(int a, int b) { return weights[idx(a, b)]; }
  double at(int a, int b) const { return weights[idx(a, b)]; }
  void validate() const;
};

enum class ChannelReduce { mean };

// Tap positions of a z x z kernel centred at (h, w): offsets in
// [-floor(z/2), z-1-floor(z/2)] along each axis, clipped to the image
// bounds (zero padding contributes no tap). For odd z this is the symmetric
// floor(z/2)-neighbourhood.
struct Neighborhood {
  int center_h = 0;
  int center_w = 0;
  std::vector<std::pair<int, int>> indices;
};

Neighborhood kernel_neighborhood(int image_height, int image_width, int z, int h, int w);

// z x z kernel with ones on the main diagonal. Weights are left unscaled;
// output moments are matched across widths by standardizing the convolved
// field over the whole batch downstream (see gen_confounder_pixel).
Kernel make_diagonal_kernel(int z);

// Zero-padded, same-size 2D convolution. Multi-channel input is reduced to
// one band by the channel mean before the kernel is applied.
// out(h, w) = sum_{a,b} k(a, b) * in(h + a - floor(z/2), w + b - floor(z/2)).
Grid convolve2d(const Raster& raster, const Kernel& kernel,
                ChannelReduce reduce = ChannelReduce::mean);

// Maximum of the field over a region of (h, w) indices; ties need no
// breaking since only the value is returned.
double max_pool_scene(const Grid& field, const std::vector<std::pair<int, int>>& region);
double max_pool_scene(const Grid& field);  // region = the whole field

// Standardize to mean 0 and variance 1, population convention (divide by n).
// Requires length >= 2; throws DegenerateInputError on zero variance.
std::vector<double> global_normalize(const std::vector<double>& values);

}  // namespace imgconf
