#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "imgconf/raster.hpp"

namespace imgconf {

class Rng;

enum class ConfoundingLevel { pixel, scene };

const char* to_string(ConfoundingLevel level);
ConfoundingLevel confounding_level_from_string(const std::string& s);

struct DgpConfig {
  ConfoundingLevel level = ConfoundingLevel::pixel;
  int z_true = 8;             // width of the confounding kernel
  double beta = 1.0;          // treatment-confounder coefficient
  double gamma = 2.0;         // outcome-confounder coefficient
  double tau = 1.0;           // true treatment effect
  double eps_scale = 0.1;     // sd of the treatment/outcome noise terms
  double sigma_u = 0.0;       // sd of the confounder noise (determinism relaxation)
  int n_scenes = 8;
  int image_height = 32;
  int image_width = 32;
  int image_channels = 1;
  double correlation_length = 4.0;  // smoothing radius of the synthetic imagery
  std::uint64_t seed = 20240601;

  void validate() const;
};

struct UnitLoc {
  int scene = 0;
  int h = -1;  // -1 at scene level
  int w = -1;
};

// One replication's dataset. Unit order is scene-major and, at pixel level,
// row-major within each scene.
struct ConfoundedSample {
  ConfoundingLevel level = ConfoundingLevel::pixel;
  std::vector<Raster> rasters;
  std::vector<Grid> u_pixel;                 // latent, per scene
  std::vector<double> u_scene;               // latent, scene level only
  std::vector<UnitLoc> units;
  std::vector<double> true_propensity;       // realized logistic(beta u + eps_w)
  std::vector<double> marginal_propensity;   // E_eps[logistic(beta u + eps)]
  std::vector<int> treatment;
  std::vector<double> outcome;
  std::vector<std::vector<double>> covariates;  // per-unit X rows; may be empty

  int n_units() const { return static_cast<int>(units.size()); }
  void validate() const;
};

// Numerically stable logistic, clamped to the open unit interval.
double logistic(double x);

// E[logistic(mean + sd * Z)], Z standard normal; midpoint rule over +-8 sd.
double marginal_logistic_propensity(double mean, double sd);

// Spatially correlated synthetic imagery standing in for a satellite
// corpus: white Gaussian noise smoothed with an isotropic disc mean of the
// given radius, then standardized over the whole corpus. Radius 0 leaves
// the noise untouched.
std::vector<Raster> synth_images(const DgpConfig& config, Rng& rng);

// Pixel-level confounder: convolve each scene with the diagonal kernel of
// width z_true, standardize the pooled field over the whole batch, then add
// N(0, sigma_u^2) noise per pixel when sigma_u > 0.
std::vector<Grid> gen_confounder_pixel(const std::vector<Raster>& rasters, int z_true,
                                       double sigma_u, Rng& rng);

// Per pixel: eps_w ~ N(0, eps_scale^2); p = logistic(beta u + eps_w);
// T ~ Bernoulli(p); eps_y ~ N(0, eps_scale^2); Y = gamma u + tau T + eps_y.
// The realized p (noise included) is stored as the oracle propensity.
ConfoundedSample sample_pixel_level(const std::vector<Raster>& rasters,
                                    const std::vector<Grid>& u_pixel,
                                    const DgpConfig& config, Rng& rng);

// Scene level: u_scene = global_normalize of the per-scene max of u_pixel
// (the region is the whole image), then one treatment/outcome draw per
// scene exactly as at pixel level.
ConfoundedSample sample_scene_level(const std::vector<Raster>& rasters,
                                    const std::vector<Grid>& u_pixel,
                                    const DgpConfig& config, Rng& rng);

// Full pipeline under the documented stream split of config.seed
// (stream::images -> stream::confounder -> stream::outcomes).
ConfoundedSample generate_sample(const DgpConfig& config);

// Directory layout: config.cfg, rasters/scene_NNNN.csv, units.csv with the
// fixed column order scene,h,w,propensity,treatment,outcome[,x0,x1,...].
void write_sample_dir(const std::string& dir, const ConfoundedSample& sample,
                      const DgpConfig& config);

struct LoadedSample {
  ConfoundedSample sample;
  DgpConfig config;
};
LoadedSample read_sample_dir(const std::string& dir);

// [dgp] section key=value serialization used by config.cfg.
std::string dgp_config_to_text(const DgpConfig& config);

// Pulls the [dgp] keys out of a parsed config; unknown keys are left for
// the caller's finalize() to reject.
DgpConfig load_dgp_config(class ConfigMap& cfg);

}  // namespace imgconf
