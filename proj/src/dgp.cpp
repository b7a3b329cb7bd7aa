#include "imgconf/dgp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "imgconf/config.hpp"
#include "imgconf/csv.hpp"
#include "imgconf/raster_io.hpp"
#include "imgconf/rng.hpp"

namespace imgconf {

const char* to_string(ConfoundingLevel level) {
  return level == ConfoundingLevel::pixel ? "pixel" : "scene";
}

ConfoundingLevel confounding_level_from_string(const std::string& s) {
  if (s == "pixel") return ConfoundingLevel::pixel;
  if (s == "scene") return ConfoundingLevel::scene;
  throw std::invalid_argument("confounding level must be 'pixel' or 'scene', got '" + s + "'");
}

void DgpConfig::validate() const {
  if (z_true < 1) throw std::invalid_argument("DgpConfig: z_true must be >= 1");
  if (!(eps_scale > 0.0)) throw std::invalid_argument("DgpConfig: eps_scale must be > 0");
  if (!(sigma_u >= 0.0)) throw std::invalid_argument("DgpConfig: sigma_u must be >= 0");
  if (n_scenes < 1) throw std::invalid_argument("DgpConfig: n_scenes must be >= 1");
  if (image_height < 1 || image_width < 1 || image_channels < 1) {
    throw std::invalid_argument("DgpConfig: image dimensions must be positive");
  }
  if (!(correlation_length >= 0.0)) {
    throw std::invalid_argument("DgpConfig: correlation_length must be >= 0");
  }
}

void ConfoundedSample::validate() const {
  const std::size_t n = units.size();
  if (n == 0) throw std::invalid_argument("ConfoundedSample: no units");
  if (true_propensity.size() != n || treatment.size() != n || outcome.size() != n) {
    throw std::invalid_argument("ConfoundedSample: unit column lengths disagree");
  }
  for (double p : true_propensity) {
    if (!(p > 0.0 && p < 1.0)) {
      throw std::invalid_argument("ConfoundedSample: propensity outside (0,1)");
    }
  }
  for (int t : treatment) {
    if (t != 0 && t != 1) throw std::invalid_argument("ConfoundedSample: treatment must be 0/1");
  }
}

double logistic(double x) {
  double p;
  if (x >= 0.0) {
    p = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    p = e / (1.0 + e);
  }
  // Keep the open interval even for extreme arguments.
  const double hi = std::nextafter(1.0, 0.0);
  if (p >= 1.0) p = hi;
  if (p <= 0.0) p = std::numeric_limits<double>::min();
  return p;
}

double marginal_logistic_propensity(double mean, double sd) {
  if (sd == 0.0) return logistic(mean);
  // Midpoint rule on +-8 sd; weights renormalized for the truncation.
  constexpr int kNodes = 257;
  constexpr double kSpan = 8.0;
  const double dz = 2.0 * kSpan / kNodes;
  double acc = 0.0, wsum = 0.0;
  for (int i = 0; i < kNodes; ++i) {
    const double z = -kSpan + (i + 0.5) * dz;
    const double w = std::exp(-0.5 * z * z);
    acc += w * logistic(mean + sd * z);
    wsum += w;
  }
  return acc / wsum;
}

std::vector<Raster> synth_images(const DgpConfig& config, Rng& rng) {
  config.validate();
  const int H = config.image_height, W = config.image_width, C = config.image_channels;

  // Disc of offsets for the isotropic moving average.
  const double r = config.correlation_length;
  const int ri = static_cast<int>(std::floor(r));
  std::vector<std::pair<int, int>> disc;
  for (int dh = -ri; dh <= ri; ++dh) {
    for (int dw = -ri; dw <= ri; ++dw) {
      if (dh * dh + dw * dw <= r * r) disc.emplace_back(dh, dw);
    }
  }

  std::vector<Raster> scenes;
  scenes.reserve(config.n_scenes);
  for (int s = 0; s < config.n_scenes; ++s) {
    Raster noise(H, W, C);
    for (auto& v : noise.values) v = rng.normal();
    if (disc.size() == 1) {
      scenes.push_back(std::move(noise));
      continue;
    }
    Raster smooth(H, W, C);
    for (int h = 0; h < H; ++h) {
      for (int w = 0; w < W; ++w) {
        for (int c = 0; c < C; ++c) {
          double acc = 0.0;
          int taps = 0;
          for (const auto& [dh, dw] : disc) {
            const int hh = h + dh, ww = w + dw;
            if (hh < 0 || hh >= H || ww < 0 || ww >= W) continue;
            acc += noise.at(hh, ww, c);
            ++taps;
          }
          smooth.at(h, w, c) = acc / taps;
        }
      }
    }
    scenes.push_back(std::move(smooth));
  }

  // Standardize the corpus as a whole.
  double mean = 0.0;
  std::size_t count = 0;
  for (const auto& sc : scenes) {
    for (double v : sc.values) mean += v;
    count += sc.values.size();
  }
  mean /= static_cast<double>(count);
  double var = 0.0;
  for (const auto& sc : scenes) {
    for (double v : sc.values) var += (v - mean) * (v - mean);
  }
  var /= static_cast<double>(count);
  if (var <= 0.0) throw DegenerateInputError("synth_images: corpus has zero variance");
  const double inv_sd = 1.0 / std::sqrt(var);
  for (auto& sc : scenes) {
    for (double& v : sc.values) v = (v - mean) * inv_sd;
  }
  return scenes;
}

std::vector<Grid> gen_confounder_pixel(const std::vector<Raster>& rasters, int z_true,
                                       double sigma_u, Rng& rng) {
  if (rasters.empty()) throw std::invalid_argument("gen_confounder_pixel: no rasters");
  if (!(sigma_u >= 0.0)) throw std::invalid_argument("gen_confounder_pixel: sigma_u must be >= 0");
  const Kernel kernel = make_diagonal_kernel(z_true);

  std::vector<Grid> fields;
  fields.reserve(rasters.size());
  for (const auto& r : rasters) fields.push_back(convolve2d(r, kernel));

  // Batch standardization delivers the moment condition exactly for any
  // corpus, whatever the kernel width.
  double mean = 0.0;
  std::size_t count = 0;
  for (const auto& f : fields) {
    for (double v : f.values) mean += v;
    count += f.values.size();
  }
  mean /= static_cast<double>(count);
  double var = 0.0;
  for (const auto& f : fields) {
    for (double v : f.values) var += (v - mean) * (v - mean);
  }
  var /= static_cast<double>(count);
  if (var <= 0.0) throw DegenerateInputError("gen_confounder_pixel: convolved field has zero variance");
  const double inv_sd = 1.0 / std::sqrt(var);
  for (auto& f : fields) {
    for (double& v : f.values) v = (v - mean) * inv_sd;
  }

  if (sigma_u > 0.0) {
    for (auto& f : fields) {
      for (double& v : f.values) v += sigma_u * rng.normal();
    }
  }
  return fields;
}

namespace {

void draw_unit(double u, const DgpConfig& config, Rng& rng, ConfoundedSample& out) {
  const double eps_w = rng.normal(0.0, config.eps_scale);
  const double p = logistic(config.beta * u + eps_w);
  const int t = rng.bernoulli(p) ? 1 : 0;
  const double eps_y = rng.normal(0.0, config.eps_scale);
  out.true_propensity.push_back(p);
  out.marginal_propensity.push_back(
      marginal_logistic_propensity(config.beta * u, config.eps_scale));
  out.treatment.push_back(t);
  out.outcome.push_back(config.gamma * u + config.tau * t + eps_y);
}

}  // namespace

ConfoundedSample sample_pixel_level(const std::vector<Raster>& rasters,
                                    const std::vector<Grid>& u_pixel,
                                    const DgpConfig& config, Rng& rng) {
  config.validate();
  if (rasters.size() != u_pixel.size() || rasters.empty()) {
    throw std::invalid_argument("sample_pixel_level: rasters and confounder grids disagree");
  }
  for (std::size_t s = 0; s < rasters.size(); ++s) {
    if (u_pixel[s].height != rasters[s].height || u_pixel[s].width != rasters[s].width) {
      throw std::invalid_argument("sample_pixel_level: confounder grid shape mismatch");
    }
  }
  ConfoundedSample out;
  out.level = ConfoundingLevel::pixel;
  out.rasters = rasters;
  out.u_pixel = u_pixel;
  for (std::size_t s = 0; s < rasters.size(); ++s) {
    for (int h = 0; h < rasters[s].height; ++h) {
      for (int w = 0; w < rasters[s].width; ++w) {
        out.units.push_back({static_cast<int>(s), h, w});
        draw_unit(u_pixel[s].at(h, w), config, rng, out);
      }
    }
  }
  out.validate();
  return out;
}

ConfoundedSample sample_scene_level(const std::vector<Raster>& rasters,
                                    const std::vector<Grid>& u_pixel,
                                    const DgpConfig& config, Rng& rng) {
  config.validate();
  if (rasters.size() != u_pixel.size()) {
    throw std::invalid_argument("sample_scene_level: rasters and confounder grids disagree");
  }
  if (rasters.size() < 2) {
    throw std::invalid_argument("sample_scene_level: need at least 2 scenes");
  }
  std::vector<double> pooled(rasters.size());
  for (std::size_t s = 0; s < u_pixel.size(); ++s) pooled[s] = max_pool_scene(u_pixel[s]);
  const std::vector<double> u_scene = global_normalize(pooled);

  ConfoundedSample out;
  out.level = ConfoundingLevel::scene;
  out.rasters = rasters;
  out.u_pixel = u_pixel;
  out.u_scene = u_scene;
  for (std::size_t s = 0; s < rasters.size(); ++s) {
    out.units.push_back({static_cast<int>(s), -1, -1});
    draw_unit(u_scene[s], config, rng, out);
  }
  out.validate();
  return out;
}

ConfoundedSample generate_sample(const DgpConfig& config) {
  config.validate();
  Rng img_rng(derive_seed(config.seed, stream::images));
  Rng conf_rng(derive_seed(config.seed, stream::confounder));
  Rng out_rng(derive_seed(config.seed, stream::outcomes));
  const auto rasters = synth_images(config, img_rng);
  const auto u = gen_confounder_pixel(rasters, config.z_true, config.sigma_u, conf_rng);
  return config.level == ConfoundingLevel::pixel
             ? sample_pixel_level(rasters, u, config, out_rng)
             : sample_scene_level(rasters, u, config, out_rng);
}

std::string dgp_config_to_text(const DgpConfig& config) {
  std::ostringstream out;
  out << "[dgp]\n";
  out << "level = " << to_string(config.level) << '\n';
  out << "z_true = " << config.z_true << '\n';
  out << "beta = " << format_double(config.beta) << '\n';
  out << "gamma = " << format_double(config.gamma) << '\n';
  out << "tau = " << format_double(config.tau) << '\n';
  out << "eps_scale = " << format_double(config.eps_scale) << '\n';
  out << "sigma_u = " << format_double(config.sigma_u) << '\n';
  out << "n_scenes = " << config.n_scenes << '\n';
  out << "image_height = " << config.image_height << '\n';
  out << "image_width = " << config.image_width << '\n';
  out << "image_channels = " << config.image_channels << '\n';
  out << "correlation_length = " << format_double(config.correlation_length) << '\n';
  out << "seed = " << config.seed << '\n';
  return out.str();
}

void write_sample_dir(const std::string& dir, const ConfoundedSample& sample,
                      const DgpConfig& config) {
  sample.validate();
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "rasters");

  {
    std::ofstream cfg(fs::path(dir) / "config.cfg");
    if (!cfg) throw std::runtime_error("cannot write config.cfg in " + dir);
    cfg << dgp_config_to_text(config);
  }

  char name[32];
  for (std::size_t s = 0; s < sample.rasters.size(); ++s) {
    std::snprintf(name, sizeof(name), "scene_%04zu.csv", s);
    write_raster_csv((fs::path(dir) / "rasters" / name).string(), sample.rasters[s]);
  }

  std::ofstream units(fs::path(dir) / "units.csv");
  if (!units) throw std::runtime_error("cannot write units.csv in " + dir);
  const std::size_t n_x = sample.covariates.empty() ? 0 : sample.covariates.front().size();
  units << "scene,h,w,propensity,treatment,outcome";
  for (std::size_t j = 0; j < n_x; ++j) units << ",x" << j;
  units << '\n';
  for (int i = 0; i < sample.n_units(); ++i) {
    const UnitLoc& loc = sample.units[i];
    units << loc.scene << ',' << loc.h << ',' << loc.w << ','
          << format_double(sample.true_propensity[i]) << ',' << sample.treatment[i] << ','
          << format_double(sample.outcome[i]);
    for (std::size_t j = 0; j < n_x; ++j) units << ',' << format_double(sample.covariates[i][j]);
    units << '\n';
  }
  if (!units) throw std::runtime_error("write failed: units.csv in " + dir);
}

DgpConfig load_dgp_config(ConfigMap& cfg) {
  DgpConfig config;
  config.level = confounding_level_from_string(cfg.take_string("dgp.level", to_string(config.level)));
  config.z_true = static_cast<int>(cfg.take_int("dgp.z_true", config.z_true));
  config.beta = cfg.take_double("dgp.beta", config.beta);
  config.gamma = cfg.take_double("dgp.gamma", config.gamma);
  config.tau = cfg.take_double("dgp.tau", config.tau);
  config.eps_scale = cfg.take_double("dgp.eps_scale", config.eps_scale);
  config.sigma_u = cfg.take_double("dgp.sigma_u", config.sigma_u);
  config.n_scenes = static_cast<int>(cfg.take_int("dgp.n_scenes", config.n_scenes));
  config.image_height = static_cast<int>(cfg.take_int("dgp.image_height", config.image_height));
  config.image_width = static_cast<int>(cfg.take_int("dgp.image_width", config.image_width));
  config.image_channels = static_cast<int>(cfg.take_int("dgp.image_channels", config.image_channels));
  config.correlation_length = cfg.take_double("dgp.correlation_length", config.correlation_length);
  config.seed = cfg.take_uint64("dgp.seed", config.seed);
  config.validate();
  return config;
}

LoadedSample read_sample_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  ConfigMap cfg = ConfigMap::parse_file((fs::path(dir) / "config.cfg").string());
  DgpConfig config = load_dgp_config(cfg);
  cfg.finalize();

  LoadedSample loaded;
  loaded.config = config;
  loaded.sample.level = config.level;

  char name[32];
  for (int s = 0; s < config.n_scenes; ++s) {
    std::snprintf(name, sizeof(name), "scene_%04d.csv", s);
    const auto path = fs::path(dir) / "rasters" / name;
    if (!fs::exists(path)) {
      throw std::runtime_error("sample dir missing raster: " + path.string());
    }
    loaded.sample.rasters.push_back(read_raster_csv(path.string()));
  }

  std::ifstream units(fs::path(dir) / "units.csv");
  if (!units) throw std::runtime_error("sample dir missing units.csv: " + dir);
  std::string line;
  if (!std::getline(units, line)) throw std::runtime_error("units.csv is empty in " + dir);
  const auto header = split_csv_line(trim(line));
  if (header.size() < 6 || header[0] != "scene" || header[3] != "propensity") {
    throw std::runtime_error("units.csv has an unexpected header in " + dir);
  }
  const std::size_t n_x = header.size() - 6;
  while (std::getline(units, line)) {
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw std::runtime_error("units.csv row width mismatch in " + dir);
    }
    UnitLoc loc;
    loc.scene = static_cast<int>(parse_int(cells[0]));
    loc.h = static_cast<int>(parse_int(cells[1]));
    loc.w = static_cast<int>(parse_int(cells[2]));
    loaded.sample.units.push_back(loc);
    loaded.sample.true_propensity.push_back(parse_double(cells[3]));
    loaded.sample.treatment.push_back(static_cast<int>(parse_int(cells[4])));
    loaded.sample.outcome.push_back(parse_double(cells[5]));
    if (n_x > 0) {
      std::vector<double> x(n_x);
      for (std::size_t j = 0; j < n_x; ++j) x[j] = parse_double(cells[6 + j]);
      loaded.sample.covariates.push_back(std::move(x));
    }
  }
  loaded.sample.validate();
  return loaded;
}

}  // namespace imgconf
