#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>

#include "imgconf/dgp.hpp"
#include "imgconf/rng.hpp"

using namespace imgconf;

namespace {

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double var_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size());
}

// Lag-1 horizontal autocorrelation pooled over scenes.
double lag1_autocorr(const std::vector<Raster>& scenes) {
  double sxy = 0.0, sxx = 0.0;
  for (const auto& r : scenes) {
    for (int h = 0; h < r.height; ++h) {
      for (int w = 0; w + 1 < r.width; ++w) {
        sxy += r.at(h, w, 0) * r.at(h, w + 1, 0);
        sxx += r.at(h, w, 0) * r.at(h, w, 0);
      }
    }
  }
  return sxy / sxx;
}

}  // namespace

TEST_CASE("paper-pinned defaults") {
  DgpConfig cfg;
  CHECK(cfg.eps_scale == 0.1);  // N(0, 0.1) noise scale for the W/Y terms
  CHECK(cfg.z_true == 8);
}

TEST_CASE("synth_images: standardized corpus, deterministic, correlation grows with radius") {
  DgpConfig cfg;
  cfg.n_scenes = 100;
  cfg.image_height = 16;
  cfg.image_width = 16;
  cfg.correlation_length = 0.0;
  cfg.seed = 7;

  Rng rng_a(1), rng_b(1);
  auto white = synth_images(cfg, rng_a);
  auto white2 = synth_images(cfg, rng_b);
  CHECK(white.size() == 100);
  for (std::size_t s = 0; s < white.size(); ++s) {
    CHECK(white[s].values == white2[s].values);  // bit-identical under the same stream
  }

  std::vector<double> pooled;
  for (const auto& r : white) pooled.insert(pooled.end(), r.values.begin(), r.values.end());
  CHECK(std::abs(mean_of(pooled)) < 1e-12);      // standardized exactly
  CHECK(std::abs(var_of(pooled) - 1.0) < 1e-12);

  const double rho_white = lag1_autocorr(white);
  CHECK(std::abs(rho_white) < 0.05);

  cfg.correlation_length = 3.0;
  Rng rng_c(2);
  auto smooth = synth_images(cfg, rng_c);
  const double rho_smooth = lag1_autocorr(smooth);
  CHECK(rho_smooth > rho_white + 0.3);
}

TEST_CASE("gen_confounder_pixel: deterministic when sigma_u = 0, standardized batch") {
  DgpConfig cfg;
  cfg.n_scenes = 12;
  cfg.image_height = 16;
  cfg.image_width = 16;
  cfg.correlation_length = 2.0;
  Rng img_rng(3);
  auto rasters = synth_images(cfg, img_rng);

  Rng r1(100), r2(200);  // different noise streams must not matter at sigma = 0
  auto u1 = gen_confounder_pixel(rasters, 4, 0.0, r1);
  auto u2 = gen_confounder_pixel(rasters, 4, 0.0, r2);
  for (std::size_t s = 0; s < u1.size(); ++s) CHECK(u1[s].values == u2[s].values);

  std::vector<double> pooled;
  for (const auto& g : u1) pooled.insert(pooled.end(), g.values.begin(), g.values.end());
  CHECK(std::abs(mean_of(pooled)) < 1e-10);
  CHECK(std::abs(var_of(pooled) - 1.0) < 1e-10);
}

TEST_CASE("gen_confounder_pixel: sigma_u^2 = 7 inflates the variance to about 8") {
  DgpConfig cfg;
  cfg.n_scenes = 50;
  cfg.image_height = 16;
  cfg.image_width = 16;
  cfg.correlation_length = 2.0;
  Rng img_rng(5);
  auto rasters = synth_images(cfg, img_rng);

  Rng noise_rng(6);
  auto u = gen_confounder_pixel(rasters, 8, std::sqrt(7.0), noise_rng);
  std::vector<double> pooled;
  for (const auto& g : u) pooled.insert(pooled.end(), g.values.begin(), g.values.end());
  CHECK(var_of(pooled) == doctest::Approx(8.0).epsilon(0.08));
}

TEST_CASE("sample_pixel_level: unconfounded limit recovers tau and balanced treatment") {
  DgpConfig cfg;
  cfg.level = ConfoundingLevel::pixel;
  cfg.beta = 0.0;
  cfg.gamma = 0.0;
  cfg.tau = 1.0;
  cfg.n_scenes = 8;
  cfg.image_height = 16;
  cfg.image_width = 16;
  cfg.seed = 11;
  ConfoundedSample s = generate_sample(cfg);

  CHECK(s.n_units() == 8 * 16 * 16);
  CHECK(std::abs(mean_of(s.true_propensity) - 0.5) < 0.01);

  double y1 = 0, y0 = 0;
  int n1 = 0, n0 = 0;
  for (int i = 0; i < s.n_units(); ++i) {
    if (s.treatment[i]) {
      y1 += s.outcome[i];
      ++n1;
    } else {
      y0 += s.outcome[i];
      ++n0;
    }
  }
  CHECK(std::abs(y1 / n1 - y0 / n0 - cfg.tau) < 0.02);
}

TEST_CASE("sample_pixel_level: default confounding biases diff-in-means upward") {
  // 200-replication sign check; beta = 1, gamma = 2 links T and Y through U
  // positively on both paths.
  int biased_up = 0;
  for (int rep = 0; rep < 200; ++rep) {
    DgpConfig cfg;
    cfg.n_scenes = 2;
    cfg.image_height = 12;
    cfg.image_width = 12;
    cfg.z_true = 4;
    cfg.correlation_length = 2.0;
    cfg.seed = derive_seed(13, 0x5eed, rep);
    ConfoundedSample s = generate_sample(cfg);
    double y1 = 0, y0 = 0;
    int n1 = 0, n0 = 0;
    for (int i = 0; i < s.n_units(); ++i) {
      if (s.treatment[i]) {
        y1 += s.outcome[i];
        ++n1;
      } else {
        y0 += s.outcome[i];
        ++n0;
      }
    }
    if (n1 > 0 && n0 > 0 && y1 / n1 - y0 / n0 > cfg.tau) ++biased_up;
  }
  CHECK(biased_up > 180);
}

TEST_CASE("propensities stay strictly interior and treatments follow U when beta > 0") {
  DgpConfig cfg;
  cfg.n_scenes = 8;
  cfg.image_height = 16;
  cfg.image_width = 16;
  cfg.z_true = 4;
  cfg.seed = 17;
  ConfoundedSample s = generate_sample(cfg);
  for (double p : s.true_propensity) {
    CHECK(p > 0.0);
    CHECK(p < 1.0);
  }

  // Bin units by u and compare empirical treatment rates: monotone trend.
  std::vector<std::pair<double, int>> by_u;
  for (int i = 0; i < s.n_units(); ++i) {
    const UnitLoc& loc = s.units[i];
    by_u.push_back({s.u_pixel[loc.scene].at(loc.h, loc.w), s.treatment[i]});
  }
  std::sort(by_u.begin(), by_u.end());
  const int bins = 5;
  const int per = static_cast<int>(by_u.size()) / bins;
  double prev_rate = -1.0;
  for (int b = 0; b < bins; ++b) {
    double rate = 0.0;
    for (int i = b * per; i < (b + 1) * per; ++i) rate += by_u[i].second;
    rate /= per;
    CHECK(rate >= prev_rate - 0.04);
    prev_rate = rate;
  }
  CHECK(prev_rate > 0.5);  // top bin treats often
}

TEST_CASE("tau enters the outcome additively through T only") {
  DgpConfig a;
  a.n_scenes = 4;
  a.image_height = 12;
  a.image_width = 12;
  a.seed = 19;
  a.tau = 1.0;
  DgpConfig b = a;
  b.tau = 2.5;
  ConfoundedSample sa = generate_sample(a);
  ConfoundedSample sb = generate_sample(b);
  CHECK(sa.treatment == sb.treatment);  // same streams, same draws
  for (int i = 0; i < sa.n_units(); ++i) {
    const double expected = (b.tau - a.tau) * sa.treatment[i];
    CHECK(std::abs((sb.outcome[i] - sa.outcome[i]) - expected) < 1e-12);
  }
}

TEST_CASE("sample_scene_level: normalized scene confounder and degenerate guard") {
  DgpConfig cfg;
  cfg.level = ConfoundingLevel::scene;
  cfg.n_scenes = 64;
  cfg.image_height = 12;
  cfg.image_width = 12;
  cfg.z_true = 4;
  cfg.seed = 23;
  ConfoundedSample s = generate_sample(cfg);
  CHECK(s.n_units() == 64);
  CHECK(std::abs(mean_of(s.u_scene)) < 1e-12);
  CHECK(std::abs(var_of(s.u_scene) - 1.0) < 1e-12);
  for (const auto& loc : s.units) {
    CHECK(loc.h == -1);
    CHECK(loc.w == -1);
  }

  // Identical confounder fields across scenes: GN has nothing to scale.
  std::vector<Raster> rasters(3, Raster(4, 4, 1, 1.0));
  std::vector<Grid> u_pixel(3, Grid(4, 4, 0.5));
  Rng rng(29);
  CHECK_THROWS_AS(sample_scene_level(rasters, u_pixel, cfg, rng), DegenerateInputError);
}

TEST_CASE("sample_scene_level: beta = 0 balances treatment over many scenes") {
  DgpConfig cfg;
  cfg.level = ConfoundingLevel::scene;
  cfg.beta = 0.0;
  cfg.n_scenes = 1000;
  cfg.image_height = 6;
  cfg.image_width = 6;
  cfg.z_true = 2;
  cfg.seed = 31;
  ConfoundedSample s = generate_sample(cfg);
  CHECK(std::abs(mean_of(s.true_propensity) - 0.5) < 0.005);
  double treated = 0;
  for (int t : s.treatment) treated += t;
  CHECK(std::abs(treated / 1000.0 - 0.5) < 0.05);
}

TEST_CASE("covariate columns survive the sample directory round trip") {
  DgpConfig cfg;
  cfg.n_scenes = 2;
  cfg.image_height = 4;
  cfg.image_width = 4;
  cfg.z_true = 2;
  cfg.seed = 41;
  ConfoundedSample s = generate_sample(cfg);
  Rng rng(43);
  for (int i = 0; i < s.n_units(); ++i) {
    s.covariates.push_back({rng.normal(), rng.normal()});
  }

  auto dir = std::filesystem::temp_directory_path() / "imgconf_sample_cov";
  std::filesystem::remove_all(dir);
  write_sample_dir(dir.string(), s, cfg);
  LoadedSample back = read_sample_dir(dir.string());
  REQUIRE(back.sample.covariates.size() == s.covariates.size());
  for (std::size_t i = 0; i < s.covariates.size(); ++i) {
    CHECK(back.sample.covariates[i] == s.covariates[i]);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("marginal propensity quadrature") {
  CHECK(marginal_logistic_propensity(0.7, 0.0) == logistic(0.7));

  // Denser midpoint rule as the oracle.
  auto dense = [](double mean, double sd) {
    const int nodes = 4001;
    const double span = 8.0, dz = 2.0 * span / nodes;
    double acc = 0.0, wsum = 0.0;
    for (int i = 0; i < nodes; ++i) {
      const double z = -span + (i + 0.5) * dz;
      const double w = std::exp(-0.5 * z * z);
      acc += w * logistic(mean + sd * z);
      wsum += w;
    }
    return acc / wsum;
  };
  for (double mean : {-2.0, 0.0, 0.4, 3.0}) {
    for (double sd : {0.1, 1.0, 2.0}) {
      CHECK(marginal_logistic_propensity(mean, sd) == doctest::Approx(dense(mean, sd)).epsilon(1e-8));
    }
  }

  // Jensen: the marginal is pulled towards one half.
  CHECK(marginal_logistic_propensity(2.0, 1.0) < logistic(2.0));
  CHECK(marginal_logistic_propensity(-2.0, 1.0) > logistic(-2.0));
}

TEST_CASE("generate_sample is deterministic and reruns byte-stably through the sample dir") {
  DgpConfig cfg;
  cfg.n_scenes = 3;
  cfg.image_height = 8;
  cfg.image_width = 8;
  cfg.z_true = 3;
  cfg.seed = 37;

  ConfoundedSample s1 = generate_sample(cfg);
  ConfoundedSample s2 = generate_sample(cfg);
  CHECK(s1.treatment == s2.treatment);
  CHECK(s1.outcome == s2.outcome);
  CHECK(s1.true_propensity == s2.true_propensity);

  auto dir = std::filesystem::temp_directory_path() / "imgconf_sample_dir";
  std::filesystem::remove_all(dir);
  write_sample_dir(dir.string(), s1, cfg);
  LoadedSample back = read_sample_dir(dir.string());
  CHECK(back.config.seed == cfg.seed);
  CHECK(back.config.z_true == cfg.z_true);
  CHECK(back.sample.level == s1.level);
  CHECK(back.sample.treatment == s1.treatment);
  CHECK(back.sample.outcome == s1.outcome);            // %.17g round-trips doubles
  CHECK(back.sample.true_propensity == s1.true_propensity);
  CHECK(back.sample.rasters.size() == s1.rasters.size());
  for (std::size_t s = 0; s < s1.rasters.size(); ++s) {
    CHECK(back.sample.rasters[s].values == s1.rasters[s].values);
  }
  std::filesystem::remove_all(dir);
}
