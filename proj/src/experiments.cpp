#include "imgconf/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <thread>

#include "imgconf/config.hpp"
#include "imgconf/csv.hpp"
#include "imgconf/rng.hpp"

namespace imgconf {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

const char* to_string(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::none: return "none";
    case SweepAxis::true_width: return "true_width";
    case SweepAxis::noise_sigma: return "noise_sigma";
  }
  return "?";
}

SweepAxis sweep_axis_from_string(const std::string& s) {
  if (s == "none") return SweepAxis::none;
  if (s == "true_width") return SweepAxis::true_width;
  if (s == "noise_sigma") return SweepAxis::noise_sigma;
  throw std::invalid_argument("sweep axis must be none/true_width/noise_sigma, got '" + s + "'");
}

std::string to_key(const EstimatorRequest& req) {
  if (req.id == EstimatorId::diff_means) return "diff_means";
  std::string key = req.id == EstimatorId::ipw_ht ? "ipw_ht" : "ipw_hajek";
  key += req.source == PropensitySource::oracle ? "_oracle" : "_learned";
  return key;
}

EstimatorRequest estimator_request_from_string(const std::string& s) {
  EstimatorRequest req;
  if (s == "diff" || s == "diff_means") {
    req.id = EstimatorId::diff_means;
    return req;
  }
  auto make = [](EstimatorId id, PropensitySource src) {
    EstimatorRequest r;
    r.id = id;
    r.source = src;
    return r;
  };
  if (s == "ht_oracle" || s == "ipw_ht_oracle") return make(EstimatorId::ipw_ht, PropensitySource::oracle);
  if (s == "hajek_oracle" || s == "ipw_hajek_oracle") return make(EstimatorId::ipw_hajek, PropensitySource::oracle);
  if (s == "ht_learned" || s == "ipw_ht_learned") return make(EstimatorId::ipw_ht, PropensitySource::learned);
  if (s == "hajek_learned" || s == "ipw_hajek_learned") return make(EstimatorId::ipw_hajek, PropensitySource::learned);
  throw std::invalid_argument("unknown estimator '" + s + "'");
}

void ExperimentSpec::validate() const {
  dgp.validate();
  if (z_est < 1) throw std::invalid_argument("ExperimentSpec: z_est must be >= 1");
  if (replications < 2) throw std::invalid_argument("ExperimentSpec: need >= 2 replications for SEs");
  if (estimators.empty()) throw std::invalid_argument("ExperimentSpec: no estimators requested");
  if (axis != SweepAxis::none && grid.empty()) {
    throw std::invalid_argument("ExperimentSpec: sweep requested with an empty grid");
  }
  if (!(clip_eta >= 0.0 && clip_eta < 0.5)) {
    throw std::invalid_argument("ExperimentSpec: clip_eta must lie in [0, 0.5)");
  }
  if (threads < 0) throw std::invalid_argument("ExperimentSpec: threads must be >= 0");
  for (const auto& req : estimators) {
    if (req.id != EstimatorId::diff_means && req.source == PropensitySource::supplied) {
      throw std::invalid_argument("ExperimentSpec: supplied propensities have no place in a sweep");
    }
  }
}

namespace {

bool needs_training(const ExperimentSpec& spec) {
  for (const auto& req : spec.estimators) {
    if (req.id != EstimatorId::diff_means && req.source == PropensitySource::learned) return true;
  }
  return false;
}

DgpConfig grid_adjusted_config(const ExperimentSpec& spec, double grid_value) {
  DgpConfig cfg = spec.dgp;
  switch (spec.axis) {
    case SweepAxis::none:
      break;
    case SweepAxis::true_width:
      cfg.z_true = static_cast<int>(std::lround(grid_value));
      break;
    case SweepAxis::noise_sigma:
      // The grid is in sigma_u^2 units, following the paper's parameterization.
      cfg.sigma_u = std::sqrt(grid_value);
      break;
  }
  return cfg;
}

}  // namespace

ReplicationResult run_replication(const ExperimentSpec& spec, double grid_value, int rep_index) {
  ReplicationResult result;
  result.tau.assign(spec.estimators.size(), kNaN);
  result.tau_baseline = kNaN;

  const DgpConfig cfg = grid_adjusted_config(spec, grid_value);
  ConfoundedSample sample;
  try {
    Rng img_rng(derive_seed(cfg.seed, stream::images, rep_index));
    Rng conf_rng(derive_seed(cfg.seed, stream::confounder, rep_index));
    Rng out_rng(derive_seed(cfg.seed, stream::outcomes, rep_index));
    const auto rasters = synth_images(cfg, img_rng);
    const auto u = gen_confounder_pixel(rasters, cfg.z_true, cfg.sigma_u, conf_rng);
    sample = cfg.level == ConfoundingLevel::pixel
                 ? sample_pixel_level(rasters, u, cfg, out_rng)
                 : sample_scene_level(rasters, u, cfg, out_rng);
  } catch (const std::exception& e) {
    result.error = std::string("dgp: ") + e.what();
    return result;
  }

  std::vector<double> learned;
  if (needs_training(spec)) {
    try {
      ModelConfig mc = spec.model;
      mc.kernel_size = spec.z_est;
      mc.input_channels = cfg.image_channels;

      std::vector<LabeledImage> data;
      data.reserve(sample.n_units());
      if (cfg.level == ConfoundingLevel::scene) {
        for (int s = 0; s < cfg.n_scenes; ++s) {
          data.push_back({sample.rasters[s], sample.treatment[s]});
        }
      } else {
        const int radius = spec.z_est / 2;
        for (int i = 0; i < sample.n_units(); ++i) {
          const UnitLoc& loc = sample.units[i];
          data.push_back({extract_patch(sample.rasters[loc.scene], loc.h, loc.w, radius),
                          sample.treatment[i]});
        }
      }

      Rng init_rng(derive_seed(cfg.seed, stream::model_init, rep_index));
      ConvLogisticModel model = ConvLogisticModel::init(mc, init_rng);
      TrainConfig tc = spec.train;
      tc.seed = derive_seed(cfg.seed, stream::training, rep_index);
      train(model, data, tc);

      if (cfg.level == ConfoundingLevel::scene) {
        learned = predict_propensities(model, sample.rasters, spec.clip_eta);
      } else {
        learned.reserve(sample.n_units());
        for (const auto& r : sample.rasters) {
          const auto per_scene = predict_pixel_propensities(model, r, spec.clip_eta);
          learned.insert(learned.end(), per_scene.begin(), per_scene.end());
        }
      }
    } catch (const std::exception& e) {
      result.error = std::string("training: ") + e.what();
      learned.clear();
    }
  }

  try {
    result.tau_baseline = diff_in_means(sample.treatment, sample.outcome).tau_hat;
  } catch (const std::exception& e) {
    if (result.error.empty()) result.error = std::string("baseline: ") + e.what();
  }

  bool all_ok = !std::isnan(result.tau_baseline);
  for (std::size_t j = 0; j < spec.estimators.size(); ++j) {
    const EstimatorRequest& req = spec.estimators[j];
    try {
      if (req.id == EstimatorId::diff_means) {
        result.tau[j] = result.tau_baseline;
        if (std::isnan(result.tau_baseline)) throw std::runtime_error("baseline failed");
        continue;
      }
      const std::vector<double>* pihat = nullptr;
      if (req.source == PropensitySource::oracle) {
        pihat = &sample.true_propensity;
      } else {
        if (learned.empty()) throw std::runtime_error("no trained propensities available");
        pihat = &learned;
      }
      result.tau[j] = req.id == EstimatorId::ipw_ht
                          ? ipw_ht(sample.treatment, sample.outcome, *pihat).tau_hat
                          : ipw_hajek(sample.treatment, sample.outcome, *pihat).tau_hat;
    } catch (const std::exception& e) {
      all_ok = false;
      if (result.error.empty()) {
        result.error = to_key(req) + ": " + e.what();
      }
    }
  }
  result.ok = all_ok && !std::isnan(result.tau_baseline);
  for (double t : result.tau) {
    if (std::isnan(t)) result.ok = false;
  }
  return result;
}

namespace {

struct PairedStats {
  // Leave-one-out friendly sums over the valid replications.
  std::vector<double> err_e;
  std::vector<double> err_b;
};

double jackknife_se(const std::vector<double>& loo, double full) {
  const std::size_t n = loo.size();
  if (n < 2) return kNaN;
  double mean = 0.0;
  for (double v : loo) mean += v;
  mean /= static_cast<double>(n);
  (void)full;
  double s = 0.0;
  for (double v : loo) s += (v - mean) * (v - mean);
  return std::sqrt(s * (static_cast<double>(n) - 1.0) / static_cast<double>(n));
}

EstimatorMetrics summarize(const std::string& key, const std::vector<double>& taus,
                           const std::vector<double>& baseline_taus, double tau_true) {
  EstimatorMetrics m;
  m.estimator = key;
  m.taus = taus;

  PairedStats ps;
  for (std::size_t i = 0; i < taus.size(); ++i) {
    if (std::isnan(taus[i]) || std::isnan(baseline_taus[i])) continue;
    ps.err_e.push_back(taus[i] - tau_true);
    ps.err_b.push_back(baseline_taus[i] - tau_true);
  }
  const std::size_t n = ps.err_e.size();
  m.n_success = static_cast<int>(n);
  if (n == 0) {
    m.bias = m.rmse = m.se_bias = m.se_rmse = kNaN;
    m.rel_bias = m.rel_rmse = m.se_rel_bias = m.se_rel_rmse = kNaN;
    return m;
  }

  double sum_e = 0.0, sum_e2 = 0.0, sum_b = 0.0, sum_b2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sum_e += ps.err_e[i];
    sum_e2 += ps.err_e[i] * ps.err_e[i];
    sum_b += ps.err_b[i];
    sum_b2 += ps.err_b[i] * ps.err_b[i];
  }
  const double nd = static_cast<double>(n);
  m.bias = std::abs(sum_e / nd);
  m.rmse = std::sqrt(sum_e2 / nd);
  const double bias_b = std::abs(sum_b / nd);
  const double rmse_b = std::sqrt(sum_b2 / nd);
  m.rel_defined = bias_b > 0.0 && rmse_b > 0.0;
  m.rel_bias = m.rel_defined ? m.bias / bias_b : kNaN;
  m.rel_rmse = m.rel_defined ? m.rmse / rmse_b : kNaN;

  if (n >= 2) {
    std::vector<double> loo_bias(n), loo_rmse(n), loo_rel_bias(n), loo_rel_rmse(n);
    bool rel_ok = m.rel_defined;
    const double nm1 = nd - 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double be = std::abs((sum_e - ps.err_e[i]) / nm1);
      const double re = std::sqrt(std::max(0.0, (sum_e2 - ps.err_e[i] * ps.err_e[i]) / nm1));
      const double bb = std::abs((sum_b - ps.err_b[i]) / nm1);
      const double rb = std::sqrt(std::max(0.0, (sum_b2 - ps.err_b[i] * ps.err_b[i]) / nm1));
      loo_bias[i] = be;
      loo_rmse[i] = re;
      if (bb > 0.0 && rb > 0.0) {
        loo_rel_bias[i] = be / bb;
        loo_rel_rmse[i] = re / rb;
      } else {
        rel_ok = false;
      }
    }
    m.se_bias = jackknife_se(loo_bias, m.bias);
    m.se_rmse = jackknife_se(loo_rmse, m.rmse);
    if (rel_ok) {
      m.se_rel_bias = jackknife_se(loo_rel_bias, m.rel_bias);
      m.se_rel_rmse = jackknife_se(loo_rel_rmse, m.rel_rmse);
    } else {
      m.se_rel_bias = m.se_rel_rmse = kNaN;
    }
  } else {
    m.se_bias = m.se_rmse = m.se_rel_bias = m.se_rel_rmse = kNaN;
  }
  return m;
}

}  // namespace

MetricsReport monte_carlo(const ExperimentSpec& spec) {
  spec.validate();
  const std::vector<double> grid = spec.axis == SweepAxis::none ? std::vector<double>{0.0} : spec.grid;

  const int R = spec.replications;
  const std::size_t n_points = grid.size();
  std::vector<std::vector<ReplicationResult>> results(n_points);
  for (auto& v : results) v.resize(R);

  const std::size_t total_jobs = n_points * static_cast<std::size_t>(R);
  unsigned n_threads = spec.threads > 0 ? static_cast<unsigned>(spec.threads)
                                        : std::max(1u, std::thread::hardware_concurrency());
  n_threads = std::min<unsigned>(n_threads, static_cast<unsigned>(total_jobs));

  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t job = next.fetch_add(1);
      if (job >= total_jobs) break;
      const std::size_t point = job / R;
      const int rep = static_cast<int>(job % R);
      results[point][rep] = run_replication(spec, grid[point], rep);
    }
  };
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (unsigned i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  MetricsReport report;
  report.axis = spec.axis;
  report.tau_true = spec.dgp.tau;
  report.points.resize(n_points);
  for (std::size_t p = 0; p < n_points; ++p) {
    GridPointMetrics& gp = report.points[p];
    gp.grid_value = grid[p];
    gp.baseline_taus.resize(R);
    for (int r = 0; r < R; ++r) {
      gp.baseline_taus[r] = results[p][r].tau_baseline;
      if (!results[p][r].ok) ++gp.n_failed;
    }
    for (std::size_t j = 0; j < spec.estimators.size(); ++j) {
      std::vector<double> taus(R);
      for (int r = 0; r < R; ++r) taus[r] = results[p][r].tau[j];
      gp.estimators.push_back(
          summarize(to_key(spec.estimators[j]), taus, gp.baseline_taus, spec.dgp.tau));
    }
    if (gp.n_failed * 100 > R) {
      std::cerr << "warning: grid point " << format_double(gp.grid_value) << " had "
                << gp.n_failed << "/" << R << " failed replications" << std::endl;
    }
  }
  return report;
}

MetricsReport kernel_width_sweep(const ExperimentSpec& spec) {
  ExperimentSpec s = spec;
  s.axis = SweepAxis::true_width;
  return monte_carlo(s);
}

MetricsReport noise_sweep(const ExperimentSpec& spec) {
  ExperimentSpec s = spec;
  s.axis = SweepAxis::noise_sigma;
  return monte_carlo(s);
}

void write_metrics_csv(const std::string& path, const MetricsReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "grid_point,estimator,bias,rmse,rel_bias,rel_rmse,se_bias,se_rmse,R_effective,rel_defined\n";
  for (const auto& gp : report.points) {
    for (const auto& m : gp.estimators) {
      out << format_double(gp.grid_value) << ',' << m.estimator << ',' << format_double(m.bias)
          << ',' << format_double(m.rmse) << ',';
      out << (m.rel_defined ? format_double(m.rel_bias) : "") << ','
          << (m.rel_defined ? format_double(m.rel_rmse) : "") << ',';
      out << format_double(m.se_bias) << ',' << format_double(m.se_rmse) << ',' << m.n_success
          << ',' << (m.rel_defined ? 1 : 0) << '\n';
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

void write_plot_csv(const std::string& path, const MetricsReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "x,estimator,metric,value,se\n";
  for (const auto& gp : report.points) {
    for (const auto& m : gp.estimators) {
      out << format_double(gp.grid_value) << ',' << m.estimator << ",rel_bias,"
          << (m.rel_defined ? format_double(m.rel_bias) : "") << ','
          << (m.rel_defined ? format_double(m.se_rel_bias) : "") << '\n';
      out << format_double(gp.grid_value) << ',' << m.estimator << ",rel_rmse,"
          << (m.rel_defined ? format_double(m.rel_rmse) : "") << ','
          << (m.rel_defined ? format_double(m.se_rel_rmse) : "") << '\n';
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

ExperimentSpec load_experiment_spec(ConfigMap& cfg) {
  ExperimentSpec spec;
  spec.dgp = load_dgp_config(cfg);
  spec.model = load_model_config(cfg);
  spec.train = load_train_config(cfg);
  spec.z_est = static_cast<int>(cfg.take_int("experiment.z_est", spec.z_est));
  spec.replications = static_cast<int>(cfg.take_int("experiment.replications", spec.replications));
  spec.axis = sweep_axis_from_string(cfg.take_string("experiment.sweep_axis", to_string(spec.axis)));
  spec.grid = cfg.take_double_list("experiment.grid", spec.grid);
  spec.clip_eta = cfg.take_double("experiment.clip_eta", spec.clip_eta);
  spec.threads = static_cast<int>(cfg.take_int("experiment.threads", spec.threads));
  const std::vector<std::string> default_est = {"diff", "ht_oracle", "hajek_oracle"};
  for (const auto& name : cfg.take_string_list("experiment.estimators", default_est)) {
    spec.estimators.push_back(estimator_request_from_string(name));
  }
  spec.validate();
  return spec;
}

double spearman_rank_correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw std::invalid_argument("spearman_rank_correlation: need two equal-length series");
  }
  auto ranks = [](std::span<const double> v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&v](std::size_t a, std::size_t b) { return v[a] < v[b]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
      const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
      for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x);
  const auto ry = ranks(y);
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= static_cast<double>(rx.size());
  my /= static_cast<double>(ry.size());
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace imgconf
