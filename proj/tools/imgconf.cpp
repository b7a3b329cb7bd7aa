// Command-line front end: simulate / train / estimate / sweep / check.

#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "imgconf/config.hpp"
#include "imgconf/conv_logistic.hpp"
#include "imgconf/csv.hpp"
#include "imgconf/dgp.hpp"
#include "imgconf/discrete_world.hpp"
#include "imgconf/estimators.hpp"
#include "imgconf/experiments.hpp"
#include "imgconf/rng.hpp"
#include "imgconf/version.hpp"

namespace fs = std::filesystem;
using namespace imgconf;

namespace {

// IMGCONF_SEED overrides the config seed; all randomness flows from this
// one root.
bool seed_override(std::uint64_t* seed) {
  const char* env = std::getenv("IMGCONF_SEED");
  if (!env || !*env) return false;
  *seed = parse_uint64(env);
  return true;
}

void require_fresh_dir(const std::string& dir, bool force) {
  if (!fs::exists(dir)) return;
  if (force) {
    fs::remove_all(dir);
    return;
  }
  if (fs::is_directory(dir) && fs::directory_iterator(dir) == fs::directory_iterator()) return;
  throw std::runtime_error("output '" + dir + "' already exists; pass --force to overwrite");
}

void require_fresh_file(const std::string& path, bool force) {
  if (fs::exists(path) && !force) {
    throw std::runtime_error("output '" + path + "' already exists; pass --force to overwrite");
  }
}

std::vector<LabeledImage> training_data(const LoadedSample& loaded, int z_est) {
  std::vector<LabeledImage> data;
  const ConfoundedSample& s = loaded.sample;
  data.reserve(s.n_units());
  if (s.level == ConfoundingLevel::scene) {
    for (int i = 0; i < s.n_units(); ++i) {
      data.push_back({s.rasters[s.units[i].scene], s.treatment[i]});
    }
  } else {
    const int radius = z_est / 2;
    for (int i = 0; i < s.n_units(); ++i) {
      const UnitLoc& loc = s.units[i];
      data.push_back({extract_patch(s.rasters[loc.scene], loc.h, loc.w, radius), s.treatment[i]});
    }
  }
  return data;
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir, bool force) {
  ConfigMap cfg = ConfigMap::parse_file(config_path);
  DgpConfig dgp = load_dgp_config(cfg);
  cfg.finalize();
  if (seed_override(&dgp.seed)) {
    std::cerr << "seed overridden by IMGCONF_SEED = " << dgp.seed << "\n";
  }

  require_fresh_dir(out_dir, force);
  RunManifest manifest;
  manifest.config_hash = cfg.hash();
  manifest.root_seed = dgp.seed;
  manifest.version = kVersion;
  manifest.started = iso8601_utc_now();

  ConfoundedSample sample = generate_sample(dgp);
  write_sample_dir(out_dir, sample, dgp);
  manifest.outputs = {"config.cfg", "units.csv", "rasters/"};
  manifest.finished = iso8601_utc_now();
  write_manifest((fs::path(out_dir) / "manifest.txt").string(), manifest);
  std::cout << "wrote " << sample.n_units() << " units across " << dgp.n_scenes << " scenes to "
            << out_dir << "\n";
  return 0;
}

int cmd_train(const std::string& sample_dir, const std::string& config_path,
              const std::string& model_out, std::string trace_out, bool grad_check, bool force) {
  LoadedSample loaded = read_sample_dir(sample_dir);
  ModelConfig mc;
  TrainConfig tc;
  if (!config_path.empty()) {
    ConfigMap cfg = ConfigMap::parse_file(config_path);
    mc = load_model_config(cfg);
    tc = load_train_config(cfg);
    cfg.finalize();
  }
  mc.input_channels = loaded.config.image_channels;

  std::vector<LabeledImage> data = training_data(loaded, mc.kernel_size);

  Rng init_rng(derive_seed(tc.seed, stream::model_init));
  ConvLogisticModel model = ConvLogisticModel::init(mc, init_rng);

  if (grad_check) {
    // Central finite differences on a small subsample, every parameter.
    const std::size_t n = std::min<std::size_t>(data.size(), 16);
    std::vector<LabeledImage> batch(data.begin(), data.begin() + n);
    // Keep both classes in the probe batch if the sample allows it.
    bool has1 = false, has0 = false;
    for (const auto& ex : batch) (ex.treatment ? has1 : has0) = true;
    if (!has1 || !has0) {
      for (const auto& ex : data) {
        if ((ex.treatment && !has1) || (!ex.treatment && !has0)) {
          batch.push_back(ex);
          (ex.treatment ? has1 : has0) = true;
        }
        if (has1 && has0) break;
      }
    }
    const Gradients analytic = backward(model, batch);
    auto loss_of = [&]() {
      std::vector<double> p(batch.size());
      std::vector<int> t(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) {
        p[i] = forward(model, batch[i].image);
        t[i] = batch[i].treatment;
      }
      return bce_loss(p, t);
    };
    const double step = 1e-5;
    double worst = 0.0;
    auto check_block = [&](double* params, const double* grads, std::size_t count) {
      for (std::size_t i = 0; i < count; ++i) {
        const double saved = params[i];
        params[i] = saved + step;
        const double up = loss_of();
        params[i] = saved - step;
        const double down = loss_of();
        params[i] = saved;
        const double fd = (up - down) / (2.0 * step);
        const double rel =
            std::abs(grads[i] - fd) / std::max({std::abs(grads[i]), std::abs(fd), 1e-6});
        worst = std::max(worst, rel);
      }
    };
    for (std::size_t l = 0; l < model.filters.size(); ++l) {
      check_block(model.filters[l].data(), analytic.filters[l].data(), model.filters[l].size());
    }
    check_block(model.head_w.data(), analytic.head_w.data(), model.head_w.size());
    check_block(&model.head_b, &analytic.head_b, 1);
    std::cout << "grad-check: max relative error " << format_double(worst) << " over "
              << model.n_parameters() << " parameters\n";
    if (!(worst < 1e-4)) {
      std::cerr << "grad-check FAILED (>= 1e-4)\n";
      return 2;
    }
  }

  require_fresh_file(model_out, force);
  TrainResult result = train(model, data, tc);
  save_checkpoint(model_out, model);
  if (trace_out.empty()) trace_out = model_out + ".trace.csv";
  write_loss_trace_csv(trace_out, result);
  std::cout << "trained " << model.n_parameters() << " parameters for " << tc.epochs
            << " epochs; final train loss " << format_double(result.trace.back().train_loss)
            << "\n";
  return 0;
}

int cmd_estimate(const std::string& sample_dir, const std::string& model_path, bool oracle,
                 const std::vector<std::string>& estimator_names, const std::string& out_csv,
                 const std::string& config_id, double clip_eta) {
  if (oracle == !model_path.empty()) {
    throw std::runtime_error("choose exactly one propensity source: --oracle or --model PATH");
  }
  LoadedSample loaded = read_sample_dir(sample_dir);
  const ConfoundedSample& s = loaded.sample;

  std::vector<double> pihat;
  PropensitySource source;
  if (oracle) {
    pihat = s.true_propensity;
    source = PropensitySource::oracle;
  } else {
    ConvLogisticModel model = load_checkpoint(model_path);
    source = PropensitySource::learned;
    if (s.level == ConfoundingLevel::scene) {
      pihat = predict_propensities(model, s.rasters, clip_eta);
    } else {
      for (const auto& r : s.rasters) {
        const auto per_scene = predict_pixel_propensities(model, r, clip_eta);
        pihat.insert(pihat.end(), per_scene.begin(), per_scene.end());
      }
    }
  }

  std::vector<EstimateResult> rows;
  for (const auto& name : estimator_names) {
    EstimateResult r;
    if (name == "diff" || name == "diff_means") {
      r = diff_in_means(s.treatment, s.outcome);
    } else if (name == "ht" || name == "ipw_ht") {
      r = ipw_ht(s.treatment, s.outcome, pihat);
      r.source = source;
    } else if (name == "hajek" || name == "ipw_hajek") {
      r = ipw_hajek(s.treatment, s.outcome, pihat);
      r.source = source;
    } else {
      throw std::runtime_error("unknown estimator '" + name + "' (use diff, ht, hajek)");
    }
    rows.push_back(r);
    std::cout << to_string(r.id) << '[' << to_string(r.source) << "] tau_hat = "
              << format_double(r.tau_hat) << " (n=" << r.n_units
              << ", ess=" << format_double(r.ess_treated) << '/' << format_double(r.ess_control)
              << ")\n";
  }
  append_estimates_csv(out_csv, rows, loaded.config.seed, config_id);
  return 0;
}

int run_check(int worlds, std::uint64_t seed, const std::string& world_file) {
  bool all_pass = true;
  if (!world_file.empty()) {
    DiscreteWorld w = load_world_file(world_file);
    const double by_u = ate_by_u_adjustment(w);
    const double by_i = ate_by_image_adjustment(w);
    const double by_w = ate_by_ipw_identity(w);
    const bool ok = std::abs(by_u - by_i) < 1e-12 && std::abs(by_u - by_w) < 1e-12;
    all_pass = all_pass && ok;
    std::cout << (ok ? "PASS" : "FAIL") << " world file: ate_by_u=" << format_double(by_u)
              << " ate_by_image=" << format_double(by_i) << " ate_by_ipw=" << format_double(by_w)
              << "\n";
  }
  IdentificationReport rep = run_identification_suite(worlds, seed);
  std::cout << (rep.pass ? "PASS" : "FAIL") << " identification suite: " << rep.worlds_checked
            << " worlds, max |u-image| = " << format_double(rep.max_u_vs_image)
            << ", max |u-ipw| = " << format_double(rep.max_u_vs_ipw)
            << ", max |sum p(U) - 1| = " << format_double(rep.max_marginal_gap) << "\n";
  all_pass = all_pass && rep.pass;

  auto [img_ate, true_ate_val] = residual_confounding_demo(hidden_cause_world(1.0));
  const bool demo_ok = std::abs((img_ate - true_ate_val) - 1.0 / 16.0) < 1e-12;
  std::cout << (demo_ok ? "PASS" : "FAIL")
            << " residual confounding demo: image-adjusted = " << format_double(img_ate)
            << ", true = " << format_double(true_ate_val) << "\n";
  all_pass = all_pass && demo_ok;
  return all_pass ? 0 : 2;
}

int cmd_sweep(const std::string& spec_path, const std::string& out_dir, int threads, bool force,
              bool check_identification) {
  ConfigMap cfg = ConfigMap::parse_file(spec_path);
  ExperimentSpec spec = load_experiment_spec(cfg);
  cfg.finalize();
  if (seed_override(&spec.dgp.seed)) {
    std::cerr << "seed overridden by IMGCONF_SEED = " << spec.dgp.seed << "\n";
  }
  if (threads > 0) spec.threads = threads;

  if (check_identification) {
    const int rc = run_check(100, 20240601, "");
    if (rc != 0) return rc;
  }

  require_fresh_dir(out_dir, force);
  fs::create_directories(out_dir);
  RunManifest manifest;
  manifest.config_hash = cfg.hash();
  manifest.root_seed = spec.dgp.seed;
  manifest.version = kVersion;
  manifest.started = iso8601_utc_now();

  MetricsReport report = monte_carlo(spec);
  write_metrics_csv((fs::path(out_dir) / "metrics.csv").string(), report);
  write_plot_csv((fs::path(out_dir) / "plot.csv").string(), report);
  manifest.outputs = {"metrics.csv", "plot.csv"};
  manifest.finished = iso8601_utc_now();
  write_manifest((fs::path(out_dir) / "manifest.txt").string(), manifest);

  for (const auto& gp : report.points) {
    for (const auto& m : gp.estimators) {
      std::cout << "grid " << format_double(gp.grid_value) << "  " << m.estimator
                << "  rel_bias=" << (m.rel_defined ? format_double(m.rel_bias) : "n/a")
                << "  rel_rmse=" << (m.rel_defined ? format_double(m.rel_rmse) : "n/a")
                << "  R=" << m.n_success << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Image-pattern confounding simulator and IPW estimator"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  auto* sim = app.add_subcommand("simulate", "Generate a confounded sample directory");
  std::string sim_config, sim_out;
  bool sim_force = false;
  sim->add_option("--config", sim_config, "DGP config file")->required();
  sim->add_option("--out", sim_out, "Output sample directory")->required();
  sim->add_flag("--force", sim_force, "Overwrite an existing output directory");

  auto* tr = app.add_subcommand("train", "Train the propensity model on a sample directory");
  std::string tr_sample, tr_config, tr_model, tr_trace;
  bool tr_grad = false, tr_force = false;
  tr->add_option("--sample", tr_sample, "Sample directory")->required();
  tr->add_option("--config", tr_config, "Model/train config file");
  tr->add_option("--model-out", tr_model, "Checkpoint output path")->required();
  tr->add_option("--trace", tr_trace, "Loss trace CSV (default: <model-out>.trace.csv)");
  tr->add_flag("--grad-check", tr_grad, "Run the finite-difference gradient suite first");
  tr->add_flag("--force", tr_force, "Overwrite an existing checkpoint");

  auto* est = app.add_subcommand("estimate", "Compute treatment-effect estimates");
  std::string est_sample, est_model, est_out = "estimates.csv", est_id;
  bool est_oracle = false;
  double est_clip = 0.01;
  std::string est_list = "diff,ht,hajek";
  est->add_option("--sample", est_sample, "Sample directory")->required();
  est->add_option("--model", est_model, "Model checkpoint (learned propensities)");
  est->add_flag("--oracle", est_oracle, "Use the stored oracle propensities");
  est->add_option("--estimators", est_list, "Comma list: diff,ht,hajek");
  est->add_option("--out", est_out, "CSV to append estimate rows to");
  est->add_option("--config-id", est_id, "Free-form id recorded with each row");
  est->add_option("--clip", est_clip, "Propensity clipping bound for learned predictions");

  auto* sw = app.add_subcommand("sweep", "Run a Monte Carlo sweep from a spec file");
  std::string sw_spec, sw_out;
  int sw_threads = 0;
  bool sw_force = false, sw_check = false;
  sw->add_option("--spec", sw_spec, "Experiment spec file")->required();
  sw->add_option("--out", sw_out, "Output directory")->required();
  sw->add_option("--threads", sw_threads, "Worker thread cap (default: machine parallelism)");
  sw->add_flag("--force", sw_force, "Overwrite an existing output directory");
  sw->add_flag("--check-identification", sw_check, "Run the identification suite first");

  auto* ck = app.add_subcommand("check", "Run the identification verification suite");
  int ck_worlds = 100;
  std::uint64_t ck_seed = 20240601;
  std::string ck_world;
  ck->add_option("--worlds", ck_worlds, "Number of random worlds");
  ck->add_option("--seed", ck_seed, "Suite seed");
  ck->add_option("--world", ck_world, "Also check a world file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) return cmd_simulate(sim_config, sim_out, sim_force);
    if (*tr) return cmd_train(tr_sample, tr_config, tr_model, tr_trace, tr_grad, tr_force);
    if (*est) {
      std::vector<std::string> names;
      for (const auto& tok : split_csv_line(est_list)) names.push_back(trim(tok));
      return cmd_estimate(est_sample, est_model, est_oracle, names, est_out, est_id, est_clip);
    }
    if (*sw) return cmd_sweep(sw_spec, sw_out, sw_threads, sw_force, sw_check);
    if (*ck) return run_check(ck_worlds, ck_seed, ck_world);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
