#pragma once

#include <span>
#include <string>
#include <vector>

#include "imgconf/conv_logistic.hpp"
#include "imgconf/dgp.hpp"
#include "imgconf/estimators.hpp"

namespace imgconf {

enum class SweepAxis { none, true_width, noise_sigma };

const char* to_string(SweepAxis axis);
SweepAxis sweep_axis_from_string(const std::string& s);

struct EstimatorRequest {
  EstimatorId id = EstimatorId::diff_means;
  PropensitySource source = PropensitySource::oracle;  // ignored for diff_means
};

// Canonical key, e.g. "diff_means", "ipw_hajek_oracle", "ipw_ht_learned".
std::string to_key(const EstimatorRequest& req);
// Accepts the canonical keys plus the short forms diff, ht_oracle,
// hajek_oracle, ht_learned, hajek_learned.
EstimatorRequest estimator_request_from_string(const std::string& s);

struct ExperimentSpec {
  DgpConfig dgp;
  int z_est = 8;           // estimating kernel width (model kernel size)
  int replications = 200;
  std::vector<EstimatorRequest> estimators;
  ModelConfig model;       // kernel_size and input_channels are overridden per spec
  TrainConfig train;       // seed is derived per replication
  SweepAxis axis = SweepAxis::none;
  std::vector<double> grid;  // z_true values or sigma_u^2 values
  double clip_eta = 0.01;
  int threads = 0;  // 0 = hardware concurrency

  void validate() const;
};

struct ReplicationResult {
  std::vector<double> tau;  // aligned with spec.estimators; NaN marks failure
  double tau_baseline = 0.0;
  bool ok = false;
  std::string error;
};

// One end-to-end replication at one grid point: images -> confounder ->
// sample -> (train when a learned estimator asks for it) -> estimates.
// Deterministic given (dgp.seed, rep_index); the grid point does not enter
// the stream derivation, so the image corpus is shared across grid points.
ReplicationResult run_replication(const ExperimentSpec& spec, double grid_value, int rep_index);

struct EstimatorMetrics {
  std::string estimator;
  int n_success = 0;
  double bias = 0.0;
  double rmse = 0.0;
  double se_bias = 0.0;
  double se_rmse = 0.0;
  bool rel_defined = false;
  double rel_bias = 0.0;
  double rel_rmse = 0.0;
  double se_rel_bias = 0.0;
  double se_rel_rmse = 0.0;
  std::vector<double> taus;  // per replication, NaN where failed
};

struct GridPointMetrics {
  double grid_value = 0.0;
  int n_failed = 0;  // replications with any failed estimator
  std::vector<double> baseline_taus;
  std::vector<EstimatorMetrics> estimators;
};

struct MetricsReport {
  SweepAxis axis = SweepAxis::none;
  double tau_true = 0.0;
  std::vector<GridPointMetrics> points;
};

// Absolute bias |mean(tau_hat) - tau| and RMSE sqrt(mean((tau_hat - tau)^2))
// per estimator, normalized by the same-replication-set diff-in-means
// values; Monte Carlo standard errors by leave-one-replication-out
// jackknife (which respects the pairing with the baseline).
MetricsReport monte_carlo(const ExperimentSpec& spec);

MetricsReport kernel_width_sweep(const ExperimentSpec& spec);  // axis = true_width
MetricsReport noise_sweep(const ExperimentSpec& spec);         // axis = noise_sigma

// grid_point,estimator,bias,rmse,rel_bias,rel_rmse,se_bias,se_rmse,R_effective,rel_defined
void write_metrics_csv(const std::string& path, const MetricsReport& report);
// Long format mirroring the figure axes: x,estimator,metric,value,se
void write_plot_csv(const std::string& path, const MetricsReport& report);

// Spearman rank correlation with average ranks on ties.
double spearman_rank_correlation(std::span<const double> x, std::span<const double> y);

// Full spec from a parsed config: [dgp], [model], [train], [experiment].
// Unknown keys are left for the caller's finalize() to reject.
ExperimentSpec load_experiment_spec(class ConfigMap& cfg);

}  // namespace imgconf
