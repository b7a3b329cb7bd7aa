#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace imgconf {

enum class EstimatorId { diff_means, ipw_ht, ipw_hajek };
enum class PropensitySource { oracle, learned, supplied };

const char* to_string(EstimatorId id);
const char* to_string(PropensitySource s);

struct EstimateResult {
  EstimatorId id = EstimatorId::diff_means;
  PropensitySource source = PropensitySource::supplied;
  double tau_hat = 0.0;
  int n_units = 0;
  // (sum w)^2 / sum w^2 within each arm; equals the group count when all
  // weights are 1.
  double ess_treated = 0.0;
  double ess_control = 0.0;
};

// mean(Y | T=1) - mean(Y | T=0). Both groups must be nonempty.
EstimateResult diff_in_means(std::span<const int> t, std::span<const double> y);

// Horvitz-Thompson:
//   tau_hat = (1/n) sum_i { T_i Y_i / pihat_i - (1 - T_i) Y_i / (1 - pihat_i) }.
// Every pihat must lie strictly inside (0,1); clipping is the caller's job.
EstimateResult ipw_ht(std::span<const int> t, std::span<const double> y,
                      std::span<const double> pihat);

// Hajek: per-arm normalized weights,
//   sum(T Y / pihat) / sum(T / pihat) - sum((1-T) Y / (1-pihat)) / sum((1-T) / (1-pihat)).
EstimateResult ipw_hajek(std::span<const int> t, std::span<const double> y,
                         std::span<const double> pihat);

struct BalanceRow {
  double raw_diff = 0.0;       // mean(X | T=1) - mean(X | T=0)
  double weighted_diff = 0.0;  // Hajek-weighted group mean difference
};

// One row per covariate column.
std::vector<BalanceRow> balance_diagnostics(std::span<const int> t,
                                            std::span<const double> pihat,
                                            const std::vector<std::vector<double>>& covariates);

// Appends rows to a results CSV (header written when the file is new):
// estimator,source,tau_hat,n,ess_treated,ess_control,seed,config_id
void append_estimates_csv(const std::string& path, std::span<const EstimateResult> rows,
                          std::uint64_t seed, const std::string& config_id);

}  // namespace imgconf
