#include "imgconf/estimators.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "imgconf/csv.hpp"

namespace imgconf {

const char* to_string(EstimatorId id) {
  switch (id) {
    case EstimatorId::diff_means: return "diff_means";
    case EstimatorId::ipw_ht: return "ipw_ht";
    case EstimatorId::ipw_hajek: return "ipw_hajek";
  }
  return "?";
}

const char* to_string(PropensitySource s) {
  switch (s) {
    case PropensitySource::oracle: return "oracle";
    case PropensitySource::learned: return "learned";
    case PropensitySource::supplied: return "supplied";
  }
  return "?";
}

namespace {

void check_ty(std::span<const int> t, std::span<const double> y) {
  if (t.size() != y.size() || t.empty()) {
    throw std::invalid_argument("estimator: T and Y must be nonempty and equal length");
  }
  for (int ti : t) {
    if (ti != 0 && ti != 1) throw std::invalid_argument("estimator: T must be 0/1");
  }
}

void check_pihat(std::span<const double> pihat, std::size_t n) {
  if (pihat.size() != n) throw std::invalid_argument("estimator: pihat length mismatch");
  for (double p : pihat) {
    if (!(p > 0.0 && p < 1.0)) {
      throw std::invalid_argument("estimator: pihat must lie strictly inside (0,1)");
    }
  }
}

double ess(double sum_w, double sum_w2) { return sum_w2 > 0.0 ? sum_w * sum_w / sum_w2 : 0.0; }

}  // namespace

EstimateResult diff_in_means(std::span<const int> t, std::span<const double> y) {
  check_ty(t, y);
  double sum1 = 0.0, sum0 = 0.0;
  std::size_t n1 = 0, n0 = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i]) {
      sum1 += y[i];
      ++n1;
    } else {
      sum0 += y[i];
      ++n0;
    }
  }
  if (n1 == 0 || n0 == 0) throw std::invalid_argument("diff_in_means: a treatment group is empty");
  EstimateResult r;
  r.id = EstimatorId::diff_means;
  r.tau_hat = sum1 / static_cast<double>(n1) - sum0 / static_cast<double>(n0);
  r.n_units = static_cast<int>(t.size());
  r.ess_treated = static_cast<double>(n1);
  r.ess_control = static_cast<double>(n0);
  return r;
}

EstimateResult ipw_ht(std::span<const int> t, std::span<const double> y,
                      std::span<const double> pihat) {
  check_ty(t, y);
  check_pihat(pihat, t.size());
  double acc = 0.0;
  double w1 = 0.0, w1sq = 0.0, w0 = 0.0, w0sq = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i]) {
      const double w = 1.0 / pihat[i];
      acc += y[i] * w;
      w1 += w;
      w1sq += w * w;
    } else {
      const double w = 1.0 / (1.0 - pihat[i]);
      acc -= y[i] * w;
      w0 += w;
      w0sq += w * w;
    }
  }
  EstimateResult r;
  r.id = EstimatorId::ipw_ht;
  r.tau_hat = acc / static_cast<double>(t.size());
  r.n_units = static_cast<int>(t.size());
  r.ess_treated = ess(w1, w1sq);
  r.ess_control = ess(w0, w0sq);
  return r;
}

EstimateResult ipw_hajek(std::span<const int> t, std::span<const double> y,
                         std::span<const double> pihat) {
  check_ty(t, y);
  check_pihat(pihat, t.size());
  double num1 = 0.0, den1 = 0.0, w1sq = 0.0;
  double num0 = 0.0, den0 = 0.0, w0sq = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i]) {
      const double w = 1.0 / pihat[i];
      num1 += w * y[i];
      den1 += w;
      w1sq += w * w;
    } else {
      const double w = 1.0 / (1.0 - pihat[i]);
      num0 += w * y[i];
      den0 += w;
      w0sq += w * w;
    }
  }
  if (den1 == 0.0 || den0 == 0.0) throw std::invalid_argument("ipw_hajek: a treatment group is empty");
  EstimateResult r;
  r.id = EstimatorId::ipw_hajek;
  r.tau_hat = num1 / den1 - num0 / den0;
  r.n_units = static_cast<int>(t.size());
  r.ess_treated = ess(den1, w1sq);
  r.ess_control = ess(den0, w0sq);
  return r;
}

std::vector<BalanceRow> balance_diagnostics(std::span<const int> t,
                                            std::span<const double> pihat,
                                            const std::vector<std::vector<double>>& covariates) {
  if (covariates.empty()) throw std::invalid_argument("balance_diagnostics: no covariates");
  check_pihat(pihat, t.size());
  std::vector<BalanceRow> rows;
  rows.reserve(covariates.size());
  for (const auto& x : covariates) {
    if (x.size() != t.size()) throw std::invalid_argument("balance_diagnostics: covariate length mismatch");
    double raw1 = 0.0, raw0 = 0.0;
    double num1 = 0.0, den1 = 0.0, num0 = 0.0, den0 = 0.0;
    std::size_t n1 = 0, n0 = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (t[i]) {
        raw1 += x[i];
        ++n1;
        const double w = 1.0 / pihat[i];
        num1 += w * x[i];
        den1 += w;
      } else {
        raw0 += x[i];
        ++n0;
        const double w = 1.0 / (1.0 - pihat[i]);
        num0 += w * x[i];
        den0 += w;
      }
    }
    if (n1 == 0 || n0 == 0) throw std::invalid_argument("balance_diagnostics: a treatment group is empty");
    BalanceRow row;
    row.raw_diff = raw1 / static_cast<double>(n1) - raw0 / static_cast<double>(n0);
    row.weighted_diff = num1 / den1 - num0 / den0;
    rows.push_back(row);
  }
  return rows;
}

void append_estimates_csv(const std::string& path, std::span<const EstimateResult> rows,
                          std::uint64_t seed, const std::string& config_id) {
  const bool fresh = !std::filesystem::exists(path);
  std::ofstream out(path, std::ios_base::app);
  if (!out) throw std::runtime_error("cannot open for appending: " + path);
  if (fresh) out << "estimator,source,tau_hat,n,ess_treated,ess_control,seed,config_id\n";
  for (const auto& r : rows) {
    out << to_string(r.id) << ',' << to_string(r.source) << ',' << format_double(r.tau_hat)
        << ',' << r.n_units << ',' << format_double(r.ess_treated) << ','
        << format_double(r.ess_control) << ',' << seed << ',' << config_id << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace imgconf
