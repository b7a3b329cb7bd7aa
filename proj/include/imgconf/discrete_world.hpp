#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace imgconf {

class Rng;

// One support atom of a discrete outcome law.
struct OutcomeAtom {
  double y = 0.0;
  double prob = 0.0;
};

// A fully enumerable image-confounding model on tiny binary images. Images
// are indexed by the bitmask of lit pixels in row-major order, so a
// height x width space has 2^(height*width) images. The confounder map
// sends each image to one of a finite list of U values; treatment and
// outcome laws are keyed by the U index. Everything is small enough that
// all expectations below are exact sums.
struct DiscreteWorld {
  int height = 0;
  int width = 0;
  std::vector<double> p_image;                    // one per image, sums to 1
  std::vector<int> u_of_image;                    // image index -> U index
  std::vector<double> u_values;                   // numeric value per U index
  std::vector<double> treat_p;                    // p(T=1 | U=u), strictly inside (0,1)
  std::vector<std::vector<OutcomeAtom>> outcome;  // [t * |U| + u] -> law of Y
  double true_tau = 0.0;

  int n_images() const { return static_cast<int>(p_image.size()); }
  int n_u() const { return static_cast<int>(u_values.size()); }
  const std::vector<OutcomeAtom>& outcome_law(int t, int u) const {
    return outcome[static_cast<std::size_t>(t) * n_u() + u];
  }
  void validate() const;
};

double expected_outcome(const std::vector<OutcomeAtom>& law);

// E[Y(1)] - E[Y(0)] via sum_u p(Y|T=t, U=u) p(U=u), with p(U=u) accumulated
// over the preimage f^-1(u).
double ate_by_u_adjustment(const DiscreteWorld& w);

// Same target summed over the full image space, using p(Y|T, I) = p(Y|T, f(I)).
double ate_by_image_adjustment(const DiscreteWorld& w);

// E[Y(t)] = E[ Y * p(T=t) / p(T=t | I) | T=t ], evaluated exactly with the
// weight left in place rather than cancelled algebraically.
double ate_by_ipw_identity(const DiscreteWorld& w);

// sum_u p(U=u) where each term is assembled from f^-1(u). Equals 1 for any
// valid world; exactly so when the image probabilities are dyadic.
double marginal_u_total(const DiscreteWorld& w);

// Canonical 2x2 instance: uniform images, U = 1 iff either full diagonal is
// lit, p(T=1|U) = 0.3 + 0.4 U, Y = U + tau * T deterministically.
DiscreteWorld diagonal_pair_world(double tau = 1.0);

// Random world for property tests. All probabilities are integer multiples
// of 2^-12 and outcomes are small dyadic rationals, so the adjustment sums
// incur no rounding at all.
DiscreteWorld random_world(Rng& rng, int height = 2, int width = 2);

// World with an extra binary cause R of treatment and outcome, independent
// of the image. Adjusting by the image alone is biased unless R's influence
// on the outcome vanishes; adjusting by (image, R) is exact. With R read as
// an observed covariate X, the same structure exercises the non-empty-X
// form of the identification argument.
struct AugmentedWorld {
  int height = 0;
  int width = 0;
  std::vector<double> p_image;
  std::vector<int> u_of_image;
  std::vector<double> u_values;
  double p_r = 0.0;                               // p(R=1)
  std::vector<double> treat_p;                    // [r * |U| + u]
  std::vector<std::vector<OutcomeAtom>> outcome;  // [(t * 2 + r) * |U| + u]

  int n_images() const { return static_cast<int>(p_image.size()); }
  int n_u() const { return static_cast<int>(u_values.size()); }
  double treat(int u, int r) const { return treat_p[static_cast<std::size_t>(r) * n_u() + u]; }
  const std::vector<OutcomeAtom>& outcome_law(int t, int u, int r) const {
    return outcome[(static_cast<std::size_t>(t) * 2 + r) * n_u() + u];
  }
  void validate() const;
};

double true_ate(const AugmentedWorld& w);
double ate_by_image_adjustment(const AugmentedWorld& w);
double ate_by_image_and_r_adjustment(const AugmentedWorld& w);

// (image-adjusted ATE, true ATE). The two differ exactly when R moves the
// outcome; the demo is about exhibiting the residual bias, not fixing it.
std::pair<double, double> residual_confounding_demo(const AugmentedWorld& w);

// Demo instance: diagonal 2x2 base world; R=1 flips the treatment odds and
// shifts the outcome by outcome_shift.
AugmentedWorld hidden_cause_world(double outcome_shift, double tau = 1.0);

struct IdentificationReport {
  int worlds_checked = 0;
  double max_u_vs_image = 0.0;
  double max_u_vs_ipw = 0.0;
  double max_marginal_gap = 0.0;
  double tolerance = 1e-12;
  bool pass = false;
};

// Property check over n random worlds plus the fixed diagonal world.
IdentificationReport run_identification_suite(int n_random_worlds, std::uint64_t seed);

// Structured text pinning of specific worlds for regression tests; format
// documented next to the parser.
DiscreteWorld load_world_file(const std::string& path);
void save_world_file(const std::string& path, const DiscreteWorld& w);

}  // namespace imgconf
