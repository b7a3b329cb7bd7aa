#include "imgconf/discrete_world.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "imgconf/csv.hpp"
#include "imgconf/rng.hpp"

namespace imgconf {

namespace {

void check_prob_vector(const std::vector<double>& p, const char* what) {
  double total = 0.0;
  for (double v : p) {
    if (v < 0.0 || !std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": bad probability");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument(std::string(what) + ": probabilities sum to " + format_double(total));
  }
}

void check_outcome_law(const std::vector<OutcomeAtom>& law, const char* what) {
  if (law.empty()) throw std::invalid_argument(std::string(what) + ": empty outcome law");
  double total = 0.0;
  for (const auto& a : law) {
    if (a.prob < 0.0 || !std::isfinite(a.prob) || !std::isfinite(a.y)) {
      throw std::invalid_argument(std::string(what) + ": bad outcome atom");
    }
    total += a.prob;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw std::invalid_argument(std::string(what) + ": outcome law sums to " + format_double(total));
  }
}

}  // namespace

void DiscreteWorld::validate() const {
  if (height < 1 || width < 1 || height * width > 6) {
    throw std::invalid_argument("DiscreteWorld: image space must have 1..6 pixels");
  }
  const std::size_t expected = std::size_t{1} << (height * width);
  if (p_image.size() != expected || u_of_image.size() != expected) {
    throw std::invalid_argument("DiscreteWorld: image tables must cover all 2^(H*W) images");
  }
  check_prob_vector(p_image, "DiscreteWorld.p_image");
  if (u_values.empty() || treat_p.size() != u_values.size() ||
      outcome.size() != 2 * u_values.size()) {
    throw std::invalid_argument("DiscreteWorld: U tables inconsistent");
  }
  for (int u : u_of_image) {
    if (u < 0 || u >= n_u()) throw std::invalid_argument("DiscreteWorld: f maps outside U");
  }
  for (double p : treat_p) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("DiscreteWorld: p(T=1|U) must be inside (0,1)");
  }
  for (const auto& law : outcome) check_outcome_law(law, "DiscreteWorld.outcome");
}

double expected_outcome(const std::vector<OutcomeAtom>& law) {
  double e = 0.0;
  for (const auto& a : law) e += a.prob * a.y;
  return e;
}

double marginal_u_total(const DiscreteWorld& w) {
  double total = 0.0;
  for (int u = 0; u < w.n_u(); ++u) {
    double pu = 0.0;
    for (int i = 0; i < w.n_images(); ++i) {
      if (w.u_of_image[i] == u) pu += w.p_image[i];
    }
    total += pu;
  }
  return total;
}

double ate_by_u_adjustment(const DiscreteWorld& w) {
  double ate = 0.0;
  for (int u = 0; u < w.n_u(); ++u) {
    double pu = 0.0;
    for (int i = 0; i < w.n_images(); ++i) {
      if (w.u_of_image[i] == u) pu += w.p_image[i];
    }
    ate += pu * (expected_outcome(w.outcome_law(1, u)) - expected_outcome(w.outcome_law(0, u)));
  }
  return ate;
}

double ate_by_image_adjustment(const DiscreteWorld& w) {
  double ate = 0.0;
  for (int i = 0; i < w.n_images(); ++i) {
    const int u = w.u_of_image[i];
    ate += w.p_image[i] *
           (expected_outcome(w.outcome_law(1, u)) - expected_outcome(w.outcome_law(0, u)));
  }
  return ate;
}

double ate_by_ipw_identity(const DiscreteWorld& w) {
  // The weight p(T=t) / p(T=t|I) is carried through the sums literally so
  // the computation follows the identity rather than its cancelled form.
  double mean_t[2] = {0.0, 0.0};
  double p_t[2] = {0.0, 0.0};
  for (int i = 0; i < w.n_images(); ++i) {
    const double p1 = w.treat_p[w.u_of_image[i]];
    p_t[1] += w.p_image[i] * p1;
    p_t[0] += w.p_image[i] * (1.0 - p1);
  }
  for (int t = 0; t < 2; ++t) {
    double acc = 0.0;
    for (int i = 0; i < w.n_images(); ++i) {
      const int u = w.u_of_image[i];
      const double pt_given_i = t == 1 ? w.treat_p[u] : 1.0 - w.treat_p[u];
      const double weight = p_t[t] / pt_given_i;
      for (const auto& atom : w.outcome_law(t, u)) {
        acc += w.p_image[i] * pt_given_i * atom.prob * atom.y * weight;
      }
    }
    mean_t[t] = acc / p_t[t];
  }
  return mean_t[1] - mean_t[0];
}

DiscreteWorld diagonal_pair_world(double tau) {
  DiscreteWorld w;
  w.height = 2;
  w.width = 2;
  w.p_image.assign(16, 1.0 / 16.0);
  w.u_of_image.resize(16);
  w.u_values = {0.0, 1.0};
  // Pixel bit order, row-major: (0,0)=1, (0,1)=2, (1,0)=4, (1,1)=8.
  for (int i = 0; i < 16; ++i) {
    const bool main_diag = (i & 1) && (i & 8);
    const bool anti_diag = (i & 2) && (i & 4);
    w.u_of_image[i] = (main_diag || anti_diag) ? 1 : 0;
  }
  w.treat_p = {0.3, 0.7};  // 0.3 + 0.4 * U
  w.outcome.resize(4);
  for (int t = 0; t < 2; ++t) {
    for (int u = 0; u < 2; ++u) {
      w.outcome[static_cast<std::size_t>(t) * 2 + u] = {{w.u_values[u] + tau * t, 1.0}};
    }
  }
  w.true_tau = tau;
  w.validate();
  return w;
}

DiscreteWorld random_world(Rng& rng, int height, int width) {
  // Dyadic construction: image probabilities are k/4096 with the k summing
  // to 4096, outcome probabilities are k/64, outcome values m/4. Partial
  // sums and products then stay exactly representable.
  constexpr int kImageDenom = 4096;
  constexpr int kLawDenom = 64;

  DiscreteWorld w;
  w.height = height;
  w.width = width;
  const int n_images = 1 << (height * width);

  std::vector<int> weight(n_images, 0);
  for (int unit = 0; unit < kImageDenom; ++unit) {
    weight[static_cast<int>(rng.below(n_images))]++;
  }
  w.p_image.resize(n_images);
  for (int i = 0; i < n_images; ++i) w.p_image[i] = static_cast<double>(weight[i]) / kImageDenom;

  const int n_u = 1 + static_cast<int>(rng.below(3));
  w.u_values.resize(n_u);
  for (int u = 0; u < n_u; ++u) w.u_values[u] = static_cast<double>(u);
  w.u_of_image.resize(n_images);
  for (int i = 0; i < n_images; ++i) w.u_of_image[i] = static_cast<int>(rng.below(n_u));
  // Guarantee every U value has a preimage so no law is vacuous.
  for (int u = 0; u < n_u; ++u) w.u_of_image[u % n_images] = u;

  w.treat_p.resize(n_u);
  for (int u = 0; u < n_u; ++u) {
    w.treat_p[u] = static_cast<double>(8 + static_cast<int>(rng.below(49))) / kLawDenom;  // [1/8, 7/8]
  }

  w.outcome.resize(2 * static_cast<std::size_t>(n_u));
  for (auto& law : w.outcome) {
    const int support = 1 + static_cast<int>(rng.below(3));
    std::vector<int> lw(support, 0);
    for (int unit = 0; unit < kLawDenom; ++unit) lw[static_cast<int>(rng.below(support))]++;
    law.clear();
    for (int s = 0; s < support; ++s) {
      const double y = static_cast<double>(static_cast<int>(rng.below(17)) - 8) / 4.0;
      law.push_back({y, static_cast<double>(lw[s]) / kLawDenom});
    }
  }

  w.true_tau = ate_by_u_adjustment(w);
  w.validate();
  return w;
}

void AugmentedWorld::validate() const {
  if (height < 1 || width < 1 || height * width > 6) {
    throw std::invalid_argument("AugmentedWorld: image space must have 1..6 pixels");
  }
  const std::size_t expected = std::size_t{1} << (height * width);
  if (p_image.size() != expected || u_of_image.size() != expected) {
    throw std::invalid_argument("AugmentedWorld: image tables must cover all images");
  }
  check_prob_vector(p_image, "AugmentedWorld.p_image");
  if (!(p_r >= 0.0 && p_r <= 1.0)) throw std::invalid_argument("AugmentedWorld: bad p_r");
  if (u_values.empty() || treat_p.size() != 2 * u_values.size() ||
      outcome.size() != 4 * u_values.size()) {
    throw std::invalid_argument("AugmentedWorld: U/R tables inconsistent");
  }
  for (double p : treat_p) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("AugmentedWorld: p(T=1|U,R) must be inside (0,1)");
  }
  for (const auto& law : outcome) check_outcome_law(law, "AugmentedWorld.outcome");
}

double true_ate(const AugmentedWorld& w) {
  // Adjustment by the full confounder pair (U, R), with p(U=u) assembled
  // from the preimage of f as in the deterministic case.
  double ate = 0.0;
  for (int u = 0; u < w.n_u(); ++u) {
    double pu = 0.0;
    for (int i = 0; i < w.n_images(); ++i) {
      if (w.u_of_image[i] == u) pu += w.p_image[i];
    }
    for (int r = 0; r < 2; ++r) {
      const double pr = r == 1 ? w.p_r : 1.0 - w.p_r;
      ate += pu * pr *
             (expected_outcome(w.outcome_law(1, u, r)) - expected_outcome(w.outcome_law(0, u, r)));
    }
  }
  return ate;
}

double ate_by_image_adjustment(const AugmentedWorld& w) {
  // Adjusting by I alone: inside each (T=t, I=i) cell, R follows
  // p(r | t, i) ∝ p(r) p(t | u, r), which tilts the conditional outcome.
  double ate = 0.0;
  for (int i = 0; i < w.n_images(); ++i) {
    const int u = w.u_of_image[i];
    double cond_mean[2];
    for (int t = 0; t < 2; ++t) {
      double num = 0.0, den = 0.0;
      for (int r = 0; r < 2; ++r) {
        const double pr = r == 1 ? w.p_r : 1.0 - w.p_r;
        const double pt = t == 1 ? w.treat(u, r) : 1.0 - w.treat(u, r);
        num += pr * pt * expected_outcome(w.outcome_law(t, u, r));
        den += pr * pt;
      }
      cond_mean[t] = num / den;
    }
    ate += w.p_image[i] * (cond_mean[1] - cond_mean[0]);
  }
  return ate;
}

double ate_by_image_and_r_adjustment(const AugmentedWorld& w) {
  double ate = 0.0;
  for (int i = 0; i < w.n_images(); ++i) {
    const int u = w.u_of_image[i];
    for (int r = 0; r < 2; ++r) {
      const double pr = r == 1 ? w.p_r : 1.0 - w.p_r;
      ate += w.p_image[i] * pr *
             (expected_outcome(w.outcome_law(1, u, r)) - expected_outcome(w.outcome_law(0, u, r)));
    }
  }
  return ate;
}

std::pair<double, double> residual_confounding_demo(const AugmentedWorld& w) {
  return {ate_by_image_adjustment(w), true_ate(w)};
}

AugmentedWorld hidden_cause_world(double outcome_shift, double tau) {
  const DiscreteWorld base = diagonal_pair_world(tau);
  AugmentedWorld w;
  w.height = base.height;
  w.width = base.width;
  w.p_image = base.p_image;
  w.u_of_image = base.u_of_image;
  w.u_values = base.u_values;
  w.p_r = 0.5;
  const int n_u = base.n_u();
  // Dyadic treatment law so the zero-shift case closes exactly:
  // p(T=1 | u, r=0) = 0.25 + 0.5 u, flipped to 0.75 - 0.5 u under r=1.
  w.treat_p.resize(2 * static_cast<std::size_t>(n_u));
  for (int u = 0; u < n_u; ++u) {
    w.treat_p[u] = 0.25 + 0.5 * w.u_values[u];
    w.treat_p[n_u + u] = 1.0 - w.treat_p[u];
  }
  w.outcome.resize(4 * static_cast<std::size_t>(n_u));
  for (int t = 0; t < 2; ++t) {
    for (int r = 0; r < 2; ++r) {
      for (int u = 0; u < n_u; ++u) {
        w.outcome[(static_cast<std::size_t>(t) * 2 + r) * n_u + u] = {
            {w.u_values[u] + tau * t + outcome_shift * r, 1.0}};
      }
    }
  }
  w.validate();
  return w;
}

IdentificationReport run_identification_suite(int n_random_worlds, std::uint64_t seed) {
  IdentificationReport rep;
  Rng rng(seed);
  auto check = [&rep](const DiscreteWorld& w) {
    const double by_u = ate_by_u_adjustment(w);
    const double by_i = ate_by_image_adjustment(w);
    const double by_w = ate_by_ipw_identity(w);
    rep.max_u_vs_image = std::max(rep.max_u_vs_image, std::abs(by_u - by_i));
    rep.max_u_vs_ipw = std::max(rep.max_u_vs_ipw, std::abs(by_u - by_w));
    rep.max_marginal_gap = std::max(rep.max_marginal_gap, std::abs(marginal_u_total(w) - 1.0));
    rep.worlds_checked++;
  };
  check(diagonal_pair_world());
  for (int k = 0; k < n_random_worlds; ++k) {
    // Alternate between 2x2 and 2x3 image spaces.
    check(k % 2 == 0 ? random_world(rng, 2, 2) : random_world(rng, 2, 3));
  }
  rep.pass = rep.max_u_vs_image < rep.tolerance && rep.max_u_vs_ipw < rep.tolerance &&
             rep.max_marginal_gap < rep.tolerance;
  return rep;
}

// World file format, strict key = value lines with [section] headers and #
// comments:
//   [world]    height, width, tau
//   [p_image]  either "uniform = true" or one "<image index> = <prob>" per image
//   [f]        one "<image index> = <u index>" per image
//   [u_values] one "<u index> = <value>" per U level
//   [treatment] one "<u index> = <p(T=1|u)>" per U level
//   [outcome]  one "<t>,<u> = y:prob[;y:prob...]" per (t, u) pair
DiscreteWorld load_world_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open world file: " + path);

  DiscreteWorld w;
  std::string section;
  std::map<int, double> p_entries;
  std::map<int, int> f_entries;
  std::map<int, double> u_entries;
  std::map<int, double> t_entries;
  std::map<std::pair<int, int>, std::vector<OutcomeAtom>> o_entries;
  bool uniform = false;

  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string s = trim(line);
    if (s.empty() || s[0] == '#') continue;
    if (s.front() == '[' && s.back() == ']') {
      section = trim(s.substr(1, s.size() - 2));
      continue;
    }
    const auto eq = s.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(s.substr(0, eq));
    const std::string val = trim(s.substr(eq + 1));
    try {
      if (section == "world") {
        if (key == "height") w.height = static_cast<int>(parse_int(val));
        else if (key == "width") w.width = static_cast<int>(parse_int(val));
        else if (key == "tau") w.true_tau = parse_double(val);
        else throw std::runtime_error("unknown key '" + key + "' in [world]");
      } else if (section == "p_image") {
        if (key == "uniform") uniform = (val == "true" || val == "1");
        else p_entries[static_cast<int>(parse_int(key))] = parse_double(val);
      } else if (section == "f") {
        f_entries[static_cast<int>(parse_int(key))] = static_cast<int>(parse_int(val));
      } else if (section == "u_values") {
        u_entries[static_cast<int>(parse_int(key))] = parse_double(val);
      } else if (section == "treatment") {
        t_entries[static_cast<int>(parse_int(key))] = parse_double(val);
      } else if (section == "outcome") {
        auto parts = split_csv_line(key);
        if (parts.size() != 2) throw std::runtime_error("outcome key must be 't,u'");
        std::vector<OutcomeAtom> law;
        std::stringstream atoms(val);
        std::string atom;
        while (std::getline(atoms, atom, ';')) {
          const auto colon = atom.find(':');
          if (colon == std::string::npos) throw std::runtime_error("outcome atom must be y:prob");
          law.push_back({parse_double(atom.substr(0, colon)), parse_double(atom.substr(colon + 1))});
        }
        o_entries[{static_cast<int>(parse_int(parts[0])), static_cast<int>(parse_int(parts[1]))}] = law;
      } else {
        throw std::runtime_error("unknown section [" + section + "]");
      }
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }

  const int n_images = 1 << (w.height * w.width);
  w.p_image.assign(n_images, 0.0);
  if (uniform) {
    std::fill(w.p_image.begin(), w.p_image.end(), 1.0 / n_images);
  } else {
    for (const auto& [i, p] : p_entries) {
      if (i < 0 || i >= n_images) throw std::runtime_error(path + ": image index out of range");
      w.p_image[i] = p;
    }
  }
  w.u_of_image.assign(n_images, 0);
  for (const auto& [i, u] : f_entries) {
    if (i < 0 || i >= n_images) throw std::runtime_error(path + ": f index out of range");
    w.u_of_image[i] = u;
  }
  w.u_values.resize(u_entries.size());
  for (const auto& [u, v] : u_entries) {
    if (u < 0 || u >= static_cast<int>(u_entries.size())) throw std::runtime_error(path + ": u index gap");
    w.u_values[u] = v;
  }
  w.treat_p.resize(w.u_values.size(), 0.5);
  for (const auto& [u, p] : t_entries) {
    if (u < 0 || u >= w.n_u()) throw std::runtime_error(path + ": treatment u index out of range");
    w.treat_p[u] = p;
  }
  w.outcome.assign(2 * w.u_values.size(), {});
  for (const auto& [tu, law] : o_entries) {
    const auto [t, u] = tu;
    if (t < 0 || t > 1 || u < 0 || u >= w.n_u()) throw std::runtime_error(path + ": outcome index out of range");
    w.outcome[static_cast<std::size_t>(t) * w.n_u() + u] = law;
  }
  w.validate();
  return w;
}

void save_world_file(const std::string& path, const DiscreteWorld& w) {
  w.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "[world]\nheight = " << w.height << "\nwidth = " << w.width
      << "\ntau = " << format_double(w.true_tau) << "\n\n[p_image]\n";
  for (int i = 0; i < w.n_images(); ++i) {
    out << i << " = " << format_double(w.p_image[i]) << '\n';
  }
  out << "\n[f]\n";
  for (int i = 0; i < w.n_images(); ++i) out << i << " = " << w.u_of_image[i] << '\n';
  out << "\n[u_values]\n";
  for (int u = 0; u < w.n_u(); ++u) out << u << " = " << format_double(w.u_values[u]) << '\n';
  out << "\n[treatment]\n";
  for (int u = 0; u < w.n_u(); ++u) out << u << " = " << format_double(w.treat_p[u]) << '\n';
  out << "\n[outcome]\n";
  for (int t = 0; t < 2; ++t) {
    for (int u = 0; u < w.n_u(); ++u) {
      out << t << ',' << u << " = ";
      const auto& law = w.outcome_law(t, u);
      for (std::size_t a = 0; a < law.size(); ++a) {
        if (a) out << ';';
        out << format_double(law[a].y) << ':' << format_double(law[a].prob);
      }
      out << '\n';
    }
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace imgconf
