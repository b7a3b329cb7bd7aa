#pragma once

// Test-only finite-difference oracle for the conv-logistic gradients. Kept
// independent of the backward() implementation path: the loss is evaluated
// through forward() + bce_loss() alone.

#include <algorithm>
#include <cmath>
#include <vector>

#include "imgconf/conv_logistic.hpp"

namespace imgconf::testsupport {

inline std::vector<double*> parameter_pointers(ConvLogisticModel& model) {
  std::vector<double*> ptrs;
  for (auto& layer : model.filters) {
    for (auto& w : layer) ptrs.push_back(&w);
  }
  for (auto& w : model.head_w) ptrs.push_back(&w);
  ptrs.push_back(&model.head_b);
  return ptrs;
}

inline std::vector<double> flatten(const Gradients& g) {
  std::vector<double> out;
  for (const auto& layer : g.filters) out.insert(out.end(), layer.begin(), layer.end());
  out.insert(out.end(), g.head_w.begin(), g.head_w.end());
  out.push_back(g.head_b);
  return out;
}

inline double batch_bce(const ConvLogisticModel& model, const std::vector<LabeledImage>& batch) {
  std::vector<double> p(batch.size());
  std::vector<int> t(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    p[i] = forward(model, batch[i].image);
    t[i] = batch[i].treatment;
  }
  return bce_loss(p, t);
}

// Max over parameters of |analytic - central difference| / max(|.|, 1e-6).
inline double max_grad_rel_error(ConvLogisticModel model, const std::vector<LabeledImage>& batch,
                                 double step = 1e-5) {
  const Gradients analytic = backward(model, batch);
  const std::vector<double> ga = flatten(analytic);
  std::vector<double*> ptrs = parameter_pointers(model);
  double worst = 0.0;
  for (std::size_t i = 0; i < ptrs.size(); ++i) {
    const double saved = *ptrs[i];
    *ptrs[i] = saved + step;
    const double up = batch_bce(model, batch);
    *ptrs[i] = saved - step;
    const double down = batch_bce(model, batch);
    *ptrs[i] = saved;
    const double fd = (up - down) / (2.0 * step);
    const double rel = std::abs(ga[i] - fd) / std::max({std::abs(ga[i]), std::abs(fd), 1e-6});
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace imgconf::testsupport
