#include "imgconf/conv_logistic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

#include "imgconf/config.hpp"
#include "imgconf/csv.hpp"
#include "imgconf/dgp.hpp"
#include "imgconf/rng.hpp"

namespace imgconf {

const char* to_string(PoolKind p) { return p == PoolKind::none ? "none" : "max"; }
const char* to_string(AdamVariant v) { return v == AdamVariant::adam ? "adam" : "nadam"; }
const char* to_string(Augmentation a) { return a == Augmentation::none ? "none" : "reflect"; }

PoolKind pool_kind_from_string(const std::string& s) {
  if (s == "none") return PoolKind::none;
  if (s == "max") return PoolKind::max;
  throw std::invalid_argument("pool must be 'none' or 'max', got '" + s + "'");
}

AdamVariant adam_variant_from_string(const std::string& s) {
  if (s == "adam") return AdamVariant::adam;
  if (s == "nadam") return AdamVariant::nadam;
  throw std::invalid_argument("optimizer must be 'adam' or 'nadam', got '" + s + "'");
}

Augmentation augmentation_from_string(const std::string& s) {
  if (s == "none") return Augmentation::none;
  if (s == "reflect") return Augmentation::reflect;
  throw std::invalid_argument("augmentation must be 'none' or 'reflect', got '" + s + "'");
}

void ModelConfig::validate() const {
  if (depth < 1) throw std::invalid_argument("ModelConfig: depth must be >= 1");
  if (filters < 1) throw std::invalid_argument("ModelConfig: filters must be >= 1");
  if (kernel_size < 1) throw std::invalid_argument("ModelConfig: kernel_size must be >= 1");
  if (input_channels < 1) throw std::invalid_argument("ModelConfig: input_channels must be >= 1");
  if (pool_size < 0) throw std::invalid_argument("ModelConfig: pool_size must be >= 0");
}

void TrainConfig::validate() const {
  // learning_rate 0 is allowed: it makes the update a no-op, which the
  // contract relies on for the null-update check.
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("TrainConfig: learning_rate must be >= 0");
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
}

ConvLogisticModel ConvLogisticModel::init(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  ConvLogisticModel m;
  m.cfg = cfg;
  m.filters.resize(cfg.depth);
  const int z2 = cfg.kernel_size * cfg.kernel_size;
  for (int l = 0; l < cfg.depth; ++l) {
    const int fan_in = m.layer_in_channels(l) * z2;
    const int fan_out = cfg.filters * z2;
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    m.filters[l].resize(m.layer_filter_count(l));
    for (double& w : m.filters[l]) w = (2.0 * rng.uniform() - 1.0) * limit;
  }
  const double head_limit = std::sqrt(6.0 / (cfg.filters + 1));
  m.head_w.resize(cfg.filters);
  for (double& w : m.head_w) w = (2.0 * rng.uniform() - 1.0) * head_limit;
  m.head_b = 0.0;
  return m;
}

int ConvLogisticModel::n_parameters() const {
  std::size_t n = head_w.size() + 1;
  for (const auto& f : filters) n += f.size();
  return static_cast<int>(n);
}

void ConvLogisticModel::validate() const {
  cfg.validate();
  if (static_cast<int>(filters.size()) != cfg.depth) {
    throw std::invalid_argument("ConvLogisticModel: layer count mismatch");
  }
  for (int l = 0; l < cfg.depth; ++l) {
    if (filters[l].size() != layer_filter_count(l)) {
      throw std::invalid_argument("ConvLogisticModel: filter block size mismatch");
    }
    for (double w : filters[l]) {
      if (!std::isfinite(w)) throw std::invalid_argument("ConvLogisticModel: non-finite filter");
    }
  }
  if (static_cast<int>(head_w.size()) != cfg.filters) {
    throw std::invalid_argument("ConvLogisticModel: head width mismatch");
  }
  for (double w : head_w) {
    if (!std::isfinite(w)) throw std::invalid_argument("ConvLogisticModel: non-finite head weight");
  }
  if (!std::isfinite(head_b)) throw std::invalid_argument("ConvLogisticModel: non-finite head bias");
}

Gradients Gradients::zeros_like(const ConvLogisticModel& model) {
  Gradients g;
  g.filters.resize(model.filters.size());
  for (std::size_t l = 0; l < model.filters.size(); ++l) {
    g.filters[l].assign(model.filters[l].size(), 0.0);
  }
  g.head_w.assign(model.head_w.size(), 0.0);
  g.head_b = 0.0;
  return g;
}

namespace {

// Filter index: ((k * C_in + c) * z + a) * z + b.
std::size_t fidx(int k, int c, int a, int b, int c_in, int z) {
  return ((static_cast<std::size_t>(k) * c_in + c) * z + a) * z + b;
}

// Same-padded correlation, no bias: out(h, w, k) = sum_{c,a,b} f * in.
Raster conv_same(const Raster& in, const std::vector<double>& filt, int k_out, int z) {
  const int H = in.height, W = in.width, C = in.channels;
  const int off = z / 2;
  Raster out(H, W, k_out);
  for (int k = 0; k < k_out; ++k) {
    for (int h = 0; h < H; ++h) {
      const int a_lo = std::max(0, off - h);
      const int a_hi = std::min(z, H + off - h);
      for (int w = 0; w < W; ++w) {
        const int b_lo = std::max(0, off - w);
        const int b_hi = std::min(z, W + off - w);
        double acc = 0.0;
        for (int c = 0; c < C; ++c) {
          for (int a = a_lo; a < a_hi; ++a) {
            const int hh = h + a - off;
            for (int b = b_lo; b < b_hi; ++b) {
              acc += filt[fidx(k, c, a, b, C, z)] * in.at(hh, w + b - off, c);
            }
          }
        }
        out.at(h, w, k) = acc;
      }
    }
  }
  return out;
}

struct LayerCache {
  Raster pre;               // conv output before ReLU
  Raster post;              // after ReLU and pooling; input to the next layer
  std::vector<int> argmax;  // per pooled cell: flattened (h * W + w) source position
  int relu_h = 0, relu_w = 0;
};

struct ForwardCache {
  std::vector<LayerCache> layers;
  std::vector<double> features;
  double logit = 0.0;
  double p = 0.5;
};

int pool_window(const ModelConfig& cfg, int extent) {
  return cfg.pool_size == 0 ? extent : std::min(cfg.pool_size, extent);
}

ForwardCache forward_pass(const ConvLogisticModel& model, const Raster& input) {
  if (input.channels != model.cfg.input_channels) {
    throw std::invalid_argument("forward: input channel count does not match the model");
  }
  const ModelConfig& cfg = model.cfg;
  ForwardCache cache;
  cache.layers.resize(cfg.depth);

  const Raster* cur = &input;
  for (int l = 0; l < cfg.depth; ++l) {
    LayerCache& lc = cache.layers[l];
    lc.pre = conv_same(*cur, model.filters[l], cfg.filters, cfg.kernel_size);
    Raster relu = lc.pre;
    for (double& v : relu.values) v = v > 0.0 ? v : 0.0;
    lc.relu_h = relu.height;
    lc.relu_w = relu.width;

    if (cfg.pool == PoolKind::max) {
      const int ph = pool_window(cfg, relu.height);
      const int pw = pool_window(cfg, relu.width);
      const int oh = (relu.height + ph - 1) / ph;
      const int ow = (relu.width + pw - 1) / pw;
      Raster pooled(oh, ow, cfg.filters);
      lc.argmax.assign(static_cast<std::size_t>(oh) * ow * cfg.filters, 0);
      for (int k = 0; k < cfg.filters; ++k) {
        for (int i = 0; i < oh; ++i) {
          for (int j = 0; j < ow; ++j) {
            double best = -std::numeric_limits<double>::infinity();
            int best_pos = 0;
            for (int h = i * ph; h < std::min((i + 1) * ph, relu.height); ++h) {
              for (int w = j * pw; w < std::min((j + 1) * pw, relu.width); ++w) {
                const double v = relu.at(h, w, k);
                if (v > best) {
                  best = v;
                  best_pos = h * relu.width + w;
                }
              }
            }
            pooled.at(i, j, k) = best;
            lc.argmax[pooled.idx(i, j, k)] = best_pos;
          }
        }
      }
      lc.post = std::move(pooled);
    } else {
      lc.post = std::move(relu);
    }
    cur = &lc.post;
  }

  const Raster& last = cache.layers.back().post;
  const double inv_positions = 1.0 / (static_cast<double>(last.height) * last.width);
  cache.features.assign(cfg.filters, 0.0);
  for (int h = 0; h < last.height; ++h) {
    for (int w = 0; w < last.width; ++w) {
      for (int k = 0; k < cfg.filters; ++k) cache.features[k] += last.at(h, w, k);
    }
  }
  for (double& f : cache.features) f *= inv_positions;

  double logit = model.head_b;
  for (int k = 0; k < cfg.filters; ++k) logit += model.head_w[k] * cache.features[k];
  cache.logit = logit;
  cache.p = logistic(logit);
  return cache;
}

// Accumulate this example's contribution, scaled by `scale`, into grads.
void backward_example(const ConvLogisticModel& model, const Raster& input,
                      const ForwardCache& cache, int treatment, double scale, Gradients& grads) {
  const ModelConfig& cfg = model.cfg;
  const double dlogit = scale * (cache.p - treatment);

  grads.head_b += dlogit;
  for (int k = 0; k < cfg.filters; ++k) grads.head_w[k] += dlogit * cache.features[k];

  // Gradient flowing into the last post-pool activations (global mean).
  const Raster& last = cache.layers.back().post;
  const double inv_positions = 1.0 / (static_cast<double>(last.height) * last.width);
  Raster dpost(last.height, last.width, cfg.filters);
  for (int h = 0; h < last.height; ++h) {
    for (int w = 0; w < last.width; ++w) {
      for (int k = 0; k < cfg.filters; ++k) {
        dpost.at(h, w, k) = dlogit * model.head_w[k] * inv_positions;
      }
    }
  }

  const int z = cfg.kernel_size, off = z / 2;
  for (int l = cfg.depth - 1; l >= 0; --l) {
    const LayerCache& lc = cache.layers[l];
    const Raster& layer_in = l == 0 ? input : cache.layers[l - 1].post;

    // Undo pooling: route each pooled gradient to its argmax position.
    Raster dpre(lc.relu_h, lc.relu_w, cfg.filters);
    if (cfg.pool == PoolKind::max) {
      for (int i = 0; i < dpost.height; ++i) {
        for (int j = 0; j < dpost.width; ++j) {
          for (int k = 0; k < cfg.filters; ++k) {
            const int pos = lc.argmax[dpost.idx(i, j, k)];
            dpre.at(pos / lc.relu_w, pos % lc.relu_w, k) += dpost.at(i, j, k);
          }
        }
      }
    } else {
      dpre = dpost;
    }
    // ReLU mask on the pre-activations.
    for (int h = 0; h < dpre.height; ++h) {
      for (int w = 0; w < dpre.width; ++w) {
        for (int k = 0; k < cfg.filters; ++k) {
          if (lc.pre.at(h, w, k) <= 0.0) dpre.at(h, w, k) = 0.0;
        }
      }
    }

    // Filter gradients.
    const int C = layer_in.channels;
    auto& gfilt = grads.filters[l];
    for (int k = 0; k < cfg.filters; ++k) {
      for (int h = 0; h < dpre.height; ++h) {
        const int a_lo = std::max(0, off - h);
        const int a_hi = std::min(z, layer_in.height + off - h);
        for (int w = 0; w < dpre.width; ++w) {
          const double g = dpre.at(h, w, k);
          if (g == 0.0) continue;
          const int b_lo = std::max(0, off - w);
          const int b_hi = std::min(z, layer_in.width + off - w);
          for (int c = 0; c < C; ++c) {
            for (int a = a_lo; a < a_hi; ++a) {
              const int hh = h + a - off;
              for (int b = b_lo; b < b_hi; ++b) {
                gfilt[fidx(k, c, a, b, C, z)] += g * layer_in.at(hh, w + b - off, c);
              }
            }
          }
        }
      }
    }

    // Gradient w.r.t. this layer's input, needed below the first layer only.
    if (l > 0) {
      Raster dinput(layer_in.height, layer_in.width, C);
      for (int k = 0; k < cfg.filters; ++k) {
        for (int h = 0; h < dpre.height; ++h) {
          const int a_lo = std::max(0, off - h);
          const int a_hi = std::min(z, layer_in.height + off - h);
          for (int w = 0; w < dpre.width; ++w) {
            const double g = dpre.at(h, w, k);
            if (g == 0.0) continue;
            const int b_lo = std::max(0, off - w);
            const int b_hi = std::min(z, layer_in.width + off - w);
            for (int c = 0; c < C; ++c) {
              for (int a = a_lo; a < a_hi; ++a) {
                const int hh = h + a - off;
                for (int b = b_lo; b < b_hi; ++b) {
                  dinput.at(hh, w + b - off, c) += g * model.filters[l][fidx(k, c, a, b, C, z)];
                }
              }
            }
          }
        }
      }
      dpost = std::move(dinput);
    }
  }
}

}  // namespace

double forward(const ConvLogisticModel& model, const Raster& input) {
  return forward_pass(model, input).p;
}

double bce_loss(std::span<const double> propensities, std::span<const int> treatments) {
  if (propensities.size() != treatments.size() || propensities.empty()) {
    throw std::invalid_argument("bce_loss: lengths must match and be nonzero");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < propensities.size(); ++i) {
    const double p = propensities[i];
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("bce_loss: propensity outside (0,1)");
    acc -= treatments[i] ? std::log(p) : std::log(1.0 - p);
  }
  return acc / static_cast<double>(propensities.size());
}

Gradients backward(const ConvLogisticModel& model, std::span<const LabeledImage> batch,
                   double* loss_out) {
  if (batch.empty()) throw std::invalid_argument("backward: empty batch");
  Gradients grads = Gradients::zeros_like(model);
  const double scale = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  for (const auto& ex : batch) {
    ForwardCache cache = forward_pass(model, ex.image);
    loss -= ex.treatment ? std::log(cache.p) : std::log(1.0 - cache.p);
    backward_example(model, ex.image, cache, ex.treatment, scale, grads);
  }
  if (loss_out) *loss_out = loss * scale;
  return grads;
}

namespace {

struct AdamState {
  Gradients m;
  Gradients v;
  long long t = 0;
};

void adam_update_block(double* p, const double* g, double* m, double* v, std::size_t n,
                       double lr, double bc1, double bc2, AdamVariant variant) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
    v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    // NAdam looks ahead with the momentum applied to the bias-corrected
    // average plus the fresh gradient's share.
    const double dir = variant == AdamVariant::nadam
                           ? kBeta1 * mhat + (1.0 - kBeta1) * g[i] / bc1
                           : mhat;
    p[i] -= lr * dir / (std::sqrt(vhat) + kEps);
  }
}

void adam_step(ConvLogisticModel& model, const Gradients& grads, AdamState& state, double lr,
               AdamVariant variant) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999;
  state.t += 1;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.t));
  for (std::size_t l = 0; l < model.filters.size(); ++l) {
    adam_update_block(model.filters[l].data(), grads.filters[l].data(), state.m.filters[l].data(),
                      state.v.filters[l].data(), model.filters[l].size(), lr, bc1, bc2, variant);
  }
  adam_update_block(model.head_w.data(), grads.head_w.data(), state.m.head_w.data(),
                    state.v.head_w.data(), model.head_w.size(), lr, bc1, bc2, variant);
  adam_update_block(&model.head_b, &grads.head_b, &state.m.head_b, &state.v.head_b, 1, lr, bc1,
                    bc2, variant);
}

double eval_loss(const ConvLogisticModel& model, const std::vector<LabeledImage>& data) {
  std::vector<double> p(data.size());
  std::vector<int> t(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    p[i] = forward(model, data[i].image);
    t[i] = data[i].treatment;
  }
  return bce_loss(p, t);
}

}  // namespace

TrainResult train(ConvLogisticModel& model, const std::vector<LabeledImage>& data,
                  const TrainConfig& config, const std::vector<LabeledImage>* eval) {
  config.validate();
  model.validate();
  if (data.empty()) throw std::invalid_argument("train: no training data");
  int n_treated = 0;
  for (const auto& ex : data) n_treated += ex.treatment ? 1 : 0;
  if (n_treated == 0 || n_treated == static_cast<int>(data.size())) {
    throw std::invalid_argument("train: training data contains a single class");
  }

  Rng rng(config.seed);
  AdamState state;
  state.m = Gradients::zeros_like(model);
  state.v = Gradients::zeros_like(model);

  const int n = static_cast<int>(data.size());
  const int batches_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const long long total_steps = static_cast<long long>(config.epochs) * batches_per_epoch;

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  TrainResult result;
  long long step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (int b = 0; b < batches_per_epoch; ++b) {
      const int lo = b * config.batch_size;
      const int hi = std::min(n, lo + config.batch_size);
      std::vector<LabeledImage> batch;
      batch.reserve(hi - lo);
      for (int i = lo; i < hi; ++i) {
        const LabeledImage& ex = data[order[i]];
        if (config.augmentation == Augmentation::reflect) {
          const bool fh = rng.bernoulli(0.5);
          const bool fw = rng.bernoulli(0.5);
          batch.push_back({reflect_raster(ex.image, fh, fw), ex.treatment});
        } else {
          batch.push_back(ex);
        }
      }
      double batch_loss = 0.0;
      Gradients grads = backward(model, batch, &batch_loss);
      const double lr =
          config.cosine_decay
              ? config.learning_rate * 0.5 *
                    (1.0 + std::cos(M_PI * static_cast<double>(step) / static_cast<double>(total_steps)))
              : config.learning_rate;
      adam_step(model, grads, state, lr, config.variant);
      ++step;
      epoch_loss += batch_loss * (hi - lo);
    }
    EpochLoss el;
    el.epoch = epoch;
    el.train_loss = epoch_loss / n;
    el.test_loss = eval ? eval_loss(model, *eval) : std::numeric_limits<double>::quiet_NaN();
    result.trace.push_back(el);
  }
  return result;
}

std::vector<double> predict_propensities(const ConvLogisticModel& model,
                                         std::span<const Raster> rasters, double clip_eta) {
  if (!(clip_eta >= 0.0 && clip_eta < 0.5)) {
    throw std::invalid_argument("predict_propensities: clip_eta must lie in [0, 0.5)");
  }
  std::vector<double> out;
  out.reserve(rasters.size());
  for (const auto& r : rasters) {
    out.push_back(std::clamp(forward(model, r), clip_eta, 1.0 - clip_eta));
  }
  return out;
}

std::vector<double> predict_pixel_propensities(const ConvLogisticModel& model,
                                               const Raster& raster, double clip_eta) {
  if (!(clip_eta >= 0.0 && clip_eta < 0.5)) {
    throw std::invalid_argument("predict_pixel_propensities: clip_eta must lie in [0, 0.5)");
  }
  const int radius = model.cfg.kernel_size / 2;
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(raster.height) * raster.width);
  for (int h = 0; h < raster.height; ++h) {
    for (int w = 0; w < raster.width; ++w) {
      const Raster patch = extract_patch(raster, h, w, radius);
      out.push_back(std::clamp(forward(model, patch), clip_eta, 1.0 - clip_eta));
    }
  }
  return out;
}

Raster extract_patch(const Raster& raster, int center_h, int center_w, int radius) {
  if (radius < 0) throw std::invalid_argument("extract_patch: radius must be >= 0");
  const int side = 2 * radius + 1;
  Raster patch(side, side, raster.channels, 0.0);
  for (int dh = -radius; dh <= radius; ++dh) {
    const int h = center_h + dh;
    if (h < 0 || h >= raster.height) continue;
    for (int dw = -radius; dw <= radius; ++dw) {
      const int w = center_w + dw;
      if (w < 0 || w >= raster.width) continue;
      for (int c = 0; c < raster.channels; ++c) {
        patch.at(dh + radius, dw + radius, c) = raster.at(h, w, c);
      }
    }
  }
  return patch;
}

Raster reflect_raster(const Raster& raster, bool flip_h, bool flip_w) {
  Raster out(raster.height, raster.width, raster.channels);
  for (int h = 0; h < raster.height; ++h) {
    const int sh = flip_h ? raster.height - 1 - h : h;
    for (int w = 0; w < raster.width; ++w) {
      const int sw = flip_w ? raster.width - 1 - w : w;
      for (int c = 0; c < raster.channels; ++c) out.at(h, w, c) = raster.at(sh, sw, c);
    }
  }
  return out;
}

Grid feature_map(const ConvLogisticModel& model, const Raster& input) {
  ForwardCache cache = forward_pass(model, input);
  const LayerCache& lc = cache.layers.back();
  // Channel mean of the last conv layer's ReLU output at full resolution.
  Grid map(lc.relu_h, lc.relu_w);
  const double inv_k = 1.0 / model.cfg.filters;
  for (int h = 0; h < lc.relu_h; ++h) {
    for (int w = 0; w < lc.relu_w; ++w) {
      double s = 0.0;
      for (int k = 0; k < model.cfg.filters; ++k) {
        const double v = lc.pre.at(h, w, k);
        s += v > 0.0 ? v : 0.0;
      }
      map.at(h, w) = s * inv_k;
    }
  }
  return map;
}

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64(std::ofstream& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

double get_f64(std::ifstream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

constexpr char kMagic[4] = {'I', 'C', 'L', 'M'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, const ConvLogisticModel& model) {
  model.validate();
  std::ofstream out(path, std::ios_base::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(model.cfg.depth));
  put_u32(out, static_cast<std::uint32_t>(model.cfg.filters));
  put_u32(out, static_cast<std::uint32_t>(model.cfg.kernel_size));
  put_u32(out, static_cast<std::uint32_t>(model.cfg.input_channels));
  put_u32(out, model.cfg.pool == PoolKind::max ? 1u : 0u);
  put_u32(out, static_cast<std::uint32_t>(model.cfg.pool_size));
  for (const auto& layer : model.filters) {
    for (double w : layer) put_f64(out, w);
  }
  for (double w : model.head_w) put_f64(out, w);
  put_f64(out, model.head_b);
  if (!out) throw std::runtime_error("write failed: " + path);
}

ConvLogisticModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios_base::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error(path + ": not a model checkpoint");
  }
  const std::uint32_t version = get_u32(in);
  if (version != kVersion) {
    throw std::runtime_error(path + ": unsupported checkpoint version " + std::to_string(version));
  }
  ConvLogisticModel m;
  m.cfg.depth = static_cast<int>(get_u32(in));
  m.cfg.filters = static_cast<int>(get_u32(in));
  m.cfg.kernel_size = static_cast<int>(get_u32(in));
  m.cfg.input_channels = static_cast<int>(get_u32(in));
  m.cfg.pool = get_u32(in) == 1 ? PoolKind::max : PoolKind::none;
  m.cfg.pool_size = static_cast<int>(get_u32(in));
  m.cfg.validate();
  m.filters.resize(m.cfg.depth);
  for (int l = 0; l < m.cfg.depth; ++l) {
    m.filters[l].resize(m.layer_filter_count(l));
    for (double& w : m.filters[l]) w = get_f64(in);
  }
  m.head_w.resize(m.cfg.filters);
  for (double& w : m.head_w) w = get_f64(in);
  m.head_b = get_f64(in);
  if (!in) throw std::runtime_error(path + ": truncated checkpoint");
  m.validate();
  return m;
}

ModelConfig load_model_config(ConfigMap& cfg) {
  ModelConfig mc;
  mc.depth = static_cast<int>(cfg.take_int("model.depth", mc.depth));
  mc.filters = static_cast<int>(cfg.take_int("model.filters", mc.filters));
  mc.kernel_size = static_cast<int>(cfg.take_int("model.kernel_size", mc.kernel_size));
  mc.input_channels = static_cast<int>(cfg.take_int("model.input_channels", mc.input_channels));
  mc.pool = pool_kind_from_string(cfg.take_string("model.pool", to_string(mc.pool)));
  mc.pool_size = static_cast<int>(cfg.take_int("model.pool_size", mc.pool_size));
  mc.validate();
  return mc;
}

TrainConfig load_train_config(ConfigMap& cfg) {
  TrainConfig tc;
  tc.learning_rate = cfg.take_double("train.learning_rate", tc.learning_rate);
  tc.epochs = static_cast<int>(cfg.take_int("train.epochs", tc.epochs));
  tc.batch_size = static_cast<int>(cfg.take_int("train.batch_size", tc.batch_size));
  tc.cosine_decay = cfg.take_bool("train.cosine_decay", tc.cosine_decay);
  tc.augmentation = augmentation_from_string(cfg.take_string("train.augmentation", to_string(tc.augmentation)));
  tc.variant = adam_variant_from_string(cfg.take_string("train.optimizer", to_string(tc.variant)));
  tc.seed = cfg.take_uint64("train.seed", tc.seed);
  tc.validate();
  return tc;
}

void write_loss_trace_csv(const std::string& path, const TrainResult& result) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "epoch,train_loss,test_loss\n";
  for (const auto& e : result.trace) {
    out << e.epoch << ',' << format_double(e.train_loss) << ',' << format_double(e.test_loss)
        << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace imgconf
