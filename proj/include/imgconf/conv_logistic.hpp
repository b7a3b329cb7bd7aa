#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "imgconf/raster.hpp"

namespace imgconf {

class Rng;

enum class PoolKind { none, max };
enum class AdamVariant { adam, nadam };
enum class Augmentation { none, reflect };

const char* to_string(PoolKind p);
const char* to_string(AdamVariant v);
const char* to_string(Augmentation a);
PoolKind pool_kind_from_string(const std::string& s);
AdamVariant adam_variant_from_string(const std::string& s);
Augmentation augmentation_from_string(const std::string& s);

struct ModelConfig {
  int depth = 1;           // conv layers
  int filters = 4;         // filters per layer
  int kernel_size = 8;     // estimating kernel width
  int input_channels = 1;
  PoolKind pool = PoolKind::none;
  int pool_size = 0;       // 0 = whole spatial extent (when pool == max)
  void validate() const;
};

// Conv (same zero padding, no filter bias) -> ReLU -> optional max pool,
// stacked `depth` times, then a global spatial mean per channel and an
// affine head through the logistic. Output is always strictly inside (0,1).
struct ConvLogisticModel {
  ModelConfig cfg;
  std::vector<std::vector<double>> filters;  // per layer, [k][c][a][b] row-major
  std::vector<double> head_w;                // one weight per final channel
  double head_b = 0.0;

  // Glorot-uniform filters and head, zero head bias.
  static ConvLogisticModel init(const ModelConfig& cfg, Rng& rng);

  int layer_in_channels(int layer) const { return layer == 0 ? cfg.input_channels : cfg.filters; }
  std::size_t layer_filter_count(int layer) const {
    return static_cast<std::size_t>(cfg.filters) * layer_in_channels(layer) * cfg.kernel_size *
           cfg.kernel_size;
  }
  int n_parameters() const;
  void validate() const;
};

// Same layout as the parameters.
struct Gradients {
  std::vector<std::vector<double>> filters;
  std::vector<double> head_w;
  double head_b = 0.0;
  static Gradients zeros_like(const ConvLogisticModel& model);
};

struct LabeledImage {
  Raster image;
  int treatment = 0;
};

double forward(const ConvLogisticModel& model, const Raster& input);

// Mean of -[T log p + (1-T) log(1-p)]; propensities must be inside (0,1).
double bce_loss(std::span<const double> propensities, std::span<const int> treatments);

// Analytic gradient of the mean BCE over the batch w.r.t. every parameter.
Gradients backward(const ConvLogisticModel& model, std::span<const LabeledImage> batch,
                   double* loss_out = nullptr);

struct TrainConfig {
  double learning_rate = 0.005;
  int epochs = 100;
  int batch_size = 32;
  bool cosine_decay = true;
  Augmentation augmentation = Augmentation::none;
  AdamVariant variant = AdamVariant::nadam;
  std::uint64_t seed = 1;
  void validate() const;
};

struct EpochLoss {
  int epoch = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;  // NaN when no eval set was given
};

struct TrainResult {
  std::vector<EpochLoss> trace;
};

// Minibatch training with ADAM (NAdam by default) and, when enabled, the
// cosine schedule lr_t = lr0 * (1 + cos(pi t / T)) / 2 over optimizer steps.
// Reflection augmentation flips each spatial axis independently with
// probability 1/2 per example per epoch. Requires both classes present.
TrainResult train(ConvLogisticModel& model, const std::vector<LabeledImage>& data,
                  const TrainConfig& config, const std::vector<LabeledImage>* eval = nullptr);

// Per-scene propensities, clipped to [eta, 1-eta].
std::vector<double> predict_propensities(const ConvLogisticModel& model,
                                         std::span<const Raster> rasters, double clip_eta = 0.01);

// Per-pixel propensities via a zero-padded square patch of radius
// floor(kernel_size/2) centred at each pixel, mirroring the neighbourhood
// that generates the pixel-level confounder.
std::vector<double> predict_pixel_propensities(const ConvLogisticModel& model,
                                               const Raster& raster, double clip_eta = 0.01);

Raster extract_patch(const Raster& raster, int center_h, int center_w, int radius);
Raster reflect_raster(const Raster& raster, bool flip_h, bool flip_w);

// Channel mean of the last conv layer's activations, for inspection.
Grid feature_map(const ConvLogisticModel& model, const Raster& input);

// Flat binary checkpoint: magic "ICLM", little-endian u32 header fields
// (version, depth, filters, kernel_size, input_channels, pool, pool_size),
// then little-endian f64 blocks: each layer's filters in declaration order,
// head weights, head bias.
void save_checkpoint(const std::string& path, const ConvLogisticModel& model);
ConvLogisticModel load_checkpoint(const std::string& path);

// epoch,train_loss,test_loss rows.
void write_loss_trace_csv(const std::string& path, const TrainResult& result);

// [model] / [train] sections of a parsed config; unknown keys are left for
// the caller's finalize() to reject.
ModelConfig load_model_config(class ConfigMap& cfg);
TrainConfig load_train_config(class ConfigMap& cfg);

}  // namespace imgconf
