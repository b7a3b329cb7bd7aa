#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "imgconf/conv_logistic.hpp"
#include "support/grad_check.hpp"
#include "imgconf/dgp.hpp"
#include "imgconf/rng.hpp"

using namespace imgconf;

namespace {

using imgconf::testsupport::flatten;
using imgconf::testsupport::max_grad_rel_error;

std::vector<LabeledImage> random_batch(Rng& rng, int n, int h, int w, int c = 1) {
  std::vector<LabeledImage> batch;
  for (int i = 0; i < n; ++i) {
    LabeledImage ex;
    ex.image = Raster(h, w, c);
    for (auto& v : ex.image.values) v = rng.normal();
    ex.treatment = rng.bernoulli(0.5) ? 1 : 0;
    batch.push_back(std::move(ex));
  }
  // Both classes present.
  batch[0].treatment = 1;
  batch[n - 1].treatment = 0;
  return batch;
}

}  // namespace

TEST_CASE("forward: zero model outputs one half for any input") {
  ModelConfig cfg;
  cfg.depth = 1;
  cfg.filters = 3;
  cfg.kernel_size = 3;
  Rng rng(1);
  ConvLogisticModel m = ConvLogisticModel::init(cfg, rng);
  for (auto& layer : m.filters) std::fill(layer.begin(), layer.end(), 0.0);
  std::fill(m.head_w.begin(), m.head_w.end(), 0.0);
  m.head_b = 0.0;

  Raster r(5, 5, 1);
  for (auto& v : r.values) v = rng.normal();
  CHECK(forward(m, r) == 0.5);

  m.head_b = 1.25;
  CHECK(forward(m, r) == doctest::Approx(1.0 / (1.0 + std::exp(-1.25))).epsilon(1e-15));
}

TEST_CASE("forward: reproducible and strictly inside (0,1)") {
  ModelConfig cfg;
  cfg.filters = 4;
  cfg.kernel_size = 3;
  Rng rng(7);
  ConvLogisticModel m = ConvLogisticModel::init(cfg, rng);
  Raster r(6, 6, 1);
  for (auto& v : r.values) v = rng.normal();
  const double p1 = forward(m, r);
  const double p2 = forward(m, r);
  CHECK(p1 == p2);
  CHECK(p1 > 0.0);
  CHECK(p1 < 1.0);

  Raster bad(6, 6, 2, 0.0);
  CHECK_THROWS_AS(forward(m, bad), std::invalid_argument);
}

TEST_CASE("bce_loss examples") {
  std::vector<double> half = {0.5, 0.5, 0.5};
  std::vector<int> t = {1, 0, 1};
  CHECK(bce_loss(half, t) == doctest::Approx(std::log(2.0)).epsilon(1e-15));

  std::vector<double> p = {0.8, 0.4};
  std::vector<int> t2 = {1, 0};
  CHECK(bce_loss(p, t2) == doctest::Approx(0.36698458754010023).epsilon(1e-12));

  std::vector<double> sharp = {1.0 - 1e-12, 1e-12};
  CHECK(bce_loss(sharp, t2) < 1e-9);

  std::vector<double> bad = {1.0, 0.4};
  CHECK_THROWS_AS(bce_loss(bad, t2), std::invalid_argument);
}

TEST_CASE("head bias gradient equals p minus T for one example") {
  ModelConfig cfg;
  cfg.filters = 2;
  cfg.kernel_size = 3;
  Rng rng(11);
  ConvLogisticModel m = ConvLogisticModel::init(cfg, rng);
  Raster r(5, 4, 1);
  for (auto& v : r.values) v = rng.normal();
  const double p = forward(m, r);

  std::vector<LabeledImage> one = {{r, 1}};
  Gradients g = backward(m, one);
  CHECK(g.head_b == doctest::Approx(p - 1.0).epsilon(1e-15));
  one[0].treatment = 0;
  g = backward(m, one);
  CHECK(g.head_b == doctest::Approx(p).epsilon(1e-15));
}

TEST_CASE("gradient check: depth-1 model vs central finite differences") {
  ModelConfig cfg;
  cfg.depth = 1;
  cfg.filters = 4;
  cfg.kernel_size = 3;
  Rng rng(2024);
  ConvLogisticModel m = ConvLogisticModel::init(cfg, rng);
  auto batch = random_batch(rng, 16, 7, 6);
  CHECK(max_grad_rel_error(m, batch) < 1e-4);
}

TEST_CASE("gradient check: stacked layers with max pooling") {
  ModelConfig cfg;
  cfg.depth = 2;
  cfg.filters = 3;
  cfg.kernel_size = 3;
  cfg.pool = PoolKind::max;
  cfg.pool_size = 2;
  Rng rng(77);
  ConvLogisticModel m = ConvLogisticModel::init(cfg, rng);
  auto batch = random_batch(rng, 8, 6, 6);
  CHECK(max_grad_rel_error(m, batch) < 1e-4);
}

TEST_CASE("gradient check: global max pooling") {
  ModelConfig cfg;
  cfg.depth = 1;
  cfg.filters = 2;
  cfg.kernel_size = 4;  // even width exercises the asymmetric anchor
  cfg.pool = PoolKind::max;
  cfg.pool_size = 0;
  Rng rng(78);
  ConvLogisticModel m = ConvLogisticModel::init(cfg, rng);
  auto batch = random_batch(rng, 8, 8, 8);
  CHECK(max_grad_rel_error(m, batch) < 1e-4);
}

TEST_CASE("gradients vanish at a perfectly fitted limit") {
  // Constant model pushed towards the labels of a single-class batch per
  // class: p ~ T makes (p - T) ~ 0 and all gradients with it.
  ModelConfig cfg;
  cfg.filters = 2;
  cfg.kernel_size = 3;
  Rng rng(13);
  ConvLogisticModel m = ConvLogisticModel::init(cfg, rng);
  for (auto& layer : m.filters) std::fill(layer.begin(), layer.end(), 0.0);
  std::fill(m.head_w.begin(), m.head_w.end(), 0.0);
  m.head_b = 30.0;  // p ~ 1 - 1e-13

  Raster r(4, 4, 1, 0.3);
  std::vector<LabeledImage> batch = {{r, 1}};
  Gradients g = backward(m, batch);
  for (double v : flatten(g)) CHECK(std::abs(v) < 1e-12);
}

TEST_CASE("reflection-symmetric model is invariant to input reflections") {
  ModelConfig cfg;
  cfg.filters = 2;
  cfg.kernel_size = 3;
  Rng rng(17);
  ConvLogisticModel m = ConvLogisticModel::init(cfg, rng);
  // Symmetrize each filter across both axes.
  for (auto& layer : m.filters) {
    const int z = cfg.kernel_size;
    for (int k = 0; k < cfg.filters; ++k) {
      for (int a = 0; a < z; ++a) {
        for (int b = 0; b < z; ++b) {
          const std::size_t base = ((static_cast<std::size_t>(k) * 1 + 0) * z + a) * z + b;
          const std::size_t fh = ((static_cast<std::size_t>(k) * 1 + 0) * z + (z - 1 - a)) * z + b;
          const std::size_t fw = ((static_cast<std::size_t>(k) * 1 + 0) * z + a) * z + (z - 1 - b);
          const std::size_t fhw =
              ((static_cast<std::size_t>(k) * 1 + 0) * z + (z - 1 - a)) * z + (z - 1 - b);
          const double v = (layer[base] + layer[fh] + layer[fw] + layer[fhw]) / 4.0;
          layer[base] = layer[fh] = layer[fw] = layer[fhw] = v;
        }
      }
    }
  }

  Raster r(6, 5, 1);
  for (auto& v : r.values) v = rng.normal();
  const double p = forward(m, r);
  CHECK(forward(m, reflect_raster(r, true, false)) == doctest::Approx(p).epsilon(1e-12));
  CHECK(forward(m, reflect_raster(r, false, true)) == doctest::Approx(p).epsilon(1e-12));
  CHECK(forward(m, reflect_raster(r, true, true)) == doctest::Approx(p).epsilon(1e-12));
}

TEST_CASE("extract_patch zero-pads outside the image") {
  Raster r(3, 3, 1);
  for (int h = 0; h < 3; ++h)
    for (int w = 0; w < 3; ++w) r.at(h, w, 0) = h * 3 + w;
  Raster patch = extract_patch(r, 0, 0, 1);
  CHECK(patch.height == 3);
  CHECK(patch.at(0, 0, 0) == 0.0);  // outside
  CHECK(patch.at(1, 1, 0) == 0.0);  // centre = r(0,0)
  CHECK(patch.at(1, 2, 0) == 1.0);
  CHECK(patch.at(2, 1, 0) == 3.0);
  CHECK(patch.at(2, 2, 0) == 4.0);
}

TEST_CASE("train: learning rate zero leaves parameters unchanged") {
  ModelConfig cfg;
  cfg.filters = 2;
  cfg.kernel_size = 3;
  Rng rng(19);
  ConvLogisticModel m = ConvLogisticModel::init(cfg, rng);
  const ConvLogisticModel before = m;

  auto batch = random_batch(rng, 10, 5, 5);
  TrainConfig tc;
  tc.learning_rate = 0.0;
  tc.epochs = 3;
  tc.batch_size = 4;
  tc.seed = 5;
  train(m, batch, tc);
  CHECK(m.filters == before.filters);
  CHECK(m.head_w == before.head_w);
  CHECK(m.head_b == before.head_b);
}

TEST_CASE("train: rejects single-class data") {
  ModelConfig cfg;
  cfg.filters = 2;
  cfg.kernel_size = 3;
  Rng rng(23);
  ConvLogisticModel m = ConvLogisticModel::init(cfg, rng);
  auto batch = random_batch(rng, 6, 5, 5);
  for (auto& ex : batch) ex.treatment = 1;
  TrainConfig tc;
  tc.epochs = 1;
  CHECK_THROWS_AS(train(m, batch, tc), std::invalid_argument);
}

TEST_CASE("train: separable pattern drives the loss below ln 2") {
  // Treated images carry a bright main diagonal, controls a dark one.
  Rng rng(29);
  std::vector<LabeledImage> data;
  for (int i = 0; i < 40; ++i) {
    LabeledImage ex;
    ex.treatment = i % 2;
    ex.image = Raster(7, 7, 1);
    for (auto& v : ex.image.values) v = rng.normal(0.0, 0.3);
    const double s = ex.treatment ? 2.0 : -2.0;
    for (int d = 0; d < 7; ++d) ex.image.at(d, d, 0) += s;
    data.push_back(std::move(ex));
  }

  ModelConfig cfg;
  cfg.filters = 2;
  cfg.kernel_size = 3;
  Rng init_rng(31);
  ConvLogisticModel m = ConvLogisticModel::init(cfg, init_rng);
  TrainConfig tc;
  tc.epochs = 50;
  tc.batch_size = 8;
  tc.seed = 33;
  TrainResult res = train(m, data, tc);
  CHECK(res.trace.back().train_loss < std::log(2.0));
  CHECK(res.trace.back().train_loss <= res.trace.front().train_loss);
}

TEST_CASE("train: deterministic given the seed") {
  Rng rng(37);
  auto data = random_batch(rng, 20, 6, 6);
  ModelConfig cfg;
  cfg.filters = 2;
  cfg.kernel_size = 3;
  TrainConfig tc;
  tc.epochs = 5;
  tc.batch_size = 8;
  tc.seed = 99;
  tc.augmentation = Augmentation::reflect;

  Rng i1(41), i2(41);
  ConvLogisticModel m1 = ConvLogisticModel::init(cfg, i1);
  ConvLogisticModel m2 = ConvLogisticModel::init(cfg, i2);
  train(m1, data, tc);
  train(m2, data, tc);
  CHECK(m1.filters == m2.filters);
  CHECK(m1.head_w == m2.head_w);
  CHECK(m1.head_b == m2.head_b);
}

TEST_CASE("predict_propensities clipping") {
  ModelConfig cfg;
  cfg.filters = 2;
  cfg.kernel_size = 3;
  Rng rng(43);
  ConvLogisticModel m = ConvLogisticModel::init(cfg, rng);
  for (auto& layer : m.filters) std::fill(layer.begin(), layer.end(), 0.0);
  std::fill(m.head_w.begin(), m.head_w.end(), 0.0);

  std::vector<Raster> rasters(3, Raster(4, 4, 1, 0.0));

  m.head_b = 0.0;
  auto p = predict_propensities(m, rasters, 0.01);
  for (double v : p) CHECK(v == 0.5);

  // Raw output 0.001 clips up to eta = 0.01.
  m.head_b = std::log(0.001 / 0.999);
  p = predict_propensities(m, rasters, 0.01);
  for (double v : p) CHECK(v == 0.01);

  m.head_b = 40.0;
  p = predict_propensities(m, rasters, 0.01);
  for (double v : p) CHECK(v == 0.99);
}

TEST_CASE("pixel propensities line up with patch forwards") {
  ModelConfig cfg;
  cfg.filters = 2;
  cfg.kernel_size = 3;
  Rng rng(47);
  ConvLogisticModel m = ConvLogisticModel::init(cfg, rng);
  Raster r(5, 6, 1);
  for (auto& v : r.values) v = rng.normal();

  auto p = predict_pixel_propensities(m, r, 0.0);
  CHECK(p.size() == 30);
  const Raster patch = extract_patch(r, 2, 3, 1);
  CHECK(p[2 * 6 + 3] == forward(m, patch));
}

TEST_CASE("feature map has full spatial extent") {
  ModelConfig cfg;
  cfg.filters = 3;
  cfg.kernel_size = 3;
  cfg.pool = PoolKind::max;
  cfg.pool_size = 0;
  Rng rng(53);
  ConvLogisticModel m = ConvLogisticModel::init(cfg, rng);
  Raster r(6, 7, 1);
  for (auto& v : r.values) v = rng.normal();
  Grid map = feature_map(m, r);
  CHECK(map.height == 6);
  CHECK(map.width == 7);
  for (double v : map.values) CHECK(v >= 0.0);  // means of ReLU outputs
}

TEST_CASE("checkpoint round trip preserves parameters exactly") {
  ModelConfig cfg;
  cfg.depth = 2;
  cfg.filters = 3;
  cfg.kernel_size = 4;
  cfg.pool = PoolKind::max;
  cfg.pool_size = 2;
  Rng rng(59);
  ConvLogisticModel m = ConvLogisticModel::init(cfg, rng);

  auto dir = std::filesystem::temp_directory_path() / "imgconf_ckpt";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "model.bin").string();
  save_checkpoint(path, m);
  ConvLogisticModel back = load_checkpoint(path);
  CHECK(back.cfg.depth == cfg.depth);
  CHECK(back.cfg.pool == cfg.pool);
  CHECK(back.filters == m.filters);
  CHECK(back.head_w == m.head_w);
  CHECK(back.head_b == m.head_b);

  Raster r(6, 6, 1);
  for (auto& v : r.values) v = rng.normal();
  CHECK(forward(back, r) == forward(m, r));
  std::filesystem::remove_all(dir);
}

TEST_CASE("scene model learns the confounder signal out of sample") {
  // Oracle-matched setting: estimating width equals the true width. The
  // learned propensities should correlate with the realized ones clearly.
  DgpConfig dc;
  dc.level = ConfoundingLevel::scene;
  dc.z_true = 4;
  dc.n_scenes = 900;
  dc.image_height = 16;
  dc.image_width = 16;
  dc.correlation_length = 2.0;
  dc.seed = 606;
  ConfoundedSample sample = generate_sample(dc);

  const int n_train = 400;
  std::vector<LabeledImage> train_set, test_set;
  for (int s = 0; s < dc.n_scenes; ++s) {
    LabeledImage ex{sample.rasters[s], sample.treatment[s]};
    (s < n_train ? train_set : test_set).push_back(std::move(ex));
  }

  ModelConfig mc;
  mc.filters = 2;
  mc.kernel_size = 4;
  mc.pool = PoolKind::max;
  mc.pool_size = 0;
  Rng init_rng(61);
  ConvLogisticModel m = ConvLogisticModel::init(mc, init_rng);
  TrainConfig tc;
  tc.epochs = 80;
  tc.batch_size = 32;
  tc.seed = 62;
  TrainResult res = train(m, train_set, tc, &test_set);

  // Out-of-sample loss beats the dominant-class constant predictor.
  int treated = 0;
  for (const auto& ex : train_set) treated += ex.treatment;
  const double share = static_cast<double>(treated) / n_train;
  std::vector<double> const_p(test_set.size(), std::min(std::max(share, 1e-6), 1.0 - 1e-6));
  std::vector<int> test_t(test_set.size());
  for (std::size_t i = 0; i < test_set.size(); ++i) test_t[i] = test_set[i].treatment;
  const double baseline = bce_loss(const_p, test_t);
  CHECK(res.trace.back().test_loss < baseline);

  // Correlation between predicted and realized propensities on the test set.
  std::vector<Raster> test_rasters;
  for (int s = n_train; s < dc.n_scenes; ++s) test_rasters.push_back(sample.rasters[s]);
  auto predicted = predict_propensities(m, test_rasters, 0.01);
  double mx = 0, my = 0;
  const int n_test = static_cast<int>(predicted.size());
  for (int i = 0; i < n_test; ++i) {
    mx += predicted[i];
    my += sample.true_propensity[n_train + i];
  }
  mx /= n_test;
  my /= n_test;
  double sxy = 0, sxx = 0, syy = 0;
  for (int i = 0; i < n_test; ++i) {
    const double dx = predicted[i] - mx;
    const double dy = sample.true_propensity[n_train + i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  const double corr = sxy / std::sqrt(sxx * syy);
  CHECK(corr > 0.5);
}
