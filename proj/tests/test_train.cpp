#include <random>

#include "doctest.h"
#include "freqfield/train.hpp"
#include "grad_check.hpp"
#include "oracles.hpp"

using namespace freqfield;

namespace {

MultiScaleDataset small_dataset(std::size_t res = 16, std::size_t train = 4) {
  CameraRigOptions rig;
  rig.train_views = train;
  rig.test_views = 1;
  rig.full_resolution = res;
  rig.focal = 80.0 * res / 64.0;
  return build_multiscale(SyntheticScene::standard(0), camera_rig(rig, 0), {1, 2, 4, 8}, 2);
}

TrainConfig small_config() {
  TrainConfig cfg;
  cfg.total_steps = 6;
  cfg.warmup_steps = 3;
  cfg.batch_rays = 32;
  cfg.samples_per_ray = 16;
  cfg.probe_every = 3;
  cfg.field.extent = 16;
  cfg.field.density_rank = 2;
  cfg.field.appearance_rank = 3;
  cfg.field.hidden = 8;
  return cfg;
}

}  // namespace

TEST_CASE("mse_loss examples") {
  const std::vector<double> a{0.1, 0.5, 0.9, 0.3};
  CHECK(mse_loss(a, a) == 0.0);
  std::vector<double> b = a;
  for (auto& v : b) v += 0.1;
  CHECK(mse_loss(b, a) == doctest::Approx(0.01).epsilon(1e-12));

  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<double> x(300), y(300);
  for (auto& v : x) v = u(rng);
  for (auto& v : y) v = u(rng);
  CHECK(std::abs(mse_loss(x, y) - oracle::mse(x, y)) < 1e-12);
  CHECK_THROWS_AS(mse_loss(x, a), std::invalid_argument);
}

TEST_CASE("analytic gradients match central differences on the tiny model") {
  for (MaskMode mode : {MaskMode::literal, MaskMode::multiplicative}) {
    for (Domain domain : {Domain::spatial, Domain::frequency}) {
      const auto errors = gradcheck::run(mode, domain, 6);
      for (const auto& e : errors) {
        INFO(mask_mode_name(mode), " ", e.name, " scale ", e.scale);
        CHECK(e.rel_error < 1e-4);
      }
    }
  }
}

TEST_CASE("scaling the loss scales every gradient exactly") {
  MultiScaleField<double> field(gradcheck::tiny_config(MaskMode::multiplicative), 9);
  field.to_frequency_domain();
  field.expand_all();
  std::mt19937_64 rng(3);
  const auto rays = gradcheck::tiny_rays(4, rng);
  RenderSettings rs;
  rs.samples_per_ray = 4;
  RayBatch<double> batch;
  auto g1 = zeros_like(field.params()), g4 = zeros_like(field.params());
  const double l1 = batch.run(field, rays, rs, nullptr, &g1, 1.0);
  const double l4 = batch.run(field, rays, rs, nullptr, &g4, 4.0);
  CHECK(l4 == 4.0 * l1);
  auto a = named_tensors(g1), b = named_tensors(g4);
  for (std::size_t t = 0; t < a.size(); ++t)
    for (std::size_t k = 0; k < a[t].values.size(); ++k)
      CHECK(b[t].values[k] == 4.0 * a[t].values[k]);
}

TEST_CASE("a perfect fit gives a zero gradient") {
  MultiScaleField<double> field(gradcheck::tiny_config(MaskMode::multiplicative), 2);
  field.params().density.set_zero();
  field.invalidate();
  std::mt19937_64 rng(4);
  auto rays = gradcheck::tiny_rays(4, rng);
  RenderSettings rs;
  rs.samples_per_ray = 4;
  for (auto& r : rays) r.target = rs.background;
  RayBatch<double> batch;
  auto g = zeros_like(field.params());
  CHECK(batch.run(field, rays, rs, nullptr, &g) == 0.0);
  for (const auto& t : named_tensors(g))
    for (double v : t.values) CHECK(v == 0.0);
}

TEST_CASE("Adam with a zero gradient leaves parameters unchanged") {
  MultiScaleField<float> field(gradcheck::tiny_config(MaskMode::literal), 3);
  const auto before = field.to_container();
  Adam<float> adam(field.params(), {0.02, 0.02, 1e-3});
  auto g = zeros_like(field.params());
  adam.step(field.params(), g);
  CHECK(field.to_container() == before);

  auto bad = named_tensors(g)[2];
  bad.values[1] = std::numeric_limits<float>::quiet_NaN();
  const std::string name = bad.name;
  CHECK_THROWS_WITH_AS(adam.step(field.params(), g), doctest::Contains(name.c_str()),
                       NumericError);
}

TEST_CASE("training configuration validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.warmup_steps = cfg.total_steps;
  CHECK_THROWS_WITH(cfg.validate(), doctest::Contains("warmup_steps"));
  cfg = TrainConfig{};
  cfg.lr_masks = 0;
  CHECK_THROWS_WITH(cfg.validate(), doctest::Contains("lr_masks"));
  cfg = TrainConfig{};
  cfg.total_steps = 0;
  CHECK_NOTHROW(cfg.validate());

  AblationFlags both{true, true, false};
  CHECK_THROWS_AS(both.variant(), std::invalid_argument);
  CHECK(AblationFlags{false, false, true}.variant() == Variant::shared_lpf);
  CHECK(parse_variant("baseline") == Variant::baseline);
  CHECK_THROWS(parse_variant("nope"));
}

TEST_CASE("no_lpf variant uses all-pass filters at every scale") {
  TrainConfig cfg;
  cfg.variant = Variant::no_lpf;
  MultiScaleField<float> field(cfg.resolved_field(), 0);
  for (std::size_t s = 0; s < field.num_scales(); ++s) {
    for (double w : field.vector_filter(s)->weights.data()) CHECK(w == doctest::Approx(1.0));
    for (double w : field.matrix_filter(s)->weights.data()) CHECK(w == doctest::Approx(1.0));
  }
}

TEST_CASE("handoff with all-pass filters leaves renders unchanged") {
  auto cfg = small_config();
  cfg.variant = Variant::no_lpf;
  const auto ds = small_dataset();
  MultiScaleField<float> field(cfg.resolved_field(), 11);
  field.set_base_footprint(dataset_base_footprint(ds));
  const auto rs = eval_settings(cfg, ds);
  std::vector<Image> before;
  for (std::size_t s = 0; s < 4; ++s) before.push_back(render_image(field, ds.camera(0, s), rs));
  field.to_frequency_domain();
  for (std::size_t s = 0; s < 4; ++s) {
    const auto after = render_image(field, ds.camera(0, s), rs);
    double worst = 0;
    for (std::size_t i = 0; i < after.data.size(); ++i)
      worst = std::max(worst, std::abs(after.data[i] - before[s].data[i]));
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("train_loop: zero steps, determinism and scale mismatch") {
  const auto ds = small_dataset();
  auto cfg = small_config();

  auto zero = cfg;
  zero.total_steps = 0;
  const auto init = train_loop(zero, ds);
  MultiScaleField<float> fresh(cfg.resolved_field(), cfg.seed);
  fresh.set_base_footprint(dataset_base_footprint(ds));
  CHECK(init.field.to_container() == fresh.to_container());
  CHECK(init.log.empty());

  const auto a = train_loop(cfg, ds);
  const auto b = train_loop(cfg, ds);
  REQUIRE(a.log.size() == cfg.total_steps);
  for (std::size_t i = 0; i < a.log.size(); ++i) CHECK(a.log[i].to_json() == b.log[i].to_json());
  CHECK(a.field.to_container() == b.field.to_container());
  CHECK(a.log[2].phase == "spatial");
  CHECK(a.log[3].phase == "frequency");
  CHECK(a.log[2].probe_psnr.size() == 4);

  auto three = cfg;
  three.field.scales = ScaleConfig::dyadic(3);
  CHECK_THROWS_WITH(train_loop(three, ds), doctest::Contains("do not match"));
}

TEST_CASE("run_ablation rejects multiple flags and reports every scale") {
  const auto ds = small_dataset();
  auto cfg = small_config();
  CHECK_THROWS_AS(run_ablation(cfg, {true, true, false}, ds), std::invalid_argument);
  cfg.total_steps = 2;
  cfg.warmup_steps = 1;
  const auto report = run_ablation(cfg, {false, false, true}, ds);
  CHECK(report.scales.size() == 4);
  for (const auto& s : report.scales) CHECK(std::isfinite(s.psnr));
}

TEST_CASE("loss falls during a short run") {
  const auto ds = small_dataset(32, 6);
  auto cfg = small_config();
  cfg.total_steps = 400;
  cfg.warmup_steps = 70;
  cfg.batch_rays = 128;
  cfg.samples_per_ray = 24;
  cfg.probe_every = 0;
  const auto r = train_loop(cfg, ds);
  auto window = [&](std::size_t end) {
    double s = 0;
    for (std::size_t i = end - 20; i < end; ++i) s += r.log[i].loss;
    return s / 20;
  };
  CHECK(window(400) < window(40));
}
