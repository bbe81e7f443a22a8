#pragma once

// Gradients through the renderer and the expansion pipeline, Adam, and the
// two-phase training schedule (spatial warm-up, then frequency domain).

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "freqfield/data.hpp"
#include "freqfield/metrics.hpp"
#include "freqfield/render.hpp"
#include "freqfield/vm_field.hpp"

namespace freqfield {

/// Raised on a non-finite loss or gradient.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Pipeline variants. `baseline` disables both the filters and the masks.
enum class Variant { full, no_mask, no_lpf, shared_lpf, baseline };
const char* variant_name(Variant v);
Variant parse_variant(const std::string& s);

struct AblationFlags {
  bool no_mask = false;
  bool no_lpf = false;
  bool shared_lpf = false;

  std::size_t count() const { return no_mask + no_lpf + shared_lpf; }
  /// Throws std::invalid_argument when more than one flag is set.
  Variant variant() const;
};

/// Applies a variant to the pipeline options.
void apply_variant(Variant v, PipelineOptions& opt);

struct TrainConfig {
  std::size_t total_steps = 4000;
  std::size_t warmup_steps = 700;
  std::size_t batch_rays = 1024;
  double lr_factors = 0.02;
  double lr_masks = 0.02;
  double lr_decoder = 1e-3;
  std::uint64_t seed = 0;
  MaskMode mask_mode = MaskMode::multiplicative;
  Variant variant = Variant::full;
  std::size_t samples_per_ray = 64;
  /// Held-out probe PSNR is logged every this many steps (0 disables).
  std::size_t probe_every = 500;
  FieldConfig field;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  /// Field configuration with mode, epsilon and variant applied.
  FieldConfig resolved_field() const;
};

/// Mean squared error over all entries.
double mse_loss(std::span<const double> pred, std::span<const double> target);

/// One supervised ray with its scale already chosen.
struct RaySample {
  Ray ray;
  RayInterval interval;
  std::size_t scale = 0;
  std::array<double, 3> target{};
};

/// Forward (and optionally backward) pass over a batch of rays. Buffers are
/// reused between calls.
template <typename T>
class RayBatch {
 public:
  /// Returns the MSE over rays x channels, times `loss_scale`. When `grads`
  /// is non-null the gradient of that value is added to it.
  double run(const MultiScaleField<T>& field, std::span<const RaySample> rays,
             const RenderSettings& settings, std::mt19937_64* jitter, FieldParams<T>* grads,
             double loss_scale = 1.0);

 private:
  struct Sample {
    double t = 0, density = 0;
    std::array<double, 3> rgb{};
    typename MultiScaleField<T>::PointTrace trace;
  };
  std::vector<Sample> samples_;
  std::vector<double> ts_;
  std::vector<typename MultiScaleField<T>::ScaleGrad> scale_grads_;
  std::vector<char> touched_;
  Mlp<T> decoder_grad_;
};

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.99;
  double eps = 1e-8;
};

template <typename T>
class Adam {
 public:
  Adam(const FieldParams<T>& like, std::array<double, 3> lr_by_group,
       AdamOptions opt = {});

  /// Rejects non-finite gradients with a NumericError naming the tensor.
  void step(FieldParams<T>& params, FieldParams<T>& grads);
  /// Clears moments of one parameter group (used at the domain handoff).
  void reset(ParamGroup group);
  std::size_t steps() const { return t_; }

 private:
  std::array<double, 3> lr_;
  AdamOptions opt_;
  FieldParams<T> m_, v_;
  std::size_t t_ = 0;
};

struct LogRecord {
  std::size_t step = 0;
  double loss = 0;
  std::string phase;  // "spatial" or "frequency"
  std::vector<double> probe_psnr;  // per scale; empty when not probed

  std::string to_json() const;
};

struct TrainResult {
  MultiScaleField<float> field;
  std::vector<LogRecord> log;
};

/// Footprint of the center ray of the first view at full resolution, taken
/// at its mid-interval distance.
double dataset_base_footprint(const MultiScaleDataset& ds);

/// Supervised ray through a pixel center of view `view` at `scale`.
template <typename T>
RaySample make_sample(const MultiScaleField<T>& field, const MultiScaleDataset& ds,
                      std::size_t view, std::size_t scale, std::size_t x, std::size_t y);

using ProgressFn = std::function<void(const LogRecord&)>;

/// Rejects a dataset whose scales differ from the configuration before
/// step 0. Steps [0, warmup) optimize spatial factors; the handoff then
/// transforms them once into the frequency domain.
TrainResult train_loop(const TrainConfig& cfg, const MultiScaleDataset& ds,
                       const ProgressFn& progress = {});

RenderSettings eval_settings(const TrainConfig& cfg, const MultiScaleDataset& ds);

/// Renders every view of `split` at every scale and averages the metrics.
template <typename T>
MetricReport evaluate_field(MultiScaleField<T>& field, const MultiScaleDataset& ds,
                            const RenderSettings& settings, const std::string& split = "test");

/// Single-flag ablation run; more than one flag is rejected.
MetricReport run_ablation(TrainConfig cfg, const AblationFlags& flags,
                          const MultiScaleDataset& ds, const ProgressFn& progress = {});

}  // namespace freqfield
