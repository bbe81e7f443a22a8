#include "freqfield/train.hpp"

#include <cmath>
#include <sstream>

#include "json.hpp"

namespace freqfield {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::no_mask: return "no_mask";
    case Variant::no_lpf: return "no_lpf";
    case Variant::shared_lpf: return "shared_lpf";
    case Variant::baseline: return "baseline";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  for (Variant v : {Variant::full, Variant::no_mask, Variant::no_lpf, Variant::shared_lpf,
                    Variant::baseline})
    if (s == variant_name(v)) return v;
  throw std::invalid_argument("unknown variant '" + s +
                              "' (expected full, no_mask, no_lpf, shared_lpf or baseline)");
}

Variant AblationFlags::variant() const {
  if (count() > 1)
    throw std::invalid_argument("at most one of no_mask, no_lpf, shared_lpf may be set");
  if (no_mask) return Variant::no_mask;
  if (no_lpf) return Variant::no_lpf;
  if (shared_lpf) return Variant::shared_lpf;
  return Variant::full;
}

void apply_variant(Variant v, PipelineOptions& opt) {
  opt.use_mask = !(v == Variant::no_mask || v == Variant::baseline);
  opt.lpf = v == Variant::no_lpf || v == Variant::baseline ? LpfPolicy::all_pass
            : v == Variant::shared_lpf                     ? LpfPolicy::shared
                                                           : LpfPolicy::scale_specific;
}

void TrainConfig::validate() const {
  if (total_steps > 0 && warmup_steps >= total_steps)
    throw std::invalid_argument("warmup_steps (" + std::to_string(warmup_steps) +
                                ") must be less than total_steps (" +
                                std::to_string(total_steps) + ")");
  if (batch_rays == 0) throw std::invalid_argument("batch_rays must be positive");
  if (!(lr_factors > 0)) throw std::invalid_argument("lr_factors must be positive");
  if (!(lr_masks > 0)) throw std::invalid_argument("lr_masks must be positive");
  if (!(lr_decoder > 0)) throw std::invalid_argument("lr_decoder must be positive");
  if (samples_per_ray < 2) throw std::invalid_argument("samples_per_ray must be at least 2");
  resolved_field().validate();
}

FieldConfig TrainConfig::resolved_field() const {
  FieldConfig f = field;
  f.pipeline.mode = mask_mode;
  apply_variant(variant, f.pipeline);
  return f;
}

double mse_loss(std::span<const double> pred, std::span<const double> target) {
  if (pred.size() != target.size())
    throw std::invalid_argument("mse_loss: prediction has " + std::to_string(pred.size()) +
                                " entries, target has " + std::to_string(target.size()));
  if (pred.empty()) throw std::invalid_argument("mse_loss: empty batch");
  double acc = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) acc += (pred[i] - target[i]) * (pred[i] - target[i]);
  return acc / static_cast<double>(pred.size());
}

// ---------------------------------------------------------------------------
// Ray batches

namespace {

template <typename T>
void add_mlp(Mlp<T>& into, const Mlp<T>& g) {
  into.w0 += g.w0;
  into.w1 += g.w1;
  into.w2 += g.w2;
  into.b0 += g.b0;
  into.b1 += g.b1;
  into.b2 += g.b2;
}

}  // namespace

template <typename T>
double RayBatch<T>::run(const MultiScaleField<T>& field, std::span<const RaySample> rays,
                        const RenderSettings& s, std::mt19937_64* jitter, FieldParams<T>* grads,
                        double loss_scale) {
  if (rays.empty()) throw std::invalid_argument("empty ray batch");
  const std::size_t S = s.samples_per_ray;
  const std::size_t extent = field.config().extent;
  samples_.resize(S);
  ts_.resize(S);
  if (grads) {
    if (scale_grads_.size() != field.num_scales()) {
      scale_grads_.clear();
      for (std::size_t k = 0; k < field.num_scales(); ++k)
        scale_grads_.push_back(field.zero_scale_grad());
    }
    touched_.assign(field.num_scales(), 0);
    const auto& dec = field.params().decoder;
    decoder_grad_ = Mlp<T>::zeros(dec.inputs(), dec.hidden());
  }

  const double norm = 1.0 / (3.0 * static_cast<double>(rays.size()));
  double loss = 0;
  for (const auto& r : rays) {
    std::array<double, 3> pred = s.background;
    std::size_t n = 0;
    double trans = 1.0;
    const double delta = (r.interval.t1 - r.interval.t0) / static_cast<double>(S);
    if (!r.interval.empty()) {
      sample_distances(r.interval, S, jitter, ts_);
      std::array<double, 3> acc{};
      for (std::size_t i = 0; i < S; ++i) {
        Sample& smp = samples_[i];
        smp.t = ts_[i];
        smp.trace.scale = r.scale;
        const Vec3 p = r.ray.origin + r.ray.dir * smp.t;
        smp.trace.stencil = PointStencil::at({p.x, p.y, p.z}, extent);
        smp.density = field.query_density(smp.trace.stencil, r.scale, smp.trace.density_pre);
        n = i + 1;
        if (smp.density <= 0) continue;
        const auto rgb = field.query_color(r.ray.dir, smp.trace);
        for (int c = 0; c < 3; ++c) smp.rgb[c] = rgb[c];
        const double tau = smp.density * delta;
        const double w = trans * -std::expm1(-tau);
        for (int c = 0; c < 3; ++c) acc[c] += w * smp.rgb[c];
        trans *= std::exp(-tau);
        if (trans < s.min_transmittance) break;
      }
      for (int c = 0; c < 3; ++c) pred[c] = acc[c] + trans * s.background[c];
    }
    std::array<double, 3> g{};
    for (int c = 0; c < 3; ++c) {
      const double d = pred[c] - r.target[c];
      loss += d * d;
      g[c] = 2.0 * d * norm * loss_scale;
    }
    if (!grads || n == 0) continue;

    // d pred / d tau_i = T_{i+1} c_i - sum_{k>i} w_k c_k - T_final bg, dotted with g.
    const double g_bg = trans * (g[0] * s.background[0] + g[1] * s.background[1] +
                                 g[2] * s.background[2]);
    auto& sg = scale_grads_[r.scale];
    touched_[r.scale] = 1;
    // Recover transmittances front to back, then sweep back to front.
    double t_before = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
      Sample& smp = samples_[i];
      smp.rgb = smp.density > 0 ? smp.rgb : std::array<double, 3>{};
      const double tau = smp.density * delta;
      smp.t = t_before;  // reuse: transmittance before sample i
      t_before *= std::exp(-tau);
    }
    double suffix = 0;
    for (std::size_t i = n; i-- > 0;) {
      const Sample& smp = samples_[i];
      if (smp.density <= 0) continue;
      const double tau = smp.density * delta;
      const double t_after = smp.t * std::exp(-tau);
      const double w = smp.t * -std::expm1(-tau);
      const double gc = g[0] * smp.rgb[0] + g[1] * smp.rgb[1] + g[2] * smp.rgb[2];
      const double dtau = t_after * gc - suffix - g_bg;
      const std::array<T, 3> grad_rgb{static_cast<T>(w * g[0]), static_cast<T>(w * g[1]),
                                      static_cast<T>(w * g[2])};
      field.backward_point(smp.trace, static_cast<T>(dtau * delta), &grad_rgb, sg,
                           decoder_grad_);
      suffix += w * gc;
    }
  }

  if (grads) {
    for (std::size_t k = 0; k < field.num_scales(); ++k) {
      if (!touched_[k]) continue;
      field.backward_expansion(k, scale_grads_[k], *grads);
      scale_grads_[k].density.set_zero();
      scale_grads_[k].appearance.set_zero();
    }
    add_mlp(grads->decoder, decoder_grad_);
  }
  return loss * norm * loss_scale;
}

// ---------------------------------------------------------------------------
// Adam

template <typename T>
Adam<T>::Adam(const FieldParams<T>& like, std::array<double, 3> lr, AdamOptions opt)
    : lr_(lr), opt_(opt), m_(zeros_like(like)), v_(zeros_like(like)) {}

template <typename T>
void Adam<T>::step(FieldParams<T>& params, FieldParams<T>& grads) {
  auto p = named_tensors(params);
  auto g = named_tensors(grads);
  auto m = named_tensors(m_);
  auto v = named_tensors(v_);
  if (p.size() != g.size() || p.size() != m.size())
    throw std::invalid_argument("optimizer: gradient structure does not match parameters");
  for (const auto& t : g)
    for (T x : t.values)
      if (!std::isfinite(static_cast<double>(x)))
        throw NumericError("non-finite gradient in " + t.name);
  ++t_;
  const double bc1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  const double b1 = opt_.beta1, b2 = opt_.beta2;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double lr = lr_[static_cast<int>(p[i].group)];
    auto pv = p[i].values;
    auto gv = g[i].values;
    auto mv = m[i].values;
    auto vv = v[i].values;
    if (pv.size() != gv.size())
      throw std::invalid_argument("optimizer: shape mismatch in " + p[i].name);
    for (std::size_t k = 0; k < pv.size(); ++k) {
      const double gk = gv[k];
      const double mk = b1 * mv[k] + (1 - b1) * gk;
      const double vk = b2 * vv[k] + (1 - b2) * gk * gk;
      mv[k] = static_cast<T>(mk);
      vv[k] = static_cast<T>(vk);
      if (mk == 0) continue;
      pv[k] -= static_cast<T>(lr * (mk / bc1) / (std::sqrt(vk / bc2) + opt_.eps));
    }
  }
}

template <typename T>
void Adam<T>::reset(ParamGroup group) {
  for (auto* st : {&m_, &v_})
    for (auto& t : named_tensors(*st))
      if (t.group == group) std::fill(t.values.begin(), t.values.end(), T(0));
}

// ---------------------------------------------------------------------------
// Training loop

std::string LogRecord::to_json() const {
  nlohmann::ordered_json j;
  j["step"] = step;
  j["loss"] = loss;
  j["phase"] = phase;
  if (!probe_psnr.empty()) {
    nlohmann::ordered_json p = nlohmann::ordered_json::array();
    for (double v : probe_psnr) {
      if (std::isinf(v)) p.push_back("inf");
      else p.push_back(v);
    }
    j["probe_psnr"] = p;
  }
  return j.dump();
}

double dataset_base_footprint(const MultiScaleDataset& ds) {
  if (ds.views.empty()) throw std::invalid_argument("dataset has no views");
  const Camera cam = ds.camera(0, 0);
  const Ray r = camera_ray(cam, 0.5 * cam.width, 0.5 * cam.height);
  const RayInterval iv = clip_to_unit_cube(r, cam.near, cam.far);
  const double mid = iv.empty() ? 0.5 * (cam.near + cam.far) : 0.5 * (iv.t0 + iv.t1);
  return r.footprint * mid;
}

template <typename T>
RaySample make_sample(const MultiScaleField<T>& field, const MultiScaleDataset& ds,
                      std::size_t view, std::size_t scale, std::size_t x, std::size_t y) {
  const Camera cam = ds.camera(view, scale);
  RaySample s;
  s.ray = camera_ray(cam, x + 0.5, y + 0.5);
  s.interval = clip_to_unit_cube(s.ray, cam.near, cam.far);
  s.scale = ray_scale(field, s.ray, s.interval);
  const Image& img = ds.views[view].images[scale];
  for (int c = 0; c < 3; ++c) s.target[c] = img.at(x, y, c);
  return s;
}

RenderSettings eval_settings(const TrainConfig& cfg, const MultiScaleDataset& ds) {
  RenderSettings rs;
  rs.samples_per_ray = cfg.samples_per_ray;
  rs.background = ds.background;
  rs.jitter = false;
  rs.min_transmittance = 1e-4;
  return rs;
}

namespace {

void zero_params(FieldParams<float>& g) {
  for (auto& t : named_tensors(g)) std::fill(t.values.begin(), t.values.end(), 0.0f);
}

std::vector<double> probe_psnr(MultiScaleField<float>& field, const MultiScaleDataset& ds,
                               const RenderSettings& rs) {
  auto test = ds.split_indices("test");
  const std::size_t view = test.empty() ? 0 : test.front();
  std::vector<double> out;
  for (std::size_t s = 0; s < ds.num_scales(); ++s)
    out.push_back(psnr(render_image(field, ds.camera(view, s), rs), ds.views[view].images[s]));
  return out;
}

}  // namespace

TrainResult train_loop(const TrainConfig& cfg, const MultiScaleDataset& ds,
                       const ProgressFn& progress) {
  cfg.validate();
  ds.validate();
  const FieldConfig fc = cfg.resolved_field();
  if (ds.reductions != fc.scales.reduction_factors) {
    std::ostringstream os;
    os << "dataset scales [";
    for (double r : ds.reductions) os << ' ' << r;
    os << " ] do not match the configured scales [";
    for (double r : fc.scales.reduction_factors) os << ' ' << r;
    os << " ]";
    throw std::invalid_argument(os.str());
  }
  const auto train_views = ds.split_indices("train");
  if (train_views.empty()) throw std::invalid_argument("dataset has no training views");

  TrainResult result{MultiScaleField<float>(fc, cfg.seed), {}};
  auto& field = result.field;
  field.set_base_footprint(dataset_base_footprint(ds));
  if (cfg.total_steps == 0) return result;

  const RenderSettings eval_rs = eval_settings(cfg, ds);
  RenderSettings train_rs = eval_rs;
  train_rs.jitter = true;

  Adam<float> adam(field.params(), {cfg.lr_factors, cfg.lr_masks, cfg.lr_decoder});
  auto grads = zeros_like(field.params());
  RayBatch<float> batch;
  std::vector<RaySample> rays(cfg.batch_rays);
  std::mt19937_64 rng(cfg.seed * 0x9E3779B97F4A7C15ull + 1);
  std::uniform_int_distribution<std::size_t> pick_scale(0, ds.num_scales() - 1);
  std::uniform_int_distribution<std::size_t> pick_view(0, train_views.size() - 1);

  for (std::size_t step = 0; step < cfg.total_steps; ++step) {
    if (step == cfg.warmup_steps) {
      field.to_frequency_domain();
      adam.reset(ParamGroup::factors);
    }
    const std::size_t scale = pick_scale(rng);
    const Camera cam = ds.camera(train_views[0], scale);
    std::uniform_int_distribution<std::size_t> px(0, cam.width - 1), py(0, cam.height - 1);
    for (auto& r : rays) {
      const std::size_t v = train_views[pick_view(rng)];
      const std::size_t x = px(rng), y = py(rng);
      r = make_sample(field, ds, v, scale, x, y);
      if (!field.fresh(r.scale)) field.expand(r.scale);
    }
    zero_params(grads);
    const double loss = batch.run(field, rays, train_rs, &rng, &grads);
    if (!std::isfinite(loss)) throw NumericError("non-finite loss at step " + std::to_string(step));
    adam.step(field.params(), grads);
    field.invalidate();

    LogRecord rec;
    rec.step = step;
    rec.loss = loss;
    rec.phase = field.domain() == Domain::spatial ? "spatial" : "frequency";
    if (cfg.probe_every > 0 && ((step + 1) % cfg.probe_every == 0 || step + 1 == cfg.total_steps))
      rec.probe_psnr = probe_psnr(field, ds, eval_rs);
    if (progress) progress(rec);
    result.log.push_back(std::move(rec));
  }
  if (field.domain() == Domain::spatial) field.to_frequency_domain();
  return result;
}

template <typename T>
MetricReport evaluate_field(MultiScaleField<T>& field, const MultiScaleDataset& ds,
                            const RenderSettings& settings, const std::string& split) {
  const auto views = ds.split_indices(split);
  if (views.empty()) throw std::invalid_argument("dataset has no '" + split + "' views");
  if (ds.num_scales() != field.num_scales())
    throw std::invalid_argument("checkpoint has " + std::to_string(field.num_scales()) +
                                " scales, dataset has " + std::to_string(ds.num_scales()));
  MetricReport report;
  for (std::size_t s = 0; s < ds.num_scales(); ++s) {
    std::vector<Image> renders, targets;
    for (std::size_t v : views) {
      renders.push_back(render_image(field, ds.camera(v, s), settings));
      targets.push_back(ds.views[v].images[s]);
    }
    report.scales.push_back(evaluate_views(ds.reductions[s], renders, targets));
  }
  return report;
}

MetricReport run_ablation(TrainConfig cfg, const AblationFlags& flags,
                          const MultiScaleDataset& ds, const ProgressFn& progress) {
  cfg.variant = flags.variant();
  auto result = train_loop(cfg, ds, progress);
  return evaluate_field(result.field, ds, eval_settings(cfg, ds));
}

template class RayBatch<float>;
template class RayBatch<double>;
template class Adam<float>;
template class Adam<double>;
template RaySample make_sample<float>(const MultiScaleField<float>&, const MultiScaleDataset&,
                                      std::size_t, std::size_t, std::size_t, std::size_t);
template RaySample make_sample<double>(const MultiScaleField<double>&, const MultiScaleDataset&,
                                       std::size_t, std::size_t, std::size_t, std::size_t);
template MetricReport evaluate_field<float>(MultiScaleField<float>&, const MultiScaleDataset&,
                                            const RenderSettings&, const std::string&);
template MetricReport evaluate_field<double>(MultiScaleField<double>&, const MultiScaleDataset&,
                                             const RenderSettings&, const std::string&);

}  // namespace freqfield
