#include "freqfield/vm_field.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace freqfield {

// ---------------------------------------------------------------------------
// VMDecomposition

template <typename T>
VMDecomposition<T> VMDecomposition<T>::zeros(std::size_t rank, std::size_t extent) {
  if (rank == 0 || extent < 2)
    throw ShapeError("VM decomposition needs rank >= 1 and extent >= 2");
  VMDecomposition vm;
  vm.rank = rank;
  vm.extent = extent;
  for (int p = 0; p < 3; ++p) {
    vm.vectors[p] = Grid2D<T>({rank, extent});
    vm.matrices[p] = Grid3D<T>({rank, extent, extent});
  }
  return vm;
}

template <typename T>
void VMDecomposition<T>::set_zero() {
  for (int p = 0; p < 3; ++p) {
    vectors[p].fill(T(0));
    matrices[p].fill(T(0));
  }
}

template <typename T>
bool VMDecomposition<T>::all_finite() const {
  for (int p = 0; p < 3; ++p)
    if (!vectors[p].all_finite() || !matrices[p].all_finite()) return false;
  return true;
}

template <typename T>
void VMDecomposition<T>::validate() const {
  const Extents<2> vs{rank, extent};
  const Extents<3> ms{rank, extent, extent};
  for (int p = 0; p < 3; ++p) {
    if (vectors[p].shape() != vs)
      throw ShapeError("vector factor " + std::to_string(p) + " has shape " +
                       shape_string(vectors[p].shape()) + ", expected " + shape_string(vs));
    if (matrices[p].shape() != ms)
      throw ShapeError("matrix factor " + std::to_string(p) + " has shape " +
                       shape_string(matrices[p].shape()) + ", expected " + shape_string(ms));
  }
}

PointStencil PointStencil::at(const std::array<double, 3>& coord, std::size_t extent) {
  PointStencil st;
  for (int a = 0; a < 3; ++a) st.axis[a] = lerp_axis(coord[a], extent);
  return st;
}

namespace {

template <typename T>
struct PlaneWeights {
  std::size_t v_lo, v_hi;
  T v_w0, v_w1;
  std::size_t m_idx[4];
  T m_w[4];
};

template <typename T>
PlaneWeights<T> plane_weights(const PointStencil& st, int p, std::size_t n) {
  PlaneWeights<T> w;
  const auto& av = st.axis[p];
  w.v_lo = av.lo;
  w.v_hi = av.hi;
  w.v_w0 = static_cast<T>(1.0 - av.frac);
  w.v_w1 = static_cast<T>(av.frac);
  const auto [a, b] = plane_axes(p);
  const auto& ra = st.axis[a];
  const auto& rb = st.axis[b];
  w.m_idx[0] = ra.lo * n + rb.lo;
  w.m_idx[1] = ra.lo * n + rb.hi;
  w.m_idx[2] = ra.hi * n + rb.lo;
  w.m_idx[3] = ra.hi * n + rb.hi;
  w.m_w[0] = static_cast<T>((1.0 - ra.frac) * (1.0 - rb.frac));
  w.m_w[1] = static_cast<T>((1.0 - ra.frac) * rb.frac);
  w.m_w[2] = static_cast<T>(ra.frac * (1.0 - rb.frac));
  w.m_w[3] = static_cast<T>(ra.frac * rb.frac);
  return w;
}

}  // namespace

template <typename T>
void reconstruct_features(const VMDecomposition<T>& vm, const PointStencil& st,
                          std::span<T> out) {
  const std::size_t n = vm.extent, nn = n * n;
  for (std::size_t r = 0; r < vm.rank; ++r) out[r] = 0;
  for (int p = 0; p < 3; ++p) {
    const auto w = plane_weights<T>(st, p, n);
    const T* vec = vm.vectors[p].data().data();
    const T* mat = vm.matrices[p].data().data();
    for (std::size_t r = 0; r < vm.rank; ++r) {
      const T* vr = vec + r * n;
      const T* mr = mat + r * nn;
      const T v = vr[w.v_lo] * w.v_w0 + vr[w.v_hi] * w.v_w1;
      const T m = mr[w.m_idx[0]] * w.m_w[0] + mr[w.m_idx[1]] * w.m_w[1] +
                  mr[w.m_idx[2]] * w.m_w[2] + mr[w.m_idx[3]] * w.m_w[3];
      out[r] += v * m;
    }
  }
}

template <typename T>
void reconstruct_features_backward(const VMDecomposition<T>& vm, const PointStencil& st,
                                   std::span<const T> grad_features,
                                   VMDecomposition<T>& grad) {
  const std::size_t n = vm.extent, nn = n * n;
  for (int p = 0; p < 3; ++p) {
    const auto w = plane_weights<T>(st, p, n);
    const T* vec = vm.vectors[p].data().data();
    const T* mat = vm.matrices[p].data().data();
    T* gvec = grad.vectors[p].data().data();
    T* gmat = grad.matrices[p].data().data();
    for (std::size_t r = 0; r < vm.rank; ++r) {
      const T g = grad_features[r];
      if (g == T(0)) continue;
      const T* vr = vec + r * n;
      const T* mr = mat + r * nn;
      const T v = vr[w.v_lo] * w.v_w0 + vr[w.v_hi] * w.v_w1;
      const T m = mr[w.m_idx[0]] * w.m_w[0] + mr[w.m_idx[1]] * w.m_w[1] +
                  mr[w.m_idx[2]] * w.m_w[2] + mr[w.m_idx[3]] * w.m_w[3];
      const T gv = g * m, gm = g * v;
      gvec[r * n + w.v_lo] += gv * w.v_w0;
      gvec[r * n + w.v_hi] += gv * w.v_w1;
      T* gmr = gmat + r * nn;
      for (int c = 0; c < 4; ++c) gmr[w.m_idx[c]] += gm * w.m_w[c];
    }
  }
}

template <typename T>
T reconstruct_point(const VMDecomposition<T>& vm, const std::array<double, 3>& coord) {
  std::vector<T> f(vm.rank);
  reconstruct_features<T>(vm, PointStencil::at(coord, vm.extent), f);
  T sum = 0;
  for (T v : f) sum += v;
  return sum;
}

// ---------------------------------------------------------------------------
// Parameter bundles

namespace {

template <typename T>
void append_vm(std::vector<NamedTensor<T>>& out, VMDecomposition<T>& vm,
               const std::string& prefix) {
  for (int p = 0; p < 3; ++p)
    out.push_back({prefix + "/vec/" + std::to_string(p), ParamGroup::factors,
                   vm.vectors[p].data()});
  for (int p = 0; p < 3; ++p)
    out.push_back({prefix + "/mat/" + std::to_string(p), ParamGroup::factors,
                   vm.matrices[p].data()});
}

template <typename T>
void append_masks(std::vector<NamedTensor<T>>& out, FactorMasks<T>& m,
                  const std::string& prefix) {
  for (int p = 0; p < 3; ++p)
    out.push_back({prefix + "/vec/" + std::to_string(p), ParamGroup::masks,
                   m.vectors[p].values.data()});
  for (int p = 0; p < 3; ++p)
    out.push_back({prefix + "/mat/" + std::to_string(p), ParamGroup::masks,
                   m.matrices[p].values.data()});
}

template <typename T>
FactorMasks<T> make_masks(std::size_t n, double init, double eps) {
  FactorMasks<T> m;
  for (int p = 0; p < 3; ++p) {
    m.vectors[p] = {Grid1D<T>({n}, static_cast<T>(init)), eps};
    m.matrices[p] = {Grid2D<T>({n, n}, static_cast<T>(init)), eps};
  }
  return m;
}

}  // namespace

template <typename T>
std::vector<NamedTensor<T>> named_tensors(FieldParams<T>& p) {
  std::vector<NamedTensor<T>> out;
  append_vm(out, p.density, "density");
  append_vm(out, p.appearance, "appearance");
  for (std::size_t s = 0; s < p.masks.size(); ++s) {
    append_masks(out, p.masks[s].density, "mask/" + std::to_string(s) + "/density");
    append_masks(out, p.masks[s].appearance, "mask/" + std::to_string(s) + "/appearance");
  }
  out.push_back({"decoder/w0", ParamGroup::decoder, p.decoder.w0.data()});
  out.push_back({"decoder/b0", ParamGroup::decoder, p.decoder.b0.data()});
  out.push_back({"decoder/w1", ParamGroup::decoder, p.decoder.w1.data()});
  out.push_back({"decoder/b1", ParamGroup::decoder, p.decoder.b1.data()});
  out.push_back({"decoder/w2", ParamGroup::decoder, p.decoder.w2.data()});
  out.push_back({"decoder/b2", ParamGroup::decoder, p.decoder.b2.data()});
  return out;
}

template <typename T>
FieldParams<T> zeros_like(const FieldParams<T>& like) {
  FieldParams<T> z = like;
  for (auto& t : named_tensors(z))
    for (auto& v : t.values) v = T(0);
  return z;
}

// ---------------------------------------------------------------------------
// Config and activations

double FieldConfig::resolved_mask_init() const {
  if (!std::isnan(mask_init)) return mask_init;
  return pipeline.mode == MaskMode::literal ? 1.0 : 4.0;
}

void FieldConfig::validate() const {
  if (extent < 2) throw std::invalid_argument("field extent must be >= 2");
  if (density_rank == 0 || appearance_rank == 0)
    throw std::invalid_argument("field ranks must be positive");
  if (hidden == 0) throw std::invalid_argument("decoder width must be positive");
  if (!(epsilon >= 0.0 && epsilon < 1.0))
    throw std::invalid_argument("mask epsilon must lie in [0, 1)");
  if (!(density_scale > 0.0)) throw std::invalid_argument("density scale must be positive");
  scales.validate();
}

double density_activation(double x) {
  if (x <= 0.0) return 0.0;
  // softplus(x) - ln 2, written to stay accurate for large x
  const double sp = x > 30.0 ? x : std::log1p(std::exp(x));
  return std::max(0.0, sp - std::numbers::ln2);
}

double density_activation_slope(double x) {
  if (x <= 0.0) return 0.0;
  return 1.0 / (1.0 + std::exp(-x));
}

std::size_t select_scale(double pixel_footprint, double base_footprint,
                         std::size_t num_scales) {
  if (!(pixel_footprint > 0.0) || !(base_footprint > 0.0))
    throw std::invalid_argument("select_scale: footprints must be positive");
  if (num_scales == 0) throw std::invalid_argument("select_scale: no scales");
  const double level = std::round(std::log2(pixel_footprint / base_footprint));
  if (level <= 0.0) return 0;
  const auto top = static_cast<double>(num_scales - 1);
  return static_cast<std::size_t>(std::min(level, top));
}

// ---------------------------------------------------------------------------
// MultiScaleField

template <typename T>
MultiScaleField<T>::MultiScaleField(const FieldConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, cfg_.init_std);
  params_.density = VMDecomposition<T>::zeros(cfg_.density_rank, cfg_.extent);
  params_.appearance = VMDecomposition<T>::zeros(cfg_.appearance_rank, cfg_.extent);
  for (auto* vm : {&params_.density, &params_.appearance}) {
    for (int p = 0; p < 3; ++p) {
      for (auto& v : vm->vectors[p].data()) v = static_cast<T>(normal(rng));
      for (auto& v : vm->matrices[p].data()) v = static_cast<T>(normal(rng));
    }
  }
  const double init = cfg_.resolved_mask_init();
  for (std::size_t s = 0; s < num_scales(); ++s) {
    params_.masks.push_back({make_masks<T>(cfg_.extent, init, cfg_.epsilon),
                             make_masks<T>(cfg_.extent, init, cfg_.epsilon)});
  }
  params_.decoder = Mlp<T>::random(cfg_.appearance_rank + kDirFeatures, cfg_.hidden, rng);
  invalidate();
}

template <typename T>
void MultiScaleField<T>::set_base_footprint(double f) {
  if (!(f > 0.0)) throw std::invalid_argument("base footprint must be positive");
  base_footprint_ = f;
}

template <typename T>
std::size_t MultiScaleField<T>::scale_for_footprint(double footprint) const {
  return select_scale(footprint, base_footprint_, num_scales());
}

template <typename T>
void MultiScaleField<T>::invalidate() {
  fresh_.assign(num_scales(), 0);
  if (scale_grids_.size() != num_scales()) scale_grids_.resize(num_scales());
}

template <typename T>
bool MultiScaleField<T>::fresh(std::size_t scale) const {
  if (scale >= num_scales()) throw std::out_of_range("scale index out of range");
  return domain_ == Domain::spatial || fresh_[scale] != 0;
}

template <typename T>
std::shared_ptr<const LowPassFilter<1>> MultiScaleField<T>::vector_filter(std::size_t scale) const {
  const double sigma = cfg_.pipeline.sigma(cfg_.extent, cfg_.scales.reduction_factors.at(scale));
  return FilterCache::global().vector_filter(cfg_.extent, sigma);
}

template <typename T>
std::shared_ptr<const LowPassFilter<2>> MultiScaleField<T>::matrix_filter(std::size_t scale) const {
  const double sigma = cfg_.pipeline.sigma(cfg_.extent, cfg_.scales.reduction_factors.at(scale));
  return FilterCache::global().matrix_filter(cfg_.extent, sigma);
}

template <typename T>
void MultiScaleField<T>::expand_kind(std::size_t scale, const VMDecomposition<T>& shared,
                                     const FactorMasks<T>& masks,
                                     VMDecomposition<T>& out) const {
  const auto vf = vector_filter(scale);
  const auto mf = matrix_filter(scale);
  const bool use_mask = cfg_.pipeline.use_mask;
  out.rank = shared.rank;
  out.extent = shared.extent;
  for (int p = 0; p < 3; ++p) {
    expand_stack<T, 1>(shared.vectors[p], *vf, use_mask ? &masks.vectors[p] : nullptr,
                       cfg_.pipeline.mode, out.vectors[p]);
    expand_stack<T, 2>(shared.matrices[p], *mf, use_mask ? &masks.matrices[p] : nullptr,
                       cfg_.pipeline.mode, out.matrices[p]);
  }
}

template <typename T>
void MultiScaleField<T>::expand(std::size_t scale) {
  if (scale >= num_scales()) throw std::out_of_range("scale index out of range");
  if (domain_ == Domain::spatial || fresh_[scale]) return;
  auto& g = scale_grids_[scale];
  expand_kind(scale, params_.density, params_.masks[scale].density, g.density);
  expand_kind(scale, params_.appearance, params_.masks[scale].appearance, g.appearance);
  fresh_[scale] = 1;
}

template <typename T>
void MultiScaleField<T>::expand_all() {
  for (std::size_t s = 0; s < num_scales(); ++s) expand(s);
}

template <typename T>
const VMDecomposition<T>& MultiScaleField<T>::density_grid(std::size_t scale) const {
  if (!fresh(scale)) throw std::logic_error("scale grid queried before expansion");
  return domain_ == Domain::spatial ? params_.density : scale_grids_[scale].density;
}

template <typename T>
const VMDecomposition<T>& MultiScaleField<T>::appearance_grid(std::size_t scale) const {
  if (!fresh(scale)) throw std::logic_error("scale grid queried before expansion");
  return domain_ == Domain::spatial ? params_.appearance : scale_grids_[scale].appearance;
}

template <typename T>
T MultiScaleField<T>::query_density(const PointStencil& st, std::size_t scale,
                                    T& density_pre) const {
  const auto& vm = density_grid(scale);
  const std::size_t n = vm.extent, nn = n * n;
  T sum = 0;
  for (int p = 0; p < 3; ++p) {
    const auto w = plane_weights<T>(st, p, n);
    const T* vec = vm.vectors[p].data().data();
    const T* mat = vm.matrices[p].data().data();
    for (std::size_t r = 0; r < vm.rank; ++r) {
      const T* vr = vec + r * n;
      const T* mr = mat + r * nn;
      const T v = vr[w.v_lo] * w.v_w0 + vr[w.v_hi] * w.v_w1;
      const T m = mr[w.m_idx[0]] * w.m_w[0] + mr[w.m_idx[1]] * w.m_w[1] +
                  mr[w.m_idx[2]] * w.m_w[2] + mr[w.m_idx[3]] * w.m_w[3];
      sum += v * m;
    }
  }
  density_pre = sum;
  return static_cast<T>(cfg_.density_scale * density_activation(sum));
}

template <typename T>
std::array<T, 3> MultiScaleField<T>::query_color(Vec3 dir, PointTrace& trace) const {
  const auto& vm = appearance_grid(trace.scale);
  const std::size_t r = vm.rank;
  trace.features.resize(r + kDirFeatures);
  reconstruct_features<T>(vm, trace.stencil, std::span<T>(trace.features).first(r));
  encode_direction<T>(dir, std::span<T>(trace.features).subspan(r));
  params_.decoder.forward(trace.features, trace.mlp);
  return trace.mlp.rgb;
}

template <typename T>
FieldSample<T> MultiScaleField<T>::query(const std::array<double, 3>& coord, Vec3 dir,
                                         std::size_t scale) const {
  if (scale >= num_scales())
    throw std::out_of_range("query: scale index " + std::to_string(scale) + " out of range");
  PointTrace trace;
  trace.scale = scale;
  trace.stencil = PointStencil::at(coord, cfg_.extent);
  FieldSample<T> s;
  s.density = query_density(trace.stencil, scale, trace.density_pre);
  s.rgb = query_color(dir, trace);
  return s;
}

template <typename T>
typename MultiScaleField<T>::ScaleGrad MultiScaleField<T>::zero_scale_grad() const {
  return {VMDecomposition<T>::zeros(cfg_.density_rank, cfg_.extent),
          VMDecomposition<T>::zeros(cfg_.appearance_rank, cfg_.extent)};
}

template <typename T>
void MultiScaleField<T>::backward_point(const PointTrace& trace, T grad_density,
                                        const std::array<T, 3>* grad_rgb, ScaleGrad& sg,
                                        Mlp<T>& decoder_grad) const {
  const double slope = density_activation_slope(trace.density_pre);
  if (grad_density != T(0) && slope != 0.0) {
    const T g = static_cast<T>(grad_density * cfg_.density_scale * slope);
    const auto& vm = density_grid(trace.scale);
    thread_local std::vector<T> gf;
    gf.assign(vm.rank, g);
    reconstruct_features_backward<T>(vm, trace.stencil, gf, sg.density);
  }
  if (grad_rgb) {
    const auto& vm = appearance_grid(trace.scale);
    thread_local std::vector<T> gx;
    gx.assign(trace.features.size(), T(0));
    params_.decoder.backward(trace.mlp, *grad_rgb, decoder_grad, gx);
    reconstruct_features_backward<T>(vm, trace.stencil,
                                     std::span<const T>(gx).first(vm.rank), sg.appearance);
  }
}

template <typename T>
void MultiScaleField<T>::backward_kind(std::size_t scale, const VMDecomposition<T>& shared,
                                       const FactorMasks<T>& masks,
                                       const VMDecomposition<T>& grad_spatial,
                                       VMDecomposition<T>& grad_shared,
                                       FactorMasks<T>& grad_masks) const {
  const auto vf = vector_filter(scale);
  const auto mf = matrix_filter(scale);
  const bool use_mask = cfg_.pipeline.use_mask;
  for (int p = 0; p < 3; ++p) {
    expand_stack_backward<T, 1>(shared.vectors[p], *vf, use_mask ? &masks.vectors[p] : nullptr,
                                cfg_.pipeline.mode, grad_spatial.vectors[p],
                                grad_shared.vectors[p],
                                use_mask ? &grad_masks.vectors[p].values : nullptr);
    expand_stack_backward<T, 2>(shared.matrices[p], *mf,
                                use_mask ? &masks.matrices[p] : nullptr, cfg_.pipeline.mode,
                                grad_spatial.matrices[p], grad_shared.matrices[p],
                                use_mask ? &grad_masks.matrices[p].values : nullptr);
  }
}

template <typename T>
void MultiScaleField<T>::backward_expansion(std::size_t scale, const ScaleGrad& g,
                                            FieldParams<T>& grads) const {
  if (domain_ == Domain::spatial) {
    for (int p = 0; p < 3; ++p) {
      grads.density.vectors[p] += g.density.vectors[p];
      grads.density.matrices[p] += g.density.matrices[p];
      grads.appearance.vectors[p] += g.appearance.vectors[p];
      grads.appearance.matrices[p] += g.appearance.matrices[p];
    }
    return;
  }
  backward_kind(scale, params_.density, params_.masks[scale].density, g.density,
                grads.density, grads.masks[scale].density);
  backward_kind(scale, params_.appearance, params_.masks[scale].appearance, g.appearance,
                grads.appearance, grads.masks[scale].appearance);
}

namespace {

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Divides coefficients of `stack` by the scale-0 filter weight times the
// scale-0 gate, so that expansion at scale 0 reproduces the input.
template <typename T, std::size_t Rank>
void compensate(Grid<T, Rank + 1>& stack, const LowPassFilter<Rank>& lpf,
                const LearnableMask<T, Rank>* gate_mask) {
  const std::size_t item = lpf.weights.size();
  for (std::size_t i = 0; i < stack.size(); ++i) {
    const std::size_t k = i % item;
    double den = lpf.weights[k];
    if (gate_mask) den *= logistic(gate_mask->values[k]) - gate_mask->epsilon;
    if (std::abs(den) < 1e-3) den = std::copysign(1e-3, den);
    stack[i] = static_cast<T>(static_cast<double>(stack[i]) / den);
  }
}

}  // namespace

template <typename T>
void MultiScaleField<T>::to_frequency_domain() {
  if (domain_ == Domain::frequency) return;
  const auto vf = vector_filter(0);
  const auto mf = matrix_filter(0);
  const bool use_mask = cfg_.pipeline.use_mask;
  const bool invertible = !use_mask || cfg_.pipeline.mode == MaskMode::multiplicative;
  auto convert = [&](VMDecomposition<T>& vm, const FactorMasks<T>& masks) {
    const std::size_t n = vm.extent;
    for (int p = 0; p < 3; ++p) {
      Grid2D<T> v(vm.vectors[p].shape());
      dct_rows<T>(vm.vectors[p].data(), v.data(), vm.rank, n, DctDirection::forward);
      Grid3D<T> m(vm.matrices[p].shape());
      dct_planes<T>(vm.matrices[p].data(), m.data(), vm.rank, n, n, DctDirection::forward);
      if (invertible) {
        compensate<T, 1>(v, *vf, use_mask ? &masks.vectors[p] : nullptr);
        compensate<T, 2>(m, *mf, use_mask ? &masks.matrices[p] : nullptr);
      }
      vm.vectors[p] = std::move(v);
      vm.matrices[p] = std::move(m);
    }
  };
  convert(params_.density, params_.masks[0].density);
  convert(params_.appearance, params_.masks[0].appearance);
  domain_ = Domain::frequency;
  invalidate();
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

const char* lpf_policy_name(LpfPolicy p) {
  switch (p) {
    case LpfPolicy::scale_specific: return "scale_specific";
    case LpfPolicy::all_pass: return "all_pass";
    case LpfPolicy::shared: return "shared";
  }
  return "?";
}

LpfPolicy parse_lpf_policy(const std::string& s) {
  if (s == "scale_specific") return LpfPolicy::scale_specific;
  if (s == "all_pass") return LpfPolicy::all_pass;
  if (s == "shared") return LpfPolicy::shared;
  throw FormatError("unknown low-pass policy '" + s + "'");
}

}  // namespace

template <typename T>
Container MultiScaleField<T>::to_container() const {
  Container c;
  c.put_int("format_version", kFormatVersion);
  c.put_int("config/extent", static_cast<std::int64_t>(cfg_.extent));
  c.put_int("config/density_rank", static_cast<std::int64_t>(cfg_.density_rank));
  c.put_int("config/appearance_rank", static_cast<std::int64_t>(cfg_.appearance_rank));
  c.put_int("config/hidden", static_cast<std::int64_t>(cfg_.hidden));
  c.put_array<double>("config/reduction_factors", cfg_.scales.reduction_factors,
                      {cfg_.scales.reduction_factors.size()});
  c.put_string("config/mask_mode", mask_mode_name(cfg_.pipeline.mode));
  c.put_int("config/use_mask", cfg_.pipeline.use_mask ? 1 : 0);
  c.put_string("config/lpf_policy", lpf_policy_name(cfg_.pipeline.lpf));
  c.put_scalar("config/epsilon", cfg_.epsilon);
  c.put_scalar("config/mask_init", cfg_.resolved_mask_init());
  c.put_scalar("config/density_scale", cfg_.density_scale);
  c.put_scalar("config/init_std", cfg_.init_std);
  c.put_string("domain", domain_ == Domain::spatial ? "spatial" : "frequency");
  c.put_scalar("base_footprint", base_footprint_);
  auto params = params_;
  for (const auto& t : named_tensors(params))
    c.put_array<T>(t.name, t.values, {t.values.size()});
  return c;
}

template <typename T>
MultiScaleField<T> MultiScaleField<T>::from_container(const Container& c) {
  if (!c.contains("format_version"))
    throw FormatError("checkpoint has no format_version entry");
  const auto version = c.get_int("format_version");
  if (version != kFormatVersion) {
    throw FormatError("checkpoint format version " + std::to_string(version) +
                      " is not supported (expected " + std::to_string(kFormatVersion) + ")");
  }
  FieldConfig cfg;
  cfg.extent = static_cast<std::size_t>(c.get_int("config/extent"));
  cfg.density_rank = static_cast<std::size_t>(c.get_int("config/density_rank"));
  cfg.appearance_rank = static_cast<std::size_t>(c.get_int("config/appearance_rank"));
  cfg.hidden = static_cast<std::size_t>(c.get_int("config/hidden"));
  cfg.scales.reduction_factors = c.get_array<double>("config/reduction_factors");
  try {
    cfg.pipeline.mode = parse_mask_mode(c.get_string("config/mask_mode"));
  } catch (const std::invalid_argument& e) {
    throw FormatError(e.what());
  }
  cfg.pipeline.use_mask = c.get_int("config/use_mask") != 0;
  cfg.pipeline.lpf = parse_lpf_policy(c.get_string("config/lpf_policy"));
  cfg.epsilon = c.get_scalar("config/epsilon");
  cfg.mask_init = c.get_scalar("config/mask_init");
  cfg.density_scale = c.get_scalar("config/density_scale");
  cfg.init_std = c.get_scalar("config/init_std");
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("checkpoint config invalid: ") + e.what());
  }

  MultiScaleField f(cfg, 0);
  const auto domain = c.get_string("domain");
  if (domain != "spatial" && domain != "frequency")
    throw FormatError("unknown domain '" + domain + "'");
  f.domain_ = domain == "spatial" ? Domain::spatial : Domain::frequency;
  f.base_footprint_ = c.get_scalar("base_footprint");
  for (auto& t : named_tensors(f.params_)) {
    const auto values = c.get_array<T>(t.name);
    if (values.size() != t.values.size()) {
      throw FormatError("tensor '" + t.name + "' has " + std::to_string(values.size()) +
                        " values, expected " + std::to_string(t.values.size()));
    }
    std::copy(values.begin(), values.end(), t.values.begin());
  }
  f.invalidate();
  return f;
}

#define FREQFIELD_INSTANTIATE_VM(T)                                                      \
  template struct VMDecomposition<T>;                                                    \
  template void reconstruct_features<T>(const VMDecomposition<T>&, const PointStencil&,  \
                                        std::span<T>);                                   \
  template void reconstruct_features_backward<T>(const VMDecomposition<T>&,              \
                                                 const PointStencil&,                    \
                                                 std::span<const T>, VMDecomposition<T>&); \
  template T reconstruct_point<T>(const VMDecomposition<T>&, const std::array<double, 3>&); \
  template std::vector<NamedTensor<T>> named_tensors<T>(FieldParams<T>&);                \
  template FieldParams<T> zeros_like<T>(const FieldParams<T>&);                          \
  template class MultiScaleField<T>;

FREQFIELD_INSTANTIATE_VM(float)
FREQFIELD_INSTANTIATE_VM(double)

#undef FREQFIELD_INSTANTIATE_VM

}  // namespace freqfield
