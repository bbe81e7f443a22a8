#include "freqfield/freq_filter.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>
#include <utility>

namespace freqfield {

namespace {

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

template <std::size_t Rank>
std::size_t trailing_size(const Extents<Rank + 1>& shape) {
  std::size_t n = 1;
  for (std::size_t a = 1; a < Rank + 1; ++a) n *= shape[a];
  return n;
}

template <std::size_t Rank>
void check_stack_shape(const Extents<Rank + 1>& stack, const Extents<Rank>& item,
                       const char* what) {
  for (std::size_t a = 0; a < Rank; ++a) {
    if (stack[a + 1] != item[a]) {
      throw ShapeError(std::string(what) + ": stack " + shape_string(stack) +
                       " does not match " + shape_string(item));
    }
  }
}

template <typename T, std::size_t Rank>
void inverse_transform(std::span<const T> in, std::span<T> out,
                       const Extents<Rank + 1>& shape) {
  if constexpr (Rank == 1) {
    dct_rows<T>(in, out, shape[0], shape[1], DctDirection::inverse);
  } else {
    dct_planes<T>(in, out, shape[0], shape[1], shape[2], DctDirection::inverse);
  }
}

template <typename T, std::size_t Rank>
void forward_transform(std::span<const T> in, std::span<T> out,
                       const Extents<Rank + 1>& shape) {
  if constexpr (Rank == 1) {
    dct_rows<T>(in, out, shape[0], shape[1], DctDirection::forward);
  } else {
    dct_planes<T>(in, out, shape[0], shape[1], shape[2], DctDirection::forward);
  }
}

}  // namespace

double sigma_for_scale(std::size_t extent, double reduction) {
  if (extent < 2) throw std::invalid_argument("sigma_for_scale: extent must be >= 2");
  if (!(reduction >= 1.0))
    throw std::invalid_argument("sigma_for_scale: reduction factor must be >= 1");
  return static_cast<double>(extent) / (2.0 * reduction);
}

void ScaleConfig::validate() const {
  if (reduction_factors.empty())
    throw std::invalid_argument("scale config needs at least one scale");
  if (reduction_factors.front() != 1.0)
    throw std::invalid_argument("first reduction factor must be 1");
  for (std::size_t i = 1; i < reduction_factors.size(); ++i) {
    if (!(reduction_factors[i] > reduction_factors[i - 1]))
      throw std::invalid_argument("reduction factors must be strictly increasing");
  }
}

ScaleConfig ScaleConfig::dyadic(std::size_t count) {
  ScaleConfig cfg;
  cfg.reduction_factors.clear();
  for (std::size_t i = 0; i < count; ++i)
    cfg.reduction_factors.push_back(static_cast<double>(std::size_t{1} << i));
  return cfg;
}

template <std::size_t Rank>
LowPassFilter<Rank> build_lpf(const Extents<Rank>& shape, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("build_lpf: sigma must be positive");
  LowPassFilter<Rank> f;
  f.sigma = sigma;
  f.weights = Grid<double, Rank>(shape, 1.0);
  if (f.all_pass()) return f;
  const double inv = 1.0 / (2.0 * sigma * sigma);
  if constexpr (Rank == 1) {
    for (std::size_t u = 0; u < shape[0]; ++u) {
      const double d = static_cast<double>(u);
      f.weights(u) = std::exp(-d * d * inv);
    }
  } else if constexpr (Rank == 2) {
    for (std::size_t u = 0; u < shape[0]; ++u)
      for (std::size_t v = 0; v < shape[1]; ++v) {
        const double r2 = static_cast<double>(u * u + v * v);
        f.weights(u, v) = std::exp(-r2 * inv);
      }
  } else {
    for (std::size_t u = 0; u < shape[0]; ++u)
      for (std::size_t v = 0; v < shape[1]; ++v)
        for (std::size_t w = 0; w < shape[2]; ++w) {
          const double r2 = static_cast<double>(u * u + v * v + w * w);
          f.weights(u, v, w) = std::exp(-r2 * inv);
        }
  }
  return f;
}

template <typename T, std::size_t Rank>
FreqGrid<T, Rank> apply_lpf(const FreqGrid<T, Rank>& f, const LowPassFilter<Rank>& lpf) {
  if (f.shape() != lpf.weights.shape()) {
    throw ShapeError("apply_lpf: shape mismatch " + shape_string(f.shape()) + " vs " +
                     shape_string(lpf.weights.shape()));
  }
  FreqGrid<T, Rank> out(f.shape());
  for (std::size_t i = 0; i < f.size(); ++i)
    out[i] = static_cast<T>(static_cast<double>(f[i]) * lpf.weights[i]);
  return out;
}

const char* mask_mode_name(MaskMode m) {
  return m == MaskMode::literal ? "literal" : "multiplicative";
}

MaskMode parse_mask_mode(const std::string& s) {
  if (s == "literal") return MaskMode::literal;
  if (s == "multiplicative") return MaskMode::multiplicative;
  throw std::invalid_argument("unknown mask mode '" + s +
                              "' (expected literal or multiplicative)");
}

template <typename T, std::size_t Rank>
FreqGrid<T, Rank> apply_mask(const FreqGrid<T, Rank>& filtered,
                             const LearnableMask<T, Rank>& mask, MaskMode mode) {
  if (filtered.shape() != mask.values.shape()) {
    throw ShapeError("apply_mask: shape mismatch " + shape_string(filtered.shape()) +
                     " vs " + shape_string(mask.values.shape()));
  }
  FreqGrid<T, Rank> out(filtered.shape());
  for (std::size_t i = 0; i < filtered.size(); ++i) {
    const double f = filtered[i];
    const double m = mask.values[i];
    out[i] = static_cast<T>(mode == MaskMode::literal
                                ? sigmoid(f * m) - mask.epsilon
                                : f * (sigmoid(m) - mask.epsilon));
  }
  return out;
}

double PipelineOptions::sigma(std::size_t extent, double reduction) const {
  switch (lpf) {
    case LpfPolicy::scale_specific: return sigma_for_scale(extent, reduction);
    case LpfPolicy::all_pass: return std::numeric_limits<double>::infinity();
    case LpfPolicy::shared: return sigma_for_scale(extent, kSharedReduction);
  }
  return std::numeric_limits<double>::infinity();
}

struct FilterCache::Impl {
  std::mutex mu;
  std::map<std::pair<std::size_t, double>, std::shared_ptr<const LowPassFilter<1>>> vec;
  std::map<std::pair<std::size_t, double>, std::shared_ptr<const LowPassFilter<2>>> mat;
};

std::shared_ptr<FilterCache::Impl> FilterCache::make_impl() {
  return std::make_shared<Impl>();
}

std::shared_ptr<const LowPassFilter<1>> FilterCache::vector_filter(std::size_t n, double sigma) {
  std::lock_guard lock(impl_->mu);
  auto& slot = impl_->vec[{n, sigma}];
  if (!slot) slot = std::make_shared<LowPassFilter<1>>(build_lpf<1>({n}, sigma));
  return slot;
}

std::shared_ptr<const LowPassFilter<2>> FilterCache::matrix_filter(std::size_t n, double sigma) {
  std::lock_guard lock(impl_->mu);
  auto& slot = impl_->mat[{n, sigma}];
  if (!slot) slot = std::make_shared<LowPassFilter<2>>(build_lpf<2>({n, n}, sigma));
  return slot;
}

FilterCache& FilterCache::global() {
  static FilterCache cache;
  return cache;
}

template <typename T, std::size_t Rank>
void expand_stack(const Grid<T, Rank + 1>& shared, const LowPassFilter<Rank>& lpf,
                  const LearnableMask<T, Rank>* mask, MaskMode mode,
                  Grid<T, Rank + 1>& spatial) {
  check_stack_shape<Rank>(shared.shape(), lpf.weights.shape(), "expand_stack");
  if (mask) check_stack_shape<Rank>(shared.shape(), mask->values.shape(), "expand_stack mask");
  const std::size_t count = shared.extent(0);
  const std::size_t item = trailing_size<Rank>(shared.shape());
  std::vector<T> masked(shared.size());
  // Per-element gate; in multiplicative mode it only depends on the mask.
  std::vector<double> gate;
  if (mask && mode == MaskMode::multiplicative) {
    gate.resize(item);
    for (std::size_t i = 0; i < item; ++i) gate[i] = sigmoid(mask->values[i]) - mask->epsilon;
  }
  for (std::size_t c = 0; c < count; ++c) {
    for (std::size_t i = 0; i < item; ++i) {
      const double filtered = static_cast<double>(shared[c * item + i]) * lpf.weights[i];
      double out = filtered;
      if (mask) {
        out = mode == MaskMode::literal
                  ? sigmoid(filtered * mask->values[i]) - mask->epsilon
                  : filtered * gate[i];
      }
      masked[c * item + i] = static_cast<T>(out);
    }
  }
  if (spatial.shape() != shared.shape()) spatial = Grid<T, Rank + 1>(shared.shape());
  inverse_transform<T, Rank>(masked, spatial.data(), shared.shape());
}

template <typename T, std::size_t Rank>
void expand_stack_backward(const Grid<T, Rank + 1>& shared, const LowPassFilter<Rank>& lpf,
                           const LearnableMask<T, Rank>* mask, MaskMode mode,
                           const Grid<T, Rank + 1>& grad_spatial,
                           Grid<T, Rank + 1>& grad_shared, Grid<T, Rank>* grad_mask) {
  Grid<T, Rank + 1>::require_same_shape(shared, grad_spatial, "expand_stack_backward");
  Grid<T, Rank + 1>::require_same_shape(shared, grad_shared, "expand_stack_backward");
  const std::size_t count = shared.extent(0);
  const std::size_t item = trailing_size<Rank>(shared.shape());
  // The inverse DCT is orthonormal, so its adjoint is the forward DCT.
  std::vector<T> grad_masked(shared.size());
  forward_transform<T, Rank>(grad_spatial.data(), grad_masked, shared.shape());

  std::vector<double> gate, gate_slope;
  if (mask && mode == MaskMode::multiplicative) {
    gate.resize(item);
    gate_slope.resize(item);
    for (std::size_t i = 0; i < item; ++i) {
      const double s = sigmoid(mask->values[i]);
      gate[i] = s - mask->epsilon;
      gate_slope[i] = s * (1.0 - s);
    }
  }
  for (std::size_t c = 0; c < count; ++c) {
    for (std::size_t i = 0; i < item; ++i) {
      const std::size_t k = c * item + i;
      const double w = lpf.weights[i];
      const double filtered = static_cast<double>(shared[k]) * w;
      const double g = grad_masked[k];
      double g_filtered = g;
      if (mask) {
        const double m = mask->values[i];
        if (mode == MaskMode::literal) {
          const double s = sigmoid(filtered * m);
          const double ds = s * (1.0 - s);
          g_filtered = g * ds * m;
          if (grad_mask) (*grad_mask)[i] += static_cast<T>(g * ds * filtered);
        } else {
          g_filtered = g * gate[i];
          if (grad_mask) (*grad_mask)[i] += static_cast<T>(g * filtered * gate_slope[i]);
        }
      }
      grad_shared[k] += static_cast<T>(g_filtered * w);
    }
  }
}

template <typename T, std::size_t Rank>
std::vector<Grid<T, Rank>> expand_to_scales(const FreqGrid<T, Rank>& shared,
                                            const ScaleConfig& cfg,
                                            std::span<const LearnableMask<T, Rank>> masks,
                                            const PipelineOptions& options) {
  cfg.validate();
  if (options.use_mask && masks.size() != cfg.num_scales()) {
    throw std::invalid_argument("expand_to_scales: " + std::to_string(masks.size()) +
                                " masks for " + std::to_string(cfg.num_scales()) + " scales");
  }
  Extents<Rank + 1> stack_shape{};
  stack_shape[0] = 1;
  for (std::size_t a = 0; a < Rank; ++a) stack_shape[a + 1] = shared.shape()[a];
  const Grid<T, Rank + 1> stack(stack_shape, shared.coeffs().vector());

  std::vector<Grid<T, Rank>> out;
  out.reserve(cfg.num_scales());
  for (std::size_t s = 0; s < cfg.num_scales(); ++s) {
    // Square grids are assumed to share sigma across axes; use axis 0's extent.
    const double sigma = options.sigma(shared.shape()[0], cfg.reduction_factors[s]);
    const auto lpf = build_lpf<Rank>(shared.shape(), sigma);
    Grid<T, Rank + 1> spatial;
    expand_stack<T, Rank>(stack, lpf, options.use_mask ? &masks[s] : nullptr, options.mode,
                          spatial);
    out.emplace_back(shared.shape(), spatial.vector());
  }
  return out;
}

template LowPassFilter<1> build_lpf<1>(const Extents<1>&, double);
template LowPassFilter<2> build_lpf<2>(const Extents<2>&, double);
template LowPassFilter<3> build_lpf<3>(const Extents<3>&, double);

#define FREQFIELD_INSTANTIATE_FILTER(T, R)                                                 \
  template FreqGrid<T, R> apply_lpf<T, R>(const FreqGrid<T, R>&, const LowPassFilter<R>&); \
  template FreqGrid<T, R> apply_mask<T, R>(const FreqGrid<T, R>&,                          \
                                           const LearnableMask<T, R>&, MaskMode);          \
  template void expand_stack<T, R>(const Grid<T, R + 1>&, const LowPassFilter<R>&,         \
                                   const LearnableMask<T, R>*, MaskMode, Grid<T, R + 1>&); \
  template void expand_stack_backward<T, R>(                                               \
      const Grid<T, R + 1>&, const LowPassFilter<R>&, const LearnableMask<T, R>*,          \
      MaskMode, const Grid<T, R + 1>&, Grid<T, R + 1>&, Grid<T, R>*);                      \
  template std::vector<Grid<T, R>> expand_to_scales<T, R>(                                 \
      const FreqGrid<T, R>&, const ScaleConfig&, std::span<const LearnableMask<T, R>>,     \
      const PipelineOptions&);

FREQFIELD_INSTANTIATE_FILTER(float, 1)
FREQFIELD_INSTANTIATE_FILTER(float, 2)
FREQFIELD_INSTANTIATE_FILTER(double, 1)
FREQFIELD_INSTANTIATE_FILTER(double, 2)

#undef FREQFIELD_INSTANTIATE_FILTER

}  // namespace freqfield
