#pragma once

// Rank-R vector-matrix (VM) decomposed radiance field whose factors live in
// the DCT domain and are expanded into one spatial grid set per scale.
//
//   G(x,y,z) = sum_r  vX_r[x] MYZ_r[y,z] + vY_r[y] MXZ_r[x,z] + vZ_r[z] MXY_r[x,y]
//
// Plane p pairs the vector along axis p with the matrix over the two
// remaining axes in increasing order (p=0: YZ, p=1: XZ, p=2: XY).

#include <array>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "freqfield/container.hpp"
#include "freqfield/decoder.hpp"
#include "freqfield/freq_filter.hpp"
#include "freqfield/geometry.hpp"
#include "freqfield/ndgrid.hpp"

namespace freqfield {

template <typename T>
struct VMDecomposition {
  std::size_t rank = 0;
  std::size_t extent = 0;
  std::array<Grid2D<T>, 3> vectors;   // [rank, extent] per axis
  std::array<Grid3D<T>, 3> matrices;  // [rank, extent, extent] per plane

  static VMDecomposition zeros(std::size_t rank, std::size_t extent);
  void set_zero();
  bool all_finite() const;
  /// Throws ShapeError when factor extents disagree.
  void validate() const;
};

/// The two matrix axes paired with vector axis p.
constexpr std::array<int, 2> plane_axes(int p) {
  return p == 0 ? std::array<int, 2>{1, 2}
                : (p == 1 ? std::array<int, 2>{0, 2} : std::array<int, 2>{0, 1});
}

/// Interpolation positions of a point on all three axes, shared by every
/// factor of a decomposition with the same extent.
struct PointStencil {
  std::array<LerpAxis, 3> axis;
  static PointStencil at(const std::array<double, 3>& coord, std::size_t extent);
};

/// Per-component values f_r = sum over planes of vector * matrix.
template <typename T>
void reconstruct_features(const VMDecomposition<T>& vm, const PointStencil& st,
                          std::span<T> out);

/// Adds d(loss)/d(factors) for the given d(loss)/d(features).
template <typename T>
void reconstruct_features_backward(const VMDecomposition<T>& vm, const PointStencil& st,
                                   std::span<const T> grad_features,
                                   VMDecomposition<T>& grad);

/// Sum of all component features at a point in [0,1]^3 (clamped).
template <typename T>
T reconstruct_point(const VMDecomposition<T>& vm, const std::array<double, 3>& coord);

template <typename T>
struct FieldSample {
  T density = 0;
  std::array<T, 3> rgb{};
  friend bool operator==(const FieldSample&, const FieldSample&) = default;
};

/// Masks of one factor kind (density or appearance) at one scale: one per
/// vector axis and one per matrix plane, shared across rank components.
template <typename T>
struct FactorMasks {
  std::array<LearnableMask<T, 1>, 3> vectors;
  std::array<LearnableMask<T, 2>, 3> matrices;
};

template <typename T>
struct ScaleMasks {
  FactorMasks<T> density;
  FactorMasks<T> appearance;
};

/// Every trainable tensor of the field. Gradients use the same structure.
template <typename T>
struct FieldParams {
  VMDecomposition<T> density;
  VMDecomposition<T> appearance;
  std::vector<ScaleMasks<T>> masks;
  Mlp<T> decoder;
};

enum class ParamGroup { factors, masks, decoder };

template <typename T>
struct NamedTensor {
  std::string name;
  ParamGroup group;
  std::span<T> values;
};

/// Flat views of every tensor in a fixed order (stable names).
template <typename T>
std::vector<NamedTensor<T>> named_tensors(FieldParams<T>& p);

/// Same structure as `like`, all zeros.
template <typename T>
FieldParams<T> zeros_like(const FieldParams<T>& like);

enum class Domain { spatial, frequency };

struct FieldConfig {
  std::size_t extent = 64;
  std::size_t density_rank = 4;
  std::size_t appearance_rank = 12;
  std::size_t hidden = 32;
  ScaleConfig scales;
  PipelineOptions pipeline;
  double epsilon = 0.5;
  /// NaN selects the mode default: 1 (literal) or 4 (multiplicative).
  double mask_init = std::numeric_limits<double>::quiet_NaN();
  /// Multiplier from activated density to 1/world-unit.
  double density_scale = 25.0;
  double init_std = 0.1;

  double resolved_mask_init() const;
  void validate() const;
};

/// max(0, softplus(x) - ln 2), so 0 maps to 0 and density is never negative.
double density_activation(double x);
double density_activation_slope(double x);

/// clamp(round(log2(footprint / base)), 0, num_scales - 1).
std::size_t select_scale(double pixel_footprint, double base_footprint,
                         std::size_t num_scales);

template <typename T>
class MultiScaleField {
 public:
  static constexpr std::int64_t kFormatVersion = 1;

  MultiScaleField() = default;
  /// Random spatial-domain initialization (the warm-up phase starts here).
  MultiScaleField(const FieldConfig& cfg, std::uint64_t seed);

  const FieldConfig& config() const { return cfg_; }
  Domain domain() const { return domain_; }
  std::size_t num_scales() const { return cfg_.scales.num_scales(); }

  /// Trainable parameters. Mutating them through this accessor requires a
  /// following invalidate().
  FieldParams<T>& params() { return params_; }
  const FieldParams<T>& params() const { return params_; }

  double base_footprint() const { return base_footprint_; }
  void set_base_footprint(double f);
  std::size_t scale_for_footprint(double footprint) const;

  /// Marks all per-scale grids stale.
  void invalidate();
  bool fresh(std::size_t scale) const;
  void expand(std::size_t scale);
  void expand_all();

  /// Spatial factors used at a scale. Throws std::logic_error when stale.
  const VMDecomposition<T>& density_grid(std::size_t scale) const;
  const VMDecomposition<T>& appearance_grid(std::size_t scale) const;

  /// Pipeline filters for a scale.
  std::shared_ptr<const LowPassFilter<1>> vector_filter(std::size_t scale) const;
  std::shared_ptr<const LowPassFilter<2>> matrix_filter(std::size_t scale) const;

  FieldSample<T> query(const std::array<double, 3>& coord, Vec3 dir,
                       std::size_t scale) const;

  /// Everything needed to backpropagate one point query.
  struct PointTrace {
    PointStencil stencil;
    std::size_t scale = 0;
    T density_pre = 0;
    std::vector<T> features;  // appearance features
    typename Mlp<T>::Trace mlp;
  };

  /// Density only; returns the pre-activation through `density_pre`.
  T query_density(const PointStencil& st, std::size_t scale, T& density_pre) const;
  /// Color for a point whose stencil and density were already computed.
  std::array<T, 3> query_color(Vec3 dir, PointTrace& trace) const;

  /// Spatial-grid gradients at one scale.
  struct ScaleGrad {
    VMDecomposition<T> density;
    VMDecomposition<T> appearance;
  };
  ScaleGrad zero_scale_grad() const;

  /// Adds the gradients of one point query: d(loss)/d(density) and
  /// d(loss)/d(rgb) (the latter only when color was evaluated).
  void backward_point(const PointTrace& trace, T grad_density, const std::array<T, 3>* grad_rgb,
                      ScaleGrad& scale_grad, Mlp<T>& decoder_grad) const;

  /// Pulls spatial-grid gradients at `scale` back to the trainable tensors.
  void backward_expansion(std::size_t scale, const ScaleGrad& g, FieldParams<T>& grads) const;

  /// Replaces spatial factors by their DCT coefficients, compensating the
  /// full-resolution filter and initial gate so scale 0 is unchanged where
  /// the pipeline is invertible (see README).
  void to_frequency_domain();

  Container to_container() const;
  static MultiScaleField from_container(const Container& c);

 private:
  void expand_kind(std::size_t scale, const VMDecomposition<T>& shared,
                   const FactorMasks<T>& masks, VMDecomposition<T>& out) const;
  void backward_kind(std::size_t scale, const VMDecomposition<T>& shared,
                     const FactorMasks<T>& masks, const VMDecomposition<T>& grad_spatial,
                     VMDecomposition<T>& grad_shared, FactorMasks<T>& grad_masks) const;

  FieldConfig cfg_;
  Domain domain_ = Domain::spatial;
  FieldParams<T> params_;
  double base_footprint_ = 1.0;

  std::vector<ScaleGrad> scale_grids_;
  std::vector<char> fresh_;
};

}  // namespace freqfield
