#pragma once

// Scale-specific frequency-domain anti-aliasing.
//
// A shared grid of DCT coefficients is expanded into one spatial grid per
// scale: each scale multiplies the coefficients by a fixed Gaussian
// "top-left" low-pass filter (centered on the DC corner, sigma = N / (2n)
// for reduction factor n), passes the result through a learnable mask, and
// transforms back with the inverse DCT. Every scale keeps the shared
// extent; only the bandwidth shrinks.

#include <cstddef>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "freqfield/dct.hpp"
#include "freqfield/ndgrid.hpp"

namespace freqfield {

/// sigma = N / (2n). Rejects N < 2 and n < 1.
double sigma_for_scale(std::size_t extent, double reduction);

struct ScaleConfig {
  std::vector<double> reduction_factors{1.0, 2.0, 4.0, 8.0};

  std::size_t num_scales() const { return reduction_factors.size(); }
  /// First factor 1, strictly increasing. Throws std::invalid_argument.
  void validate() const;
  /// Dyadic factors 1, 2, ..., 2^(count-1).
  static ScaleConfig dyadic(std::size_t count);
};

/// Gaussian attenuation measured from the DC corner. An infinite sigma is
/// the all-pass filter (every weight exactly 1).
template <std::size_t Rank>
struct LowPassFilter {
  double sigma = std::numeric_limits<double>::infinity();
  Grid<double, Rank> weights;

  bool all_pass() const { return sigma == std::numeric_limits<double>::infinity(); }
};

template <std::size_t Rank>
LowPassFilter<Rank> build_lpf(const Extents<Rank>& shape, double sigma);

template <typename T, std::size_t Rank>
FreqGrid<T, Rank> apply_lpf(const FreqGrid<T, Rank>& f, const LowPassFilter<Rank>& lpf);

enum class MaskMode {
  /// out = sigmoid(f * M) - eps
  literal,
  /// out = f * (sigmoid(M) - eps)
  multiplicative,
};

const char* mask_mode_name(MaskMode m);
MaskMode parse_mask_mode(const std::string& s);

template <typename T, std::size_t Rank>
struct LearnableMask {
  Grid<T, Rank> values;
  double epsilon = 0.5;
};

template <typename T, std::size_t Rank>
FreqGrid<T, Rank> apply_mask(const FreqGrid<T, Rank>& filtered,
                             const LearnableMask<T, Rank>& mask,
                             MaskMode mode = MaskMode::literal);

/// How the filter bank is chosen for each scale.
enum class LpfPolicy {
  scale_specific,  // sigma = N / (2 n_s)
  all_pass,        // no low-pass filtering
  shared,          // one sigma, computed with n = 2, for every scale
};

struct PipelineOptions {
  MaskMode mode = MaskMode::literal;
  bool use_mask = true;
  LpfPolicy lpf = LpfPolicy::scale_specific;

  static constexpr double kSharedReduction = 2.0;

  /// Sigma for the given axis extent at a scale with reduction factor n.
  double sigma(std::size_t extent, double reduction) const;
};

/// Precomputed filters keyed by (extent, sigma). Filters are constants; the
/// cache only avoids rebuilding them. Safe for concurrent use.
class FilterCache {
 public:
  std::shared_ptr<const LowPassFilter<1>> vector_filter(std::size_t n, double sigma);
  std::shared_ptr<const LowPassFilter<2>> matrix_filter(std::size_t n, double sigma);

  static FilterCache& global();

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_ = make_impl();
  static std::shared_ptr<Impl> make_impl();
};

// Stacked pipeline kernels. `shared` holds `count` independent grids along
// the leading axis (the rank components of one VM factor); all of them use
// the same filter and the same mask. `mask` may be null (identity).

template <typename T, std::size_t Rank>
void expand_stack(const Grid<T, Rank + 1>& shared, const LowPassFilter<Rank>& lpf,
                  const LearnableMask<T, Rank>* mask, MaskMode mode,
                  Grid<T, Rank + 1>& spatial);

/// Accumulates d(loss)/d(shared) and d(loss)/d(mask values) given
/// d(loss)/d(spatial).
template <typename T, std::size_t Rank>
void expand_stack_backward(const Grid<T, Rank + 1>& shared, const LowPassFilter<Rank>& lpf,
                           const LearnableMask<T, Rank>* mask, MaskMode mode,
                           const Grid<T, Rank + 1>& grad_spatial,
                           Grid<T, Rank + 1>& grad_shared, Grid<T, Rank>* grad_mask);

/// apply_lpf -> apply_mask -> dct_inverse for every scale. Returns one
/// spatial grid per scale, all at the shared extent. `masks` must hold one
/// mask per scale (ignored entries when options.use_mask is false).
template <typename T, std::size_t Rank>
std::vector<Grid<T, Rank>> expand_to_scales(const FreqGrid<T, Rank>& shared,
                                            const ScaleConfig& cfg,
                                            std::span<const LearnableMask<T, Rank>> masks,
                                            const PipelineOptions& options);

}  // namespace freqfield
