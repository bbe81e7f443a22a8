#pragma once

#include <optional>
#include <string>
#include <vector>

#include "freqfield/image.hpp"

namespace freqfield {

/// 10 log10(peak^2 / MSE). Identical images give +infinity.
double psnr(const Image& a, const Image& b, double peak = 1.0);

inline constexpr std::size_t kSsimWindow = 11;

/// Mean SSIM over all 11x11 Gaussian windows (sigma 1.5) fully inside the
/// image, averaged over channels. Throws std::invalid_argument when either
/// side is shorter than the window.
double ssim(const Image& a, const Image& b, double peak = 1.0);

struct ScaleMetrics {
  double reduction = 1.0;  // 1, 2, 4, 8
  double psnr = 0.0;
  std::optional<double> ssim;  // absent when the image is smaller than the window
};

struct MetricReport {
  std::vector<ScaleMetrics> scales;

  double average_psnr() const;
  /// Mean over the scales that have an SSIM value.
  std::optional<double> average_ssim() const;

  std::string to_json() const;
  std::string to_text() const;
};

/// Per-scale metrics averaged over views (PSNR is averaged in dB).
ScaleMetrics evaluate_views(double reduction, const std::vector<Image>& renders,
                            const std::vector<Image>& targets);

}  // namespace freqfield
