#include "freqfield/metrics.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace freqfield {

namespace {

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b))
    throw std::invalid_argument(std::string(what) + ": image shapes differ (" +
                                std::to_string(a.width) + "x" + std::to_string(a.height) +
                                " vs " + std::to_string(b.width) + "x" +
                                std::to_string(b.height) + ")");
}

// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
std::array<double, kSsimWindow> gaussian_taps() {
  std::array<double, kSsimWindow> k{};
  double total = 0;
  const int r = kSsimWindow / 2;
  for (int i = -r; i <= r; ++i) total += k[i + r] = std::exp(-(i * i) / (2 * 1.5 * 1.5));
  for (double& v : k) v /= total;
  return k;
}

// Valid-region separable filter of one channel plane.
std::vector<double> filter_valid(const std::vector<double>& plane, std::size_t w, std::size_t h) {
  static const auto taps = gaussian_taps();
  const std::size_t ow = w - kSsimWindow + 1, oh = h - kSsimWindow + 1;
  std::vector<double> rows(h * ow);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0;
      for (std::size_t k = 0; k < kSsimWindow; ++k) acc += taps[k] * plane[y * w + x + k];
      rows[y * ow + x] = acc;
    }
  std::vector<double> out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0;
      for (std::size_t k = 0; k < kSsimWindow; ++k) acc += taps[k] * rows[(y + k) * ow + x];
      out[y * ow + x] = acc;
    }
  return out;
}

std::string scale_label(double reduction) {
  if (reduction == 1.0) return "1x";
  char buf[32];
  std::snprintf(buf, sizeof buf, "1/%gx", reduction);
  return buf;
}

nlohmann::json number_or_null(std::optional<double> v) {
  if (!v) return nullptr;
  if (std::isinf(*v)) return "inf";
  return *v;
}

}  // namespace

double psnr(const Image& a, const Image& b, double peak) {
  require_same_shape(a, b, "psnr");
  if (a.data.empty()) throw std::invalid_argument("psnr: empty image");
  double acc = 0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = a.data[i] - b.data[i];
    acc += d * d;
  }
  const double mse = acc / static_cast<double>(a.data.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double ssim(const Image& a, const Image& b, double peak) {
  require_same_shape(a, b, "ssim");
  if (a.width < kSsimWindow || a.height < kSsimWindow)
    throw std::invalid_argument("ssim: image " + std::to_string(a.width) + "x" +
                                std::to_string(a.height) + " is smaller than the 11x11 window");
  const double c1 = (0.01 * peak) * (0.01 * peak), c2 = (0.03 * peak) * (0.03 * peak);
  const std::size_t w = a.width, h = a.height, n = w * h;
  double total = 0;
  std::size_t count = 0;
  for (std::size_t ch = 0; ch < 3; ++ch) {
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = a.data[i * 3 + ch];
      y[i] = b.data[i * 3 + ch];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, w, h), my = filter_valid(y, w, h);
    const auto sxx = filter_valid(xx, w, h), syy = filter_valid(yy, w, h),
               sxy = filter_valid(xy, w, h);
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i], vy = syy[i] - my[i] * my[i],
                   cov = sxy[i] - mx[i] * my[i];
      total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
               ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    count += mx.size();
  }
  return total / static_cast<double>(count);
}

double MetricReport::average_psnr() const {
  if (scales.empty()) return 0.0;
  double s = 0;
  for (const auto& m : scales) s += m.psnr;
  return s / static_cast<double>(scales.size());
}

std::optional<double> MetricReport::average_ssim() const {
  double s = 0;
  std::size_t n = 0;
  for (const auto& m : scales)
    if (m.ssim) {
      s += *m.ssim;
      ++n;
    }
  if (n == 0) return std::nullopt;
  return s / static_cast<double>(n);
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  nlohmann::ordered_json p = nlohmann::ordered_json::object(),
                         s = nlohmann::ordered_json::object();
  for (const auto& m : scales) {
    p[scale_label(m.reduction)] = number_or_null(m.psnr);
    s[scale_label(m.reduction)] = number_or_null(m.ssim);
  }
  p["avg"] = number_or_null(average_psnr());
  s["avg"] = number_or_null(average_ssim());
  j["psnr"] = p;
  j["ssim"] = s;
  return j.dump(2) + "\n";
}

std::string MetricReport::to_text() const {
  std::ostringstream os;
  char buf[64];
  os << "metric";
  for (const auto& m : scales) {
    std::snprintf(buf, sizeof buf, " %9s", scale_label(m.reduction).c_str());
    os << buf;
  }
  os << "       avg\n";
  auto cell = [&](std::optional<double> v, const char* fmt) {
    if (v) std::snprintf(buf, sizeof buf, fmt, *v);
    else std::snprintf(buf, sizeof buf, " %9s", "-");
    os << buf;
  };
  os << "PSNR  ";
  for (const auto& m : scales) cell(m.psnr, " %9.3f");
  cell(average_psnr(), " %9.3f");
  os << "\nSSIM  ";
  for (const auto& m : scales) cell(m.ssim, " %9.4f");
  cell(average_ssim(), " %9.4f");
  os << "\n";
  return os.str();
}

ScaleMetrics evaluate_views(double reduction, const std::vector<Image>& renders,
                            const std::vector<Image>& targets) {
  if (renders.size() != targets.size() || renders.empty())
    throw std::invalid_argument("evaluate_views: need matching, non-empty view lists");
  ScaleMetrics m;
  m.reduction = reduction;
  double p = 0, s = 0;
  const bool with_ssim =
      targets[0].width >= kSsimWindow && targets[0].height >= kSsimWindow;
  for (std::size_t i = 0; i < renders.size(); ++i) {
    p += psnr(renders[i], targets[i]);
    if (with_ssim) s += ssim(renders[i], targets[i]);
  }
  m.psnr = p / static_cast<double>(renders.size());
  if (with_ssim) m.ssim = s / static_cast<double>(renders.size());
  return m;
}

}  // namespace freqfield
