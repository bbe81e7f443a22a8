#include "freqfield/dct.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <vector>

namespace freqfield {

template <typename T>
std::span<const T> dct_basis(std::size_t n) {
  if (n == 0) throw ShapeError("DCT of an empty axis");
  static std::mutex mu;
  static std::map<std::size_t, std::unique_ptr<std::vector<T>>> cache;
  std::lock_guard lock(mu);
  auto& slot = cache[n];
  if (!slot) {
    auto c = std::make_unique<std::vector<T>>(n * n);
    const double nn = static_cast<double>(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double s = k == 0 ? std::sqrt(1.0 / nn) : std::sqrt(2.0 / nn);
      for (std::size_t m = 0; m < n; ++m) {
        // Reduce the phase index modulo 4N so cos() sees a small argument.
        const std::size_t phase = (k * (2 * m + 1)) % (4 * n);
        (*c)[k * n + m] = static_cast<T>(
            s * std::cos(std::numbers::pi * static_cast<double>(phase) / (2.0 * nn)));
      }
    }
    slot = std::move(c);
  }
  return *slot;
}

template <typename T>
void dct_rows(std::span<const T> in, std::span<T> out, std::size_t rows,
              std::size_t n, DctDirection dir) {
  if (in.size() != rows * n || out.size() != rows * n)
    throw ShapeError("dct_rows: buffer size does not match rows*n");
  const auto c = dct_basis<T>(n);
  // Both directions run as y += x[i] * row_i(B) so the inner loop is a
  // contiguous axpy; forward uses B = C^T, inverse B = C.
  std::vector<T> ct;
  if (dir == DctDirection::forward) {
    ct.resize(n * n);
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t m = 0; m < n; ++m) ct[m * n + k] = c[k * n + m];
  }
  const T* b = dir == DctDirection::forward ? ct.data() : c.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* x = in.data() + r * n;
    T* y = out.data() + r * n;
    for (std::size_t m = 0; m < n; ++m) y[m] = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const T* bi = b + i * n;
      const T xi = x[i];
      for (std::size_t m = 0; m < n; ++m) y[m] += xi * bi[m];
    }
  }
}

template <typename T>
void dct_planes(std::span<const T> in, std::span<T> out, std::size_t planes,
                std::size_t rows, std::size_t cols, DctDirection dir) {
  const std::size_t plane = rows * cols;
  if (in.size() != planes * plane || out.size() != planes * plane)
    throw ShapeError("dct_planes: buffer size does not match planes*rows*cols");
  const auto cr = dct_basis<T>(rows);
  std::vector<T> tmp(plane);
  for (std::size_t p = 0; p < planes; ++p) {
    // Along each row (the column index axis).
    dct_rows<T>(in.subspan(p * plane, plane), tmp, rows, cols, dir);
    // Along each column: out[k][j] = sum_m C[k][m] tmp[m][j] (forward) or
    // sum_m C[m][k] tmp[m][j] (inverse). The j loop stays contiguous.
    T* y = out.data() + p * plane;
    for (std::size_t i = 0; i < plane; ++i) y[i] = 0;
    for (std::size_t k = 0; k < rows; ++k) {
      T* yk = y + k * cols;
      for (std::size_t m = 0; m < rows; ++m) {
        const T w = dir == DctDirection::forward ? cr[k * rows + m] : cr[m * rows + k];
        const T* tm = tmp.data() + m * cols;
        for (std::size_t j = 0; j < cols; ++j) yk[j] += w * tm[j];
      }
    }
  }
}

template <typename T>
FreqGrid<T, 1> dct_forward(const Grid<T, 1>& g) {
  if (g.empty()) throw ShapeError("dct_forward of an empty grid");
  Grid<T, 1> out(g.shape());
  dct_rows<T>(g.data(), out.data(), 1, g.extent(0), DctDirection::forward);
  return FreqGrid<T, 1>(std::move(out));
}

template <typename T>
FreqGrid<T, 2> dct_forward(const Grid<T, 2>& g) {
  if (g.empty()) throw ShapeError("dct_forward of an empty grid");
  Grid<T, 2> out(g.shape());
  dct_planes<T>(g.data(), out.data(), 1, g.extent(0), g.extent(1), DctDirection::forward);
  return FreqGrid<T, 2>(std::move(out));
}

template <typename T>
Grid<T, 1> dct_inverse(const FreqGrid<T, 1>& f) {
  if (f.coeffs().empty()) throw ShapeError("dct_inverse of an empty grid");
  Grid<T, 1> out(f.shape());
  dct_rows<T>(f.coeffs().data(), out.data(), 1, f.shape()[0], DctDirection::inverse);
  return out;
}

template <typename T>
Grid<T, 2> dct_inverse(const FreqGrid<T, 2>& f) {
  if (f.coeffs().empty()) throw ShapeError("dct_inverse of an empty grid");
  Grid<T, 2> out(f.shape());
  dct_planes<T>(f.coeffs().data(), out.data(), 1, f.shape()[0], f.shape()[1],
                DctDirection::inverse);
  return out;
}

#define FREQFIELD_INSTANTIATE_DCT(T)                                                 \
  template std::span<const T> dct_basis<T>(std::size_t);                             \
  template void dct_rows<T>(std::span<const T>, std::span<T>, std::size_t,           \
                            std::size_t, DctDirection);                              \
  template void dct_planes<T>(std::span<const T>, std::span<T>, std::size_t,         \
                              std::size_t, std::size_t, DctDirection);               \
  template FreqGrid<T, 1> dct_forward<T>(const Grid<T, 1>&);                         \
  template FreqGrid<T, 2> dct_forward<T>(const Grid<T, 2>&);                         \
  template Grid<T, 1> dct_inverse<T>(const FreqGrid<T, 1>&);                         \
  template Grid<T, 2> dct_inverse<T>(const FreqGrid<T, 2>&);

FREQFIELD_INSTANTIATE_DCT(float)
FREQFIELD_INSTANTIATE_DCT(double)

#undef FREQFIELD_INSTANTIATE_DCT

}  // namespace freqfield
