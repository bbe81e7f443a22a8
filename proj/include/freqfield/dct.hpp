#pragma once

// Orthonormal DCT-II (forward) and DCT-III (inverse).
//
//   X[k] = s_k * sum_m x[m] cos(pi k (2m + 1) / (2N)),
//   s_0 = sqrt(1/N), s_k = sqrt(2/N) for k > 0.
//
// With this scaling the forward matrix is orthogonal, so the inverse is its
// transpose and dct_forward is the adjoint of dct_inverse. 2-D transforms
// are separable: rows first, then columns.

#include <cstddef>
#include <span>

#include "freqfield/ndgrid.hpp"

namespace freqfield {

/// Coefficients of a grid in the DCT domain. Index 0 on every axis is DC;
/// larger indices are higher spatial frequencies.
template <typename T, std::size_t Rank>
class FreqGrid {
 public:
  using Shape = Extents<Rank>;

  FreqGrid() = default;
  explicit FreqGrid(Grid<T, Rank> coeffs) : coeffs_(std::move(coeffs)) {}
  explicit FreqGrid(const Shape& shape) : coeffs_(shape) {}

  const Shape& shape() const { return coeffs_.shape(); }
  std::size_t size() const { return coeffs_.size(); }
  Grid<T, Rank>& coeffs() { return coeffs_; }
  const Grid<T, Rank>& coeffs() const { return coeffs_; }

  T& operator[](std::size_t i) { return coeffs_[i]; }
  const T& operator[](std::size_t i) const { return coeffs_[i]; }

  friend bool operator==(const FreqGrid&, const FreqGrid&) = default;

 private:
  Grid<T, Rank> coeffs_;
};

template <typename T>
using FreqGrid1D = FreqGrid<T, 1>;
template <typename T>
using FreqGrid2D = FreqGrid<T, 2>;

enum class DctDirection { forward, inverse };

/// Row-major N x N matrix C with C[k][m] = s_k cos(pi k (2m+1) / (2N)).
/// Cached per (N, T); safe to call concurrently.
template <typename T>
std::span<const T> dct_basis(std::size_t n);

/// Transforms `rows` contiguous vectors of length n. `in` and `out` may not
/// alias.
template <typename T>
void dct_rows(std::span<const T> in, std::span<T> out, std::size_t rows,
              std::size_t n, DctDirection dir);

/// Separable 2-D transform of `planes` stacked rows x cols matrices.
template <typename T>
void dct_planes(std::span<const T> in, std::span<T> out, std::size_t planes,
                std::size_t rows, std::size_t cols, DctDirection dir);

template <typename T>
FreqGrid<T, 1> dct_forward(const Grid<T, 1>& g);
template <typename T>
FreqGrid<T, 2> dct_forward(const Grid<T, 2>& g);
template <typename T>
Grid<T, 1> dct_inverse(const FreqGrid<T, 1>& f);
template <typename T>
Grid<T, 2> dct_inverse(const FreqGrid<T, 2>& f);

}  // namespace freqfield
