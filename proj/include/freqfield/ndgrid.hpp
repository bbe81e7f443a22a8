#pragma once

// Dense rank-1/2/3 arrays: the storage every other module is built on.
//
// Layout is row-major with the last axis fastest. Grids are plain values;
// the only in-place mutation paths are the explicit update helpers used by
// the optimizer (operator+=, axpy, scale, fill).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace freqfield {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <std::size_t Rank>
using Extents = std::array<std::size_t, Rank>;

template <std::size_t Rank>
std::string shape_string(const Extents<Rank>& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < Rank; ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <std::size_t Rank>
std::size_t element_count(const Extents<Rank>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

template <typename T, std::size_t Rank>
class Grid {
  static_assert(Rank >= 1 && Rank <= 3, "grids are rank 1, 2 or 3");

 public:
  using value_type = T;
  using Shape = Extents<Rank>;
  static constexpr std::size_t rank = Rank;

  Grid() { shape_.fill(0); }

  explicit Grid(const Shape& shape, T fill = T{})
      : shape_(shape), data_(element_count(shape), fill) {
    check_extents();
  }

  Grid(const Shape& shape, std::vector<T> data)
      : shape_(shape), data_(std::move(data)) {
    check_extents();
    if (data_.size() != element_count(shape_)) {
      throw ShapeError("grid data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(shape_));
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  const std::vector<T>& vector() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  template <typename... I>
    requires(sizeof...(I) == Rank)
  T& operator()(I... idx) {
    return data_[offset(static_cast<std::size_t>(idx)...)];
  }
  template <typename... I>
    requires(sizeof...(I) == Rank)
  const T& operator()(I... idx) const {
    return data_[offset(static_cast<std::size_t>(idx)...)];
  }

  /// Contiguous view of one slice along the leading axis.
  std::span<T> slice(std::size_t i)
    requires(Rank >= 2)
  {
    const std::size_t stride = data_.size() / shape_[0];
    return std::span<T>(data_).subspan(i * stride, stride);
  }
  std::span<const T> slice(std::size_t i) const
    requires(Rank >= 2)
  {
    const std::size_t stride = data_.size() / shape_[0];
    return std::span<const T>(data_).subspan(i * stride, stride);
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  Grid& operator+=(const Grid& other) {
    require_same_shape(*this, other, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
  }

  /// this += alpha * other
  Grid& axpy(T alpha, const Grid& other) {
    require_same_shape(*this, other, "axpy");
    for (std::size_t i = 0; i < data_.size(); ++i)
      data_[i] += alpha * other.data_[i];
    return *this;
  }

  Grid& scale(T alpha) {
    for (auto& v : data_) v *= alpha;
    return *this;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](T v) { return std::isfinite(v); });
  }

  template <typename U>
  Grid<U, Rank> cast() const {
    return Grid<U, Rank>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

  static void require_same_shape(const Grid& a, const Grid& b,
                                 const char* what) {
    if (a.shape_ != b.shape_) {
      throw ShapeError(std::string(what) + ": shape mismatch " +
                       shape_string(a.shape_) + " vs " +
                       shape_string(b.shape_));
    }
  }

 private:
  void check_extents() const {
    for (auto e : shape_) {
      if (e == 0) throw ShapeError("grid extents must be positive, got " +
                                   shape_string(shape_));
    }
  }

  std::size_t offset(std::size_t i) const
    requires(Rank == 1)
  {
    return i;
  }
  std::size_t offset(std::size_t i, std::size_t j) const
    requires(Rank == 2)
  {
    return i * shape_[1] + j;
  }
  std::size_t offset(std::size_t i, std::size_t j, std::size_t k) const
    requires(Rank == 3)
  {
    return (i * shape_[1] + j) * shape_[2] + k;
  }

  Shape shape_;
  std::vector<T> data_;
};

template <typename T>
using Grid1D = Grid<T, 1>;
template <typename T>
using Grid2D = Grid<T, 2>;
template <typename T>
using Grid3D = Grid<T, 3>;

/// c[i] = a[i] * b[i]. Throws ShapeError naming both shapes on mismatch.
template <typename T, std::size_t Rank>
Grid<T, Rank> elementwise_mul(const Grid<T, Rank>& a, const Grid<T, Rank>& b) {
  Grid<T, Rank>::require_same_shape(a, b, "elementwise_mul");
  Grid<T, Rank> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

/// Linear interpolation position along one axis: the lower node index and
/// the weight of the upper node. Coordinates outside [0,1] clamp.
struct LerpAxis {
  std::size_t lo;
  std::size_t hi;
  double frac;
};

inline LerpAxis lerp_axis(double coord, std::size_t extent) {
  if (extent < 2) return {0, 0, 0.0};
  if (!(coord > 0.0)) coord = 0.0;  // also maps NaN to 0
  if (coord > 1.0) coord = 1.0;
  const double u = coord * static_cast<double>(extent - 1);
  std::size_t lo = static_cast<std::size_t>(u);
  if (lo >= extent - 1) lo = extent - 2;
  return {lo, lo + 1, u - static_cast<double>(lo)};
}

/// Multilinear interpolation at normalized coordinates in [0,1]^Rank.
/// Node i of an axis of extent N sits at i/(N-1); out-of-range coordinates
/// are clamped to the boundary.
template <typename T, std::size_t Rank>
T lerp_sample(const Grid<T, Rank>& g, const std::array<double, Rank>& coord) {
  for (std::size_t a = 0; a < Rank; ++a) {
    if (g.extent(a) < 2) {
      throw ShapeError("lerp_sample needs extent >= 2 on every axis, got " +
                       shape_string(g.shape()));
    }
  }
  std::array<LerpAxis, Rank> ax;
  for (std::size_t a = 0; a < Rank; ++a) ax[a] = lerp_axis(coord[a], g.extent(a));

  double acc = 0.0;
  for (std::size_t corner = 0; corner < (std::size_t{1} << Rank); ++corner) {
    double w = 1.0;
    std::size_t flat = 0;
    for (std::size_t a = 0; a < Rank; ++a) {
      const bool upper = (corner >> (Rank - 1 - a)) & 1u;
      w *= upper ? ax[a].frac : 1.0 - ax[a].frac;
      flat = flat * g.extent(a) + (upper ? ax[a].hi : ax[a].lo);
    }
    if (w != 0.0) acc += w * static_cast<double>(g[flat]);
  }
  return static_cast<T>(acc);
}

}  // namespace freqfield
