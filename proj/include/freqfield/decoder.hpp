#pragma once

// Small MLP mapping an appearance feature plus an encoded view direction to
// RGB: two ReLU hidden layers and a sigmoid output.

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "freqfield/geometry.hpp"
#include "freqfield/ndgrid.hpp"

namespace freqfield {

/// Number of view-direction features fed to the decoder.
inline constexpr std::size_t kDirFeatures = 4;

/// Degree-0 and degree-1 real spherical harmonics of a unit direction.
template <typename T>
void encode_direction(Vec3 d, std::span<T> out);

template <typename T>
struct Mlp {
  Grid2D<T> w0, w1, w2;  // [out, in]
  Grid1D<T> b0, b1, b2;

  std::size_t inputs() const { return w0.extent(1); }
  std::size_t hidden() const { return w0.extent(0); }

  static Mlp zeros(std::size_t inputs, std::size_t hidden);
  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases.
  static Mlp random(std::size_t inputs, std::size_t hidden, std::mt19937_64& rng);

  /// Activations kept for the backward pass.
  struct Trace {
    std::vector<T> x, h0, h1;
    std::array<T, 3> rgb{};
  };

  void forward(std::span<const T> x, Trace& trace) const;
  std::array<T, 3> forward(std::span<const T> x) const;

  /// Accumulates parameter gradients into `grad` and writes d(loss)/d(x)
  /// into grad_x (may be empty to skip).
  void backward(const Trace& trace, const std::array<T, 3>& grad_rgb, Mlp& grad,
                std::span<T> grad_x) const;
};

}  // namespace freqfield
