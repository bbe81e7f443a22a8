#include "freqfield/decoder.hpp"

#include <cmath>

namespace freqfield {

template <typename T>
void encode_direction(Vec3 d, std::span<T> out) {
  constexpr double c0 = 0.28209479177387814;
  constexpr double c1 = 0.4886025119029199;
  out[0] = static_cast<T>(c0);
  out[1] = static_cast<T>(c1 * d.y);
  out[2] = static_cast<T>(c1 * d.z);
  out[3] = static_cast<T>(c1 * d.x);
}

template <typename T>
Mlp<T> Mlp<T>::zeros(std::size_t inputs, std::size_t hidden) {
  Mlp m;
  m.w0 = Grid2D<T>({hidden, inputs});
  m.b0 = Grid1D<T>({hidden});
  m.w1 = Grid2D<T>({hidden, hidden});
  m.b1 = Grid1D<T>({hidden});
  m.w2 = Grid2D<T>({3, hidden});
  m.b2 = Grid1D<T>({3});
  return m;
}

template <typename T>
Mlp<T> Mlp<T>::random(std::size_t inputs, std::size_t hidden, std::mt19937_64& rng) {
  Mlp m = zeros(inputs, hidden);
  auto init = [&rng](Grid2D<T>& w) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.extent(1)));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& v : w.data()) v = static_cast<T>(u(rng));
  };
  init(m.w0);
  init(m.w1);
  init(m.w2);
  return m;
}

namespace {

template <typename T>
void dense(const Grid2D<T>& w, const Grid1D<T>& b, const T* x, T* y) {
  const std::size_t out = w.extent(0), in = w.extent(1);
  for (std::size_t o = 0; o < out; ++o) {
    const T* row = w.data().data() + o * in;
    T acc = b[o];
    for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
    y[o] = acc;
  }
}

// grad_w += g x^T, grad_b += g, grad_x = W^T g
template <typename T>
void dense_backward(const Grid2D<T>& w, const T* x, const T* g, Grid2D<T>& grad_w,
                    Grid1D<T>& grad_b, T* grad_x) {
  const std::size_t out = w.extent(0), in = w.extent(1);
  if (grad_x)
    for (std::size_t i = 0; i < in; ++i) grad_x[i] = 0;
  for (std::size_t o = 0; o < out; ++o) {
    const T go = g[o];
    if (go == T(0)) continue;
    grad_b[o] += go;
    const T* row = w.data().data() + o * in;
    T* grow = grad_w.data().data() + o * in;
    for (std::size_t i = 0; i < in; ++i) grow[i] += go * x[i];
    if (grad_x)
      for (std::size_t i = 0; i < in; ++i) grad_x[i] += go * row[i];
  }
}

}  // namespace

template <typename T>
void Mlp<T>::forward(std::span<const T> x, Trace& t) const {
  const std::size_t h = hidden();
  t.x.assign(x.begin(), x.end());
  t.h0.resize(h);
  t.h1.resize(h);
  dense(w0, b0, t.x.data(), t.h0.data());
  for (auto& v : t.h0) v = v > T(0) ? v : T(0);
  dense(w1, b1, t.h0.data(), t.h1.data());
  for (auto& v : t.h1) v = v > T(0) ? v : T(0);
  std::array<T, 3> z{};
  dense(w2, b2, t.h1.data(), z.data());
  for (int c = 0; c < 3; ++c) {
    const double zc = z[c];
    t.rgb[c] = static_cast<T>(zc >= 0 ? 1.0 / (1.0 + std::exp(-zc))
                                      : std::exp(zc) / (1.0 + std::exp(zc)));
  }
}

template <typename T>
std::array<T, 3> Mlp<T>::forward(std::span<const T> x) const {
  Trace t;
  forward(x, t);
  return t.rgb;
}

template <typename T>
void Mlp<T>::backward(const Trace& t, const std::array<T, 3>& grad_rgb, Mlp& grad,
                      std::span<T> grad_x) const {
  const std::size_t h = hidden();
  std::array<T, 3> gz{};
  for (int c = 0; c < 3; ++c) gz[c] = grad_rgb[c] * t.rgb[c] * (T(1) - t.rgb[c]);
  thread_local std::vector<T> g1, g0;
  g1.assign(h, T(0));
  g0.assign(h, T(0));
  dense_backward(w2, t.h1.data(), gz.data(), grad.w2, grad.b2, g1.data());
  for (std::size_t i = 0; i < h; ++i)
    if (!(t.h1[i] > T(0))) g1[i] = 0;
  dense_backward(w1, t.h0.data(), g1.data(), grad.w1, grad.b1, g0.data());
  for (std::size_t i = 0; i < h; ++i)
    if (!(t.h0[i] > T(0))) g0[i] = 0;
  dense_backward(w0, t.x.data(), g0.data(), grad.w0, grad.b0,
                 grad_x.empty() ? nullptr : grad_x.data());
}

template void encode_direction<float>(Vec3, std::span<float>);
template void encode_direction<double>(Vec3, std::span<double>);
template struct Mlp<float>;
template struct Mlp<double>;

}  // namespace freqfield
