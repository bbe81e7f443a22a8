#pragma once

// Pinhole cameras, ray generation and emission-absorption quadrature.

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "freqfield/geometry.hpp"
#include "freqfield/image.hpp"
#include "freqfield/vm_field.hpp"

namespace freqfield {

/// Camera-to-world pose uses the Blender/NeRF convention: the camera looks
/// down its local -z axis with +y up and +x right.
struct Camera {
  double focal = 1.0;  // pixels
  std::size_t width = 1;
  std::size_t height = 1;
  std::array<double, 12> c2w{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};  // row-major 3x4
  double near = 0.1;
  double far = 10.0;

  Vec3 origin() const { return {c2w[3], c2w[7], c2w[11]}; }
  Vec3 rotate(Vec3 v) const;
  /// Largest |R^T R - I| entry.
  double orthonormality_residual() const;
  /// Throws std::invalid_argument on a non-positive focal, empty image,
  /// non-rigid rotation (residual > 1e-6) or near >= far.
  void validate() const;
  /// Same field of view at width/factor x height/factor.
  Camera downscaled(std::size_t factor) const;
  /// Pose looking from `eye` at `target`, +z world up.
  static Camera look_at(Vec3 eye, Vec3 target, double focal, std::size_t width,
                        std::size_t height, double near, double far);
};

struct Ray {
  Vec3 origin;
  Vec3 dir;                 // unit length
  double footprint = 0.0;   // world units per pixel at unit distance
};

struct Pixel {
  std::size_t x = 0, y = 0;
};

struct RenderSettings {
  std::size_t samples_per_ray = 64;
  std::array<double, 3> background{1.0, 1.0, 1.0};
  bool jitter = false;
  std::uint64_t seed = 0;
  /// Stop marching once transmittance falls below this (0 disables).
  double min_transmittance = 1e-4;

  void validate() const;
};

/// Ray through a continuous image position (pixel centers at x + 0.5).
Ray camera_ray(const Camera& cam, double px, double py);
std::vector<Ray> make_rays(const Camera& cam, std::span<const Pixel> pixels);

/// Segment of a ray inside [near, far] and the unit cube.
struct RayInterval {
  double t0 = 0, t1 = 0;
  bool empty() const { return !(t1 > t0); }
};
RayInterval clip_to_unit_cube(const Ray& ray, double near, double far);

/// Sample distances: cell midpoints of S equal cells over the interval, or
/// one uniform draw per cell when `rng` is given.
void sample_distances(const RayInterval& iv, std::size_t count, std::mt19937_64* rng,
                      std::span<double> out);

/// Front-to-back compositing of piecewise-constant samples.
class Compositor {
 public:
  explicit Compositor(double min_transmittance = 0.0) : min_t_(min_transmittance) {}

  /// Adds one segment. Returns false once the ray is considered opaque.
  bool add(double density, double delta, const std::array<double, 3>& rgb) {
    const double tau = density * delta;
    if (tau > 0) {
      const double alpha = -std::expm1(-tau);
      const double w = t_ * alpha;
      for (int c = 0; c < 3; ++c) rgb_[c] += w * rgb[c];
      t_ *= std::exp(-tau);
    }
    return t_ >= min_t_;
  }
  double transmittance() const { return t_; }
  std::array<double, 3> finish(const std::array<double, 3>& background) const {
    return {rgb_[0] + t_ * background[0], rgb_[1] + t_ * background[1],
            rgb_[2] + t_ * background[2]};
  }

 private:
  double min_t_;
  double t_ = 1.0;
  std::array<double, 3> rgb_{};
};

/// Marches any medium with `FieldSample<double> operator()(Vec3 pos, Vec3 dir)`
/// over [iv.t0, iv.t1].
template <typename Medium>
std::array<double, 3> render_medium(const Medium& medium, const Ray& ray, RayInterval iv,
                                    const RenderSettings& s, std::mt19937_64* rng = nullptr) {
  if (iv.empty()) return s.background;
  std::vector<double> ts(s.samples_per_ray);
  sample_distances(iv, s.samples_per_ray, rng, ts);
  const double delta = (iv.t1 - iv.t0) / static_cast<double>(s.samples_per_ray);
  Compositor comp(s.min_transmittance);
  for (double t : ts) {
    const auto smp = medium(ray.origin + ray.dir * t, ray.dir);
    if (!comp.add(smp.density, delta, smp.rgb)) break;
  }
  return comp.finish(s.background);
}

/// Scale used for a ray: footprint at the middle of the clipped interval.
template <typename T>
std::size_t ray_scale(const MultiScaleField<T>& field, const Ray& ray, const RayInterval& iv);

/// Field must be expanded at the scales the rays select.
template <typename T>
std::array<double, 3> render_ray(const MultiScaleField<T>& field, const Ray& ray,
                                 const Camera& cam, const RenderSettings& s,
                                 std::mt19937_64* rng = nullptr);

/// Expands stale scales as needed; does not modify parameters.
template <typename T>
Image render_image(MultiScaleField<T>& field, const Camera& cam, const RenderSettings& s);

}  // namespace freqfield
