#include "freqfield/render.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace freqfield {

Vec3 Camera::rotate(Vec3 v) const {
  return {c2w[0] * v.x + c2w[1] * v.y + c2w[2] * v.z,
          c2w[4] * v.x + c2w[5] * v.y + c2w[6] * v.z,
          c2w[8] * v.x + c2w[9] * v.y + c2w[10] * v.z};
}

double Camera::orthonormality_residual() const {
  double worst = 0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double d = 0;
      for (int k = 0; k < 3; ++k) d += c2w[k * 4 + i] * c2w[k * 4 + j];
      worst = std::max(worst, std::abs(d - (i == j ? 1.0 : 0.0)));
    }
  return worst;
}

void Camera::validate() const {
  if (!(focal > 0)) throw std::invalid_argument("camera focal must be positive");
  if (width == 0 || height == 0) throw std::invalid_argument("camera image size must be positive");
  const double r = orthonormality_residual();
  if (!(r <= 1e-6))
    throw std::invalid_argument("camera rotation is not orthonormal (residual " +
                                std::to_string(r) + ")");
  if (!(near < far)) throw std::invalid_argument("camera near must be less than far");
}

Camera Camera::downscaled(std::size_t factor) const {
  if (factor == 0 || width % factor != 0 || height % factor != 0)
    throw std::invalid_argument("image size " + std::to_string(width) + "x" +
                                std::to_string(height) + " is not divisible by " +
                                std::to_string(factor));
  Camera c = *this;
  c.width /= factor;
  c.height /= factor;
  c.focal /= static_cast<double>(factor);
  return c;
}

Camera Camera::look_at(Vec3 eye, Vec3 target, double focal, std::size_t width,
                       std::size_t height, double near, double far) {
  const Vec3 back = normalize(eye - target);  // camera +z
  Vec3 up{0, 0, 1};
  if (std::abs(dot(up, back)) > 0.999) up = {0, 1, 0};
  const Vec3 right = normalize(cross(up, back));
  const Vec3 cam_up = cross(back, right);
  Camera c;
  c.focal = focal;
  c.width = width;
  c.height = height;
  c.near = near;
  c.far = far;
  c.c2w = {right.x, cam_up.x, back.x, eye.x,  //
           right.y, cam_up.y, back.y, eye.y,  //
           right.z, cam_up.z, back.z, eye.z};
  return c;
}

void RenderSettings::validate() const {
  if (samples_per_ray < 2) throw std::invalid_argument("samples_per_ray must be at least 2");
  for (double b : background)
    if (!(b >= 0 && b <= 1)) throw std::invalid_argument("background must lie in [0,1]");
  if (!(min_transmittance >= 0 && min_transmittance < 1))
    throw std::invalid_argument("min_transmittance must lie in [0,1)");
}

Ray camera_ray(const Camera& cam, double px, double py) {
  const Vec3 local{(px - 0.5 * static_cast<double>(cam.width)) / cam.focal,
                   -(py - 0.5 * static_cast<double>(cam.height)) / cam.focal, -1.0};
  return {cam.origin(), normalize(cam.rotate(local)), 1.0 / cam.focal};
}

std::vector<Ray> make_rays(const Camera& cam, std::span<const Pixel> pixels) {
  std::vector<Ray> rays;
  rays.reserve(pixels.size());
  for (const auto& p : pixels) {
    if (p.x >= cam.width || p.y >= cam.height)
      throw std::out_of_range("pixel (" + std::to_string(p.x) + ", " + std::to_string(p.y) +
                              ") outside the image");
    rays.push_back(camera_ray(cam, p.x + 0.5, p.y + 0.5));
  }
  return rays;
}

RayInterval clip_to_unit_cube(const Ray& ray, double near, double far) {
  double b0, b1;
  if (!intersect_box(ray.origin, ray.dir, {0, 0, 0}, {1, 1, 1}, b0, b1)) return {};
  return {std::max(near, b0), std::min(far, b1)};
}

void sample_distances(const RayInterval& iv, std::size_t count, std::mt19937_64* rng,
                      std::span<double> out) {
  const double delta = (iv.t1 - iv.t0) / static_cast<double>(count);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 0; i < count; ++i) {
    const double f = rng ? u(*rng) : 0.5;
    out[i] = iv.t0 + (static_cast<double>(i) + f) * delta;
  }
}

template <typename T>
std::size_t ray_scale(const MultiScaleField<T>& field, const Ray& ray, const RayInterval& iv) {
  const double mid = iv.empty() ? 1.0 : 0.5 * (iv.t0 + iv.t1);
  return field.scale_for_footprint(ray.footprint * mid);
}

template <typename T>
std::array<double, 3> render_ray(const MultiScaleField<T>& field, const Ray& ray,
                                 const Camera& cam, const RenderSettings& s,
                                 std::mt19937_64* rng) {
  const RayInterval iv = clip_to_unit_cube(ray, cam.near, cam.far);
  if (iv.empty()) return s.background;
  const std::size_t scale = ray_scale(field, ray, iv);
  const std::size_t extent = field.config().extent;
  typename MultiScaleField<T>::PointTrace trace;
  trace.scale = scale;
  auto medium = [&](Vec3 pos, Vec3 dir) {
    FieldSample<double> out;
    trace.stencil = PointStencil::at({pos.x, pos.y, pos.z}, extent);
    out.density = field.query_density(trace.stencil, scale, trace.density_pre);
    if (out.density > 0) {
      const auto rgb = field.query_color(dir, trace);
      for (int c = 0; c < 3; ++c) out.rgb[c] = rgb[c];
    }
    return out;
  };
  return render_medium(medium, ray, iv, s, rng);
}

template <typename T>
Image render_image(MultiScaleField<T>& field, const Camera& cam, const RenderSettings& s) {
  cam.validate();
  s.validate();
  Image img(cam.width, cam.height);
  std::vector<Ray> rays;
  rays.reserve(cam.width * cam.height);
  for (std::size_t y = 0; y < cam.height; ++y)
    for (std::size_t x = 0; x < cam.width; ++x) rays.push_back(camera_ray(cam, x + 0.5, y + 0.5));
  for (const auto& r : rays) {
    const std::size_t scale = ray_scale(field, r, clip_to_unit_cube(r, cam.near, cam.far));
    if (!field.fresh(scale)) field.expand(scale);
  }
  std::mt19937_64 rng(s.seed);
  for (std::size_t i = 0; i < rays.size(); ++i) {
    const auto rgb = render_ray(field, rays[i], cam, s, s.jitter ? &rng : nullptr);
    img.set(i % cam.width, i / cam.width, rgb);
  }
  return img;
}

#define FREQFIELD_INSTANTIATE_RENDER(T)                                                     \
  template std::size_t ray_scale<T>(const MultiScaleField<T>&, const Ray&,                  \
                                    const RayInterval&);                                    \
  template std::array<double, 3> render_ray<T>(const MultiScaleField<T>&, const Ray&,       \
                                               const Camera&, const RenderSettings&,        \
                                               std::mt19937_64*);                           \
  template Image render_image<T>(MultiScaleField<T>&, const Camera&, const RenderSettings&);

FREQFIELD_INSTANTIATE_RENDER(float)
FREQFIELD_INSTANTIATE_RENDER(double)

}  // namespace freqfield
