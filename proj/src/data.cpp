#include "freqfield/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

#include "json.hpp"

namespace freqfield {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Scene

bool Primitive::intersect(const Ray& ray, double& t0, double& t1) const {
  if (kind == Kind::box) return intersect_box(ray.origin, ray.dir, center - size, center + size, t0, t1);
  const Vec3 oc = ray.origin - center;
  const double b = dot(oc, ray.dir);
  const double c = dot(oc, oc) - size.x * size.x;
  const double disc = b * b - c;
  if (disc <= 0) return false;
  const double s = std::sqrt(disc);
  t0 = -b - s;
  t1 = -b + s;
  return true;
}

std::array<double, 3> Primitive::albedo_at(Vec3 p) const {
  if (checker_cell <= 0) return albedo;
  const long parity = static_cast<long>(std::floor(p.x / checker_cell)) +
                      static_cast<long>(std::floor(p.y / checker_cell)) +
                      static_cast<long>(std::floor(p.z / checker_cell));
  return (parity & 1) ? albedo2 : albedo;
}

void SyntheticScene::validate() const {
  for (std::size_t i = 0; i < primitives.size(); ++i) {
    const auto& p = primitives[i];
    const Vec3 half = p.kind == Primitive::Kind::sphere ? Vec3{p.size.x, p.size.x, p.size.x} : p.size;
    for (int a = 0; a < 3; ++a)
      if (p.center[a] - half[a] < 0 || p.center[a] + half[a] > 1)
        throw std::invalid_argument("primitive " + std::to_string(i) +
                                    " extends outside the unit cube");
    if (!(p.density >= 0))
      throw std::invalid_argument("primitive " + std::to_string(i) + " has negative density");
  }
}

SyntheticScene SyntheticScene::standard(std::uint64_t seed) {
  using K = Primitive::Kind;
  SyntheticScene s;
  s.seed = seed;
  // Checker cell 0.05 gives a period of 0.1 world units, about four pixels
  // at full resolution for the default rig.
  s.primitives = {
      {K::box, {0.5, 0.5, 0.3}, {0.32, 0.32, 0.08}, {0.95, 0.95, 0.9}, 300.0, 0.05,
       {0.1, 0.1, 0.15}},
      {K::sphere, {0.3, 0.3, 0.55}, {0.14, 0, 0}, {0.85, 0.2, 0.15}, 300.0, 0.0, {}},
      {K::sphere, {0.7, 0.68, 0.52}, {0.12, 0, 0}, {0.15, 0.3, 0.85}, 300.0, 0.0, {}},
      {K::box, {0.7, 0.3, 0.5}, {0.08, 0.08, 0.12}, {0.2, 0.75, 0.25}, 300.0, 0.0, {}},
      {K::sphere, {0.33, 0.7, 0.55}, {0.13, 0, 0}, {0.95, 0.8, 0.2}, 12.0, 0.0, {}},
  };
  return s;
}

std::array<double, 3> trace_scene(const SyntheticScene& scene, const Ray& ray, double near,
                                  double far, const std::array<double, 3>& background) {
  struct Hit {
    double t0, t1;
    const Primitive* prim;
  };
  std::vector<Hit> hits;
  std::vector<double> cuts{near, far};
  for (const auto& p : scene.primitives) {
    double t0, t1;
    if (p.density <= 0 || !p.intersect(ray, t0, t1)) continue;
    t0 = std::max(t0, near);
    t1 = std::min(t1, far);
    if (!(t1 > t0)) continue;
    hits.push_back({t0, t1, &p});
    cuts.push_back(t0);
    cuts.push_back(t1);
    if (p.checker_cell > 0) {
      for (int a = 0; a < 3; ++a) {
        if (ray.dir[a] == 0) continue;
        const double c0 = ray.origin[a] + t0 * ray.dir[a], c1 = ray.origin[a] + t1 * ray.dir[a];
        const auto k0 = static_cast<long>(std::ceil(std::min(c0, c1) / p.checker_cell));
        const auto k1 = static_cast<long>(std::floor(std::max(c0, c1) / p.checker_cell));
        for (long k = k0; k <= k1; ++k)
          cuts.push_back((k * p.checker_cell - ray.origin[a]) / ray.dir[a]);
      }
    }
  }
  if (hits.empty()) return background;
  std::sort(cuts.begin(), cuts.end());

  Compositor comp;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
    const double a = std::max(cuts[i], near), b = std::min(cuts[i + 1], far);
    if (!(b > a)) continue;
    const double mid = 0.5 * (a + b);
    const Vec3 pos = ray.origin + ray.dir * mid;
    double sigma = 0;
    std::array<double, 3> rgb{};
    for (const auto& h : hits) {
      if (mid < h.t0 || mid > h.t1) continue;
      const auto c = h.prim->albedo_at(pos);
      sigma += h.prim->density;
      for (int k = 0; k < 3; ++k) rgb[k] += h.prim->density * c[k];
    }
    if (sigma == 0) continue;
    for (double& v : rgb) v /= sigma;
    comp.add(sigma, b - a, rgb);
    if (comp.transmittance() < 1e-12) break;
  }
  return comp.finish(background);
}

Image oracle_render(const SyntheticScene& scene, const Camera& cam, std::size_t supersample,
                    const std::array<double, 3>& background, std::uint64_t jitter_seed) {
  if (supersample == 0) throw std::invalid_argument("supersample must be at least 1");
  cam.validate();
  Image img(cam.width, cam.height);
  std::mt19937_64 rng(jitter_seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double inv = 1.0 / static_cast<double>(supersample);
  const double norm = inv * inv;
  for (std::size_t y = 0; y < cam.height; ++y)
    for (std::size_t x = 0; x < cam.width; ++x) {
      std::array<double, 3> acc{};
      for (std::size_t sy = 0; sy < supersample; ++sy)
        for (std::size_t sx = 0; sx < supersample; ++sx) {
          const double jx = supersample == 1 ? 0.5 : u(rng);
          const double jy = supersample == 1 ? 0.5 : u(rng);
          const Ray r = camera_ray(cam, x + (sx + jx) * inv, y + (sy + jy) * inv);
          const auto c = trace_scene(scene, r, cam.near, cam.far, background);
          for (int k = 0; k < 3; ++k) acc[k] += c[k];
        }
      img.set(x, y, {acc[0] * norm, acc[1] * norm, acc[2] * norm});
    }
  return img;
}

// ---------------------------------------------------------------------------
// Dataset

Camera MultiScaleDataset::camera(std::size_t view, std::size_t scale) const {
  return views.at(view).camera.downscaled(static_cast<std::size_t>(reductions.at(scale)));
}

std::vector<std::size_t> MultiScaleDataset::split_indices(const std::string& split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < views.size(); ++i)
    if (views[i].split == split) out.push_back(i);
  return out;
}

void MultiScaleDataset::validate() const {
  if (reductions.empty()) throw DatasetError("dataset has no scales");
  for (std::size_t v = 0; v < views.size(); ++v) {
    if (views[v].images.size() != reductions.size())
      throw DatasetError("view " + std::to_string(v) + " has " +
                         std::to_string(views[v].images.size()) + " images, expected " +
                         std::to_string(reductions.size()));
    for (std::size_t s = 0; s < reductions.size(); ++s) {
      const Camera c = camera(v, s);
      const Image& img = views[v].images[s];
      if (img.width != c.width || img.height != c.height)
        throw DatasetError("view " + std::to_string(v) + " scale " + std::to_string(s) +
                           ": image is " + std::to_string(img.width) + "x" +
                           std::to_string(img.height) + ", camera expects " +
                           std::to_string(c.width) + "x" + std::to_string(c.height));
    }
  }
}

std::vector<DatasetView> camera_rig(const CameraRigOptions& opt, std::uint64_t seed) {
  const std::size_t n = opt.train_views + opt.test_views;
  if (n == 0) throw std::invalid_argument("camera rig needs at least one view");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-0.1, 0.1);
  std::vector<bool> is_test(n, false);
  for (std::size_t j = 0; j < opt.test_views; ++j)
    is_test[static_cast<std::size_t>((j + 0.5) * static_cast<double>(n) / opt.test_views)] = true;

  const Vec3 center{0.5, 0.5, 0.5};
  std::vector<DatasetView> views;
  for (std::size_t i = 0; i < n; ++i) {
    const double az = 2 * std::numbers::pi * (static_cast<double>(i) + 0.5 * jitter(rng)) / n;
    const double el = (i % 2 == 0 ? 0.45 : 0.95) + jitter(rng);
    const Vec3 eye = center + opt.radius * Vec3{std::cos(el) * std::cos(az),
                                                std::cos(el) * std::sin(az), std::sin(el)};
    DatasetView v;
    v.camera = Camera::look_at(eye, center, opt.focal, opt.full_resolution, opt.full_resolution,
                               opt.near, opt.far);
    v.split = is_test[i] ? "test" : "train";
    views.push_back(std::move(v));
  }
  return views;
}

MultiScaleDataset build_multiscale(const SyntheticScene& scene, std::vector<DatasetView> views,
                                   const std::vector<double>& reductions,
                                   std::size_t supersample) {
  scene.validate();
  if (reductions.empty()) throw std::invalid_argument("need at least one scale");
  const auto largest = static_cast<std::size_t>(reductions.back());
  for (const auto& v : views)
    if (v.camera.width % largest != 0 || v.camera.height % largest != 0)
      throw std::invalid_argument("full resolution " + std::to_string(v.camera.width) + "x" +
                                  std::to_string(v.camera.height) + " is not divisible by " +
                                  std::to_string(largest));
  MultiScaleDataset ds;
  ds.reductions = reductions;
  ds.views = std::move(views);
  for (std::size_t i = 0; i < ds.views.size(); ++i) {
    ds.views[i].images.clear();
    for (std::size_t s = 0; s < reductions.size(); ++s)
      ds.views[i].images.push_back(oracle_render(scene, ds.camera(i, s), supersample,
                                                 ds.background,
                                                 scene.seed * 1000003 + i * 16 + s));
  }
  return ds;
}

namespace {

std::string frame_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "r_%03zu", i);
  return buf;
}

std::string scale_dir(std::size_t s) { return "scale_" + std::to_string(s); }

json pose_matrix(const std::array<double, 12>& c2w) {
  json m = json::array();
  for (int r = 0; r < 3; ++r) m.push_back({c2w[r * 4], c2w[r * 4 + 1], c2w[r * 4 + 2], c2w[r * 4 + 3]});
  m.push_back({0.0, 0.0, 0.0, 1.0});
  return m;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DatasetError("cannot write " + p.string());
  out << text;
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw DatasetError(what + ": malformed JSON at byte " + std::to_string(e.byte) + ": " +
                       e.what());
  }
}

const json& require(const json& obj, const std::string& field, const std::string& where) {
  if (!obj.is_object() || !obj.contains(field))
    throw DatasetError(where + ": missing field '" + field + "'");
  return obj.at(field);
}

}  // namespace

void save_dataset(const MultiScaleDataset& ds, const fs::path& dir) {
  ds.validate();
  fs::create_directories(dir);
  json frames = json::array();
  for (std::size_t i = 0; i < ds.views.size(); ++i) {
    const auto& v = ds.views[i];
    for (std::size_t s = 0; s < ds.num_scales(); ++s) {
      fs::create_directories(dir / scale_dir(s));
      write_png(dir / scale_dir(s) / (frame_name(i) + ".png"), v.images[s]);
    }
    frames.push_back({{"file_path", "./" + scale_dir(0) + "/" + frame_name(i)},
                      {"transform_matrix", pose_matrix(v.camera.c2w)},
                      {"split", v.split}});
  }
  const Camera& c0 = ds.views.at(0).camera;
  json transforms = {{"camera_angle_x", 2.0 * std::atan(0.5 * c0.width / c0.focal)},
                     {"near", c0.near},
                     {"far", c0.far},
                     {"frames", frames}};
  json dirs = json::array();
  for (std::size_t s = 0; s < ds.num_scales(); ++s) dirs.push_back(scale_dir(s));
  json manifest = {{"scales", ds.reductions},
                   {"dirs", dirs},
                   {"full_width", c0.width},
                   {"full_height", c0.height},
                   {"background", ds.background}};
  write_text(dir / "transforms.json", transforms.dump(2) + "\n");
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

MultiScaleDataset load_dataset(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw DatasetError("dataset directory " + dir.string() + " not found");
  const json manifest = parse_json(read_text(dir / "manifest.json"), "manifest.json");
  const auto cams = load_nerf_synthetic(dir / "transforms.json");
  MultiScaleDataset ds;
  try {
    ds.reductions = require(manifest, "scales", "manifest.json").get<std::vector<double>>();
    const auto dirs = require(manifest, "dirs", "manifest.json").get<std::vector<std::string>>();
    const auto w = require(manifest, "full_width", "manifest.json").get<std::size_t>();
    const auto h = require(manifest, "full_height", "manifest.json").get<std::size_t>();
    if (manifest.contains("background"))
      ds.background = manifest["background"].get<std::array<double, 3>>();
    if (dirs.size() != ds.reductions.size())
      throw DatasetError("manifest.json: 'dirs' and 'scales' differ in length");
    for (std::size_t i = 0; i < cams.frames.size(); ++i) {
      DatasetView v;
      v.camera = cams.camera(i, w, h);
      v.split = cams.frames[i].split;
      const std::string stem = fs::path(cams.frames[i].file_path).filename().string();
      for (const auto& d : dirs) v.images.push_back(read_png(dir / d / (stem + ".png")));
      ds.views.push_back(std::move(v));
    }
  } catch (const json::exception& e) {
    throw DatasetError(std::string("manifest.json: ") + e.what());
  }
  ds.validate();
  return ds;
}

Camera NerfCameraFile::camera(std::size_t frame, std::size_t width, std::size_t height) const {
  Camera c;
  c.width = width;
  c.height = height;
  c.focal = 0.5 * static_cast<double>(width) / std::tan(0.5 * camera_angle_x);
  c.c2w = frames.at(frame).c2w;
  c.near = near;
  c.far = far;
  return c;
}

NerfCameraFile parse_nerf_synthetic(const std::string& text) {
  const json j = parse_json(text, "transforms");
  NerfCameraFile out;
  try {
    out.camera_angle_x = require(j, "camera_angle_x", "transforms").get<double>();
    if (!(out.camera_angle_x > 0 && out.camera_angle_x < std::numbers::pi))
      throw DatasetError("transforms: camera_angle_x must lie in (0, pi)");
    if (j.contains("near")) out.near = j["near"].get<double>();
    if (j.contains("far")) out.far = j["far"].get<double>();
    const auto& frames = require(j, "frames", "transforms");
    for (std::size_t i = 0; i < frames.size(); ++i) {
      const std::string where = "transforms: frames[" + std::to_string(i) + "]";
      NerfFrame f;
      f.file_path = require(frames[i], "file_path", where).get<std::string>();
      const auto m = require(frames[i], "transform_matrix", where)
                         .get<std::vector<std::vector<double>>>();
      if (m.size() < 3 || m[0].size() != 4 || m[1].size() != 4 || m[2].size() != 4)
        throw DatasetError(where + ": transform_matrix must be 4x4 or 3x4");
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) f.c2w[r * 4 + c] = m[r][c];
      f.split = frames[i].value("split", std::string("train"));
      Camera probe;
      probe.c2w = f.c2w;
      const double residual = probe.orthonormality_residual();
      if (!(residual <= 1e-6))
        throw DatasetError(where + ": rotation is not orthonormal (residual " +
                           std::to_string(residual) + ")");
      out.frames.push_back(std::move(f));
    }
  } catch (const json::exception& e) {
    throw DatasetError(std::string("transforms: ") + e.what());
  }
  return out;
}

NerfCameraFile load_nerf_synthetic(const fs::path& path) {
  return parse_nerf_synthetic(read_text(path));
}

}  // namespace freqfield
