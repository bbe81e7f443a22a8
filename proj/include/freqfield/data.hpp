#pragma once

// Procedural scene with an exact ray-traced ground truth, multi-scale
// dataset generation and NeRF-synthetic style camera files.

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "freqfield/image.hpp"
#include "freqfield/render.hpp"

namespace freqfield {

class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Primitive {
  enum class Kind { sphere, box };
  Kind kind = Kind::sphere;
  Vec3 center;
  Vec3 size;  // sphere: radius in x; box: half extents
  std::array<double, 3> albedo{};
  double density = 0.0;
  /// Solid 3-D checker with this cell size (0 disables); odd cells use albedo2.
  double checker_cell = 0.0;
  std::array<double, 3> albedo2{};

  /// Entry/exit distances along a ray; false when missed.
  bool intersect(const Ray& ray, double& t0, double& t1) const;
  std::array<double, 3> albedo_at(Vec3 p) const;
};

struct SyntheticScene {
  std::vector<Primitive> primitives;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument if a primitive leaves [0,1]^3 or has a
  /// negative density.
  void validate() const;
  /// Five primitives, one of them a box with a fine checker albedo.
  static SyntheticScene standard(std::uint64_t seed);
};

/// Exact emission-absorption integral along one ray (piecewise constant
/// between primitive boundaries and checker planes).
std::array<double, 3> trace_scene(const SyntheticScene& scene, const Ray& ray, double near,
                                  double far, const std::array<double, 3>& background);

/// Each pixel averages supersample^2 stratified sub-pixel rays.
Image oracle_render(const SyntheticScene& scene, const Camera& cam, std::size_t supersample,
                    const std::array<double, 3>& background = {1, 1, 1},
                    std::uint64_t jitter_seed = 0);

struct DatasetView {
  Camera camera;  // full resolution
  std::string split;  // "train" or "test"
  std::vector<Image> images;  // one per scale
};

struct MultiScaleDataset {
  std::vector<double> reductions;  // 1, 2, 4, 8
  std::vector<DatasetView> views;
  std::array<double, 3> background{1, 1, 1};

  std::size_t num_scales() const { return reductions.size(); }
  Camera camera(std::size_t view, std::size_t scale) const;
  std::vector<std::size_t> split_indices(const std::string& split) const;
  /// Throws DatasetError when image sizes disagree with the cameras.
  void validate() const;
};

struct CameraRigOptions {
  std::size_t train_views = 16;
  std::size_t test_views = 4;
  std::size_t full_resolution = 64;
  double focal = 80.0;
  double radius = 2.0;
  double near = 0.8;
  double far = 3.2;
};

/// Cameras on the upper hemisphere around the cube center; test views are
/// interleaved with training views.
std::vector<DatasetView> camera_rig(const CameraRigOptions& opt, std::uint64_t seed);

/// Renders every scale independently with the oracle. The full resolution
/// must be divisible by the largest reduction factor.
MultiScaleDataset build_multiscale(const SyntheticScene& scene, std::vector<DatasetView> views,
                                   const std::vector<double>& reductions,
                                   std::size_t supersample);

/// Writes scale_<k>/r_<i>.png, transforms.json and manifest.json.
void save_dataset(const MultiScaleDataset& ds, const std::filesystem::path& dir);
MultiScaleDataset load_dataset(const std::filesystem::path& dir);

struct NerfFrame {
  std::string file_path;
  std::array<double, 12> c2w{};
  std::string split;
};

struct NerfCameraFile {
  double camera_angle_x = 0.0;
  double near = 2.0, far = 6.0;
  std::vector<NerfFrame> frames;

  /// focal = 0.5 width / tan(0.5 camera_angle_x).
  Camera camera(std::size_t frame, std::size_t width, std::size_t height) const;
};

/// Parses a transforms JSON. Errors name the missing field or carry the
/// parse byte offset; rotations must be orthonormal to 1e-6.
NerfCameraFile parse_nerf_synthetic(const std::string& text);
NerfCameraFile load_nerf_synthetic(const std::filesystem::path& path);

}  // namespace freqfield
