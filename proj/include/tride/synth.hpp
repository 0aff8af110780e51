#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tride/errors.hpp"
#include "tride/geometry.hpp"
#include "tride/rng.hpp"
#include "tride/tensor.hpp"
#include "tride/text.hpp"

namespace tride {

// Knobs for the procedural scene generator.
struct GenParams {
  int h = 64;
  int w = 128;
  int radar_points = 24;        // returns per scene
  float sigma_r = 0.3f;         // radar depth noise (m)
  float clutter_fraction = 0.1f;
  float text_noise = 0.2f;      // relative depth distortion in the description
  float depth_cap = 80.f;
  std::uint64_t seed = 1234;    // dataset base seed; scene i uses seed + i
};

void validate_gen_params(const GenParams& p);

enum class ObjectType { kCar = 0, kTruck = 1, kBus = 2, kPerson = 3, kSign = 4 };
const char* object_name(ObjectType t);

// Axis-aligned billboard at constant depth; rows/cols are half-open ranges.
struct SceneObject {
  ObjectType type = ObjectType::kCar;
  int x0 = 0, x1 = 0;
  int y0 = 0, y1 = 0;
  float depth = 0.f;
};

struct SceneLayout {
  std::vector<SceneObject> objects;  // far to near; nearer drawn last
};

struct SceneSample {
  Tensor<float> image;   // [3 x H x W] in [0,1]
  RadarPointCloud cloud;
  Tensor<float> dense;   // D, [H x W]
  Tensor<float> sparse;  // D_s, [H x W]
  Weather weather = Weather::kNormal;
  std::string text;
};

// Pinhole model shared by the generator and the training harness.
Intrinsics default_intrinsics(int h, int w);

SceneLayout generate_layout(Rng& rng, const GenParams& p);

// Dense depth: ground ramp and far background composited with object cards.
Tensor<float> render_depth(const SceneLayout& layout, const GenParams& p);

// Albedo times depth shading; no randomness.
Tensor<float> render_clean_image(const SceneLayout& layout, const Tensor<float>& depth,
                                 const GenParams& p);

Tensor<float> corrupt_weather(const Tensor<float>& image, Weather weather, std::uint64_t seed);

RadarPointCloud sample_radar(const Tensor<float>& dense, const SceneLayout& layout,
                             const GenParams& p, std::uint64_t seed, const Intrinsics& k);

std::string render_text(const SceneLayout& layout, Weather weather, const GenParams& p,
                        std::uint64_t seed);

SceneSample generate_scene(std::uint64_t seed, const GenParams& p);
SceneSample generate_scene(std::uint64_t seed, const GenParams& p, Weather forced);

void save_scene(const SceneSample& s, const std::string& path);
SceneSample load_scene(const std::string& path);

// Dataset manifest: one "<relative path>\t<split>" line per scene.
struct ManifestEntry {
  std::string path;
  std::string split;
};

void save_manifest(const std::vector<ManifestEntry>& entries, const std::string& path);
std::vector<ManifestEntry> load_manifest(const std::string& path);

}  // namespace tride
