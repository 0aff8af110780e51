#pragma once

#include <vector>

#include "tride/tensor.hpp"

namespace tride {

// Camera intrinsics in pixels.
struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
};

// One radar return in the camera frame: position (m), radial velocity (m/s),
// radar cross-section (dBsm).
struct RadarPoint {
  float x = 0.f;
  float y = 0.f;
  float z = 0.f;
  float v_r = 0.f;
  float rcs = 0.f;
};

using RadarPointCloud = std::vector<RadarPoint>;

// A point that survived projection: source row, pixel column/row, depth.
struct ProjectedPoint {
  int index = 0;
  int u = 0;
  int v = 0;
  float z = 0.f;
};

// Projection output. image is [3 x H x W] with channels depth (m), radial
// velocity (m/s), RCS (dBsm); zero where no point lands.
struct ProjectionResult {
  Tensor<float> image;
  std::vector<ProjectedPoint> kept;
  int dropped = 0;
};

enum class Region { kL = 0, kML = 1, kMR = 2, kR = 3 };

inline const char* region_name(Region r) {
  switch (r) {
    case Region::kL: return "L";
    case Region::kML: return "ML";
    case Region::kMR: return "MR";
    case Region::kR: return "R";
  }
  return "?";
}

// Disjoint point-row index sets by image column band.
struct RegionAssignment {
  std::vector<int> rows[4];

  std::vector<int>& of(Region r) { return rows[static_cast<int>(r)]; }
  const std::vector<int>& of(Region r) const { return rows[static_cast<int>(r)]; }
  std::size_t total() const {
    return rows[0].size() + rows[1].size() + rows[2].size() + rows[3].size();
  }
};

// Pinhole projection u = round(fx*x/z + cx), v = round(fy*y/z + cy). Points
// behind the camera, past depth_cap, or off-image are dropped; pixel
// collisions keep the nearer point.
ProjectionResult project_points(const RadarPointCloud& cloud, const Intrinsics& K, int h, int w,
                                float depth_cap);

// Half-open column bands [0,W/4) -> L, [W/4,W/2) -> ML, [W/2,3W/4) -> MR,
// [3W/4,W) -> R.
Region region_of_column(int u, int w);
RegionAssignment partition_regions(const std::vector<ProjectedPoint>& kept, int w);

// Overwrite D with D_s wherever D_s > 0 (0 means "no sparse value").
Tensor<float> merge_sparse_into_dense(const Tensor<float>& dense, const Tensor<float>& sparse);

}  // namespace tride
