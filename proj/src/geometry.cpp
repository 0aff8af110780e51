#include "tride/geometry.hpp"

#include <cmath>

#include "tride/errors.hpp"

namespace tride {

ProjectionResult project_points(const RadarPointCloud& cloud, const Intrinsics& K, int h, int w,
                                float depth_cap) {
  if (h <= 0 || w <= 0) throw ContractError("project_points needs positive image extents");
  if (depth_cap <= 0.f) throw ContractError("project_points needs depth_cap > 0");
  if (K.fx <= 0.0 || K.fy <= 0.0) throw ContractError("intrinsics need positive focal lengths");
  if (K.cx < 0.0 || K.cx >= w || K.cy < 0.0 || K.cy >= h) {
    throw ContractError("principal point outside image");
  }
  ProjectionResult res;
  res.image = Tensor<float>({3, h, w});
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  // pixel -> index into res.kept, or -1
  std::vector<int> owner(hw, -1);
  for (int i = 0; i < static_cast<int>(cloud.size()); ++i) {
    const RadarPoint& p = cloud[i];
    if (!(p.z > 0.f) || p.z > depth_cap) {
      ++res.dropped;
      continue;
    }
    const long u = std::lround(K.fx * p.x / p.z + K.cx);
    const long v = std::lround(K.fy * p.y / p.z + K.cy);
    if (u < 0 || u >= w || v < 0 || v >= h) {
      ++res.dropped;
      continue;
    }
    const std::size_t pix = static_cast<std::size_t>(v) * w + u;
    const int prev = owner[pix];
    if (prev >= 0) {
      if (res.kept[prev].z <= p.z) {
        ++res.dropped;
        continue;
      }
      // nearer point wins; the old occupant counts as dropped
      res.kept[prev] = {i, static_cast<int>(u), static_cast<int>(v), p.z};
      ++res.dropped;
    } else {
      owner[pix] = static_cast<int>(res.kept.size());
      res.kept.push_back({i, static_cast<int>(u), static_cast<int>(v), p.z});
    }
    res.image.data[pix] = p.z;
    res.image.data[hw + pix] = p.v_r;
    res.image.data[2 * hw + pix] = p.rcs;
  }
  return res;
}

Region region_of_column(int u, int w) {
  if (u < 0 || u >= w) throw ContractError("column outside image");
  return static_cast<Region>((4LL * u) / w);
}

RegionAssignment partition_regions(const std::vector<ProjectedPoint>& kept, int w) {
  RegionAssignment out;
  for (const ProjectedPoint& p : kept) {
    out.of(region_of_column(p.u, w)).push_back(p.index);
  }
  return out;
}

Tensor<float> merge_sparse_into_dense(const Tensor<float>& dense, const Tensor<float>& sparse) {
  if (dense.shape != sparse.shape) {
    throw DimError("merge_sparse_into_dense shape mismatch: " + shape_str(dense.shape) + " vs " +
                   shape_str(sparse.shape));
  }
  Tensor<float> out = dense;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    if (sparse.data[i] > 0.f) out.data[i] = sparse.data[i];
  }
  return out;
}

}  // namespace tride
