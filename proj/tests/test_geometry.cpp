#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "tride/geometry.hpp"
#include "tride/rng.hpp"

using namespace tride;

namespace {

const Intrinsics kK{100.0, 100.0, 32.0, 16.0};

RadarPointCloud random_cloud(int n, Rng& rng) {
  RadarPointCloud cloud;
  for (int i = 0; i < n; ++i) {
    RadarPoint p;
    p.x = static_cast<float>(rng.uniform(-30.0, 30.0));
    p.y = static_cast<float>(rng.uniform(-5.0, 5.0));
    p.z = static_cast<float>(rng.uniform(-5.0, 100.0));  // some behind / past cap
    p.v_r = static_cast<float>(rng.uniform(-20.0, 20.0));
    p.rcs = static_cast<float>(rng.uniform(-10.0, 30.0));
    cloud.push_back(p);
  }
  return cloud;
}

}  // namespace

TEST_CASE("projection places a forward point at the principal point") {
  RadarPointCloud cloud{{0.f, 0.f, 10.f, 2.5f, 12.f}};
  const auto res = project_points(cloud, kK, 32, 64, 80.f);
  REQUIRE(res.kept.size() == 1);
  CHECK(res.dropped == 0);
  CHECK(res.kept[0].u == 32);
  CHECK(res.kept[0].v == 16);
  CHECK(res.image.at3(0, 16, 32) == 10.f);
  CHECK(res.image.at3(1, 16, 32) == 2.5f);
  CHECK(res.image.at3(2, 16, 32) == 12.f);
  // exactly one nonzero pixel per channel
  int nonzero = 0;
  for (float v : res.image.data) nonzero += v != 0.f;
  CHECK(nonzero == 3);
}

TEST_CASE("projection drops points behind the camera, past the cap, or off-image") {
  RadarPointCloud cloud{
      {0.f, 0.f, -1.f, 0.f, 0.f},   // behind
      {0.f, 0.f, 0.f, 0.f, 0.f},    // on the plane
      {0.f, 0.f, 90.f, 0.f, 0.f},   // past cap 80
      {50.f, 0.f, 10.f, 0.f, 0.f},  // u = 100*5+32, far off-image
  };
  const auto res = project_points(cloud, kK, 32, 64, 80.f);
  CHECK(res.kept.empty());
  CHECK(res.dropped == 4);
  for (float v : res.image.data) CHECK(v == 0.f);
}

TEST_CASE("pixel collisions keep the nearer point") {
  RadarPointCloud cloud{
      {0.f, 0.f, 9.f, 1.f, 1.f},
      {0.f, 0.f, 5.f, 2.f, 2.f},
      {0.f, 0.f, 7.f, 3.f, 3.f},
  };
  const auto res = project_points(cloud, kK, 32, 64, 80.f);
  REQUIRE(res.kept.size() == 1);
  CHECK(res.dropped == 2);
  CHECK(res.kept[0].index == 1);
  CHECK(res.image.at3(0, 16, 32) == 5.f);
  CHECK(res.image.at3(1, 16, 32) == 2.f);
}

TEST_CASE("projection rejects bad arguments") {
  RadarPointCloud cloud;
  CHECK_THROWS_AS(project_points(cloud, kK, 32, 64, 0.f), ContractError);
  CHECK_THROWS_AS(project_points(cloud, Intrinsics{0, 100, 1, 1}, 32, 64, 80.f), ContractError);
  CHECK_THROWS_AS(project_points(cloud, Intrinsics{100, 100, 64, 1}, 32, 64, 80.f),
                  ContractError);
}

TEST_CASE("column bands are half-open quarters") {
  CHECK(region_of_column(10, 64) == Region::kL);
  CHECK(region_of_column(15, 64) == Region::kL);
  CHECK(region_of_column(16, 64) == Region::kML);
  CHECK(region_of_column(31, 64) == Region::kML);
  CHECK(region_of_column(32, 64) == Region::kMR);
  CHECK(region_of_column(47, 64) == Region::kMR);
  CHECK(region_of_column(48, 64) == Region::kR);
  CHECK(region_of_column(63, 64) == Region::kR);
  CHECK_THROWS_AS(region_of_column(64, 64), ContractError);
  CHECK_THROWS_AS(region_of_column(-1, 64), ContractError);
}

TEST_CASE("partition of an empty projection is four empty sets") {
  const RegionAssignment a = partition_regions({}, 64);
  CHECK(a.total() == 0);
}

TEST_CASE("partition covers kept points exactly once") {
  Rng rng(404);
  const auto cloud = random_cloud(200, rng);
  const auto res = project_points(cloud, kK, 32, 64, 80.f);
  CHECK(res.kept.size() + static_cast<std::size_t>(res.dropped) == cloud.size());
  const RegionAssignment a = partition_regions(res.kept, 64);
  CHECK(a.total() == res.kept.size());
  std::set<int> seen;
  for (const auto& rows : a.rows) {
    for (int idx : rows) {
      CHECK(seen.insert(idx).second);  // disjoint
      CHECK(idx >= 0);
      CHECK(idx < static_cast<int>(cloud.size()));
    }
  }
  // every depth written respects the cap and bounds by construction
  for (int r = 0; r < 32; ++r) {
    for (int c = 0; c < 64; ++c) {
      const float d = res.image.at3(0, r, c);
      CHECK(d >= 0.f);
      CHECK(d <= 80.f);
    }
  }
  // nonzero depth pixels cannot exceed kept points
  int nonzero = 0;
  for (int r = 0; r < 32; ++r) {
    for (int c = 0; c < 64; ++c) nonzero += res.image.at3(0, r, c) != 0.f;
  }
  CHECK(nonzero == static_cast<int>(res.kept.size()));
}

TEST_CASE("merge_sparse_into_dense basic rules") {
  const auto dense = Tensor<float>::full({4, 6}, 7.f);
  {
    const auto out = merge_sparse_into_dense(dense, Tensor<float>({4, 6}));
    CHECK(out.data == dense.data);
  }
  {
    const auto out = merge_sparse_into_dense(dense, dense);
    CHECK(out.data == dense.data);
  }
  {
    Tensor<float> sparse({4, 6});
    sparse.at2(2, 3) = 3.5f;
    const auto out = merge_sparse_into_dense(dense, sparse);
    int diffs = 0;
    for (std::size_t i = 0; i < out.numel(); ++i) diffs += out.data[i] != dense.data[i];
    CHECK(diffs == 1);
    CHECK(out.at2(2, 3) == 3.5f);
  }
  CHECK_THROWS_AS(merge_sparse_into_dense(dense, Tensor<float>({6, 4})), DimError);
}

TEST_CASE("merge_sparse_into_dense is idempotent") {
  Rng rng(11);
  Tensor<float> dense = Tensor<float>::uniform({8, 8}, rng, 0.0, 80.0);
  Tensor<float> sparse({8, 8});
  for (std::size_t i = 0; i < sparse.numel(); i += 3) {
    sparse.data[i] = static_cast<float>(rng.uniform(0.5, 80.0));
  }
  const auto once = merge_sparse_into_dense(dense, sparse);
  const auto twice = merge_sparse_into_dense(once, sparse);
  CHECK(once.data == twice.data);
}
