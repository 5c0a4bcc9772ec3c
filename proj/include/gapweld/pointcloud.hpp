#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gapweld/candidates.hpp"
#include "gapweld/gap.hpp"

namespace gapweld {

inline constexpr std::size_t kDefaultContextSlices = 3;
inline constexpr std::size_t kDefaultPointCount = 2048;

struct RepConfig {
  std::size_t cs = kDefaultContextSlices;
  std::size_t np = kDefaultPointCount;
  double norm_scale_nm = 1.0;  // shared divisor; see compute_norm_scale
  std::uint64_t seed = 0;
};

void validate_rep_config(const RepConfig& cfg);

struct ExampleMeta {
  Label top = 0;
  Label bottom = 0;
  std::size_t z0 = 0;
  std::size_t ns = 0;
  std::size_t cs = 0;

  bool operator==(const ExampleMeta&) const = default;
};

// Stable identifier used to key score tables, e.g. "z12n1:5-9".
std::string example_id(const ExampleMeta& meta);

using Point3f = std::array<float, 3>;

struct PointCloudExample {
  std::vector<Point3f> points;  // np entries in [0,1]^3
  std::optional<int> label;     // 1 merge, 0 split, empty when unknown
  ExampleMeta meta;

  bool operator==(const PointCloudExample&) const = default;
};

struct SliceRange {
  std::size_t lo = 0;  // inclusive
  std::size_t hi = 0;  // exclusive

  std::size_t size() const { return hi - lo; }
  bool operator==(const SliceRange&) const = default;
};

// [z0 - cs, z0 + ns + cs) clamped to the volume.
SliceRange truncate_window(const GapInstance& inst, std::size_t cs);

// Surface voxels of both fragments after cropping the volume to the context window.
// Coordinates are global voxel indices; top fragment's voxels come first.
std::vector<VoxelCoord> window_surface_pool(const GapInstance& inst, Label top, Label bottom,
                                            std::size_t cs);

// Largest physical side of the pool's bounding box (voxel extents included).
double pool_extent_nm(const GapInstance& inst, const std::vector<VoxelCoord>& pool);

PointCloudExample build_example(const GapInstance& inst, Label top, Label bottom,
                                const RepConfig& cfg, std::optional<int> y = std::nullopt);

struct CandidatePair {
  const GapInstance* inst = nullptr;
  Label top = 0;
  Label bottom = 0;
};

// Max pool extent over all pairs: the dataset-wide normalization constant.
double compute_norm_scale(const std::vector<CandidatePair>& pairs, std::size_t cs);

// Candidate pairs of one instance, labeled from its truth pairs.
std::vector<CandidatePair> candidate_pairs(const GapInstance& inst,
                                           const std::vector<CandidateGroup>& groups);

struct Dataset {
  std::size_t np = 0;
  std::size_t cs = 0;
  double norm_scale_nm = 0.0;
  std::vector<PointCloudExample> examples;

  bool operator==(const Dataset&) const = default;
};

// Two-pass build: norm scale from all pairs (unless cfg_scale_override), then examples.
// Labels come from each instance's truth pairs. `jobs` bounds parallelism.
Dataset build_dataset(const std::vector<CandidatePair>& pairs, RepConfig cfg,
                      bool compute_scale = true, std::size_t jobs = 1);

void write_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace gapweld
