#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace gapweld {

using Label = std::uint64_t;

struct Dims {
  std::size_t x = 0;
  std::size_t y = 0;
  std::size_t z = 0;

  std::size_t voxel_count() const { return x * y * z; }
  std::size_t slice_size() const { return x * y; }
  bool operator==(const Dims&) const = default;
};

// Physical voxel size in nanometers.
struct Resolution {
  double x = 1.0;
  double y = 1.0;
  double z = 1.0;

  bool operator==(const Resolution&) const = default;
};

struct VoxelCoord {
  std::size_t x = 0;
  std::size_t y = 0;
  std::size_t z = 0;

  bool operator==(const VoxelCoord&) const = default;
};

// Dense 3D label grid, x-fastest. Label 0 is background.
class LabelVolume {
 public:
  LabelVolume() = default;
  LabelVolume(Dims dims, Resolution resolution);
  LabelVolume(Dims dims, Resolution resolution, std::vector<Label> data);

  const Dims& dims() const { return dims_; }
  const Resolution& resolution() const { return resolution_; }
  const std::vector<Label>& data() const { return data_; }
  std::vector<Label>& data() { return data_; }
  std::size_t size() const { return data_.size(); }

  std::size_t index(std::size_t x, std::size_t y, std::size_t z) const {
    return x + dims_.x * (y + dims_.y * z);
  }
  VoxelCoord coord(std::size_t index) const;

  Label at(std::size_t x, std::size_t y, std::size_t z) const { return data_[index(x, y, z)]; }
  Label& at(std::size_t x, std::size_t y, std::size_t z) { return data_[index(x, y, z)]; }
  Label at(const VoxelCoord& c) const { return at(c.x, c.y, c.z); }
  Label& at(const VoxelCoord& c) { return at(c.x, c.y, c.z); }

  bool operator==(const LabelVolume&) const = default;

 private:
  Dims dims_;
  Resolution resolution_;
  std::vector<Label> data_;
};

enum class Connectivity { Six = 6, TwentySix = 26 };

// Header is `<path>` (JSON); payload is written next to it and referenced by relative name.
LabelVolume load_volume(const std::filesystem::path& header_path);
void save_volume(const LabelVolume& vol, const std::filesystem::path& header_path);

// Output labels 1..K, numbered by the scan-order position of each component's first voxel.
LabelVolume connected_components(const LabelVolume& vol,
                                 Connectivity connectivity = Connectivity::Six);

// Voxels of `label` with a 6-neighbor of a different label or outside the volume.
std::vector<VoxelCoord> surface_voxels(const LabelVolume& vol, Label label);

}  // namespace gapweld
