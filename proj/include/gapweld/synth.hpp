#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "gapweld/volume.hpp"

namespace gapweld {

struct SynthConfig {
  Dims dims{64, 64, 32};
  Resolution resolution{4.0, 4.0, 40.0};
  std::size_t n_tubes = 20;
  std::size_t radius_min = 2;  // voxels
  std::size_t radius_max = 4;
  double max_angle_deg = 10.0;  // inclination from the z-axis, in voxel-index space
  double wobble = 0.0;          // amplitude of smooth per-slice center drift, voxels
  std::uint64_t seed = 0;
  std::size_t max_attempts = 2000;  // per tube
};

void validate_synth_config(const SynthConfig& cfg);

struct TubeRecord {
  Label label = 0;
  double angle_deg = 0.0;
  double azimuth_deg = 0.0;
  std::size_t radius = 0;
  std::array<double, 3> entry{};  // disk center on the first slice the tube occupies
  std::size_t z_first = 0;
  std::size_t z_last = 0;
};

struct SynthVolume {
  LabelVolume volume;
  std::vector<TubeRecord> tubes;
};

// Swept disks, one label per tube (1..n_tubes). Tubes never share voxels and every
// tube is continuous along z, so each label is one 6-connected component.
SynthVolume generate_volume(const SynthConfig& cfg);

// Writes the volume plus `<stem>.synth.json` recording the config and per-tube geometry.
void save_synth(const SynthVolume& synth, const SynthConfig& cfg,
                const std::filesystem::path& header_path);

}  // namespace gapweld
