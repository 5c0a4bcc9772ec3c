#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <vector>

#include "gapweld/volume.hpp"

namespace gapweld {

// Slices [z0, z0 + ns) are missing.
struct GapSpec {
  std::size_t z0 = 0;
  std::size_t ns = 1;

  bool operator==(const GapSpec&) const = default;
};

// Throws ValidationError unless ns >= 1 and z0 + ns <= zdim.
void validate_gap(const GapSpec& spec, const Dims& dims);

struct TruthPair {
  Label top_fragment = 0;
  Label bottom_fragment = 0;

  auto operator<=>(const TruthPair&) const = default;
};

struct GapInstance {
  LabelVolume gapped;
  GapSpec spec;
  std::map<Label, Label> origin_of;
  std::vector<TruthPair> truth_pairs;  // sorted, unique

  // Border slices; empty when the gap touches that edge of the volume.
  std::optional<std::size_t> top_border_z() const;
  std::optional<std::size_t> bottom_border_z() const;

  bool is_truth_pair(Label top, Label bottom) const;
};

LabelVolume drop_slices(const LabelVolume& vol, const GapSpec& spec);

// Fragments are the 6-connected components of the gapped volume.
GapInstance make_gap_instance(const LabelVolume& gt, const GapSpec& spec);

// Manifest JSON at `manifest_path`; the gapped volume goes to `<stem>.vol.json` beside it.
void save_gap_instance(const GapInstance& inst, const std::filesystem::path& manifest_path);
GapInstance load_gap_instance(const std::filesystem::path& manifest_path);

}  // namespace gapweld
