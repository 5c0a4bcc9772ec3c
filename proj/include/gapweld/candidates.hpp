#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "gapweld/gap.hpp"

namespace gapweld {

enum class Side { Top, Bottom };

inline constexpr std::size_t kDefaultGroupSize = 4;
// Per-side cap on border voxels entering the all-pairs mean.
inline constexpr std::size_t kDistanceSampleCap = 1024;

struct Candidate {
  Label bottom = 0;
  double avg_distance_nm = 0.0;
};

struct CandidateGroup {
  Label top = 0;
  std::vector<Candidate> candidates;  // ascending distance, ties by label
};

// Fragment labels present on the border slice of `side`, ascending.
std::vector<Label> border_fragments(const GapInstance& inst, Side side);

// Mean physical distance over all pairs of border-slice voxels of the two fragments.
// Argument order does not matter: each label is looked up on whichever border slice holds it.
double avg_distance(const GapInstance& inst, Label top, Label bottom,
                    std::uint64_t seed = 0);

CandidateGroup candidate_group(const GapInstance& inst, Label top,
                               std::size_t group_size = kDefaultGroupSize,
                               std::uint64_t seed = 0);

// One group per top border fragment, in ascending top order.
std::vector<CandidateGroup> all_candidate_groups(const GapInstance& inst,
                                                 std::size_t group_size = kDefaultGroupSize,
                                                 std::uint64_t seed = 0);

// JSON lines: {"top","bottom","avg_distance_nm","rank"}; rank starts at 1.
void write_candidate_manifest(const std::vector<CandidateGroup>& groups,
                              const std::filesystem::path& path);

}  // namespace gapweld
