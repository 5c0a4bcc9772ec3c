#include "gapweld/candidates.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "gapweld/error.hpp"
#include "gapweld/json_io.hpp"

namespace gapweld {

namespace {

std::vector<Label> labels_on_slice(const LabelVolume& vol, std::size_t z) {
  std::set<Label> found;
  const std::size_t slice = vol.dims().slice_size();
  for (std::size_t i = z * slice; i < (z + 1) * slice; ++i) {
    if (vol.data()[i] != 0) found.insert(vol.data()[i]);
  }
  return {found.begin(), found.end()};
}

struct PhysPoint {
  double x, y, z;
};

std::vector<PhysPoint> border_points(const GapInstance& inst, Label label, std::uint64_t seed) {
  const LabelVolume& vol = inst.gapped;
  const Resolution& r = vol.resolution();
  std::vector<PhysPoint> pts;
  for (const auto z : {inst.top_border_z(), inst.bottom_border_z()}) {
    if (!z) continue;
    for (std::size_t y = 0; y < vol.dims().y; ++y) {
      for (std::size_t x = 0; x < vol.dims().x; ++x) {
        if (vol.at(x, y, *z) == label) {
          pts.push_back({static_cast<double>(x) * r.x, static_cast<double>(y) * r.y,
                         static_cast<double>(*z) * r.z});
        }
      }
    }
    if (!pts.empty()) break;
  }
  if (pts.empty()) {
    throw ValidationError("fragment " + std::to_string(label) + " is not on a border slice");
  }
  if (pts.size() > kDistanceSampleCap) {
    // Sample depends on the label only, so the mean is symmetric in its arguments.
    std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ull * (label + 1)));
    std::vector<std::size_t> idx(pts.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < kDistanceSampleCap; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    idx.resize(kDistanceSampleCap);
    std::sort(idx.begin(), idx.end());
    std::vector<PhysPoint> sampled;
    sampled.reserve(idx.size());
    for (auto i : idx) sampled.push_back(pts[i]);
    pts = std::move(sampled);
  }
  return pts;
}

double mean_pair_distance(const std::vector<PhysPoint>& a, const std::vector<PhysPoint>& b) {
  // Sum in a fixed, argument-order-independent arrangement (outer loop over the
  // lexicographically smaller set) so swapping arguments is bit-identical.
  const auto key = [](const std::vector<PhysPoint>& v) {
    return std::make_tuple(v.front().z, v.front().y, v.front().x, v.size());
  };
  const auto& outer = key(a) <= key(b) ? a : b;
  const auto& inner = key(a) <= key(b) ? b : a;
  double total = 0.0;
  for (const auto& p : outer) {
    double row = 0.0;
    for (const auto& q : inner) {
      const double dx = p.x - q.x, dy = p.y - q.y, dz = p.z - q.z;
      row += std::sqrt(dx * dx + dy * dy + dz * dz);
    }
    total += row;
  }
  return total / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

}  // namespace

std::vector<Label> border_fragments(const GapInstance& inst, Side side) {
  const auto z = side == Side::Top ? inst.top_border_z() : inst.bottom_border_z();
  if (!z) return {};
  return labels_on_slice(inst.gapped, *z);
}

double avg_distance(const GapInstance& inst, Label top, Label bottom, std::uint64_t seed) {
  return mean_pair_distance(border_points(inst, top, seed), border_points(inst, bottom, seed));
}

CandidateGroup candidate_group(const GapInstance& inst, Label top, std::size_t group_size,
                               std::uint64_t seed) {
  if (group_size < 1) throw ValidationError("group-size: must be at least 1");
  const auto tops = border_fragments(inst, Side::Top);
  if (!std::binary_search(tops.begin(), tops.end(), top)) {
    throw ValidationError("fragment " + std::to_string(top) + " is not a top border fragment");
  }
  const auto top_pts = border_points(inst, top, seed);
  CandidateGroup group{top, {}};
  for (Label b : border_fragments(inst, Side::Bottom)) {
    group.candidates.push_back({b, mean_pair_distance(top_pts, border_points(inst, b, seed))});
  }
  std::sort(group.candidates.begin(), group.candidates.end(),
            [](const Candidate& l, const Candidate& r) {
              if (l.avg_distance_nm != r.avg_distance_nm) return l.avg_distance_nm < r.avg_distance_nm;
              return l.bottom < r.bottom;
            });
  if (group.candidates.size() > group_size) group.candidates.resize(group_size);
  return group;
}

std::vector<CandidateGroup> all_candidate_groups(const GapInstance& inst, std::size_t group_size,
                                                 std::uint64_t seed) {
  std::vector<CandidateGroup> groups;
  for (Label t : border_fragments(inst, Side::Top)) {
    groups.push_back(candidate_group(inst, t, group_size, seed));
  }
  return groups;
}

void write_candidate_manifest(const std::vector<CandidateGroup>& groups,
                              const std::filesystem::path& path) {
  std::ostringstream out;
  for (const auto& g : groups) {
    std::size_t rank = 1;
    for (const auto& c : g.candidates) {
      nlohmann::ordered_json j;
      j["top"] = g.top;
      j["bottom"] = c.bottom;
      j["avg_distance_nm"] = c.avg_distance_nm;
      j["rank"] = rank++;
      out << j.dump() << '\n';
    }
  }
  write_text_file(path, out.str());
}

}  // namespace gapweld
