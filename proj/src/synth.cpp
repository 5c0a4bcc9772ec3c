#include "gapweld/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>

#include "gapweld/error.hpp"
#include "gapweld/json_io.hpp"

namespace gapweld {

void validate_synth_config(const SynthConfig& cfg) {
  if (cfg.dims.x == 0 || cfg.dims.y == 0 || cfg.dims.z == 0) throw ValidationError("dims: must be positive");
  if (cfg.n_tubes < 1) throw ValidationError("tubes: must be at least 1");
  if (cfg.radius_min < 1 || cfg.radius_max < cfg.radius_min) {
    throw ValidationError("radius: need 1 <= min <= max");
  }
  if (!(cfg.max_angle_deg >= 0.0 && cfg.max_angle_deg < 90.0)) {
    throw ValidationError("max-angle: must lie in [0, 90)");
  }
  if (!(cfg.wobble >= 0.0)) throw ValidationError("wobble: must be non-negative");
  if (cfg.max_attempts < 1) throw ValidationError("max_attempts: must be at least 1");
}

namespace {

struct Tube {
  double cx = 0, cy = 0;  // center at the anchor slice
  double zmid = 0;
  double dx = 0, dy = 0;  // lateral drift per slice
  double radius = 0;
  double wobble = 0, freq = 0, phase_x = 0, phase_y = 0;

  std::array<double, 2> center(std::size_t z) const {
    const double t = static_cast<double>(z) - zmid;
    return {cx + dx * t + wobble * std::sin(freq * static_cast<double>(z) + phase_x),
            cy + dy * t + wobble * std::sin(freq * static_cast<double>(z) + phase_y)};
  }
};

// Voxel indices of one slice's disk, clipped to the volume.
std::vector<std::size_t> rasterize_slice(const Tube& tube, const Dims& d, std::size_t z) {
  std::vector<std::size_t> out;
  const auto c = tube.center(z);
  const double r = tube.radius;
  const auto lo_x = static_cast<long>(std::ceil(c[0] - r));
  const auto hi_x = static_cast<long>(std::floor(c[0] + r));
  const auto lo_y = static_cast<long>(std::ceil(c[1] - r));
  const auto hi_y = static_cast<long>(std::floor(c[1] + r));
  for (long y = std::max(0L, lo_y); y <= std::min(static_cast<long>(d.y) - 1, hi_y); ++y) {
    for (long x = std::max(0L, lo_x); x <= std::min(static_cast<long>(d.x) - 1, hi_x); ++x) {
      const double ex = static_cast<double>(x) - c[0];
      const double ey = static_cast<double>(y) - c[1];
      if (ex * ex + ey * ey <= r * r) {
        out.push_back(static_cast<std::size_t>(x) + d.x * (static_cast<std::size_t>(y) + d.y * z));
      }
    }
  }
  return out;
}

struct Placement {
  std::vector<std::size_t> voxels;
  std::size_t z_first = 0, z_last = 0;
};

// Empty when the tube collides with an existing label or is not continuous along z.
std::optional<Placement> place(const Tube& tube, const LabelVolume& vol) {
  const Dims& d = vol.dims();
  Placement p;
  std::vector<std::size_t> prev_xy;
  bool started = false, ended = false;
  for (std::size_t z = 0; z < d.z; ++z) {
    auto slice = rasterize_slice(tube, d, z);
    if (slice.empty()) {
      if (started) ended = true;
      prev_xy.clear();
      continue;
    }
    if (ended) return std::nullopt;  // re-entered after leaving the volume
    std::vector<std::size_t> xy;
    for (auto i : slice) {
      if (vol.data()[i] != 0) return std::nullopt;
      xy.push_back(i % d.slice_size());
    }
    if (started) {
      bool touches = false;
      for (auto a : xy) {
        if (std::binary_search(prev_xy.begin(), prev_xy.end(), a)) {
          touches = true;
          break;
        }
      }
      if (!touches) return std::nullopt;
    } else {
      p.z_first = z;
      started = true;
    }
    p.z_last = z;
    prev_xy = std::move(xy);  // ascending: rasterized in (y, x) order
    p.voxels.insert(p.voxels.end(), slice.begin(), slice.end());
  }
  if (!started) return std::nullopt;
  return p;
}

}  // namespace

SynthVolume generate_volume(const SynthConfig& cfg) {
  validate_synth_config(cfg);
  SynthVolume out{LabelVolume(cfg.dims, cfg.resolution), {}};
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> radius_dist(cfg.radius_min, cfg.radius_max);
  const double zmid = static_cast<double>(cfg.dims.z - 1) / 2.0;

  for (std::size_t t = 0; t < cfg.n_tubes; ++t) {
    bool placed = false;
    for (std::size_t attempt = 0; attempt < cfg.max_attempts && !placed; ++attempt) {
      Tube tube;
      tube.radius = static_cast<double>(radius_dist(rng));
      tube.cx = unit(rng) * static_cast<double>(cfg.dims.x - 1);
      tube.cy = unit(rng) * static_cast<double>(cfg.dims.y - 1);
      tube.zmid = zmid;
      const double angle = unit(rng) * cfg.max_angle_deg;
      const double azimuth = unit(rng) * 360.0;
      const double slope = std::tan(angle * std::numbers::pi / 180.0);
      tube.dx = slope * std::cos(azimuth * std::numbers::pi / 180.0);
      tube.dy = slope * std::sin(azimuth * std::numbers::pi / 180.0);
      tube.wobble = cfg.wobble;
      tube.freq = 0.2 + 0.4 * unit(rng);
      tube.phase_x = unit(rng) * 2.0 * std::numbers::pi;
      tube.phase_y = unit(rng) * 2.0 * std::numbers::pi;

      const auto placement = place(tube, out.volume);
      if (!placement) continue;
      const Label label = t + 1;
      for (auto i : placement->voxels) out.volume.data()[i] = label;
      const auto entry = tube.center(placement->z_first);
      out.tubes.push_back({label, angle, azimuth, static_cast<std::size_t>(tube.radius),
                           {entry[0], entry[1], static_cast<double>(placement->z_first)},
                           placement->z_first, placement->z_last});
      placed = true;
    }
    if (!placed) {
      throw ValidationError("synth: could not place tube " + std::to_string(t + 1) + " after " +
                            std::to_string(cfg.max_attempts) + " attempts");
    }
  }
  return out;
}

void save_synth(const SynthVolume& synth, const SynthConfig& cfg,
                const std::filesystem::path& header_path) {
  save_volume(synth.volume, header_path);
  nlohmann::ordered_json j;
  j["config"] = {{"dims", {cfg.dims.x, cfg.dims.y, cfg.dims.z}},
                 {"resolution_nm", {cfg.resolution.x, cfg.resolution.y, cfg.resolution.z}},
                 {"n_tubes", cfg.n_tubes},
                 {"radius", {cfg.radius_min, cfg.radius_max}},
                 {"max_angle_deg", cfg.max_angle_deg},
                 {"wobble", cfg.wobble},
                 {"seed", cfg.seed}};
  auto tubes = nlohmann::ordered_json::array();
  for (const auto& t : synth.tubes) {
    tubes.push_back({{"label", t.label},
                     {"angle_deg", t.angle_deg},
                     {"azimuth_deg", t.azimuth_deg},
                     {"radius", t.radius},
                     {"entry", {t.entry[0], t.entry[1], t.entry[2]}},
                     {"z_range", {t.z_first, t.z_last}}});
  }
  j["tubes"] = std::move(tubes);
  write_text_file(header_path.parent_path() / (header_path.stem().string() + ".synth.json"),
                  j.dump(2) + "\n");
}

}  // namespace gapweld
