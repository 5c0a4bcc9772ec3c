#include "gapweld/pointcloud.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "gapweld/error.hpp"
#include "gapweld/json_io.hpp"
#include "gapweld/util.hpp"

namespace gapweld {

void validate_rep_config(const RepConfig& cfg) {
  if (cfg.cs < 1) throw ValidationError("cs: must be at least 1");
  if (cfg.np < 1) throw ValidationError("np: must be at least 1");
  if (!(cfg.norm_scale_nm > 0.0) || !std::isfinite(cfg.norm_scale_nm)) {
    throw ValidationError("norm_scale_nm: must be positive and finite");
  }
}

std::string example_id(const ExampleMeta& meta) {
  std::ostringstream s;
  s << 'z' << meta.z0 << 'n' << meta.ns << ':' << meta.top << '-' << meta.bottom;
  return s.str();
}

SliceRange truncate_window(const GapInstance& inst, std::size_t cs) {
  const std::size_t z0 = inst.spec.z0;
  const std::size_t lo = z0 >= cs ? z0 - cs : 0;
  const std::size_t hi = std::min(z0 + inst.spec.ns + cs, inst.gapped.dims().z);
  return {lo, hi};
}

std::vector<VoxelCoord> window_surface_pool(const GapInstance& inst, Label top, Label bottom,
                                            std::size_t cs) {
  const SliceRange w = truncate_window(inst, cs);
  const LabelVolume& vol = inst.gapped;
  const Dims& d = vol.dims();
  const std::size_t slice = d.slice_size();
  std::vector<Label> crop(vol.data().begin() + static_cast<std::ptrdiff_t>(w.lo * slice),
                          vol.data().begin() + static_cast<std::ptrdiff_t>(w.hi * slice));
  const LabelVolume window(Dims{d.x, d.y, w.size()}, vol.resolution(), std::move(crop));

  std::vector<VoxelCoord> pool;
  for (Label l : {top, bottom}) {
    auto surf = surface_voxels(window, l);
    if (surf.empty()) {
      throw ValidationError("fragment " + std::to_string(l) + " has no voxels in the context window");
    }
    for (auto& v : surf) pool.push_back({v.x, v.y, v.z + w.lo});
  }
  return pool;
}

namespace {

struct Box {
  std::array<double, 3> lo{std::numeric_limits<double>::infinity(),
                           std::numeric_limits<double>::infinity(),
                           std::numeric_limits<double>::infinity()};
  std::array<double, 3> hi{-std::numeric_limits<double>::infinity(),
                           -std::numeric_limits<double>::infinity(),
                           -std::numeric_limits<double>::infinity()};
};

std::array<double, 3> phys(const VoxelCoord& v, const Resolution& r) {
  return {static_cast<double>(v.x) * r.x, static_cast<double>(v.y) * r.y,
          static_cast<double>(v.z) * r.z};
}

Box bounding_box(const std::vector<VoxelCoord>& pool, const Resolution& r) {
  Box b;
  for (const auto& v : pool) {
    const auto p = phys(v, r);
    for (int a = 0; a < 3; ++a) {
      b.lo[a] = std::min(b.lo[a], p[a]);
      b.hi[a] = std::max(b.hi[a], p[a]);
    }
  }
  return b;
}

}  // namespace

double pool_extent_nm(const GapInstance& inst, const std::vector<VoxelCoord>& pool) {
  const Resolution& r = inst.gapped.resolution();
  const Box b = bounding_box(pool, r);
  const std::array<double, 3> res{r.x, r.y, r.z};
  double extent = 0.0;
  for (int a = 0; a < 3; ++a) extent = std::max(extent, b.hi[a] - b.lo[a] + res[a]);
  return extent;
}

PointCloudExample build_example(const GapInstance& inst, Label top, Label bottom,
                                const RepConfig& cfg, std::optional<int> y) {
  validate_rep_config(cfg);
  if (y && *y != 0 && *y != 1) throw ValidationError("label: must be 0 or 1");
  const auto pool = window_surface_pool(inst, top, bottom, cfg.cs);
  const double extent = pool_extent_nm(inst, pool);
  if (extent > cfg.norm_scale_nm) {
    std::ostringstream msg;
    msg << "norm_scale_nm " << cfg.norm_scale_nm << " is smaller than the window extent " << extent
        << " nm of pair " << top << "-" << bottom;
    throw ValidationError(msg.str());
  }

  const Resolution& r = inst.gapped.resolution();
  const Box box = bounding_box(pool, r);

  std::mt19937_64 rng(mix_seed({cfg.seed, inst.spec.z0, inst.spec.ns, top, bottom}));
  std::vector<std::size_t> picks;
  picks.reserve(cfg.np);
  if (pool.size() >= cfg.np) {
    std::vector<std::size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < cfg.np; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
    }
    picks.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(cfg.np));
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (std::size_t i = 0; i < cfg.np; ++i) picks.push_back(pick(rng));
  }

  PointCloudExample ex;
  ex.label = y;
  ex.meta = {top, bottom, inst.spec.z0, inst.spec.ns, cfg.cs};
  ex.points.reserve(cfg.np);
  for (auto i : picks) {
    const auto p = phys(pool[i], r);
    Point3f q;
    for (int a = 0; a < 3; ++a) {
      q[a] = static_cast<float>((p[a] - box.lo[a]) / cfg.norm_scale_nm);
    }
    ex.points.push_back(q);
  }
  return ex;
}

std::vector<CandidatePair> candidate_pairs(const GapInstance& inst,
                                           const std::vector<CandidateGroup>& groups) {
  std::vector<CandidatePair> out;
  for (const auto& g : groups) {
    for (const auto& c : g.candidates) out.push_back({&inst, g.top, c.bottom});
  }
  return out;
}

double compute_norm_scale(const std::vector<CandidatePair>& pairs, std::size_t cs) {
  double scale = 0.0;
  for (const auto& p : pairs) {
    scale = std::max(scale, pool_extent_nm(*p.inst, window_surface_pool(*p.inst, p.top, p.bottom, cs)));
  }
  return scale;
}

Dataset build_dataset(const std::vector<CandidatePair>& pairs, RepConfig cfg, bool compute_scale,
                      std::size_t jobs) {
  if (compute_scale) {
    std::vector<double> extents(pairs.size(), 0.0);
    parallel_for(pairs.size(), jobs, [&](std::size_t i) {
      const auto& p = pairs[i];
      extents[i] = pool_extent_nm(*p.inst, window_surface_pool(*p.inst, p.top, p.bottom, cfg.cs));
    });
    const double scale = extents.empty() ? 0.0 : *std::max_element(extents.begin(), extents.end());
    if (scale > 0.0) cfg.norm_scale_nm = scale;
  }
  validate_rep_config(cfg);
  Dataset ds{cfg.np, cfg.cs, cfg.norm_scale_nm, std::vector<PointCloudExample>(pairs.size())};
  parallel_for(pairs.size(), jobs, [&](std::size_t i) {
    const auto& p = pairs[i];
    ds.examples[i] = build_example(*p.inst, p.top, p.bottom, cfg,
                                   p.inst->is_truth_pair(p.top, p.bottom) ? 1 : 0);
  });
  return ds;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ostringstream out;
  nlohmann::ordered_json header;
  header["np"] = ds.np;
  header["cs"] = ds.cs;
  header["norm_scale_nm"] = ds.norm_scale_nm;
  header["count"] = ds.examples.size();
  out << header.dump() << '\n';
  for (const auto& ex : ds.examples) {
    if (ex.points.size() != ds.np) throw ValidationError("dataset: example point count differs from np");
    nlohmann::ordered_json j;
    j["meta"] = {{"top", ex.meta.top},
                 {"bottom", ex.meta.bottom},
                 {"z0", ex.meta.z0},
                 {"ns", ex.meta.ns},
                 {"cs", ex.meta.cs}};
    j["label"] = ex.label ? nlohmann::ordered_json(*ex.label) : nlohmann::ordered_json(nullptr);
    auto pts = nlohmann::ordered_json::array();
    for (const auto& p : ex.points) {
      for (float c : p) pts.push_back(static_cast<double>(c));
    }
    j["points"] = std::move(pts);
    out << j.dump() << '\n';
  }
  write_text_file(path, out.str());
}

Dataset read_dataset(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  Dataset ds;
  const auto fail = [&](const std::string& what) {
    throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": " + what);
  };
  std::size_t expected = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto j = parse_json(line, path.string() + ":" + std::to_string(lineno));
    try {
      if (!have_header) {
        ds.np = j.at("np").get<std::size_t>();
        ds.cs = j.at("cs").get<std::size_t>();
        ds.norm_scale_nm = j.at("norm_scale_nm").get<double>();
        expected = j.at("count").get<std::size_t>();
        have_header = true;
        continue;
      }
      PointCloudExample ex;
      const auto& m = j.at("meta");
      ex.meta = {m.at("top").get<Label>(), m.at("bottom").get<Label>(), m.at("z0").get<std::size_t>(),
                 m.at("ns").get<std::size_t>(), m.at("cs").get<std::size_t>()};
      const auto& lab = j.at("label");
      if (!lab.is_null()) {
        const int v = lab.get<int>();
        if (v != 0 && v != 1) fail("label must be 0, 1 or null");
        ex.label = v;
      }
      const auto& pts = j.at("points");
      if (!pts.is_array() || pts.size() != 3 * ds.np) {
        fail("points: expected " + std::to_string(3 * ds.np) + " numbers, found " +
             std::to_string(pts.is_array() ? pts.size() : 0));
      }
      ex.points.resize(ds.np);
      for (std::size_t i = 0; i < ds.np; ++i) {
        for (std::size_t a = 0; a < 3; ++a) {
          const auto& v = pts[3 * i + a];
          if (!v.is_number()) fail("points: non-numeric coordinate");
          ex.points[i][a] = static_cast<float>(v.get<double>());
        }
      }
      ds.examples.push_back(std::move(ex));
    } catch (const nlohmann::json::exception& e) {
      fail(std::string("malformed record: ") + e.what());
    }
  }
  if (have_header && ds.examples.size() != expected) {
    fail("header count " + std::to_string(expected) + " but " + std::to_string(ds.examples.size()) +
         " examples present");
  }
  return ds;
}

}  // namespace gapweld
