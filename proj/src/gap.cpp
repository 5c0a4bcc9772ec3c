#include "gapweld/gap.hpp"

#include <algorithm>
#include <set>
#include <string>

#include "gapweld/error.hpp"
#include "gapweld/json_io.hpp"

namespace gapweld {

namespace fs = std::filesystem;

void validate_gap(const GapSpec& spec, const Dims& dims) {
  if (spec.ns < 1) throw ValidationError("ns: must be at least 1");
  if (spec.z0 + spec.ns > dims.z) {
    throw ValidationError("z0/ns: gap [" + std::to_string(spec.z0) + ", " +
                          std::to_string(spec.z0 + spec.ns) + ") exceeds z-dim " +
                          std::to_string(dims.z));
  }
}

std::optional<std::size_t> GapInstance::top_border_z() const {
  if (spec.z0 == 0) return std::nullopt;
  return spec.z0 - 1;
}

std::optional<std::size_t> GapInstance::bottom_border_z() const {
  if (spec.z0 + spec.ns >= gapped.dims().z) return std::nullopt;
  return spec.z0 + spec.ns;
}

bool GapInstance::is_truth_pair(Label top, Label bottom) const {
  return std::binary_search(truth_pairs.begin(), truth_pairs.end(), TruthPair{top, bottom});
}

LabelVolume drop_slices(const LabelVolume& vol, const GapSpec& spec) {
  validate_gap(spec, vol.dims());
  LabelVolume out = vol;
  const std::size_t slice = vol.dims().slice_size();
  std::fill(out.data().begin() + static_cast<std::ptrdiff_t>(spec.z0 * slice),
            out.data().begin() + static_cast<std::ptrdiff_t>((spec.z0 + spec.ns) * slice), Label{0});
  return out;
}

namespace {

std::set<Label> labels_on_slice(const LabelVolume& vol, std::size_t z) {
  std::set<Label> out;
  const std::size_t slice = vol.dims().slice_size();
  for (std::size_t i = z * slice; i < (z + 1) * slice; ++i) {
    if (vol.data()[i] != 0) out.insert(vol.data()[i]);
  }
  return out;
}

}  // namespace

GapInstance make_gap_instance(const LabelVolume& gt, const GapSpec& spec) {
  GapInstance inst;
  inst.spec = spec;
  const LabelVolume dropped = drop_slices(gt, spec);
  inst.gapped = connected_components(dropped, Connectivity::Six);

  const auto& frag = inst.gapped.data();
  for (std::size_t i = 0; i < frag.size(); ++i) {
    if (frag[i] != 0) inst.origin_of.emplace(frag[i], dropped.data()[i]);
  }

  const auto top_z = inst.top_border_z();
  const auto bottom_z = inst.bottom_border_z();
  if (top_z && bottom_z) {
    const auto tops = labels_on_slice(inst.gapped, *top_z);
    const auto bottoms = labels_on_slice(inst.gapped, *bottom_z);
    for (Label t : tops) {
      for (Label b : bottoms) {
        if (inst.origin_of.at(t) == inst.origin_of.at(b)) inst.truth_pairs.push_back({t, b});
      }
    }
  }
  return inst;
}

void save_gap_instance(const GapInstance& inst, const fs::path& manifest_path) {
  const fs::path vol_name = manifest_path.stem().string() + ".vol.json";
  save_volume(inst.gapped, manifest_path.parent_path() / vol_name);

  nlohmann::ordered_json j;
  j["spec"] = {{"z0", inst.spec.z0}, {"ns", inst.spec.ns}};
  j["volume"] = vol_name.string();
  auto origin = nlohmann::ordered_json::array();
  for (const auto& [f, o] : inst.origin_of) origin.push_back({f, o});
  j["origin_of"] = origin;
  auto pairs = nlohmann::ordered_json::array();
  for (const auto& p : inst.truth_pairs) pairs.push_back({p.top_fragment, p.bottom_fragment});
  j["truth_pairs"] = pairs;
  write_text_file(manifest_path, j.dump() + "\n");
}

GapInstance load_gap_instance(const fs::path& manifest_path) {
  const nlohmann::json j = read_json_file(manifest_path);
  GapInstance inst;
  std::string vol_name;
  try {
    inst.spec.z0 = j.at("spec").at("z0").get<std::size_t>();
    inst.spec.ns = j.at("spec").at("ns").get<std::size_t>();
    vol_name = j.at("volume").get<std::string>();
    for (const auto& e : j.at("origin_of")) {
      const auto [it, fresh] = inst.origin_of.emplace(e.at(0).get<Label>(), e.at(1).get<Label>());
      if (!fresh) throw ValidationError("origin_of: duplicate fragment " + std::to_string(it->first));
    }
    for (const auto& e : j.at("truth_pairs")) {
      inst.truth_pairs.push_back({e.at(0).get<Label>(), e.at(1).get<Label>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(manifest_path.string() + ": malformed gap manifest: " + e.what());
  }
  std::sort(inst.truth_pairs.begin(), inst.truth_pairs.end());
  inst.gapped = load_volume(manifest_path.parent_path() / vol_name);
  validate_gap(inst.spec, inst.gapped.dims());
  for (const auto& p : inst.truth_pairs) {
    if (!inst.origin_of.contains(p.top_fragment) || !inst.origin_of.contains(p.bottom_fragment)) {
      throw ValidationError("truth_pairs: references unknown fragment");
    }
  }
  return inst;
}

}  // namespace gapweld
