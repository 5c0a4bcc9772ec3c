#include "gapweld/volume.hpp"

#include <algorithm>
#include <bit>
#include <cstdlib>
#include <deque>
#include <fstream>
#include <sstream>

#include "gapweld/error.hpp"
#include "gapweld/json_io.hpp"

namespace gapweld {

namespace fs = std::filesystem;

namespace {

void check_resolution(const Resolution& r) {
  if (!(r.x > 0.0 && r.y > 0.0 && r.z > 0.0)) {
    throw ValidationError("resolution_nm: components must be strictly positive");
  }
}

std::uint64_t to_little_endian(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0x00000000000000FFull) << 56) | ((v & 0x000000000000FF00ull) << 40) |
        ((v & 0x0000000000FF0000ull) << 24) | ((v & 0x00000000FF000000ull) << 8) |
        ((v & 0x000000FF00000000ull) >> 8) | ((v & 0x0000FF0000000000ull) >> 24) |
        ((v & 0x00FF000000000000ull) >> 40) | ((v & 0xFF00000000000000ull) >> 56);
  }
  return v;
}

}  // namespace

LabelVolume::LabelVolume(Dims dims, Resolution resolution)
    : dims_(dims), resolution_(resolution), data_(dims.voxel_count(), 0) {
  check_resolution(resolution_);
}

LabelVolume::LabelVolume(Dims dims, Resolution resolution, std::vector<Label> data)
    : dims_(dims), resolution_(resolution), data_(std::move(data)) {
  check_resolution(resolution_);
  if (data_.size() != dims_.voxel_count()) {
    std::ostringstream msg;
    msg << "volume data holds " << data_.size() << " labels but dims require "
        << dims_.voxel_count();
    throw ValidationError(msg.str());
  }
}

VoxelCoord LabelVolume::coord(std::size_t index) const {
  const std::size_t slice = dims_.slice_size();
  return {index % dims_.x, (index % slice) / dims_.x, index / slice};
}

LabelVolume load_volume(const fs::path& header_path) {
  const nlohmann::json header = read_json_file(header_path);
  Dims dims;
  Resolution res;
  std::string payload_name;
  try {
    const auto& d = header.at("dims");
    const auto& r = header.at("resolution_nm");
    if (!d.is_array() || d.size() != 3) throw ValidationError("dims: expected [x,y,z]");
    if (!r.is_array() || r.size() != 3) throw ValidationError("resolution_nm: expected [rx,ry,rz]");
    for (const auto& v : d) {
      if (!v.is_number_unsigned()) throw ValidationError("dims: entries must be non-negative integers");
    }
    dims = {d[0].get<std::size_t>(), d[1].get<std::size_t>(), d[2].get<std::size_t>()};
    res = {r[0].get<double>(), r[1].get<double>(), r[2].get<double>()};
    if (header.at("dtype").get<std::string>() != "u64le") {
      throw ValidationError("dtype: only \"u64le\" is supported");
    }
    if (header.at("order").get<std::string>() != "x-fastest") {
      throw ValidationError("order: only \"x-fastest\" is supported");
    }
    payload_name = header.at("payload").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(header_path.string() + ": malformed volume header: " + e.what());
  }
  check_resolution(res);

  const fs::path payload_path = header_path.parent_path() / payload_name;
  std::ifstream in(payload_path, std::ios::binary);
  if (!in) throw IoError("cannot open volume payload " + payload_path.string());
  std::error_code ec;
  const auto bytes = fs::file_size(payload_path, ec);
  if (ec) throw IoError("cannot stat volume payload " + payload_path.string());
  const std::uint64_t expected = 8ull * dims.voxel_count();
  if (bytes != expected) {
    std::ostringstream msg;
    msg << payload_path.string() << ": payload size mismatch (" << bytes << " bytes, header requires "
        << expected << ")";
    throw ValidationError(msg.str());
  }
  std::vector<Label> data(dims.voxel_count());
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(expected));
  if (!in) throw IoError("failed reading volume payload " + payload_path.string());
  for (auto& v : data) v = to_little_endian(v);
  return LabelVolume(dims, res, std::move(data));
}

void save_volume(const LabelVolume& vol, const fs::path& header_path) {
  const fs::path payload_name = header_path.stem().string() + ".bin";
  nlohmann::ordered_json header;
  header["dims"] = {vol.dims().x, vol.dims().y, vol.dims().z};
  header["resolution_nm"] = {vol.resolution().x, vol.resolution().y, vol.resolution().z};
  header["dtype"] = "u64le";
  header["order"] = "x-fastest";
  header["payload"] = payload_name.string();
  write_text_file(header_path, header.dump(2) + "\n");

  const fs::path payload_path = header_path.parent_path() / payload_name;
  std::ofstream out(payload_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write volume payload " + payload_path.string());
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(vol.data().data()),
              static_cast<std::streamsize>(vol.data().size() * sizeof(Label)));
  } else {
    for (Label v : vol.data()) {
      const Label le = to_little_endian(v);
      out.write(reinterpret_cast<const char*>(&le), sizeof le);
    }
  }
  if (!out) throw IoError("failed writing volume payload " + payload_path.string());
}

LabelVolume connected_components(const LabelVolume& vol, Connectivity connectivity) {
  const Dims& d = vol.dims();
  LabelVolume out(d, vol.resolution());
  const auto& in = vol.data();
  auto& labels = out.data();

  std::vector<std::array<int, 3>> offsets;
  for (int dz = -1; dz <= 1; ++dz) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        const int manhattan = std::abs(dx) + std::abs(dy) + std::abs(dz);
        if (manhattan == 0) continue;
        if (connectivity == Connectivity::Six && manhattan != 1) continue;
        offsets.push_back({dx, dy, dz});
      }
    }
  }

  Label next = 0;
  std::deque<std::size_t> queue;
  for (std::size_t seed = 0; seed < in.size(); ++seed) {
    if (in[seed] == 0 || labels[seed] != 0) continue;
    const Label source = in[seed];
    labels[seed] = ++next;
    queue.push_back(seed);
    while (!queue.empty()) {
      const std::size_t cur = queue.front();
      queue.pop_front();
      const VoxelCoord c = vol.coord(cur);
      for (const auto& o : offsets) {
        const auto nx = static_cast<std::ptrdiff_t>(c.x) + o[0];
        const auto ny = static_cast<std::ptrdiff_t>(c.y) + o[1];
        const auto nz = static_cast<std::ptrdiff_t>(c.z) + o[2];
        if (nx < 0 || ny < 0 || nz < 0 || nx >= static_cast<std::ptrdiff_t>(d.x) ||
            ny >= static_cast<std::ptrdiff_t>(d.y) || nz >= static_cast<std::ptrdiff_t>(d.z)) {
          continue;
        }
        const std::size_t ni = vol.index(nx, ny, nz);
        if (in[ni] == source && labels[ni] == 0) {
          labels[ni] = next;
          queue.push_back(ni);
        }
      }
    }
  }
  return out;
}

std::vector<VoxelCoord> surface_voxels(const LabelVolume& vol, Label label) {
  std::vector<VoxelCoord> out;
  if (label == 0) return out;
  const Dims& d = vol.dims();
  for (std::size_t z = 0; z < d.z; ++z) {
    for (std::size_t y = 0; y < d.y; ++y) {
      for (std::size_t x = 0; x < d.x; ++x) {
        if (vol.at(x, y, z) != label) continue;
        const bool exposed = x == 0 || y == 0 || z == 0 || x + 1 == d.x || y + 1 == d.y ||
                             z + 1 == d.z || vol.at(x - 1, y, z) != label ||
                             vol.at(x + 1, y, z) != label || vol.at(x, y - 1, z) != label ||
                             vol.at(x, y + 1, z) != label || vol.at(x, y, z - 1) != label ||
                             vol.at(x, y, z + 1) != label;
        if (exposed) out.push_back({x, y, z});
      }
    }
  }
  return out;
}

}  // namespace gapweld
