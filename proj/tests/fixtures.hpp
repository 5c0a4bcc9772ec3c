#pragma once

#include <initializer_list>
#include <utility>

#include "gapweld/volume.hpp"

namespace gapweld::test {

struct Tube {
  Label label;
  std::size_t x, y;       // column origin
  std::size_t w = 1;      // square cross-section side
  std::size_t z_lo = 0;   // first slice
  std::size_t z_hi = ~std::size_t{0};  // one past last slice (clamped)
};

// Axis-aligned square tubes; later tubes overwrite earlier ones.
inline LabelVolume tube_volume(Dims d, std::initializer_list<Tube> tubes,
                               Resolution r = {4.0, 4.0, 40.0}) {
  LabelVolume v(d, r);
  for (const auto& t : tubes) {
    for (std::size_t z = t.z_lo; z < std::min(t.z_hi, d.z); ++z)
      for (std::size_t y = t.y; y < t.y + t.w; ++y)
        for (std::size_t x = t.x; x < t.x + t.w; ++x) v.at(x, y, z) = t.label;
  }
  return v;
}

}  // namespace gapweld::test
