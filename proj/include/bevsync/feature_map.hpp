#pragma once

#include "bevsync/core.hpp"
#include "bevsync/geometry.hpp"

#include <cstdint>
#include <string>

namespace bevsync {

/// Dense BEV feature grid with geo-referencing metadata. The unit exchanged
/// between agents.
struct FeatureMap {
  Tensor3d data;
  geom::GridSpec grid;
  std::int64_t timestamp_us = 0;
  std::string agent_id;
  std::string source_frame;

  FeatureMap() = default;
  FeatureMap(int channels, const geom::GridSpec& g)
      : data(channels, g.height_cells, g.width_cells), grid(g) {}

  int channels() const { return data.channels(); }

  /// Per-cell L2 norm across channels.
  PlaneD cellNorms() const {
    PlaneD n = PlaneD::Zero(grid.height_cells, grid.width_cells);
    for (int c = 0; c < data.channels(); ++c) n += data[c].cwiseProduct(data[c]);
    return n.cwiseSqrt();
  }
};

/// Resample a feature map into a target frame. rel maps the map's frame into
/// the target frame; out-of-range samples are zero. Metadata other than the
/// frame id is preserved.
inline FeatureMap warpFeatureMap(const FeatureMap& f, const geom::Pose2& rel,
                                 const std::string& target_frame = "") {
  FeatureMap out;
  out.data = geom::warpPlanes(f.data, f.grid, rel, f.grid);
  out.grid = f.grid;
  out.timestamp_us = f.timestamp_us;
  out.agent_id = f.agent_id;
  out.source_frame = target_frame.empty() ? f.source_frame : target_frame;
  return out;
}

}  // namespace bevsync
