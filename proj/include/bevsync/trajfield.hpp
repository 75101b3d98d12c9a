#pragma once

#include "bevsync/core.hpp"
#include "bevsync/feature_map.hpp"
#include "bevsync/nn.hpp"
#include "bevsync/sim.hpp"

#include <cstdint>
#include <vector>

namespace bevsync::field {

using IntPlane = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline constexpr int kEmpty = -1;

/// Position heatmap plus unit-tangent orientation over the feature grid.
/// Ground-truth fields additionally carry, per covered cell, the frame age of
/// the occupying trajectory sample and the object id; predicted fields leave
/// those planes empty.
struct TrajectoryField {
  geom::GridSpec grid;
  PlaneD position;   // [0, 1]
  PlaneD orient_cos;
  PlaneD orient_sin;
  IntPlane time_index;  // frames behind ego time, kEmpty where unsupervised
  IntPlane object_id;   // kEmpty where unsupervised
  bool has_time_index = false;

  static TrajectoryField empty(const geom::GridSpec& g) {
    TrajectoryField f;
    f.grid = g;
    f.position = PlaneD::Zero(g.height_cells, g.width_cells);
    f.orient_cos = PlaneD::Zero(g.height_cells, g.width_cells);
    f.orient_sin = PlaneD::Zero(g.height_cells, g.width_cells);
    f.time_index = IntPlane::Constant(g.height_cells, g.width_cells, kEmpty);
    f.object_id = IntPlane::Constant(g.height_cells, g.width_cells, kEmpty);
    return f;
  }
};

struct TrajectorySample {
  std::int64_t timestamp_us = 0;
  double cx = 0.0;
  double cy = 0.0;
  double yaw = 0.0;     // tangent fallback for degenerate segments
  int age_frames = 0;   // frames behind ego time
};

/// Object path in the ego frame at ego time, oldest sample first; the newest
/// sample is at ego time itself.
struct Trajectory {
  int object_id = kEmpty;
  std::vector<TrajectorySample> samples;
};

struct FrameAnnotations {
  std::int64_t timestamp_us = 0;
  std::vector<sim::BoxAnnotation> boxes;  // already in the ego frame at t
};

/// Number of trajectory samples for delay tau and m cached frames at the
/// given sampling period: ceil(tau * omega) + m, in exact integer arithmetic.
inline int trajectoryLength(std::int64_t tau_us, std::int64_t period_us, int m) {
  require(period_us > 0, "trajectoryLength: period must be positive");
  require(tau_us >= 0 && m >= 1, "trajectoryLength: invalid arguments");
  return static_cast<int>((tau_us + period_us - 1) / period_us) + m;
}

/// Group per-frame annotations into per-object trajectories over the window
/// ending at t. Objects appearing mid-window yield shorter trajectories;
/// objects absent at t yield none.
std::vector<Trajectory> buildTrajectories(
    const std::vector<FrameAnnotations>& frames, std::int64_t tau_us,
    std::int64_t period_us, int m, std::int64_t t_us);

struct RasterizeOptions {
  double sigma_cells = 1.0;
  double truncate_sigmas = 3.0;
  double step_fraction = 0.5;  // interpolation step as a fraction of a cell
  bool binary_position = false;
};

struct RasterizeResult {
  TrajectoryField field;
  int skipped = 0;  // trajectories entirely outside the grid
};

/// Splat trajectories onto the grid. Where trajectories overlap, the one
/// whose occupying sample is more recent wins every channel; ties go to the
/// smaller object id so the result is independent of input order.
RasterizeResult rasterizeField(const std::vector<Trajectory>& trajs,
                               const geom::GridSpec& grid,
                               const RasterizeOptions& opts = {});

/// Encoder/decoder field predictor: three stride-2 stages down, three
/// nearest-neighbor upsampling stages back with skip concatenations, and a
/// three-channel head.
struct UNetParams {
  nn::Conv2dParams stem;    // cin -> w
  nn::Conv2dParams down1;   // w -> 2w, stride 2
  nn::Conv2dParams down2;   // 2w -> 4w, stride 2
  nn::Conv2dParams down3;   // 4w -> 8w, stride 2
  nn::Conv2dParams up3;     // 8w + 4w -> 4w
  nn::Conv2dParams up2;     // 4w + 2w -> 2w
  nn::Conv2dParams up1;     // 2w + w -> w
  nn::Conv2dParams head;    // w -> 3, 1x1
  double orient_norm_threshold = 0.5;

  static UNetParams seeded(int cin, int width, Rng& rng);
  static UNetParams zeros(int cin, int width);
  int inChannels() const { return stem.in_channels; }
};

TrajectoryField predictField(const Tensor3d& history, const geom::GridSpec& grid,
                             const UNetParams& params);

struct FieldLossOptions {
  double focal_alpha = 2.0;
  double focal_beta = 4.0;
};

struct FieldLoss {
  double total = 0.0;
  double position = 0.0;
  double orientation = 0.0;
  bool no_peaks = false;
};

/// Penalty-reduced focal loss on the position heatmap plus L1 on the
/// orientation channels over supervised cells.
FieldLoss fieldLoss(const TrajectoryField& pred, const TrajectoryField& gt,
                    const FieldLossOptions& opts = {});

struct FieldLossGrad {
  FieldLoss loss;
  PlaneD d_position;
  PlaneD d_orient_cos;
  PlaneD d_orient_sin;
};

FieldLossGrad fieldLossWithGrad(const TrajectoryField& pred,
                                const TrajectoryField& gt,
                                const FieldLossOptions& opts = {});

}  // namespace bevsync::field
