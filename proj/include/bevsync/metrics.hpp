#pragma once

#include "bevsync/fusion.hpp"
#include "bevsync/sim.hpp"

#include <vector>

namespace bevsync::eval {

struct PrPoint {
  double score = 0.0;
  double precision = 0.0;
  double recall = 0.0;
};

struct ApResult {
  double ap = 0.0;
  std::vector<PrPoint> curve;
  bool no_gt = false;
  int n_gt = 0;
  int n_det = 0;
};

/// Greedy matching at the IoU threshold in descending score order, all-point
/// interpolated average precision.
ApResult averagePrecision(std::vector<fuse::Detection> dets,
                          const std::vector<sim::BoxAnnotation>& gts,
                          double iou_thresh);

/// Detections and ground truth of one evaluated frame.
struct FrameDetections {
  std::int64_t frame_id = 0;
  std::vector<fuse::Detection> dets;
  std::vector<sim::BoxAnnotation> gts;
};

/// AP over several frames: global score ordering, matching within each frame.
ApResult averagePrecisionPooled(const std::vector<FrameDetections>& frames,
                                double iou_thresh);

std::string prCurveCsv(const std::vector<PrPoint>& curve);

}  // namespace bevsync::eval
