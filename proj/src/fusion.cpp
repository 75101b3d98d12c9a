#include "bevsync/fusion.hpp"

#include <algorithm>
#include <cmath>

namespace bevsync::fuse {

FeatureMap fuseAgents(const std::vector<FeatureMap>& maps, const FuseParams& params) {
  require(!maps.empty(), "fuseAgents: empty agent list");
  const auto& grid = maps.front().grid;
  int total = 0;
  for (const auto& m : maps) {
    require(m.grid == grid, "fuseAgents: grid mismatch between agents");
    total += m.channels();
  }
  require(params.weight.cols() == total, "fuseAgents: weight shape mismatch");
  const int out_channels = static_cast<int>(params.weight.rows());

  FeatureMap out(out_channels, grid);
  out.timestamp_us = maps.front().timestamp_us;
  out.agent_id = "fused";
  out.source_frame = maps.front().source_frame;
  for (int co = 0; co < out_channels; ++co) {
    PlaneD acc = PlaneD::Constant(grid.height_cells, grid.width_cells,
                                  params.bias.size() ? params.bias[co] : 0.0);
    int col = 0;
    for (const auto& m : maps)
      for (int ci = 0; ci < m.channels(); ++ci, ++col)
        if (params.weight(co, col) != 0.0) acc += params.weight(co, col) * m.data[ci];
    out.data[co] = std::move(acc);
  }
  return out;
}

Tensor3d detectionHead(const FeatureMap& fused, const DetectionHeadParams& params) {
  Tensor3d head = nn::conv2d(fused.data, params.conv);
  require(head.channels() == kHeadChannels, "detectionHead: bad channel count");
  for (int r = 0; r < head.height(); ++r)
    for (int c = 0; c < head.width(); ++c)
      head[kScore](r, c) = nn::sigmoid(head[kScore](r, c));
  return head;
}

void encodeBoxAt(Tensor3d& head, const geom::GridSpec& grid,
                 const geom::OrientedBox& box, double score) {
  int r, c;
  require(grid.cellIndex(box.cx, box.cy, r, c), "encodeBoxAt: box outside grid");
  const Eigen::Vector2d center = grid.cellCenter(r, c);
  head[kScore](r, c) = score;
  head[kDx](r, c) = (box.cx - center.x()) / grid.cell_size;
  head[kDy](r, c) = (box.cy - center.y()) / grid.cell_size;
  head[kLogLength](r, c) = std::log(box.length);
  head[kLogWidth](r, c) = std::log(box.width);
  head[kCos](r, c) = std::cos(box.yaw);
  head[kSin](r, c) = std::sin(box.yaw);
}

std::vector<Detection> nonMaxSuppression(std::vector<Detection> dets, double iou) {
  std::sort(dets.begin(), dets.end(), [](const Detection& a, const Detection& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.box.cx != b.box.cx) return a.box.cx < b.box.cx;
    return a.box.cy < b.box.cy;
  });
  std::vector<Detection> kept;
  for (const auto& d : dets) {
    bool suppressed = false;
    for (const auto& k : kept) {
      if (geom::rotatedIou(d.box, k.box) >= iou) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(d);
  }
  return kept;
}

std::vector<Detection> decodeDetections(const Tensor3d& head,
                                        const geom::GridSpec& grid,
                                        double score_threshold, double nms_iou) {
  require(head.channels() == kHeadChannels, "decodeDetections: bad head shape");
  const auto& score = head[kScore];
  std::vector<Detection> dets;
  for (int r = 0; r < grid.height_cells; ++r) {
    for (int c = 0; c < grid.width_cells; ++c) {
      const double s = score(r, c);
      if (s <= score_threshold) continue;
      bool local_max = true;
      for (int dr = -1; dr <= 1 && local_max; ++dr)
        for (int dc = -1; dc <= 1 && local_max; ++dc) {
          if (dr == 0 && dc == 0) continue;
          const int rr = r + dr, cc = c + dc;
          if (!grid.inBounds(rr, cc)) continue;
          if (score(rr, cc) > s) local_max = false;
        }
      if (!local_max) continue;

      const Eigen::Vector2d center = grid.cellCenter(r, c);
      Detection d;
      d.score = s;
      d.box.cx = center.x() + head[kDx](r, c) * grid.cell_size;
      d.box.cy = center.y() + head[kDy](r, c) * grid.cell_size;
      d.box.length = std::exp(head[kLogLength](r, c));
      d.box.width = std::exp(head[kLogWidth](r, c));
      d.box.yaw = std::atan2(head[kSin](r, c), head[kCos](r, c));
      dets.push_back(d);
    }
  }
  return nonMaxSuppression(std::move(dets), nms_iou);
}

double detectionLoss(const Tensor3d& head, const geom::GridSpec& grid,
                     const std::vector<sim::BoxAnnotation>& gts) {
  // Gaussian center heatmap target
  PlaneD target = PlaneD::Zero(grid.height_cells, grid.width_cells);
  for (const auto& gt : gts) {
    const Eigen::Vector2d rc = grid.worldToCell(gt.box.cx, gt.box.cy);
    for (int r = 0; r < grid.height_cells; ++r)
      for (int c = 0; c < grid.width_cells; ++c) {
        const double d2 = (r - rc.x()) * (r - rc.x()) + (c - rc.y()) * (c - rc.y());
        target(r, c) = std::max(target(r, c), std::exp(-d2 / 2.0));
      }
  }

  int peaks = 0;
  double focal = 0.0;
  for (int r = 0; r < grid.height_cells; ++r) {
    for (int c = 0; c < grid.width_cells; ++c) {
      const double y = target(r, c);
      const double p = std::min(1.0 - 1e-12, std::max(1e-12, head[kScore](r, c)));
      if (y >= 1.0 - 1e-12) {
        focal -= std::pow(1.0 - p, 2.0) * std::log(p);
        ++peaks;
      } else {
        focal -= std::pow(1.0 - y, 4.0) * std::pow(p, 2.0) * std::log(1.0 - p);
      }
    }
  }
  if (peaks > 0) focal /= peaks;

  auto smoothL1 = [](double x) {
    const double a = std::abs(x);
    return a < 1.0 ? 0.5 * x * x : a - 0.5;
  };
  double reg = 0.0;
  for (const auto& gt : gts) {
    int r, c;
    if (!grid.cellIndex(gt.box.cx, gt.box.cy, r, c)) continue;
    const Eigen::Vector2d center = grid.cellCenter(r, c);
    reg += smoothL1(head[kDx](r, c) - (gt.box.cx - center.x()) / grid.cell_size);
    reg += smoothL1(head[kDy](r, c) - (gt.box.cy - center.y()) / grid.cell_size);
    reg += smoothL1(head[kLogLength](r, c) - std::log(gt.box.length));
    reg += smoothL1(head[kLogWidth](r, c) - std::log(gt.box.width));
    reg += smoothL1(head[kCos](r, c) - std::cos(gt.box.yaw));
    reg += smoothL1(head[kSin](r, c) - std::sin(gt.box.yaw));
  }
  if (!gts.empty()) reg /= static_cast<double>(gts.size());

  return focal + reg;
}

TotalLoss totalLoss(double detection, const std::vector<double>& field_losses,
                    const std::vector<double>& offset_losses, const LossWeights& w) {
  auto checkFinite = [](double v, const char* name) {
    if (!std::isfinite(v))
      throw std::invalid_argument(std::string("totalLoss: non-finite ") + name);
  };
  checkFinite(detection, "detection loss");
  TotalLoss out;
  out.detection = detection;
  for (double v : field_losses) {
    checkFinite(v, "field loss");
    out.field_mean += v;
  }
  if (!field_losses.empty()) out.field_mean /= static_cast<double>(field_losses.size());
  for (double v : offset_losses) {
    checkFinite(v, "offset loss");
    out.offset_mean += v;
  }
  if (!offset_losses.empty())
    out.offset_mean /= static_cast<double>(offset_losses.size());
  out.total = detection + w.alpha * out.field_mean + w.beta * out.offset_mean;
  return out;
}

}  // namespace bevsync::fuse
