#pragma once

#include "bevsync/core.hpp"
#include "bevsync/feature_map.hpp"
#include "bevsync/nn.hpp"
#include "bevsync/sim.hpp"

#include <vector>

namespace bevsync::fuse {

/// 1x1 fusion of channel-concatenated agent maps back to C channels.
struct FuseParams {
  MatrixD weight;  // out_channels x total_in_channels
  VectorD bias;

  static FuseParams zeros(int total_in, int out) {
    return {MatrixD::Zero(out, total_in), VectorD::Zero(out)};
  }
  static FuseParams seeded(int total_in, int out, Rng& rng) {
    FuseParams p = zeros(total_in, out);
    const double s = std::sqrt(6.0 / (total_in + out));
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < total_in; ++c) p.weight(r, c) = rng.uniform(-s, s);
    return p;
  }
  /// Equal-weight average of the agent copies of each channel.
  static FuseParams average(int channels, int agents) {
    FuseParams p = zeros(channels * agents, channels);
    for (int a = 0; a < agents; ++a)
      for (int c = 0; c < channels; ++c)
        p.weight(c, a * channels + c) = 1.0 / agents;
    return p;
  }
};

/// Concatenate agent maps in list order (ego first) and project back to the
/// output width. All maps must share grid and timestamp frame.
FeatureMap fuseAgents(const std::vector<FeatureMap>& maps, const FuseParams& params);

struct Detection {
  geom::OrientedBox box;
  double score = 0.0;
};

/// Head output layout, one plane per entry: score in [0, 1], center offsets
/// in cells, log extents, heading cos/sin.
enum HeadChannel {
  kScore = 0,
  kDx,
  kDy,
  kLogLength,
  kLogWidth,
  kCos,
  kSin,
  kHeadChannels
};

struct DetectionHeadParams {
  nn::Conv2dParams conv;  // 1x1, C -> 7

  static DetectionHeadParams zeros(int channels) {
    return {nn::Conv2dParams::zeros(channels, kHeadChannels, 1, 1, 0)};
  }
  static DetectionHeadParams seeded(int channels, Rng& rng) {
    return {nn::Conv2dParams::seeded(channels, kHeadChannels, 1, 1, 0, rng)};
  }
};

/// 1x1 head over the fused map; the score channel is squashed to [0, 1].
Tensor3d detectionHead(const FeatureMap& fused, const DetectionHeadParams& params);

/// Write the exact head activations that decode back to the given box.
void encodeBoxAt(Tensor3d& head, const geom::GridSpec& grid,
                 const geom::OrientedBox& box, double score);

std::vector<Detection> nonMaxSuppression(std::vector<Detection> dets, double iou);

/// Local-maximum cells above threshold decoded to boxes, then greedy rotated
/// NMS, scores descending.
std::vector<Detection> decodeDetections(const Tensor3d& head,
                                        const geom::GridSpec& grid,
                                        double score_threshold, double nms_iou);

/// Focal score loss against a Gaussian center heatmap plus smooth-L1 box
/// regression at object cells. Desk-scale detection training signal.
double detectionLoss(const Tensor3d& head, const geom::GridSpec& grid,
                     const std::vector<sim::BoxAnnotation>& gts);

struct LossWeights {
  double alpha = 0.05;
  double beta = 0.05;
};

struct TotalLoss {
  double total = 0.0;
  double detection = 0.0;
  double field_mean = 0.0;
  double offset_mean = 0.0;
};

/// detection + alpha * mean(field) + beta * mean(offset).
TotalLoss totalLoss(double detection, const std::vector<double>& field_losses,
                    const std::vector<double>& offset_losses,
                    const LossWeights& w = {});

}  // namespace bevsync::fuse
