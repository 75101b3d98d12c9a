#pragma once

#include "bevsync/core.hpp"
#include "bevsync/feature_map.hpp"
#include "bevsync/io.hpp"
#include "bevsync/nn.hpp"
#include "bevsync/sim.hpp"

#include <map>
#include <utility>
#include <vector>

namespace bevsync::pillars {

/// Point decorated with its pillar context:
/// [x, y, z, x_c, y_c, z_c, x_p, y_p, z_p].
using DecoratedPoint = Eigen::Matrix<double, 9, 1>;

struct PillarConfig {
  geom::GridSpec grid;
  double z_lo = -3.0;
  double z_hi = 1.0;
  /// Decorate with the per-pillar point mean instead of the geometric pillar
  /// center.
  bool center_is_point_mean = false;
};

struct PillarizeResult {
  // keyed by (row, col); deterministic iteration order
  std::map<std::pair<int, int>, std::vector<DecoratedPoint>> pillars;
  int dropped = 0;
};

PillarizeResult pillarize(const std::vector<Eigen::Vector3d>& points,
                          const PillarConfig& cfg);

/// Shared per-point MLP followed by a per-pillar max-pool.
struct EncoderParams {
  nn::DenseParams mlp;  // channels x 9
  bool use_relu = true;

  int channels() const { return static_cast<int>(mlp.weight.rows()); }

  static EncoderParams zeros(int channels) {
    return {nn::DenseParams::zeros(9, channels), true};
  }
  static EncoderParams seeded(int channels, Rng& rng) {
    return {nn::DenseParams::seeded(9, channels, rng), true};
  }
  /// First nine channels pass the decorated vector through unchanged.
  static EncoderParams passthrough(int channels);

  void toStore(io::TensorStore& store) const;
  static EncoderParams fromStore(const io::TensorStore& store);
};

FeatureMap encodePillars(const PillarizeResult& pillars, const PillarConfig& cfg,
                         const EncoderParams& params);

/// Two stride-2 convolution blocks; the output grid covers the same area at
/// one fourth the resolution.
struct BackboneParams {
  nn::Conv2dParams block1;
  nn::Conv2dParams block2;

  static BackboneParams seeded(int cin, int channels, Rng& rng) {
    return {nn::Conv2dParams::seeded(cin, channels, 3, 2, 1, rng),
            nn::Conv2dParams::seeded(channels, channels, 3, 2, 1, rng)};
  }
  static BackboneParams zeros(int cin, int channels) {
    return {nn::Conv2dParams::zeros(cin, channels, 3, 2, 1),
            nn::Conv2dParams::zeros(channels, channels, 3, 2, 1)};
  }
  /// Channel-preserving 3x3 box averages; used by the oracle pipeline.
  static BackboneParams boxAverage(int channels);

  void toStore(io::TensorStore& store) const;
  static BackboneParams fromStore(const io::TensorStore& store);
};

/// Geo-reference of the backbone output: quarter resolution, with the origin
/// shifted so cell centers coincide with the stride-2 stack's receptive-field
/// centers (base index 4j for feature cell j).
geom::GridSpec featureGrid(const geom::GridSpec& base);

FeatureMap backbone(const FeatureMap& f, const BackboneParams& params);

/// pillarize + encode + backbone for one frame.
FeatureMap encodeFrame(const sim::PointCloudFrame& frame, const PillarConfig& cfg,
                       const EncoderParams& enc, const BackboneParams& bb);

}  // namespace bevsync::pillars
