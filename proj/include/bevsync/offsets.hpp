#pragma once

#include "bevsync/core.hpp"
#include "bevsync/feature_map.hpp"
#include "bevsync/nn.hpp"
#include "bevsync/trajfield.hpp"

#include <vector>

namespace bevsync::offsets {

/// Attention positions per query.
inline constexpr int kNumPositions = 18;

struct OffsetSet {
  enum class Flavor { Predicted, GroundTruth };
  int query_r = 0;
  int query_c = 0;
  std::vector<Eigen::Vector2d> positions;  // (row, col), fractional for predictions
  Flavor flavor = Flavor::Predicted;
};

/// Ground-truth attention positions for one query: cells with a position
/// response, the query's object id, and a strictly older time index. Oldest
/// first, preferring cells nearest the trajectory polyline; short lists pad
/// with the oldest qualifying cell, and background queries self-reference.
OffsetSet gtOffsets(int query_r, int query_c, const field::TrajectoryField& gt,
                    int n = kNumPositions);

/// Two convolution layers with PReLU over features concatenated with the
/// predicted field; the 2n-channel head is read as per-query (dr, dc) deltas.
struct OffsetNetParams {
  nn::Conv2dParams conv1;
  VectorD prelu_slope;
  nn::Conv2dParams head;  // hidden -> 2n
  int n = kNumPositions;

  static OffsetNetParams seeded(int feature_channels, int hidden, int n, Rng& rng);
  static OffsetNetParams zeros(int feature_channels, int hidden, int n);
};

std::vector<OffsetSet> predictOffsets(const FeatureMap& features,
                                      const field::TrajectoryField& pred_field,
                                      const OffsetNetParams& params);

struct TransportPlan {
  MatrixD plan;  // n x n, rows/cols sum to 1/n at convergence
  int iterations = 0;
  double residual = 0.0;
};

/// Entropic optimal transport between uniform marginals by log-domain
/// alternating normalization.
TransportPlan sinkhorn(const MatrixD& cost, double reg, int max_iters = 200,
                       double tol = 1e-9);

struct OffsetLoss {
  double loss = 0.0;
  MatrixD cost;
  TransportPlan plan;
};

/// Sinkhorn-matched transport cost between predicted and ground-truth
/// position sets under the L1 cell metric.
OffsetLoss offsetLoss(const OffsetSet& pred, const OffsetSet& gt,
                      double reg = 0.1, int max_iters = 200);

/// Gradient w.r.t. predicted positions with the plan held fixed.
std::vector<Eigen::Vector2d> offsetLossGrad(const OffsetSet& pred,
                                            const OffsetSet& gt,
                                            const TransportPlan& plan);

struct MapOffsetLossOptions {
  double reg = 0.1;
  int max_iters = 200;
  bool foreground_only = false;
};

/// Average per-query offset loss over a feature map.
double mapOffsetLoss(const std::vector<OffsetSet>& pred,
                     const std::vector<OffsetSet>& gt,
                     const field::TrajectoryField& gt_field,
                     const MapOffsetLossOptions& opts = {});

}  // namespace bevsync::offsets
