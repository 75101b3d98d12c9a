#pragma once

#include "bevsync/core.hpp"
#include "bevsync/feature_map.hpp"
#include "bevsync/io.hpp"
#include "bevsync/nn.hpp"

#include <cstdint>
#include <deque>
#include <map>
#include <string>
#include <vector>

namespace bevsync::temporal {

/// Base of the sinusoidal temporal embedding.
inline constexpr double kEmbeddingBase = 8.0;

/// Argument of the embedding sinusoid for channel pair j of C channels.
inline double embedArgument(double tau_frames, int j, int channels) {
  return tau_frames / std::pow(kEmbeddingBase, 2.0 * j / channels);
}

/// Channel vector (sin, cos pairs) for a delay of tau whole frames. The same
/// vector is broadcast over the spatial grid when fused.
VectorD temporalEmbed(int tau_frames, int channels);

/// Pointwise fusion of a feature map with its temporal embedding: the
/// embedding is concatenated along channels and mapped back to the feature
/// width with a 1x1 kernel.
struct FuseParams {
  MatrixD weight;  // C x 2C
  VectorD bias;    // C

  static FuseParams zeros(int channels) {
    return {MatrixD::Zero(channels, 2 * channels), VectorD::Zero(channels)};
  }
  static FuseParams seeded(int channels, Rng& rng) {
    FuseParams p = zeros(channels);
    const double s = std::sqrt(6.0 / (3 * channels));
    for (int r = 0; r < channels; ++r)
      for (int c = 0; c < 2 * channels; ++c) p.weight(r, c) = rng.uniform(-s, s);
    return p;
  }
  /// Identity on the feature block, zero on the embedding block.
  static FuseParams identityOnFeatures(int channels) {
    FuseParams p = zeros(channels);
    for (int c = 0; c < channels; ++c) p.weight(c, c) = 1.0;
    return p;
  }

  void toStore(io::TensorStore& store) const {
    store.putMatrix("te_fuse.weight", weight);
    store.putVector("te_fuse.bias", bias);
  }
  static FuseParams fromStore(const io::TensorStore& store) {
    FuseParams p;
    p.weight = store.getMatrix("te_fuse.weight");
    p.bias = store.getVector("te_fuse.bias");
    require(p.weight.cols() == 2 * p.weight.rows(),
            "te_fuse params: weight must be C x 2C");
    return p;
  }
};

FeatureMap fuseTemporal(const FeatureMap& f, const VectorD& te,
                        const FuseParams& params);

/// Fixed-capacity, time-ordered feature buffer for one agent. Inserting at
/// capacity evicts the oldest entry. Cached maps are immutable once stored.
class AgentCache {
 public:
  AgentCache(std::string agent_id, int capacity)
      : agent_id_(std::move(agent_id)), capacity_(capacity) {
    require(capacity >= 1, "cache: capacity must be >= 1");
  }

  void insert(FeatureMap f);

  const std::deque<FeatureMap>& entries() const { return entries_; }
  const std::string& agentId() const { return agent_id_; }
  int capacity() const { return capacity_; }
  bool empty() const { return entries_.empty(); }
  int size() const { return static_cast<int>(entries_.size()); }
  std::int64_t newestTimestamp() const {
    require(!entries_.empty(), "cache: empty");
    return entries_.back().timestamp_us;
  }

 private:
  std::string agent_id_;
  int capacity_;
  std::deque<FeatureMap> entries_;
};

/// Whole frames of delay between a capture timestamp and the ego time;
/// fractional delays round up.
inline int delayFrames(std::int64_t t_us, std::int64_t capture_us,
                       std::int64_t period_us) {
  require(period_us > 0, "delayFrames: period must be positive");
  const std::int64_t dt = t_us - capture_us;
  require(dt >= 0, "delayFrames: capture is in the future");
  return static_cast<int>((dt + period_us - 1) / period_us);
}

/// Every cached entry TE-fused and warped into the ego frame at time t,
/// oldest first. A pose must be known for each entry timestamp.
std::vector<FeatureMap> assembleHistory(
    const AgentCache& cache, const std::map<std::int64_t, geom::Pose2>& poses,
    const geom::Pose2& ego_pose_at_t, std::int64_t t_us, std::int64_t period_us,
    const FuseParams& fuse);

}  // namespace bevsync::temporal
