#include "bevsync/temporal.hpp"

#include <cmath>

namespace bevsync::temporal {

VectorD temporalEmbed(int tau_frames, int channels) {
  require(tau_frames >= 0, "temporalEmbed: negative delay");
  require(channels > 0 && channels % 2 == 0,
          "temporalEmbed: channel count must be even");
  VectorD te(channels);
  for (int j = 0; j < channels / 2; ++j) {
    const double xi = embedArgument(static_cast<double>(tau_frames), j, channels);
    te[2 * j] = std::sin(xi);
    te[2 * j + 1] = std::cos(xi);
  }
  return te;
}

FeatureMap fuseTemporal(const FeatureMap& f, const VectorD& te,
                        const FuseParams& params) {
  const int c = f.channels();
  require(static_cast<int>(te.size()) == c,
          "fuseTemporal: embedding channel mismatch");
  require(params.weight.rows() == c && params.weight.cols() == 2 * c,
          "fuseTemporal: weight shape mismatch");

  FeatureMap out(c, f.grid);
  out.timestamp_us = f.timestamp_us;
  out.agent_id = f.agent_id;
  out.source_frame = f.source_frame;

  // constant contribution of the embedding block
  const VectorD te_part = params.weight.rightCols(c) * te + params.bias;
  const MatrixD feat_w = params.weight.leftCols(c);
  for (int co = 0; co < c; ++co) {
    PlaneD acc = PlaneD::Constant(f.grid.height_cells, f.grid.width_cells,
                                  te_part[co]);
    for (int ci = 0; ci < c; ++ci) {
      if (feat_w(co, ci) != 0.0) acc += feat_w(co, ci) * f.data[ci];
    }
    out.data[co] = std::move(acc);
  }
  return out;
}

void AgentCache::insert(FeatureMap f) {
  if (!entries_.empty())
    require(f.timestamp_us > entries_.back().timestamp_us,
            "cache " + agent_id_ + ": timestamps must strictly increase");
  entries_.push_back(std::move(f));
  if (static_cast<int>(entries_.size()) > capacity_) entries_.pop_front();
}

std::vector<FeatureMap> assembleHistory(
    const AgentCache& cache, const std::map<std::int64_t, geom::Pose2>& poses,
    const geom::Pose2& ego_pose_at_t, std::int64_t t_us, std::int64_t period_us,
    const FuseParams& fuse) {
  require(!cache.empty(), "assembleHistory: cache is empty");
  std::vector<FeatureMap> out;
  out.reserve(cache.size());
  const geom::Pose2 ego_inv = geom::inverse(ego_pose_at_t);
  for (const auto& entry : cache.entries()) {
    const auto it = poses.find(entry.timestamp_us);
    if (it == poses.end())
      throw std::invalid_argument(
          "assembleHistory: no pose for timestamp " +
          std::to_string(entry.timestamp_us));
    const int tau = delayFrames(t_us, entry.timestamp_us, period_us);
    const VectorD te = temporalEmbed(tau, entry.channels());
    FeatureMap fused = fuseTemporal(entry, te, fuse);
    const geom::Pose2 rel = geom::compose(ego_inv, it->second);
    FeatureMap warped = warpFeatureMap(fused, rel, "ego@" + std::to_string(t_us));
    warped.timestamp_us = entry.timestamp_us;
    out.push_back(std::move(warped));
  }
  return out;
}

}  // namespace bevsync::temporal
