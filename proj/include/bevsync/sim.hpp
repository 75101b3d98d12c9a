#pragma once

#include "bevsync/core.hpp"
#include "bevsync/geometry.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace bevsync::sim {

using Micros = std::int64_t;

inline Micros secondsToMicros(double s) {
  return static_cast<Micros>(std::llround(s * 1e6));
}
inline double microsToSeconds(Micros us) { return static_cast<double>(us) * 1e-6; }

struct MotionModel {
  enum class Kind { Static, ConstantVelocity, ConstantTurn };
  Kind kind = Kind::Static;
  double speed = 0.0;     // m/s along heading
  double yaw_rate = 0.0;  // rad/s, ConstantTurn only
};

/// Closed-form pose of a body following the model for t seconds.
geom::Pose2 evolvePose(const geom::Pose2& start, const MotionModel& m, double t);

struct ObjectSpec {
  int id = 0;
  geom::OrientedBox box;  // world frame at scenario start
  MotionModel motion;
};

struct LatencySpec {
  enum class Kind { Fixed, Uniform };
  Kind kind = Kind::Fixed;
  Micros fixed_us = 0;
  Micros lo_us = 0;
  Micros hi_us = 0;
};

struct AgentSpec {
  std::string id;
  bool ego = false;
  geom::Pose2 pose;  // sensor pose at scenario start, world frame
  MotionModel motion;
  double hz = 10.0;
  int cache_capacity = 4;
  LatencySpec latency;
  double max_range = 50.0;

  Micros periodUs() const { return static_cast<Micros>(std::llround(1e6 / hz)); }
  geom::Pose2 poseAt(Micros t_us) const {
    return evolvePose(pose, motion, microsToSeconds(t_us));
  }
};

struct PointSamplingSpec {
  double perimeter_step = 0.25;  // m between perimeter samples
  double footprint_step = 0.6;   // m grid step inside the box
  double noise_sigma = 0.02;
  int clutter_points = 0;  // per frame
  double clutter_z_lo = 0.0;
  double clutter_z_hi = 0.1;
  double object_z_lo = 0.0;
  double object_z_hi = 1.5;
  bool angular_occlusion = false;
};

struct ScenarioConfig {
  std::uint64_t seed = 1;
  double duration_s = 1.0;
  geom::GridSpec world;  // base grid; its extent is the world bounds
  PointSamplingSpec points;
  std::vector<AgentSpec> agents;
  std::vector<ObjectSpec> objects;

  void validate() const;
  int egoIndex() const;

  geom::OrientedBox objectBoxAt(const ObjectSpec& obj, Micros t_us) const;
  bool inWorldBounds(double x, double y) const;

  /// First time (1 ms resolution) the object's center leaves the world,
  /// or nullopt if it never does within the scenario duration.
  std::optional<Micros> despawnTimeUs(const ObjectSpec& obj) const;
};

struct BoxAnnotation {
  int object_id = -1;
  geom::OrientedBox box;
  Micros timestamp_us = 0;
};

struct PointCloudFrame {
  std::string agent_id;
  Micros timestamp_us = 0;
  geom::Pose2 sensor_pose;                // world frame
  std::vector<Eigen::Vector3d> points;    // sensor frame
  std::vector<BoxAnnotation> boxes;       // sensor frame
};

struct ScenarioFrames {
  std::vector<std::vector<PointCloudFrame>> per_agent;  // parallel to agents
  std::vector<std::string> log;
};

/// Deterministic synthetic frame streams for every agent.
ScenarioFrames generateScenario(const ScenarioConfig& cfg);

struct DelayedMessage {
  int agent_index = 0;
  int frame_index = 0;
  Micros sent_at = 0;
  Micros delay_us = 0;
  Micros arrives_at = 0;
};

/// Per-message delays drawn from each agent's latency spec; the result is
/// ordered by arrival time. An override replaces the configured latency of
/// every non-ego agent (used by the latency sweep).
std::vector<DelayedMessage> scheduleDelivery(
    const ScenarioConfig& cfg, const ScenarioFrames& frames,
    const std::optional<LatencySpec>& non_ego_override = std::nullopt);

/// Analytic object states at exactly t, in the ego sensor frame at t.
std::vector<BoxAnnotation> groundTruthAt(const ScenarioConfig& cfg, Micros t_us);

/// Same, expressed in an arbitrary reference pose (e.g. the ego pose at a
/// different time).
std::vector<BoxAnnotation> groundTruthBoxes(const ScenarioConfig& cfg,
                                            Micros t_us,
                                            const geom::Pose2& ref_pose);

// scenario config and frame-stream serialization
std::string configToJson(const ScenarioConfig& cfg);
ScenarioConfig configFromJson(const std::string& text);
ScenarioConfig loadConfig(const std::string& path);

std::string framesToJsonl(const std::vector<PointCloudFrame>& frames);
std::vector<PointCloudFrame> framesFromJsonl(const std::string& text);

}  // namespace bevsync::sim
