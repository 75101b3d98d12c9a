#include "bevsync/sim.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace bevsync::sim {

using geom::Pose2;
using nlohmann::json;

geom::Pose2 evolvePose(const Pose2& start, const MotionModel& m, double t) {
  switch (m.kind) {
    case MotionModel::Kind::Static:
      return start;
    case MotionModel::Kind::ConstantVelocity:
      return {start.x + m.speed * t * std::cos(start.yaw),
              start.y + m.speed * t * std::sin(start.yaw), start.yaw};
    case MotionModel::Kind::ConstantTurn: {
      if (std::abs(m.yaw_rate) < 1e-12) {
        MotionModel cv = m;
        cv.kind = MotionModel::Kind::ConstantVelocity;
        return evolvePose(start, cv, t);
      }
      const double yaw1 = start.yaw + m.yaw_rate * t;
      const double r = m.speed / m.yaw_rate;
      return {start.x + r * (std::sin(yaw1) - std::sin(start.yaw)),
              start.y + r * (std::cos(start.yaw) - std::cos(yaw1)),
              geom::normalizeAngle(yaw1)};
    }
  }
  return start;
}

void ScenarioConfig::validate() const {
  require(duration_s > 0.0, "scenario: duration must be positive");
  require(world.cell_size > 0.0 && world.height_cells > 0 && world.width_cells > 0,
          "scenario: invalid world grid");
  int ego_count = 0;
  for (const auto& a : agents) {
    if (a.ego) ++ego_count;
    require(a.hz > 0.0, "agent " + a.id + ": sampling frequency must be positive");
    require(a.cache_capacity >= 1, "agent " + a.id + ": cache capacity must be >= 1");
    if (a.latency.kind == LatencySpec::Kind::Fixed)
      require(a.latency.fixed_us >= 0, "agent " + a.id + ": negative delay");
    else
      require(a.latency.lo_us >= 0 && a.latency.hi_us >= a.latency.lo_us,
              "agent " + a.id + ": invalid delay range");
  }
  require(ego_count == 1, "scenario: exactly one agent must be the ego");
  for (const auto& o : objects)
    require(o.box.length > 0.0 && o.box.width > 0.0,
            "object " + std::to_string(o.id) + ": degenerate box");
}

int ScenarioConfig::egoIndex() const {
  for (std::size_t i = 0; i < agents.size(); ++i)
    if (agents[i].ego) return static_cast<int>(i);
  throw std::invalid_argument("scenario: no ego agent");
}

geom::OrientedBox ScenarioConfig::objectBoxAt(const ObjectSpec& obj,
                                              Micros t_us) const {
  const Pose2 p = evolvePose({obj.box.cx, obj.box.cy, obj.box.yaw}, obj.motion,
                             microsToSeconds(t_us));
  return {p.x, p.y, p.yaw, obj.box.length, obj.box.width};
}

bool ScenarioConfig::inWorldBounds(double x, double y) const {
  return x >= world.origin_x &&
         x < world.origin_x + world.width_cells * world.cell_size &&
         y >= world.origin_y &&
         y < world.origin_y + world.height_cells * world.cell_size;
}

std::optional<Micros> ScenarioConfig::despawnTimeUs(const ObjectSpec& obj) const {
  const Micros end = secondsToMicros(duration_s);
  for (Micros t = 0; t <= end; t += 1000) {
    const auto b = objectBoxAt(obj, t);
    if (!inWorldBounds(b.cx, b.cy)) return t;
  }
  return std::nullopt;
}

namespace {

void samplePerimeter(const geom::OrientedBox& b, double step,
                     std::vector<Eigen::Vector2d>& out) {
  const auto corners = b.corners();
  for (int i = 0; i < 4; ++i) {
    const Eigen::Vector2d& a = corners[i];
    const Eigen::Vector2d& c = corners[(i + 1) % 4];
    const double len = (c - a).norm();
    const int n = std::max(1, static_cast<int>(std::floor(len / step)));
    for (int k = 0; k < n; ++k) out.push_back(a + (c - a) * (double(k) / n));
  }
}

void sampleFootprint(const geom::OrientedBox& b, double step,
                     std::vector<Eigen::Vector2d>& out) {
  const double c = std::cos(b.yaw), s = std::sin(b.yaw);
  for (double u = -0.5 * b.length + 0.5 * step; u < 0.5 * b.length; u += step)
    for (double v = -0.5 * b.width + 0.5 * step; v < 0.5 * b.width; v += step)
      out.emplace_back(b.cx + c * u - s * v, b.cy + s * u + c * v);
}

bool occluded(const ScenarioConfig& cfg, const Pose2& sensor,
              const geom::OrientedBox& target, Micros t_us, int target_id) {
  if (!cfg.points.angular_occlusion) return false;
  const double bearing = std::atan2(target.cy - sensor.y, target.cx - sensor.x);
  const double dist = std::hypot(target.cx - sensor.x, target.cy - sensor.y);
  for (const auto& other : cfg.objects) {
    if (other.id == target_id) continue;
    const auto b = cfg.objectBoxAt(other, t_us);
    const double d = std::hypot(b.cx - sensor.x, b.cy - sensor.y);
    if (d >= dist) continue;
    const double db = geom::normalizeAngle(
        std::atan2(b.cy - sensor.y, b.cx - sensor.x) - bearing);
    const double halfwidth = std::atan2(0.5 * std::max(b.length, b.width), d);
    if (std::abs(db) < halfwidth) return true;
  }
  return false;
}

}  // namespace

ScenarioFrames generateScenario(const ScenarioConfig& cfg) {
  cfg.validate();
  ScenarioFrames result;
  result.per_agent.resize(cfg.agents.size());

  std::vector<std::optional<Micros>> despawn(cfg.objects.size());
  for (std::size_t i = 0; i < cfg.objects.size(); ++i) {
    despawn[i] = cfg.despawnTimeUs(cfg.objects[i]);
    if (despawn[i])
      result.log.push_back("object " + std::to_string(cfg.objects[i].id) +
                           " despawned at " + std::to_string(*despawn[i]) + " us");
  }

  const Micros end = secondsToMicros(cfg.duration_s);
  for (std::size_t ai = 0; ai < cfg.agents.size(); ++ai) {
    const AgentSpec& agent = cfg.agents[ai];
    Rng rng(cfg.seed * 0x9e3779b9ull + ai + 1);
    const Micros period = agent.periodUs();
    for (Micros t = 0; t <= end; t += period) {
      PointCloudFrame frame;
      frame.agent_id = agent.id;
      frame.timestamp_us = t;
      frame.sensor_pose = agent.poseAt(t);
      const Pose2 world_to_sensor = geom::inverse(frame.sensor_pose);

      for (std::size_t oi = 0; oi < cfg.objects.size(); ++oi) {
        if (despawn[oi] && t >= *despawn[oi]) continue;
        const auto box_w = cfg.objectBoxAt(cfg.objects[oi], t);
        const double dist =
            std::hypot(box_w.cx - frame.sensor_pose.x, box_w.cy - frame.sensor_pose.y);
        if (dist > agent.max_range) continue;
        if (occluded(cfg, frame.sensor_pose, box_w, t, cfg.objects[oi].id)) continue;

        std::vector<Eigen::Vector2d> samples;
        samplePerimeter(box_w, cfg.points.perimeter_step, samples);
        sampleFootprint(box_w, cfg.points.footprint_step, samples);
        for (const auto& s : samples) {
          const Eigen::Vector2d noisy(
              s.x() + rng.gaussian(0.0, cfg.points.noise_sigma),
              s.y() + rng.gaussian(0.0, cfg.points.noise_sigma));
          const Eigen::Vector2d local = geom::transformPoint(world_to_sensor, noisy);
          const double z = rng.uniform(cfg.points.object_z_lo, cfg.points.object_z_hi);
          frame.points.emplace_back(local.x(), local.y(), z);
        }

        BoxAnnotation ann;
        ann.object_id = cfg.objects[oi].id;
        ann.box = geom::transformBox(world_to_sensor, box_w);
        ann.timestamp_us = t;
        frame.boxes.push_back(ann);
      }

      for (int k = 0; k < cfg.points.clutter_points; ++k) {
        const double x = rng.uniform(-agent.max_range, agent.max_range);
        const double y = rng.uniform(-agent.max_range, agent.max_range);
        const double z = rng.uniform(cfg.points.clutter_z_lo, cfg.points.clutter_z_hi);
        frame.points.emplace_back(x, y, z);
      }

      result.per_agent[ai].push_back(std::move(frame));
    }
  }
  return result;
}

std::vector<DelayedMessage> scheduleDelivery(
    const ScenarioConfig& cfg, const ScenarioFrames& frames,
    const std::optional<LatencySpec>& non_ego_override) {
  std::vector<DelayedMessage> out;
  Rng rng(cfg.seed * 0x61c88647ull + 17);
  for (std::size_t ai = 0; ai < cfg.agents.size(); ++ai) {
    LatencySpec spec = cfg.agents[ai].latency;
    if (non_ego_override && !cfg.agents[ai].ego) spec = *non_ego_override;
    for (std::size_t fi = 0; fi < frames.per_agent[ai].size(); ++fi) {
      DelayedMessage m;
      m.agent_index = static_cast<int>(ai);
      m.frame_index = static_cast<int>(fi);
      m.sent_at = frames.per_agent[ai][fi].timestamp_us;
      if (spec.kind == LatencySpec::Kind::Fixed) {
        m.delay_us = spec.fixed_us;
      } else {
        m.delay_us = static_cast<Micros>(std::llround(
            rng.uniform(static_cast<double>(spec.lo_us), static_cast<double>(spec.hi_us))));
      }
      require(m.delay_us >= 0, "scheduleDelivery: negative delay");
      m.arrives_at = m.sent_at + m.delay_us;
      out.push_back(m);
    }
  }
  std::sort(out.begin(), out.end(), [](const DelayedMessage& a, const DelayedMessage& b) {
    if (a.arrives_at != b.arrives_at) return a.arrives_at < b.arrives_at;
    if (a.agent_index != b.agent_index) return a.agent_index < b.agent_index;
    return a.sent_at < b.sent_at;
  });
  return out;
}

std::vector<BoxAnnotation> groundTruthBoxes(const ScenarioConfig& cfg, Micros t_us,
                                            const Pose2& ref_pose) {
  std::vector<BoxAnnotation> out;
  const Pose2 world_to_ref = geom::inverse(ref_pose);
  for (const auto& obj : cfg.objects) {
    const auto despawn = cfg.despawnTimeUs(obj);
    if (despawn && t_us >= *despawn) continue;
    BoxAnnotation ann;
    ann.object_id = obj.id;
    ann.box = geom::transformBox(world_to_ref, cfg.objectBoxAt(obj, t_us));
    ann.timestamp_us = t_us;
    out.push_back(ann);
  }
  return out;
}

std::vector<BoxAnnotation> groundTruthAt(const ScenarioConfig& cfg, Micros t_us) {
  const auto& ego = cfg.agents[cfg.egoIndex()];
  return groundTruthBoxes(cfg, t_us, ego.poseAt(t_us));
}

namespace {

json motionToJson(const MotionModel& m) {
  json j;
  switch (m.kind) {
    case MotionModel::Kind::Static:
      j["model"] = "static";
      break;
    case MotionModel::Kind::ConstantVelocity:
      j["model"] = "cv";
      j["speed"] = m.speed;
      break;
    case MotionModel::Kind::ConstantTurn:
      j["model"] = "ct";
      j["speed"] = m.speed;
      j["yaw_rate"] = m.yaw_rate;
      break;
  }
  return j;
}

MotionModel motionFromJson(const json& j) {
  MotionModel m;
  const std::string kind = j.at("model");
  if (kind == "static") {
    m.kind = MotionModel::Kind::Static;
  } else if (kind == "cv") {
    m.kind = MotionModel::Kind::ConstantVelocity;
    m.speed = j.at("speed");
  } else if (kind == "ct") {
    m.kind = MotionModel::Kind::ConstantTurn;
    m.speed = j.at("speed");
    m.yaw_rate = j.at("yaw_rate");
  } else {
    throw std::invalid_argument("unknown motion model: " + kind);
  }
  return m;
}

json latencyToJson(const LatencySpec& l) {
  json j;
  if (l.kind == LatencySpec::Kind::Fixed) {
    j["model"] = "fixed";
    j["ms"] = static_cast<double>(l.fixed_us) / 1000.0;
  } else {
    j["model"] = "uniform";
    j["lo_ms"] = static_cast<double>(l.lo_us) / 1000.0;
    j["hi_ms"] = static_cast<double>(l.hi_us) / 1000.0;
  }
  return j;
}

LatencySpec latencyFromJson(const json& j) {
  LatencySpec l;
  const std::string kind = j.at("model");
  if (kind == "fixed") {
    l.kind = LatencySpec::Kind::Fixed;
    l.fixed_us = secondsToMicros(j.at("ms").get<double>() / 1000.0);
    require(l.fixed_us >= 0, "latency: negative delay");
  } else if (kind == "uniform") {
    l.kind = LatencySpec::Kind::Uniform;
    l.lo_us = secondsToMicros(j.at("lo_ms").get<double>() / 1000.0);
    l.hi_us = secondsToMicros(j.at("hi_ms").get<double>() / 1000.0);
    require(l.lo_us >= 0 && l.hi_us >= l.lo_us, "latency: invalid range");
  } else {
    throw std::invalid_argument("unknown latency model: " + kind);
  }
  return l;
}

}  // namespace

std::string configToJson(const ScenarioConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["duration_s"] = cfg.duration_s;
  j["world"] = {{"origin_x", cfg.world.origin_x},
                {"origin_y", cfg.world.origin_y},
                {"cell_size", cfg.world.cell_size},
                {"height_cells", cfg.world.height_cells},
                {"width_cells", cfg.world.width_cells}};
  j["points"] = {{"perimeter_step", cfg.points.perimeter_step},
                 {"footprint_step", cfg.points.footprint_step},
                 {"noise_sigma", cfg.points.noise_sigma},
                 {"clutter_points", cfg.points.clutter_points},
                 {"clutter_z", {cfg.points.clutter_z_lo, cfg.points.clutter_z_hi}},
                 {"object_z", {cfg.points.object_z_lo, cfg.points.object_z_hi}},
                 {"angular_occlusion", cfg.points.angular_occlusion}};
  j["agents"] = json::array();
  for (const auto& a : cfg.agents) {
    j["agents"].push_back({{"id", a.id},
                           {"ego", a.ego},
                           {"pose", {a.pose.x, a.pose.y, a.pose.yaw}},
                           {"motion", motionToJson(a.motion)},
                           {"hz", a.hz},
                           {"cache", a.cache_capacity},
                           {"latency", latencyToJson(a.latency)},
                           {"max_range", a.max_range}});
  }
  j["objects"] = json::array();
  for (const auto& o : cfg.objects) {
    j["objects"].push_back(
        {{"id", o.id},
         {"box", {o.box.cx, o.box.cy, o.box.yaw, o.box.length, o.box.width}},
         {"motion", motionToJson(o.motion)}});
  }
  return j.dump(2) + "\n";
}

ScenarioConfig configFromJson(const std::string& text) {
  const json j = json::parse(text);
  ScenarioConfig cfg;
  cfg.seed = j.at("seed");
  cfg.duration_s = j.at("duration_s");
  const json& w = j.at("world");
  cfg.world = {w.at("origin_x"), w.at("origin_y"), w.at("cell_size"),
               w.at("height_cells"), w.at("width_cells")};
  if (j.contains("points")) {
    const json& p = j.at("points");
    cfg.points.perimeter_step = p.value("perimeter_step", cfg.points.perimeter_step);
    cfg.points.footprint_step = p.value("footprint_step", cfg.points.footprint_step);
    cfg.points.noise_sigma = p.value("noise_sigma", cfg.points.noise_sigma);
    cfg.points.clutter_points = p.value("clutter_points", cfg.points.clutter_points);
    if (p.contains("clutter_z")) {
      cfg.points.clutter_z_lo = p.at("clutter_z")[0];
      cfg.points.clutter_z_hi = p.at("clutter_z")[1];
    }
    if (p.contains("object_z")) {
      cfg.points.object_z_lo = p.at("object_z")[0];
      cfg.points.object_z_hi = p.at("object_z")[1];
    }
    cfg.points.angular_occlusion =
        p.value("angular_occlusion", cfg.points.angular_occlusion);
  }
  for (const auto& a : j.at("agents")) {
    AgentSpec spec;
    spec.id = a.at("id");
    spec.ego = a.value("ego", false);
    spec.pose = {a.at("pose")[0], a.at("pose")[1], a.at("pose")[2]};
    if (a.contains("motion")) spec.motion = motionFromJson(a.at("motion"));
    spec.hz = a.value("hz", 10.0);
    spec.cache_capacity = a.value("cache", 4);
    if (a.contains("latency")) spec.latency = latencyFromJson(a.at("latency"));
    spec.max_range = a.value("max_range", 50.0);
    cfg.agents.push_back(std::move(spec));
  }
  for (const auto& o : j.at("objects")) {
    ObjectSpec spec;
    spec.id = o.at("id");
    const auto& b = o.at("box");
    spec.box = {b[0], b[1], b[2], b[3], b[4]};
    if (o.contains("motion")) spec.motion = motionFromJson(o.at("motion"));
    cfg.objects.push_back(std::move(spec));
  }
  cfg.validate();
  return cfg;
}

ScenarioConfig loadConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return configFromJson(ss.str());
}

std::string framesToJsonl(const std::vector<PointCloudFrame>& frames) {
  std::ostringstream out;
  for (const auto& f : frames) {
    json j;
    j["agent_id"] = f.agent_id;
    j["timestamp_us"] = f.timestamp_us;
    j["pose"] = {f.sensor_pose.x, f.sensor_pose.y, f.sensor_pose.yaw};
    json pts = json::array();
    for (const auto& p : f.points) pts.push_back({p.x(), p.y(), p.z()});
    j["points"] = std::move(pts);
    json boxes = json::array();
    for (const auto& b : f.boxes)
      boxes.push_back({{"id", b.object_id},
                       {"cx", b.box.cx},
                       {"cy", b.box.cy},
                       {"yaw", b.box.yaw},
                       {"l", b.box.length},
                       {"w", b.box.width}});
    j["boxes"] = std::move(boxes);
    out << j.dump() << "\n";
  }
  return out.str();
}

std::vector<PointCloudFrame> framesFromJsonl(const std::string& text) {
  std::vector<PointCloudFrame> frames;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    PointCloudFrame f;
    f.agent_id = j.at("agent_id");
    f.timestamp_us = j.at("timestamp_us");
    f.sensor_pose = {j.at("pose")[0], j.at("pose")[1], j.at("pose")[2]};
    for (const auto& p : j.at("points"))
      f.points.emplace_back(p[0], p[1], p[2]);
    for (const auto& b : j.at("boxes")) {
      BoxAnnotation ann;
      ann.object_id = b.at("id");
      ann.box = {b.at("cx"), b.at("cy"), b.at("yaw"), b.at("l"), b.at("w")};
      ann.timestamp_us = f.timestamp_us;
      f.boxes.push_back(ann);
    }
    frames.push_back(std::move(f));
  }
  return frames;
}

}  // namespace bevsync::sim
