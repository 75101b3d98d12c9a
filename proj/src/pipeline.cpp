#include "bevsync/pipeline.hpp"

#include "bevsync/io.hpp"
#include "bevsync/render.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>

namespace bevsync::pipeline {

std::string modeName(Mode m) {
  switch (m) {
    case Mode::Oracle:
      return "oracle";
    case Mode::Predicted:
      return "predicted";
    case Mode::Unaligned:
      return "unaligned";
    case Mode::Single:
      return "single";
  }
  return "unknown";
}

Mode modeFromName(const std::string& name) {
  if (name == "oracle") return Mode::Oracle;
  if (name == "predicted") return Mode::Predicted;
  if (name == "unaligned") return Mode::Unaligned;
  if (name == "single") return Mode::Single;
  throw std::invalid_argument("unknown mode: " + name);
}

namespace {

/// Sensor-centered grid with the world's cell size and extent.
geom::GridSpec sensorGrid(const geom::GridSpec& world) {
  geom::GridSpec g = world;
  g.origin_x = -0.5 * world.width_cells * world.cell_size;
  g.origin_y = -0.5 * world.height_cells * world.cell_size;
  return g;
}

/// Height-driven analytic encoder: channel 0 reads the point's z, channel 1 a
/// small occupancy constant. Objects (tall) therefore dominate ground clutter.
pillars::EncoderParams analyticEncoder(int channels) {
  pillars::EncoderParams enc = pillars::EncoderParams::zeros(channels);
  enc.mlp.weight(0, 2) = 1.0;  // z
  enc.mlp.bias(1) = 0.05;
  enc.use_relu = true;
  return enc;
}

}  // namespace

PipelineParams PipelineParams::standard(const sim::ScenarioConfig& cfg,
                                        std::uint64_t param_seed) {
  PipelineParams p;
  p.pillar_cfg.grid = sensorGrid(cfg.world);
  p.pillar_cfg.z_lo = -0.5;
  p.pillar_cfg.z_hi = 2.0;
  p.encoder = analyticEncoder(p.feature_channels);
  p.backbone = pillars::BackboneParams::boxAverage(p.feature_channels);
  p.te_fuse = temporal::FuseParams::identityOnFeatures(p.feature_channels);

  p.max_history = 1;
  for (const auto& a : cfg.agents) p.max_history = std::max(p.max_history, a.cache_capacity);

  Rng rng(param_seed);
  p.unet = field::UNetParams::seeded(p.max_history * p.feature_channels, 16, rng);
  p.offset_net = offsets::OffsetNetParams::seeded(p.feature_channels, 16, p.n_offsets, rng);
  p.attention_predicted = attn::AttentionParams::seeded(p.feature_channels, 4, 2, rng);
  p.det_head = fuse::DetectionHeadParams::seeded(p.feature_channels, rng);

  // layer 1 averages the selected rows, layer 2 passes through
  p.attention_oracle = attn::AttentionParams::uniformAverage(p.feature_channels, 4, 1);
  auto identity = attn::AttentionParams::identity(p.feature_channels, 4, 1);
  p.attention_oracle.layers.push_back(identity.layers.front());

  if (!cfg.objects.empty()) {
    double l = 0.0, w = 0.0;
    for (const auto& o : cfg.objects) {
      l += o.box.length;
      w += o.box.width;
    }
    p.prior_length = l / static_cast<double>(cfg.objects.size());
    p.prior_width = w / static_cast<double>(cfg.objects.size());
  }
  return p;
}

void PipelineParams::loadExtractor(const io::TensorStore& store) {
  encoder = pillars::EncoderParams::fromStore(store);
  backbone = pillars::BackboneParams::fromStore(store);
  te_fuse = temporal::FuseParams::fromStore(store);
  feature_channels = static_cast<int>(encoder.mlp.weight.rows());
}

void PipelineParams::saveExtractor(io::TensorStore& store) const {
  encoder.toStore(store);
  backbone.toStore(store);
  te_fuse.toStore(store);
}

PipelineContext PipelineContext::build(const sim::ScenarioConfig& cfg,
                                       const PipelineParams& params) {
  return buildFromFrames(cfg, sim::generateScenario(cfg), params);
}

PipelineContext PipelineContext::buildFromFrames(const sim::ScenarioConfig& cfg,
                                                 sim::ScenarioFrames frames,
                                                 const PipelineParams& params) {
  require(frames.per_agent.size() == cfg.agents.size(),
          "pipeline: one frame stream per agent required");
  PipelineContext ctx;
  ctx.cfg = cfg;
  ctx.frames = std::move(frames);
  ctx.ego_index = cfg.egoIndex();
  ctx.encoded.resize(cfg.agents.size());
  for (std::size_t ai = 0; ai < cfg.agents.size(); ++ai) {
    ctx.encoded[ai].reserve(ctx.frames.per_agent[ai].size());
    for (const auto& frame : ctx.frames.per_agent[ai])
      ctx.encoded[ai].push_back(
          pillars::encodeFrame(frame, params.pillar_cfg, params.encoder, params.backbone));
  }
  return ctx;
}

namespace {

struct AgentState {
  temporal::AgentCache cache;
  std::map<std::int64_t, geom::Pose2> poses;
  int delay_frames = 0;  // of the newest cached entry, in ego frames
};

/// Caches as the ego sees them at time t under the given delivery schedule.
std::vector<AgentState> deliverUpTo(const PipelineContext& ctx,
                                    const std::vector<sim::DelayedMessage>& messages,
                                    std::int64_t t_us) {
  std::vector<AgentState> states;
  states.reserve(ctx.cfg.agents.size());
  for (const auto& a : ctx.cfg.agents)
    states.push_back({temporal::AgentCache(a.id, a.cache_capacity), {}, 0});

  for (const auto& m : messages) {
    if (m.arrives_at > t_us) continue;
    auto& state = states[static_cast<std::size_t>(m.agent_index)];
    const auto& map = ctx.encoded[static_cast<std::size_t>(m.agent_index)]
                                 [static_cast<std::size_t>(m.frame_index)];
    if (!state.cache.empty() && map.timestamp_us <= state.cache.newestTimestamp())
      continue;  // late out-of-order message
    state.cache.insert(map);
    state.poses[map.timestamp_us] =
        ctx.frames.per_agent[static_cast<std::size_t>(m.agent_index)]
                            [static_cast<std::size_t>(m.frame_index)]
            .sensor_pose;
  }
  return states;
}

struct AgentGroundTruth {
  field::TrajectoryField field;
  std::vector<field::Trajectory> trajectories;
};

AgentGroundTruth gtFieldForAgent(const PipelineContext& ctx,
                                 const PipelineParams& params, int agent_index,
                                 const AgentState& state, std::int64_t t_us,
                                 const geom::Pose2& ego_pose_t) {
  const auto& agent = ctx.cfg.agents[static_cast<std::size_t>(agent_index)];
  const std::int64_t period = agent.periodUs();
  const std::int64_t tau_us = t_us - state.cache.newestTimestamp();
  const int length = field::trajectoryLength(tau_us, period, state.cache.size());

  std::vector<field::FrameAnnotations> annotations;
  for (int k = length - 1; k >= 0; --k) {
    const std::int64_t ts = t_us - static_cast<std::int64_t>(k) * period;
    if (ts < 0) continue;
    field::FrameAnnotations fa;
    fa.timestamp_us = ts;
    const geom::Pose2 agent_pose = agent.poseAt(ts);
    for (const auto& ann : sim::groundTruthBoxes(ctx.cfg, ts, ego_pose_t)) {
      // only objects this agent observes contribute to its field
      const auto world_box = ctx.cfg.objectBoxAt(
          *std::find_if(ctx.cfg.objects.begin(), ctx.cfg.objects.end(),
                        [&](const sim::ObjectSpec& o) { return o.id == ann.object_id; }),
          ts);
      const double dist =
          std::hypot(world_box.cx - agent_pose.x, world_box.cy - agent_pose.y);
      if (dist > agent.max_range) continue;
      fa.boxes.push_back(ann);
    }
    annotations.push_back(std::move(fa));
  }

  auto trajs =
      field::buildTrajectories(annotations, tau_us, period, state.cache.size(), t_us);
  const geom::GridSpec feature_grid = pillars::featureGrid(params.pillar_cfg.grid);
  return {field::rasterizeField(trajs, feature_grid).field, std::move(trajs)};
}

/// Occupancy prior at ego time: Gaussian bumps at each trajectory's newest
/// sample. The oracle confines reconstructed features to these bumps, which
/// is what a trained detection head is supervised toward.
PlaneD currentOccupancy(const std::vector<field::Trajectory>& trajs,
                        const geom::GridSpec& grid) {
  PlaneD gate = PlaneD::Zero(grid.height_cells, grid.width_cells);
  for (const auto& traj : trajs) {
    if (traj.samples.empty()) continue;
    const auto& head = traj.samples.back();
    const Eigen::Vector2d rc = grid.worldToCell(head.cx, head.cy);
    for (int r = 0; r < grid.height_cells; ++r)
      for (int c = 0; c < grid.width_cells; ++c) {
        const double d2 =
            (r - rc.x()) * (r - rc.x()) + (c - rc.y()) * (c - rc.y());
        gate(r, c) = std::max(gate(r, c), std::exp(-d2 / 2.0));
      }
  }
  return gate;
}

/// Decode guide: trajectories of every object over the widest delay window,
/// rasterized without visibility filtering. Supplies headings to the analytic
/// detection head in every mode.
field::TrajectoryField decodeGuideField(const PipelineContext& ctx,
                                        const PipelineParams& params,
                                        const std::vector<AgentState>& states,
                                        std::int64_t t_us,
                                        const geom::Pose2& ego_pose_t) {
  const auto& ego = ctx.cfg.agents[static_cast<std::size_t>(ctx.ego_index)];
  const std::int64_t period = ego.periodUs();
  std::int64_t tau_us = 0;
  int m = 1;
  for (std::size_t ai = 0; ai < states.size(); ++ai) {
    if (states[ai].cache.empty()) continue;
    tau_us = std::max(tau_us, t_us - states[ai].cache.newestTimestamp());
    m = std::max(m, states[ai].cache.size());
  }
  const int length = field::trajectoryLength(tau_us, period, m);
  std::vector<field::FrameAnnotations> annotations;
  for (int k = length - 1; k >= 0; --k) {
    const std::int64_t ts = t_us - static_cast<std::int64_t>(k) * period;
    if (ts < 0) continue;
    field::FrameAnnotations fa;
    fa.timestamp_us = ts;
    fa.boxes = sim::groundTruthBoxes(ctx.cfg, ts, ego_pose_t);
    annotations.push_back(std::move(fa));
  }
  const auto trajs = field::buildTrajectories(annotations, tau_us, period, m, t_us);
  return field::rasterizeField(trajs, pillars::featureGrid(params.pillar_cfg.grid)).field;
}

/// Attention logit bias that steers each query to the trajectory stratum
/// captured delay_frames before it; the analytic stand-in for the learned
/// offsets' temporal targeting.
attn::LogitBias oracleBias(const field::TrajectoryField& gt_field, int delay_frames,
                           double scale) {
  return [&gt_field, delay_frames, scale](const offsets::OffsetSet& offs) {
    const int n = static_cast<int>(offs.positions.size());
    VectorD bias = VectorD::Zero(n);
    const int query_age = gt_field.time_index(offs.query_r, offs.query_c);
    if (query_age == field::kEmpty) return bias;
    const int target = query_age + delay_frames;
    for (int i = 0; i < n; ++i) {
      const int r = static_cast<int>(std::lround(offs.positions[i].x()));
      const int c = static_cast<int>(std::lround(offs.positions[i].y()));
      int age = query_age;
      if (gt_field.grid.inBounds(r, c) && gt_field.time_index(r, c) != field::kEmpty)
        age = gt_field.time_index(r, c);
      bias[i] = -scale * std::abs(age - target);
    }
    return bias;
  };
}

std::vector<offsets::OffsetSet> gtOffsetGrid(const field::TrajectoryField& gt_field,
                                             int n) {
  std::vector<offsets::OffsetSet> out;
  out.reserve(static_cast<std::size_t>(gt_field.grid.height_cells) *
              gt_field.grid.width_cells);
  for (int r = 0; r < gt_field.grid.height_cells; ++r)
    for (int c = 0; c < gt_field.grid.width_cells; ++c)
      out.push_back(offsets::gtOffsets(r, c, gt_field, n));
  return out;
}

Tensor3d concatHistory(const std::vector<FeatureMap>& history, int max_history,
                       int channels, const geom::GridSpec& grid) {
  Tensor3d out(max_history * channels, grid.height_cells, grid.width_cells);
  // oldest slots stay zero when the cache is short
  const int pad = max_history - static_cast<int>(history.size());
  for (std::size_t i = 0; i < history.size(); ++i)
    for (int ch = 0; ch < channels; ++ch)
      out[(pad + static_cast<int>(i)) * channels + ch] = history[i].data[ch];
  return out;
}

/// Analytic detection head: normalized and smoothed feature-norm scores, 5x5
/// centroid center refinement, prior extents, heading from the orientation
/// field.
Tensor3d analyticHead(const FeatureMap& fused, const field::TrajectoryField* field,
                      const PipelineParams& params) {
  const auto& grid = fused.grid;
  const PlaneD raw = fused.cellNorms();
  // 3x3 box smoothing merges ragged blob lobes into one peak
  PlaneD norms = PlaneD::Zero(raw.rows(), raw.cols());
  for (int r = 0; r < raw.rows(); ++r)
    for (int c = 0; c < raw.cols(); ++c) {
      double sum = 0.0;
      for (int i = -1; i <= 1; ++i)
        for (int j = -1; j <= 1; ++j) {
          const int rr = r + i, cc = c + j;
          if (grid.inBounds(rr, cc)) sum += raw(rr, cc);
        }
      norms(r, c) = sum / 9.0;
    }
  const double max_norm = norms.maxCoeff();
  Tensor3d head(fuse::kHeadChannels, grid.height_cells, grid.width_cells);
  head[fuse::kLogLength].setConstant(std::log(params.prior_length));
  head[fuse::kLogWidth].setConstant(std::log(params.prior_width));
  head[fuse::kCos].setConstant(1.0);
  if (max_norm <= 0.0) return head;

  for (int r = 0; r < grid.height_cells; ++r) {
    for (int c = 0; c < grid.width_cells; ++c) {
      head[fuse::kScore](r, c) = norms(r, c) / max_norm;
      // 5x5 mass centroid: wide enough to cover a whole object blob
      double wsum = 0.0, dr = 0.0, dc = 0.0;
      for (int i = -2; i <= 2; ++i)
        for (int j = -2; j <= 2; ++j) {
          const int rr = r + i, cc = c + j;
          if (!grid.inBounds(rr, cc)) continue;
          const double w = norms(rr, cc);
          wsum += w;
          dr += w * i;
          dc += w * j;
        }
      if (wsum > 0.0) {
        head[fuse::kDx](r, c) = dc / wsum;
        head[fuse::kDy](r, c) = dr / wsum;
      }
      if (field && field->time_index(r, c) != field::kEmpty) {
        head[fuse::kCos](r, c) = field->orient_cos(r, c);
        head[fuse::kSin](r, c) = field->orient_sin(r, c);
      }
    }
  }
  return head;
}

void dumpStage(const StageOutputs& out, const std::string& dir,
               const std::vector<std::vector<offsets::OffsetSet>>& offset_dumps) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const std::string stamp = std::to_string(out.t_us);
  for (std::size_t i = 0; i < out.gt_fields.size(); ++i) {
    const std::string base = dir + "/field_agent" + std::to_string(i) + "_" + stamp;
    io::writeFile(base + ".bin", render::fieldBinary(out.gt_fields[i]));
    io::writeFile(base + ".pgm", render::positionPgm(out.gt_fields[i]));
    io::writeFile(base + ".ppm", render::orientationPpm(out.gt_fields[i]));
  }
  std::ostringstream dets;
  for (const auto& d : out.detections) {
    dets << "{\"cx\":" << io::formatDouble(d.box.cx)
         << ",\"cy\":" << io::formatDouble(d.box.cy)
         << ",\"yaw\":" << io::formatDouble(d.box.yaw)
         << ",\"l\":" << io::formatDouble(d.box.length)
         << ",\"w\":" << io::formatDouble(d.box.width)
         << ",\"score\":" << io::formatDouble(d.score) << "}\n";
  }
  io::writeFile(dir + "/detections_" + stamp + ".jsonl", dets.str());

  std::ostringstream offs;
  for (std::size_t ai = 0; ai < offset_dumps.size(); ++ai) {
    for (const auto& set : offset_dumps[ai]) {
      if (set.positions.empty()) continue;
      offs << "{\"agent\":" << ai << ",\"query\":[" << set.query_r << ","
           << set.query_c << "],\"flavor\":\""
           << (set.flavor == offsets::OffsetSet::Flavor::GroundTruth ? "ground-truth"
                                                                     : "predicted")
           << "\",\"positions\":[";
      for (std::size_t k = 0; k < set.positions.size(); ++k) {
        if (k) offs << ",";
        offs << "[" << io::formatDouble(set.positions[k].x()) << ","
             << io::formatDouble(set.positions[k].y()) << "]";
      }
      offs << "]}\n";
    }
  }
  if (!offset_dumps.empty())
    io::writeFile(dir + "/offsets_" + stamp + ".jsonl", offs.str());
}

}  // namespace

StageOutputs runAt(const PipelineContext& ctx, const PipelineParams& params,
                   std::int64_t t_us, const RunOptions& opts) {
  const auto messages = sim::scheduleDelivery(ctx.cfg, ctx.frames, opts.latency_override);
  auto states = deliverUpTo(ctx, messages, t_us);

  const auto& ego = ctx.cfg.agents[static_cast<std::size_t>(ctx.ego_index)];
  const geom::Pose2 ego_pose_t = ego.poseAt(t_us);
  const std::int64_t ego_period = ego.periodUs();

  StageOutputs out;
  out.t_us = t_us;
  out.gt_boxes = sim::groundTruthAt(ctx.cfg, t_us);

  std::vector<FeatureMap> agent_maps;
  std::vector<std::vector<offsets::OffsetSet>> offset_dumps;

  for (std::size_t ai = 0; ai < ctx.cfg.agents.size(); ++ai) {
    if (opts.mode == Mode::Single && static_cast<int>(ai) != ctx.ego_index) continue;
    auto& state = states[ai];
    if (state.cache.empty()) continue;
    // trajectory ages count in the agent's own frame period
    state.delay_frames = temporal::delayFrames(
        t_us, state.cache.newestTimestamp(), ctx.cfg.agents[ai].periodUs());

    const auto history = temporal::assembleHistory(
        state.cache, state.poses, ego_pose_t, t_us, ego_period, params.te_fuse);
    const FeatureMap& newest = history.back();

    switch (opts.mode) {
      case Mode::Single:
      case Mode::Unaligned: {
        agent_maps.push_back(newest);
        break;
      }
      case Mode::Oracle: {
        auto gt = gtFieldForAgent(ctx, params, static_cast<int>(ai), state, t_us,
                                  ego_pose_t);
        const auto offs = gtOffsetGrid(gt.field, params.n_offsets);
        const auto bias =
            oracleBias(gt.field, state.delay_frames, params.oracle_bias_scale);
        FeatureMap aligned = attn::alignAgent(newest, offs, params.attention_oracle, bias);
        // reconstructed features live where the objects are at ego time
        const PlaneD gate = currentOccupancy(gt.trajectories, aligned.grid);
        for (int r = 0; r < aligned.grid.height_cells; ++r)
          for (int c = 0; c < aligned.grid.width_cells; ++c)
            if (gt.field.object_id(r, c) != field::kEmpty)
              for (int ch = 0; ch < aligned.channels(); ++ch)
                aligned.data[ch](r, c) *= gate(r, c);
        agent_maps.push_back(std::move(aligned));
        if (!opts.dump_dir.empty()) offset_dumps.push_back(offs);
        out.gt_fields.push_back(std::move(gt.field));
        break;
      }
      case Mode::Predicted: {
        const Tensor3d stacked = concatHistory(history, params.max_history,
                                               params.feature_channels, newest.grid);
        auto pred_field = field::predictField(stacked, newest.grid, params.unet);
        auto provider = [&](const FeatureMap& layer_input, int) {
          return offsets::predictOffsets(layer_input, pred_field, params.offset_net);
        };
        FeatureMap aligned =
            attn::alignAgent(newest, provider, params.attention_predicted);
        if (!opts.dump_dir.empty())
          offset_dumps.push_back(
              offsets::predictOffsets(newest, pred_field, params.offset_net));
        agent_maps.push_back(std::move(aligned));
        break;
      }
    }
  }

  require(!agent_maps.empty(), "runAt: no agent delivered any features by t");

  // ego first, then the others in agent order
  std::vector<FeatureMap> ordered;
  for (const auto& m : agent_maps)
    if (m.agent_id == ego.id) ordered.push_back(m);
  for (const auto& m : agent_maps)
    if (m.agent_id != ego.id) ordered.push_back(m);

  const auto fusion = fuse::FuseParams::average(params.feature_channels,
                                                static_cast<int>(ordered.size()));
  out.fused = fuse::fuseAgents(ordered, fusion);
  out.agent_maps = std::move(ordered);

  Tensor3d head;
  if (opts.mode == Mode::Predicted) {
    head = fuse::detectionHead(out.fused, params.det_head);
  } else {
    const auto guide = decodeGuideField(ctx, params, states, t_us, ego_pose_t);
    head = analyticHead(out.fused, &guide, params);
  }
  out.detections =
      fuse::decodeDetections(head, out.fused.grid, params.score_threshold, params.nms_iou);

  if (!opts.dump_dir.empty()) dumpStage(out, opts.dump_dir, offset_dumps);
  return out;
}

std::string EvalResult::csvHeader() {
  return "mode,latency_ms,ap50,ap70,n_gt,n_det";
}

std::string EvalResult::csvRow() const {
  std::ostringstream out;
  out << mode << "," << latency_ms << "," << io::formatDouble(ap50) << ","
      << io::formatDouble(ap70) << "," << n_gt << "," << n_det;
  return out.str();
}

RunOutput runPipeline(const PipelineContext& ctx, const PipelineParams& params,
                      const RunOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  const bool verbose = std::getenv("BEVSYNC_VERBOSE") != nullptr;

  RunOutput output;
  const auto& ego_frames = ctx.frames.per_agent[static_cast<std::size_t>(ctx.ego_index)];
  for (std::size_t fi = static_cast<std::size_t>(opts.warmup_frames);
       fi < ego_frames.size(); fi += static_cast<std::size_t>(opts.frame_stride)) {
    const std::int64_t t = ego_frames[fi].timestamp_us;
    StageOutputs stage;
    try {
      stage = runAt(ctx, params, t, opts);
    } catch (const std::exception& e) {
      throw std::runtime_error("at ego timestamp " + std::to_string(t) +
                               " us: " + e.what());
    }
    if (verbose)
      std::cerr << "[" << modeName(opts.mode) << "] t=" << t << " us: "
                << stage.detections.size() << " detections, "
                << stage.gt_boxes.size() << " ground-truth boxes\n";
    eval::FrameDetections fd;
    fd.frame_id = t;
    fd.dets = stage.detections;
    fd.gts = stage.gt_boxes;
    output.frames.push_back(std::move(fd));
  }

  if (!opts.dump_dir.empty()) {
    std::filesystem::create_directories(opts.dump_dir);
    std::ostringstream dets, gts;
    for (const auto& f : output.frames) {
      for (const auto& d : f.dets)
        dets << "{\"t\":" << f.frame_id << ",\"cx\":" << io::formatDouble(d.box.cx)
             << ",\"cy\":" << io::formatDouble(d.box.cy)
             << ",\"yaw\":" << io::formatDouble(d.box.yaw)
             << ",\"l\":" << io::formatDouble(d.box.length)
             << ",\"w\":" << io::formatDouble(d.box.width)
             << ",\"score\":" << io::formatDouble(d.score) << "}\n";
      for (const auto& g : f.gts)
        gts << "{\"t\":" << f.frame_id << ",\"id\":" << g.object_id
            << ",\"cx\":" << io::formatDouble(g.box.cx)
            << ",\"cy\":" << io::formatDouble(g.box.cy)
            << ",\"yaw\":" << io::formatDouble(g.box.yaw)
            << ",\"l\":" << io::formatDouble(g.box.length)
            << ",\"w\":" << io::formatDouble(g.box.width) << "}\n";
    }
    io::writeFile(opts.dump_dir + "/detections.jsonl", dets.str());
    io::writeFile(opts.dump_dir + "/groundtruth.jsonl", gts.str());
  }

  const auto ap50 = eval::averagePrecisionPooled(output.frames, 0.5);
  const auto ap70 = eval::averagePrecisionPooled(output.frames, 0.7);
  output.result.mode = modeName(opts.mode);
  output.result.latency_ms =
      opts.latency_override && opts.latency_override->kind == sim::LatencySpec::Kind::Fixed
          ? static_cast<int>(opts.latency_override->fixed_us / 1000)
          : 0;
  output.result.ap50 = ap50.ap;
  output.result.ap70 = ap70.ap;
  output.result.pr50 = ap50.curve;
  output.result.n_gt = ap50.n_gt;
  output.result.n_det = ap50.n_det;
  output.result.runtime_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
          .count();
  if (!opts.dump_dir.empty()) {
    io::writeFile(opts.dump_dir + "/pr50.csv", eval::prCurveCsv(output.result.pr50));
    io::writeFile(opts.dump_dir + "/pr50.svg",
                  render::prCurveSvg(output.result.pr50,
                                     output.result.mode + " @ " +
                                         std::to_string(output.result.latency_ms) + " ms"));
    io::writeFile(opts.dump_dir + "/result.csv",
                  EvalResult::csvHeader() + "\n" + output.result.csvRow() + "\n");
  }
  return output;
}

std::string SweepResult::csv() const {
  std::ostringstream out;
  out << EvalResult::csvHeader() << "\n";
  for (const auto& r : rows) out << r.csvRow() << "\n";
  return out.str();
}

SweepResult latencySweep(const std::vector<sim::ScenarioConfig>& scenarios,
                         const SweepOptions& opts, std::uint64_t param_seed) {
  SweepResult result;
  if (opts.latencies_ms.empty()) return result;

  // contexts are shared across conditions; encodings do not depend on latency
  std::vector<PipelineParams> params;
  std::vector<PipelineContext> contexts;
  params.reserve(scenarios.size());
  for (const auto& cfg : scenarios) {
    params.push_back(PipelineParams::standard(cfg, param_seed));
    contexts.push_back(PipelineContext::build(cfg, params.back()));
  }

  for (const Mode mode : opts.modes) {
    for (const int latency_ms : opts.latencies_ms) {
      const auto start = std::chrono::steady_clock::now();
      std::vector<eval::FrameDetections> pooled;
      for (std::size_t i = 0; i < contexts.size(); ++i) {
        RunOptions run;
        run.mode = mode;
        sim::LatencySpec spec;
        spec.kind = sim::LatencySpec::Kind::Fixed;
        spec.fixed_us = static_cast<sim::Micros>(latency_ms) * 1000;
        run.latency_override = spec;
        run.warmup_frames = opts.warmup_frames;
        run.frame_stride = opts.frame_stride;
        auto out = runPipeline(contexts[i], params[i], run);
        for (auto& f : out.frames) pooled.push_back(std::move(f));
      }
      const auto ap50 = eval::averagePrecisionPooled(pooled, 0.5);
      const auto ap70 = eval::averagePrecisionPooled(pooled, 0.7);
      EvalResult row;
      row.mode = modeName(mode);
      row.latency_ms = latency_ms;
      row.ap50 = ap50.ap;
      row.ap70 = ap70.ap;
      row.pr50 = ap50.curve;
      row.n_gt = ap50.n_gt;
      row.n_det = ap50.n_det;
      row.runtime_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - start)
                           .count();
      result.rows.push_back(std::move(row));
    }
  }
  return result;
}

double peakDisplacementCells(const StageOutputs& out, int object_id) {
  const PlaneD norms = out.fused.cellNorms();
  int best_r = 0, best_c = 0;
  double best = -1.0;
  for (int r = 0; r < norms.rows(); ++r)
    for (int c = 0; c < norms.cols(); ++c)
      if (norms(r, c) > best) {
        best = norms(r, c);
        best_r = r;
        best_c = c;
      }
  for (const auto& gt : out.gt_boxes) {
    if (gt.object_id != object_id) continue;
    int gt_r, gt_c;
    require(out.fused.grid.cellIndex(gt.box.cx, gt.box.cy, gt_r, gt_c),
            "peakDisplacementCells: ground truth outside the grid");
    return std::hypot(static_cast<double>(best_r - gt_r),
                      static_cast<double>(best_c - gt_c));
  }
  throw std::invalid_argument("peakDisplacementCells: object not in ground truth");
}

namespace {

sim::AgentSpec makeAgent(const std::string& id, bool ego, geom::Pose2 pose,
                         int cache, double max_range) {
  sim::AgentSpec a;
  a.id = id;
  a.ego = ego;
  a.pose = pose;
  a.hz = 10.0;
  a.cache_capacity = cache;
  a.max_range = max_range;
  return a;
}

geom::GridSpec worldGrid() {
  // 51.2 m square at the 0.4 m base cell; features at 1.6 m after /4
  return {-25.6, -25.6, 0.4, 128, 128};
}

// Short-range ego plus a wide-range cooperator: moving objects sit beyond the
// ego's reach, so cooperative data is the only source for them.
sim::ScenarioConfig baseScenario(std::uint64_t seed) {
  sim::ScenarioConfig cfg;
  cfg.seed = seed;
  cfg.duration_s = 3.2;
  cfg.world = worldGrid();
  cfg.points.clutter_points = 6;
  cfg.points.noise_sigma = 0.02;
  // dense, height-banded object returns give smooth blobs over the grid
  cfg.points.footprint_step = 0.35;
  cfg.points.object_z_lo = 1.2;
  cfg.points.object_z_hi = 1.5;
  cfg.agents.push_back(makeAgent("ego", true, {0.0, 12.0, 0.0}, 2, 14.0));
  cfg.agents.push_back(makeAgent("coop", false, {0.0, -10.0, 0.0}, 4, 60.0));
  return cfg;
}

sim::ObjectSpec makeObject(int id, geom::OrientedBox box, sim::MotionModel motion) {
  sim::ObjectSpec o;
  o.id = id;
  o.box = box;
  o.motion = motion;
  return o;
}

}  // namespace

sim::ScenarioConfig motionCompensationScenario() {
  sim::ScenarioConfig cfg = baseScenario(41);
  cfg.points.clutter_points = 4;
  // the ego cannot see the object; only the delayed cooperator does
  cfg.agents[0].pose = {-20.0, 14.0, 0.0};
  cfg.agents[0].max_range = 8.0;
  cfg.agents[1].pose = {0.0, -10.0, 0.0};
  cfg.agents[1].max_range = 45.0;
  cfg.objects.push_back(makeObject(
      1, {-16.0, 0.4, 0.0, 4.5, 2.0},
      {sim::MotionModel::Kind::ConstantVelocity, 10.0, 0.0}));
  return cfg;
}

std::vector<sim::ScenarioConfig> standardScenarios() {
  std::vector<sim::ScenarioConfig> out;

  {  // static object inside the ego's range
    sim::ScenarioConfig cfg = baseScenario(101);
    cfg.objects.push_back(
        makeObject(1, {4.0, 8.0, 0.5, 4.5, 2.0}, {sim::MotionModel::Kind::Static, 0, 0}));
    out.push_back(cfg);
  }
  {  // fast straight mover, ego-blind
    sim::ScenarioConfig cfg = baseScenario(102);
    cfg.objects.push_back(
        makeObject(1, {-16.0, -6.0, 0.0, 4.5, 2.0},
                   {sim::MotionModel::Kind::ConstantVelocity, 10.0, 0.0}));
    out.push_back(cfg);
  }
  {  // slower diagonal mover, ego-blind
    sim::ScenarioConfig cfg = baseScenario(103);
    cfg.objects.push_back(
        makeObject(1, {-12.0, -12.0, 0.5, 4.5, 2.0},
                   {sim::MotionModel::Kind::ConstantVelocity, 7.0, 0.0}));
    out.push_back(cfg);
  }
  {  // gentle constant turn staying below the ego's range
    sim::ScenarioConfig cfg = baseScenario(104);
    cfg.objects.push_back(makeObject(1, {-12.0, -12.0, 0.0, 4.5, 2.0},
                                     {sim::MotionModel::Kind::ConstantTurn, 6.0, 0.25}));
    out.push_back(cfg);
  }
  {  // one ego-visible static, one ego-blind mover
    sim::ScenarioConfig cfg = baseScenario(105);
    cfg.objects.push_back(
        makeObject(1, {-3.0, 9.0, 0.0, 4.5, 2.0}, {sim::MotionModel::Kind::Static, 0, 0}));
    cfg.objects.push_back(
        makeObject(2, {-15.0, -10.0, 0.0, 4.5, 2.0},
                   {sim::MotionModel::Kind::ConstantVelocity, 9.0, 0.0}));
    out.push_back(cfg);
  }
  return out;
}

}  // namespace bevsync::pipeline
