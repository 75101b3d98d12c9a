#pragma once

#include "bevsync/attention.hpp"
#include "bevsync/fusion.hpp"
#include "bevsync/metrics.hpp"
#include "bevsync/offsets.hpp"
#include "bevsync/pillars.hpp"
#include "bevsync/sim.hpp"
#include "bevsync/temporal.hpp"
#include "bevsync/trajfield.hpp"

#include <optional>
#include <string>
#include <vector>

namespace bevsync::pipeline {

enum class Mode { Oracle, Predicted, Unaligned, Single };

std::string modeName(Mode m);
Mode modeFromName(const std::string& name);

/// Pipeline-wide defaults that mirror the reference configuration. Checked by
/// the configuration self-test in the acceptance suite.
struct Defaults {
  int attention_positions = 18;       // n
  double embedding_base = 8.0;        // sinusoid base
  double loss_alpha = 0.05;           // field loss weight
  double loss_beta = 0.05;            // offset loss weight
  int attention_layers = 2;
  int attention_heads = 4;
  double base_cell_m = 0.4;
  int feature_downsample = 4;
  std::vector<int> latency_grid_ms = {0, 100, 200, 300, 400};
  int ego_frames = 2;
  int coop_frames = 4;
};

struct PipelineParams {
  pillars::PillarConfig pillar_cfg;  // sensor-centered base grid
  pillars::EncoderParams encoder;
  pillars::BackboneParams backbone;
  temporal::FuseParams te_fuse;
  int feature_channels = 8;
  int max_history = 4;

  field::UNetParams unet;
  offsets::OffsetNetParams offset_net;
  attn::AttentionParams attention_predicted;
  attn::AttentionParams attention_oracle;
  fuse::DetectionHeadParams det_head;

  double score_threshold = 0.1;
  double nms_iou = 0.5;
  int n_offsets = 18;
  double oracle_bias_scale = 30.0;
  double prior_length = 4.0;
  double prior_width = 2.0;

  /// Analytic feature extractor plus seeded prediction networks for one
  /// scenario geometry.
  static PipelineParams standard(const sim::ScenarioConfig& cfg,
                                 std::uint64_t param_seed);

  /// Replace encoder / backbone / temporal-fusion weights with the contents
  /// of a parameter file.
  void loadExtractor(const io::TensorStore& store);
  void saveExtractor(io::TensorStore& store) const;
};

/// Per-scenario state with frame encodings cached across latency conditions.
struct PipelineContext {
  sim::ScenarioConfig cfg;
  sim::ScenarioFrames frames;
  std::vector<std::vector<FeatureMap>> encoded;  // per agent, per frame
  int ego_index = 0;

  static PipelineContext build(const sim::ScenarioConfig& cfg,
                               const PipelineParams& params);
  /// Same, but over externally provided frame streams (e.g. loaded files).
  static PipelineContext buildFromFrames(const sim::ScenarioConfig& cfg,
                                         sim::ScenarioFrames frames,
                                         const PipelineParams& params);
};

struct RunOptions {
  Mode mode = Mode::Oracle;
  std::optional<sim::LatencySpec> latency_override;  // non-ego agents
  int warmup_frames = 12;
  int frame_stride = 4;
  std::string dump_dir;  // artifact dumps when non-empty
};

/// Everything produced at a single ego timestamp.
struct StageOutputs {
  std::int64_t t_us = 0;
  std::vector<FeatureMap> agent_maps;  // aligned (or newest, mode-dependent)
  std::vector<field::TrajectoryField> gt_fields;
  FeatureMap fused;
  std::vector<fuse::Detection> detections;
  std::vector<sim::BoxAnnotation> gt_boxes;  // ego frame at t
};

StageOutputs runAt(const PipelineContext& ctx, const PipelineParams& params,
                   std::int64_t t_us, const RunOptions& opts);

struct EvalResult {
  std::string mode;
  int latency_ms = 0;
  double ap50 = 0.0;
  double ap70 = 0.0;
  std::vector<eval::PrPoint> pr50;
  int n_gt = 0;
  int n_det = 0;
  double runtime_ms = 0.0;

  std::string csvRow() const;  // runtime excluded so rows are reproducible
  static std::string csvHeader();
};

struct RunOutput {
  EvalResult result;
  std::vector<eval::FrameDetections> frames;  // for pooling across scenarios
};

RunOutput runPipeline(const PipelineContext& ctx, const PipelineParams& params,
                      const RunOptions& opts);

struct SweepOptions {
  std::vector<Mode> modes = {Mode::Oracle, Mode::Unaligned};
  std::vector<int> latencies_ms = {0, 100, 200, 300, 400};
  int warmup_frames = 12;
  int frame_stride = 4;
};

struct SweepResult {
  std::vector<EvalResult> rows;
  std::string csv() const;
};

/// One pooled evaluation per (mode, latency) over all scenarios.
SweepResult latencySweep(const std::vector<sim::ScenarioConfig>& scenarios,
                         const SweepOptions& opts, std::uint64_t param_seed = 7);

/// Cell distance between the strongest fused cell and the ground-truth center
/// of the given object at t.
double peakDisplacementCells(const StageOutputs& out, int object_id);

/// The five standard evaluation scenarios.
std::vector<sim::ScenarioConfig> standardScenarios();

/// Fixture for the motion-compensation check: one fast object seen only by a
/// delayed cooperative agent.
sim::ScenarioConfig motionCompensationScenario();

}  // namespace bevsync::pipeline
