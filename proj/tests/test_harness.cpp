#include "bevsync/metrics.hpp"
#include "bevsync/pipeline.hpp"
#include "bevsync/render.hpp"

#include <doctest.h>

#include <cmath>

using namespace bevsync;

namespace {

sim::BoxAnnotation gtBox(int id, double cx, double cy) {
  sim::BoxAnnotation b;
  b.object_id = id;
  b.box = {cx, cy, 0.0, 4.0, 2.0};
  return b;
}

fuse::Detection det(double cx, double cy, double score) {
  return {{cx, cy, 0.0, 4.0, 2.0}, score};
}

}  // namespace

TEST_SUITE("harness") {

TEST_CASE("ap fixtures: perfect, miss, and the 5/6 case") {
  const std::vector<sim::BoxAnnotation> one_gt = {gtBox(1, 0, 0)};
  CHECK(eval::averagePrecision({det(0, 0, 0.9)}, one_gt, 0.5).ap ==
        doctest::Approx(1.0));
  CHECK(eval::averagePrecision({det(30, 30, 0.9)}, one_gt, 0.5).ap ==
        doctest::Approx(0.0));

  const std::vector<sim::BoxAnnotation> two_gt = {gtBox(1, 0, 0), gtBox(2, 20, 0)};
  const auto r = eval::averagePrecision(
      {det(0, 0, 0.9), det(40, 40, 0.8), det(20, 0, 0.7)}, two_gt, 0.5);
  CHECK(r.ap == doctest::Approx(5.0 / 6.0).epsilon(1e-12));
}

TEST_CASE("zero ground truth flags and returns zero") {
  const auto r = eval::averagePrecision({det(0, 0, 0.9)}, {}, 0.5);
  CHECK(r.no_gt);
  CHECK(r.ap == 0.0);
}

TEST_CASE("pr curve is valid: recall non-decreasing, precision in range") {
  Rng rng(3);
  std::vector<fuse::Detection> dets;
  std::vector<sim::BoxAnnotation> gts;
  for (int i = 0; i < 8; ++i) gts.push_back(gtBox(i, 12.0 * i, 0));
  for (int i = 0; i < 20; ++i)
    dets.push_back(det(12.0 * rng.uniformInt(0, 7) + rng.uniform(-4, 4),
                       rng.uniform(-2, 2), rng.uniform(0, 1)));
  const auto r = eval::averagePrecision(dets, gts, 0.5);
  double prev_recall = 0.0;
  for (const auto& p : r.curve) {
    CHECK(p.recall >= prev_recall);
    CHECK(p.precision >= 0.0);
    CHECK(p.precision <= 1.0);
    prev_recall = p.recall;
  }
}

TEST_CASE("ap monotonicity under added detections") {
  const std::vector<sim::BoxAnnotation> gts = {gtBox(1, 0, 0), gtBox(2, 20, 0)};
  std::vector<fuse::Detection> dets = {det(0, 0, 0.9)};
  const double base = eval::averagePrecision(dets, gts, 0.5).ap;

  // an extra true positive never decreases AP
  auto with_tp = dets;
  with_tp.push_back(det(20, 0, 0.85));
  CHECK(eval::averagePrecision(with_tp, gts, 0.5).ap >= base);

  // a false positive below every true positive never increases it
  auto with_fp = with_tp;
  with_fp.push_back(det(40, 40, 0.01));
  CHECK(eval::averagePrecision(with_fp, gts, 0.5).ap <=
        eval::averagePrecision(with_tp, gts, 0.5).ap);
}

TEST_CASE("pooled ap matches single-frame ap on one frame") {
  const std::vector<sim::BoxAnnotation> gts = {gtBox(1, 0, 0), gtBox(2, 20, 0)};
  const std::vector<fuse::Detection> dets = {det(0, 0, 0.9), det(40, 40, 0.8),
                                             det(20, 0, 0.7)};
  eval::FrameDetections frame;
  frame.frame_id = 7;
  frame.dets = dets;
  frame.gts = gts;
  CHECK(eval::averagePrecisionPooled({frame}, 0.5).ap ==
        doctest::Approx(eval::averagePrecision(dets, gts, 0.5).ap));
}

TEST_CASE("matching never crosses frames when pooling") {
  eval::FrameDetections f1, f2;
  f1.frame_id = 1;
  f1.gts = {gtBox(1, 0, 0)};
  f1.dets = {};  // the object is missed in its own frame
  f2.frame_id = 2;
  f2.gts = {};
  f2.dets = {det(0, 0, 0.9)};  // same place, wrong frame
  const auto r = eval::averagePrecisionPooled({f1, f2}, 0.5);
  CHECK(r.ap == 0.0);
}

TEST_CASE("field binary dump round trips with checksum validation") {
  auto f = field::TrajectoryField::empty({-4.0, -4.0, 0.5, 16, 16});
  Rng rng(9);
  for (int r = 0; r < 16; ++r)
    for (int c = 0; c < 16; ++c) {
      f.position(r, c) = rng.uniform(0, 1);
      f.orient_cos(r, c) = rng.uniform(-1, 1);
      f.orient_sin(r, c) = rng.uniform(-1, 1);
    }
  const auto bytes = render::fieldBinary(f);
  const auto back = render::fieldFromBinary(bytes);
  CHECK((back.position - f.position).cwiseAbs().maxCoeff() == 0.0);
  CHECK((back.orient_cos - f.orient_cos).cwiseAbs().maxCoeff() == 0.0);

  auto corrupted = bytes;
  corrupted[20] = static_cast<char>(corrupted[20] ^ 0x40);
  CHECK_THROWS(render::fieldFromBinary(corrupted));
}

TEST_CASE("renders produce plausible image headers") {
  auto f = field::TrajectoryField::empty({0.0, 0.0, 1.0, 8, 8});
  f.position(4, 4) = 1.0;
  const auto pgm = render::positionPgm(f);
  CHECK(pgm.substr(0, 2) == "P5");
  const auto ppm = render::orientationPpm(f);
  CHECK(ppm.substr(0, 2) == "P6");
  const auto svg = render::prCurveSvg({{0.9, 1.0, 0.5}}, "pr");
  CHECK(svg.find("<svg") != std::string::npos);
}

TEST_CASE("mode names round trip") {
  using pipeline::Mode;
  for (Mode m : {Mode::Oracle, Mode::Predicted, Mode::Unaligned, Mode::Single})
    CHECK(pipeline::modeFromName(pipeline::modeName(m)) == m);
  CHECK_THROWS(pipeline::modeFromName("bogus"));
}

TEST_CASE("single-agent mode is unaffected by non-ego latency") {
  auto scenarios = pipeline::standardScenarios();
  auto cfg = scenarios[0];
  cfg.duration_s = 2.0;
  const auto params = pipeline::PipelineParams::standard(cfg, 7);
  const auto ctx = pipeline::PipelineContext::build(cfg, params);

  auto run_at = [&](int latency_ms) {
    pipeline::RunOptions opts;
    opts.mode = pipeline::Mode::Single;
    sim::LatencySpec spec;
    spec.kind = sim::LatencySpec::Kind::Fixed;
    spec.fixed_us = latency_ms * 1000;
    opts.latency_override = spec;
    opts.warmup_frames = 10;
    opts.frame_stride = 5;
    return pipeline::runPipeline(ctx, params, opts).result;
  };
  const auto r0 = run_at(0);
  const auto r400 = run_at(400);
  CHECK(r0.ap50 == doctest::Approx(r400.ap50));
  CHECK(r0.ap70 == doctest::Approx(r400.ap70));
}

TEST_CASE("pipeline results are byte-reproducible for a fixed seed") {
  auto cfg = pipeline::standardScenarios()[1];
  cfg.duration_s = 2.0;
  const auto params = pipeline::PipelineParams::standard(cfg, 7);
  const auto ctx = pipeline::PipelineContext::build(cfg, params);
  pipeline::RunOptions opts;
  opts.mode = pipeline::Mode::Oracle;
  sim::LatencySpec spec;
  spec.kind = sim::LatencySpec::Kind::Fixed;
  spec.fixed_us = 200000;
  opts.latency_override = spec;
  opts.warmup_frames = 12;
  opts.frame_stride = 4;

  const auto a = pipeline::runPipeline(ctx, params, opts);
  const auto b = pipeline::runPipeline(ctx, params, opts);
  CHECK(a.result.csvRow() == b.result.csvRow());
  CHECK(eval::prCurveCsv(a.result.pr50) == eval::prCurveCsv(b.result.pr50));
}

TEST_CASE("static scene at 0 ms in oracle mode is a perfect AP50") {
  auto cfg = pipeline::standardScenarios()[0];  // single static object
  const auto params = pipeline::PipelineParams::standard(cfg, 7);
  const auto ctx = pipeline::PipelineContext::build(cfg, params);
  pipeline::RunOptions opts;
  opts.mode = pipeline::Mode::Oracle;
  sim::LatencySpec spec;
  spec.kind = sim::LatencySpec::Kind::Fixed;
  spec.fixed_us = 0;
  opts.latency_override = spec;
  const auto out = pipeline::runPipeline(ctx, params, opts);
  CHECK(out.result.ap50 == doctest::Approx(1.0));
}

TEST_CASE("alignment moves the fused peak from ~10 base cells to <= 1 feature cell") {
  const auto cfg = pipeline::motionCompensationScenario();
  const auto params = pipeline::PipelineParams::standard(cfg, 7);
  const auto ctx = pipeline::PipelineContext::build(cfg, params);
  sim::LatencySpec delay;
  delay.kind = sim::LatencySpec::Kind::Fixed;
  delay.fixed_us = 400000;

  pipeline::RunOptions opts;
  opts.latency_override = delay;
  opts.mode = pipeline::Mode::Unaligned;
  const auto stale = pipeline::runAt(ctx, params, 1600000, opts);
  // 10 m/s * 0.4 s = 4 m = 10 base cells of displacement when unaligned
  const double base_cells = pipeline::peakDisplacementCells(stale, 1) *
                            stale.fused.grid.cell_size / cfg.world.cell_size;
  CHECK(base_cells >= 8.0);

  opts.mode = pipeline::Mode::Oracle;
  const auto aligned = pipeline::runAt(ctx, params, 1600000, opts);
  CHECK(pipeline::peakDisplacementCells(aligned, 1) <= 1.0);
}

TEST_CASE("empty latency list gives an empty sweep") {
  pipeline::SweepOptions opts;
  opts.latencies_ms.clear();
  const auto sweep = pipeline::latencySweep({}, opts);
  CHECK(sweep.rows.empty());
}

TEST_CASE("stage errors carry the ego timestamp") {
  auto cfg = pipeline::standardScenarios()[0];
  cfg.duration_s = 1.6;
  auto params = pipeline::PipelineParams::standard(cfg, 7);
  const auto ctx = pipeline::PipelineContext::build(cfg, params);
  params.unet = field::UNetParams::zeros(3, 4);  // wrong input width
  pipeline::RunOptions opts;
  opts.mode = pipeline::Mode::Predicted;
  opts.warmup_frames = 12;
  CHECK_THROWS_WITH_AS(pipeline::runPipeline(ctx, params, opts),
                       doctest::Contains("ego timestamp"), std::runtime_error);
}

TEST_CASE("predicted mode runs end to end deterministically") {
  auto cfg = pipeline::standardScenarios()[0];
  cfg.duration_s = 1.6;
  const auto params = pipeline::PipelineParams::standard(cfg, 11);
  const auto ctx = pipeline::PipelineContext::build(cfg, params);
  pipeline::RunOptions opts;
  opts.mode = pipeline::Mode::Predicted;
  opts.warmup_frames = 10;
  opts.frame_stride = 6;
  const auto a = pipeline::runPipeline(ctx, params, opts);
  const auto b = pipeline::runPipeline(ctx, params, opts);
  CHECK(a.result.csvRow() == b.result.csvRow());
}

}  // TEST_SUITE
