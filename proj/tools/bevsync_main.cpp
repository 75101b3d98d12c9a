#include "bevsync/io.hpp"
#include "bevsync/metrics.hpp"
#include "bevsync/pipeline.hpp"
#include "bevsync/render.hpp"
#include "bevsync/sim.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>

namespace fs = std::filesystem;
using namespace bevsync;

namespace {

sim::LatencySpec parseLatency(const std::string& text) {
  sim::LatencySpec spec;
  const auto colon = text.find(':');
  if (colon == std::string::npos) {
    spec.kind = sim::LatencySpec::Kind::Fixed;
    spec.fixed_us = static_cast<sim::Micros>(std::stoll(text)) * 1000;
    require(spec.fixed_us >= 0, "latency must be non-negative");
  } else {
    spec.kind = sim::LatencySpec::Kind::Uniform;
    spec.lo_us = static_cast<sim::Micros>(std::stoll(text.substr(0, colon))) * 1000;
    spec.hi_us = static_cast<sim::Micros>(std::stoll(text.substr(colon + 1))) * 1000;
    require(spec.lo_us >= 0 && spec.hi_us >= spec.lo_us, "invalid latency range");
  }
  return spec;
}

sim::ScenarioConfig loadScenario(const std::string& path, std::optional<std::uint64_t> seed,
                                 int ego_frames, int coop_frames) {
  sim::ScenarioConfig cfg = sim::loadConfig(path);
  if (seed) cfg.seed = *seed;
  for (auto& a : cfg.agents) a.cache_capacity = a.ego ? ego_frames : coop_frames;
  return cfg;
}

sim::ScenarioFrames loadFrames(const sim::ScenarioConfig& cfg, const std::string& dir) {
  sim::ScenarioFrames frames;
  frames.per_agent.resize(cfg.agents.size());
  for (std::size_t ai = 0; ai < cfg.agents.size(); ++ai) {
    const std::string path = dir + "/" + cfg.agents[ai].id + ".frames";
    frames.per_agent[ai] = sim::framesFromJsonl(io::readFile(path));
  }
  return frames;
}

int cmdSimulate(const std::string& scenario, const std::string& out_dir,
                std::optional<std::uint64_t> seed, int ego_frames, int coop_frames) {
  const auto cfg = loadScenario(scenario, seed, ego_frames, coop_frames);
  const auto frames = sim::generateScenario(cfg);
  fs::create_directories(out_dir);
  for (std::size_t ai = 0; ai < cfg.agents.size(); ++ai)
    io::writeFile(out_dir + "/" + cfg.agents[ai].id + ".frames",
                  sim::framesToJsonl(frames.per_agent[ai]));
  io::writeFile(out_dir + "/scenario.json", sim::configToJson(cfg));
  for (const auto& line : frames.log) std::cerr << line << "\n";
  std::cout << "wrote " << cfg.agents.size() << " frame streams to " << out_dir << "\n";
  return 0;
}

int cmdAlign(const std::string& scenario, const std::string& frames_dir,
             const std::string& latency, const std::string& mode,
             const std::string& out_dir, std::optional<std::uint64_t> seed,
             int ego_frames, int coop_frames, const std::string& params_path) {
  const auto cfg = loadScenario(scenario, seed, ego_frames, coop_frames);
  auto params = pipeline::PipelineParams::standard(cfg, cfg.seed);
  if (!params_path.empty()) params.loadExtractor(io::TensorStore::load(params_path));
  pipeline::PipelineContext ctx =
      frames_dir.empty()
          ? pipeline::PipelineContext::build(cfg, params)
          : pipeline::PipelineContext::buildFromFrames(cfg, loadFrames(cfg, frames_dir),
                                                       params);

  pipeline::RunOptions opts;
  opts.mode = pipeline::modeFromName(mode);
  if (!latency.empty()) opts.latency_override = parseLatency(latency);
  opts.dump_dir = out_dir;
  const auto out = pipeline::runPipeline(ctx, params, opts);
  std::cout << pipeline::EvalResult::csvHeader() << "\n" << out.result.csvRow() << "\n";
  return 0;
}

int cmdEval(const std::string& dets_path, const std::string& gt_path,
            const std::string& out_dir) {
  using nlohmann::json;
  std::map<std::int64_t, eval::FrameDetections> by_frame;

  std::istringstream dets_in(io::readFile(dets_path));
  std::string line;
  while (std::getline(dets_in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    fuse::Detection d;
    d.box = {j.at("cx"), j.at("cy"), j.at("yaw"), j.at("l"), j.at("w")};
    d.score = j.at("score");
    const std::int64_t t = j.value("t", 0);
    by_frame[t].frame_id = t;
    by_frame[t].dets.push_back(d);
  }
  std::istringstream gt_in(io::readFile(gt_path));
  while (std::getline(gt_in, line)) {
    if (line.empty()) continue;
    const json j = json::parse(line);
    sim::BoxAnnotation g;
    g.object_id = j.value("id", -1);
    g.box = {j.at("cx"), j.at("cy"), j.at("yaw"), j.at("l"), j.at("w")};
    const std::int64_t t = j.value("t", 0);
    by_frame[t].frame_id = t;
    by_frame[t].gts.push_back(g);
  }

  std::vector<eval::FrameDetections> frames;
  for (auto& [t, f] : by_frame) frames.push_back(std::move(f));
  const auto ap50 = eval::averagePrecisionPooled(frames, 0.5);
  const auto ap70 = eval::averagePrecisionPooled(frames, 0.7);
  std::cout << "ap50," << io::formatDouble(ap50.ap) << "\n";
  std::cout << "ap70," << io::formatDouble(ap70.ap) << "\n";
  std::cout << "n_gt," << ap50.n_gt << "\nn_det," << ap50.n_det << "\n";
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    io::writeFile(out_dir + "/pr50.csv", eval::prCurveCsv(ap50.curve));
    io::writeFile(out_dir + "/pr50.svg", render::prCurveSvg(ap50.curve, "PR @ IoU 0.5"));
  }
  return 0;
}

int cmdSweep(const std::string& scenario, const std::string& modes_arg,
             const std::string& out_dir, std::optional<std::uint64_t> seed,
             int ego_frames, int coop_frames, const std::vector<int>& latencies) {
  std::vector<sim::ScenarioConfig> scenarios;
  if (scenario.empty()) {
    scenarios = pipeline::standardScenarios();
    if (seed)
      for (auto& cfg : scenarios) cfg.seed = *seed;
    for (auto& cfg : scenarios)
      for (auto& a : cfg.agents) a.cache_capacity = a.ego ? ego_frames : coop_frames;
  } else {
    scenarios.push_back(loadScenario(scenario, seed, ego_frames, coop_frames));
  }

  pipeline::SweepOptions opts;
  opts.modes.clear();
  std::istringstream modes_in(modes_arg);
  std::string mode;
  while (std::getline(modes_in, mode, ','))
    opts.modes.push_back(pipeline::modeFromName(mode));
  if (!latencies.empty()) opts.latencies_ms = latencies;

  const auto sweep = pipeline::latencySweep(scenarios, opts,
                                            seed ? *seed : scenarios.front().seed);
  std::cout << sweep.csv();
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    io::writeFile(out_dir + "/sweep.csv", sweep.csv());
    for (const auto& row : sweep.rows)
      io::writeFile(out_dir + "/pr50_" + row.mode + "_" +
                        std::to_string(row.latency_ms) + "ms.csv",
                    eval::prCurveCsv(row.pr50));
  }
  return 0;
}

int cmdParams(const std::string& scenario, const std::string& out_path,
              std::optional<std::uint64_t> seed, int ego_frames, int coop_frames) {
  const auto cfg = loadScenario(scenario, seed, ego_frames, coop_frames);
  const auto params = pipeline::PipelineParams::standard(cfg, cfg.seed);
  io::TensorStore store;
  params.saveExtractor(store);
  store.save(out_path);
  std::cout << "wrote extractor parameters to " << out_path << "\n";
  return 0;
}

int cmdRender(const std::string& field_path, const std::string& out_prefix) {
  const auto f = render::fieldFromBinary(io::readFile(field_path));
  io::writeFile(out_prefix + "_position.pgm", render::positionPgm(f));
  io::writeFile(out_prefix + "_orientation.ppm", render::orientationPpm(f));
  std::cout << "wrote " << out_prefix << "_position.pgm and _orientation.ppm\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"latency-compensated cooperative BEV perception harness"};
  app.require_subcommand(1);

  std::string scenario, frames_dir, latency, mode = "oracle", out_dir, dets, gt;
  std::string modes = "oracle,unaligned", field_path, out_prefix = "field";
  std::string params_path;
  std::optional<std::uint64_t> seed;
  int ego_frames = 2, coop_frames = 4;
  std::vector<int> latencies;

  auto add_common = [&](CLI::App* cmd, bool needs_scenario) {
    auto* opt = cmd->add_option("--scenario", scenario, "scenario config file");
    if (needs_scenario) opt->required();
    cmd->add_option("--seed", seed, "override the scenario seed");
    cmd->add_option("--ego-frames", ego_frames, "ego cache capacity")
        ->capture_default_str();
    cmd->add_option("--coop-frames", coop_frames, "cooperator cache capacity")
        ->capture_default_str();
  };

  auto* sim_cmd = app.add_subcommand("simulate", "generate agent frame streams");
  add_common(sim_cmd, true);
  sim_cmd->add_option("--out", out_dir, "output directory")->required();

  auto* align_cmd =
      app.add_subcommand("align", "run the pipeline and dump aligned artifacts");
  add_common(align_cmd, true);
  align_cmd->add_option("--frames", frames_dir, "directory of .frames files");
  align_cmd->add_option("--latency-ms", latency, "fixed delay or lo:hi range");
  align_cmd->add_option("--mode", mode, "oracle|predicted|unaligned|single")
      ->capture_default_str();
  align_cmd->add_option("--params", params_path, "extractor parameter file");
  align_cmd->add_option("--out", out_dir, "output directory")->required();

  auto* eval_cmd = app.add_subcommand("eval", "score detections against ground truth");
  eval_cmd->add_option("--dets", dets, "detections jsonl")->required();
  eval_cmd->add_option("--gt", gt, "ground truth jsonl")->required();
  eval_cmd->add_option("--out", out_dir, "output directory");

  auto* sweep_cmd = app.add_subcommand("sweep", "latency grid evaluation");
  add_common(sweep_cmd, false);
  sweep_cmd->add_option("--mode", modes, "comma-separated mode list")
      ->capture_default_str();
  sweep_cmd->add_option("--latency-ms", latencies, "latency grid in ms");
  sweep_cmd->add_option("--out", out_dir, "output directory");

  auto* render_cmd = app.add_subcommand("render", "render a dumped field");
  render_cmd->add_option("--field", field_path, "field binary dump")->required();
  render_cmd->add_option("--out", out_prefix, "output prefix")->capture_default_str();

  std::string params_out;
  auto* params_cmd =
      app.add_subcommand("params", "export the extractor parameter file");
  add_common(params_cmd, true);
  params_cmd->add_option("--out", params_out, "output file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim_cmd->parsed())
      return cmdSimulate(scenario, out_dir, seed, ego_frames, coop_frames);
    if (align_cmd->parsed())
      return cmdAlign(scenario, frames_dir, latency, mode, out_dir, seed, ego_frames,
                      coop_frames, params_path);
    if (eval_cmd->parsed()) return cmdEval(dets, gt, out_dir);
    if (sweep_cmd->parsed())
      return cmdSweep(scenario, modes, out_dir, seed, ego_frames, coop_frames, latencies);
    if (render_cmd->parsed()) return cmdRender(field_path, out_prefix);
    if (params_cmd->parsed())
      return cmdParams(scenario, params_out, seed, ego_frames, coop_frames);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
