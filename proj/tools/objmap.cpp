#include "objmap/error.hpp"
#include "objmap/run.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

using objmap::RunConfig;

struct Flags {
  std::string mode = "mesh";
  std::string icp = "local";
  std::vector<std::string> variants;
  std::uint64_t seed = 0;
  std::string config;
};

void add_common(CLI::App& cmd, RunConfig& cfg, Flags& f, std::vector<CLI::Option*>& seed_opts) {
  cmd.add_option("--scenario", cfg.scenario_path, "Scenario JSON (default: built-in 4-camera scene)")
      ->envname("OBJMAP_SCENARIO");
  seed_opts.push_back(cmd.add_option("--seed", f.seed, "Override the scenario seed")->envname("OBJMAP_SEED"));
  cmd.add_option("--mode", f.mode, "Object representation")
      ->check(CLI::IsMember({"mesh", "submap"}))
      ->envname("OBJMAP_MODE")
      ->capture_default_str();
  cmd.add_option("--addr", cfg.addr, "Bind or connect address host:port")->envname("OBJMAP_ADDR")->capture_default_str();
  cmd.add_option("--out", cfg.out, "Output directory")->envname("OBJMAP_OUT")->capture_default_str();
  cmd.add_option("--icp", f.icp, "Pose refinement: none, local or backend")
      ->check(CLI::IsMember({"none", "pnp", "local", "backend"}))
      ->envname("OBJMAP_ICP")
      ->capture_default_str();
  cmd.add_option("--tau-dist", cfg.pose.tau_dist, "Keypoint/segment association threshold (m)")
      ->envname("OBJMAP_TAU_DIST")
      ->capture_default_str();
  cmd.add_option("--tau-track", cfg.tracker.tau_track, "Track gating distance (m)")
      ->envname("OBJMAP_TAU_TRACK")
      ->capture_default_str();
  cmd.add_option("--tau-occ", cfg.tracker.tau_occ, "Voxel occupancy count threshold")
      ->envname("OBJMAP_TAU_OCC")
      ->capture_default_str();
  cmd.add_option("--sync-window-ms", cfg.fusion.sync_window_ms, "Frame synchronization window (ms)")
      ->envname("OBJMAP_SYNC_WINDOW_MS")
      ->capture_default_str();
  cmd.add_option("--max-unseen-s", cfg.tracker.max_unseen_s, "Drop tracks unseen for longer than this (s)")
      ->envname("OBJMAP_MAX_UNSEEN_S")
      ->capture_default_str();
  cmd.add_option("--ransac-iters", cfg.pose.ransac_iters)->envname("OBJMAP_RANSAC_ITERS")->capture_default_str();
  cmd.add_option("--ransac-thresh-px", cfg.pose.ransac_reproj_thresh)
      ->envname("OBJMAP_RANSAC_THRESH_PX")
      ->capture_default_str();
  cmd.add_option("--icp-iters", cfg.pose.icp_max_iters)->envname("OBJMAP_ICP_ITERS")->capture_default_str();
  cmd.add_option("--icp-corr-dist", cfg.pose.icp_corr_dist)->envname("OBJMAP_ICP_CORR_DIST")->capture_default_str();
  cmd.add_option("--submap-resolution", cfg.submap_resolution)
      ->envname("OBJMAP_SUBMAP_RESOLUTION")
      ->capture_default_str();
  cmd.add_option("--config", f.config, "JSON config file; its keys override flags")->envname("OBJMAP_CONFIG");
}

void finalize(RunConfig& cfg, const Flags& f, const std::vector<CLI::Option*>& seed_opts) {
  cfg.mode = objmap::parse_representation(f.mode);
  cfg.icp = objmap::parse_icp_mode(f.icp);
  for (const auto* o : seed_opts) {
    if (o->count() > 0) cfg.seed = f.seed;
  }
  cfg.extra_variants.clear();
  for (const auto& v : f.variants) cfg.extra_variants.push_back(objmap::parse_icp_mode(v));
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw objmap::Error(objmap::ErrorCode::ConfigError, "cannot read config " + f.config);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw objmap::Error(objmap::ErrorCode::ConfigError, f.config + ": " + e.what());
    }
    objmap::apply_config_json(cfg, j);
  }
  cfg.validate();
}

void print_summary(const objmap::RunSummary& s, const std::filesystem::path& out) {
  std::cout << "frames " << s.frames << ", snapshots " << s.snapshots << ", sessions " << s.sessions.size() << " -> "
            << out.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-camera semantic object mapping"};
  app.require_subcommand(1);

  RunConfig cfg;
  Flags flags;
  std::vector<CLI::Option*> seed_opts;

  auto* sim = app.add_subcommand("sim", "Generate ground truth and raw detections for a scenario");
  auto* run = app.add_subcommand("run", "Sensors and backend in one process over loopback TCP");
  auto* sensor = app.add_subcommand("sensor", "One simulated sensor node streaming to a backend");
  auto* backend = app.add_subcommand("backend", "Backend node accepting one connection per camera");
  auto* eval = app.add_subcommand("eval", "Evaluate a run directory against ground truth");
  auto* replay = app.add_subcommand("replay", "Feed recorded sensor streams back into a backend");

  for (auto* cmd : {sim, run, sensor, backend}) add_common(*cmd, cfg, flags, seed_opts);
  run->add_option("--variants", flags.variants, "Extra pose refinement variants written under variants/")
      ->check(CLI::IsMember({"none", "pnp", "local", "backend"}))
      ->envname("OBJMAP_VARIANTS");
  run->add_flag("!--no-replay", cfg.write_replay, "Do not record replay files");

  std::uint16_t camera_id = 0;
  std::filesystem::path replay_file;
  sensor->add_option("--camera", camera_id, "Scenario camera id")->required()->envname("OBJMAP_CAMERA");
  sensor->add_option("--replay-file", replay_file, "Also write the byte stream to this file");

  objmap::EvalRequest req;
  eval->add_option("--run", req.run_dir, "Run directory")->required()->envname("OBJMAP_RUN");
  eval->add_option("--gt", req.gt_path, "Ground truth JSONL (default: <run>/gt.jsonl)");
  eval->add_option("--match-gate", req.options.match_gate, "Estimate/ground-truth pairing radius (m)")
      ->capture_default_str();
  eval->add_option("--dilate-px", req.options.dilate_px)->capture_default_str();
  eval->add_flag("!--no-iou", req.options.iou, "Skip mask IoU");

  std::filesystem::path replay_run;
  std::filesystem::path replay_out = "objmap_replay";
  std::string replay_addr;
  bool realtime = false;
  replay->add_option("--run", replay_run, "Run directory holding replay/*.omap")->required()->envname("OBJMAP_RUN");
  replay->add_option("--out", replay_out, "Output directory for an in-process replay")->capture_default_str();
  replay->add_option("--addr", replay_addr, "Stream to a remote backend instead")->envname("OBJMAP_ADDR");
  replay->add_flag("--realtime", realtime, "Pace frames by their timestamps");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) {
      finalize(cfg, flags, seed_opts);
      objmap::run_sim(cfg);
      std::cout << "scenario and ground truth -> " << cfg.out.string() << "\n";
    } else if (*run) {
      finalize(cfg, flags, seed_opts);
      print_summary(objmap::run_pipeline(cfg), cfg.out);
    } else if (*sensor) {
      finalize(cfg, flags, seed_opts);
      objmap::run_sensor_node(cfg, camera_id, replay_file);
    } else if (*backend) {
      finalize(cfg, flags, seed_opts);
      print_summary(objmap::run_backend_node(cfg), cfg.out);
    } else if (*eval) {
      const auto reports = objmap::run_eval(req);
      std::cout << objmap::report_to_text(reports);
    } else if (*replay) {
      if (replay_addr.empty()) {
        print_summary(objmap::run_replay(replay_run, replay_out), replay_out);
      } else {
        objmap::replay_to_backend(replay_run, replay_addr, realtime);
      }
    }
  } catch (const objmap::Error& e) {
    std::cerr << "objmap: " << e.what() << "\n";
    return e.code() == objmap::ErrorCode::ConfigError ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "objmap: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
