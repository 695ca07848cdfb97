#include "objmap/error.hpp"
#include "objmap/run.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace objmap;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class AppTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() / ("objmap_app_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  // Two cameras, a table and a chair that walks past it, 6 frames.
  fs::path small_scenario() {
    json j = {{"name", "small"},
              {"seed", 5},
              {"duration_s", 6.0},
              {"frame_rate_hz", 1.0},
              {"cameras", json::array({{{"id", 0}, {"eye", {4.0, 3.0, 4.0}}, {"target", {0.0, 0.0, 0.4}}},
                                       {{"id", 1}, {"eye", {-4.0, -3.0, 4.0}}, {"target", {0.0, 0.0, 0.4}}}})},
              {"objects", json::array({{{"model", "table"}, {"waypoints", json::array({{{"x", 0}, {"y", 0}}})}},
                                       {{"model", "chair"},
                                        {"waypoints", json::array({{{"t", 0}, {"x", -1.0}, {"y", -1.2}},
                                                                   {{"t", 5}, {"x", 1.0}, {"y", -1.2}}})}}})}};
    const fs::path p = root_ / "scenario.json";
    std::ofstream(p) << j.dump(2);
    return p;
  }

  RunConfig config(const fs::path& out) {
    RunConfig cfg;
    cfg.scenario_path = small_scenario();
    cfg.out = out;
    return cfg;
  }

  fs::path root_;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<fs::path> sorted_files(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir)) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

// Snapshot documents without the transport-dependent fields.
json stable_snapshot(const fs::path& p) { return json::parse(slurp(p)); }

}  // namespace

TEST(RunConfigJson, AppliesKnownKeys) {
  RunConfig cfg;
  apply_config_json(cfg, json{{"mode", "submap"}, {"icp", "backend"}, {"tau_dist", 0.2}, {"sync_window_ms", 40},
                              {"tau_track", 0.5}, {"seed", 9}, {"variants", {"pnp", "icp_local"}}});
  EXPECT_EQ(cfg.mode, Representation::Submap);
  EXPECT_EQ(cfg.icp, IcpMode::Backend);
  EXPECT_DOUBLE_EQ(cfg.fusion.sync_window_ms, 40.0);
  EXPECT_DOUBLE_EQ(cfg.tracker.tau_track, 0.5);
  ASSERT_TRUE(cfg.seed.has_value());
  EXPECT_EQ(*cfg.seed, 9u);
  EXPECT_EQ(cfg.extra_variants.size(), 2u);
  EXPECT_TRUE(cfg.stream_segments());
}

TEST(RunConfigJson, RejectsUnknownKeysAndBadValues) {
  RunConfig cfg;
  try {
    apply_config_json(cfg, json{{"tau_dits", 0.2}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
  }
  EXPECT_THROW(apply_config_json(cfg, json{{"mode", "voxels"}}), Error);
  EXPECT_THROW(parse_representation("nope"), Error);
  RunConfig bad;
  bad.tracker.tau_track = -1;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(RunConfigJson, RoundTrip) {
  RunConfig a;
  a.mode = Representation::Submap;
  a.icp = IcpMode::None;
  a.tracker.max_unseen_s = 4.5;
  a.submap_resolution = 0.1;
  RunConfig b;
  apply_config_json(b, run_config_to_json(a));
  EXPECT_EQ(run_config_to_json(b), run_config_to_json(a));
}

TEST(VariantNames, Stable) {
  EXPECT_EQ(variant_name(IcpMode::None), "pnp");
  EXPECT_EQ(variant_name(IcpMode::Local), "icp_local");
  EXPECT_EQ(variant_name(IcpMode::Backend), "icp_backend");
  EXPECT_EQ(parse_representation(to_string(Representation::Mesh)), Representation::Mesh);
}

TEST_F(AppTest, MeshRunWritesArtifactsWithoutSegments) {
  const fs::path out = root_ / "run";
  const RunSummary s = run_pipeline(config(out));
  EXPECT_EQ(s.frames, 6u);
  EXPECT_EQ(s.snapshots, 6u);
  for (const char* f : {"scenario.json", "gt.jsonl", "run.json", "sessions.json"}) EXPECT_TRUE(fs::exists(out / f)) << f;
  EXPECT_EQ(sorted_files(out / "snapshots").size(), 6u);
  EXPECT_EQ(sorted_files(out / "replay").size(), 2u);
  EXPECT_FALSE(fs::exists(out / "submaps"));
  EXPECT_FALSE(fs::exists(root_ / "run.tmp"));
  ASSERT_EQ(s.sessions.size(), 2u);
  for (const auto& rec : s.sessions) {
    EXPECT_TRUE(rec.error.empty());
    EXPECT_EQ(rec.received.frames, 6u);
    EXPECT_EQ(rec.received.bytes(MsgType::Segment), 0u);
    EXPECT_EQ(rec.received.bytes(MsgType::Observation) % kObservationSize, 0u);
    ASSERT_TRUE(rec.sent.has_value());
    EXPECT_EQ(rec.sent->payload_bytes, rec.received.payload_bytes);
  }
  const json run = json::parse(slurp(out / "run.json"));
  EXPECT_EQ(run.at("variant"), "icp_local");
}

TEST_F(AppTest, SubmapRunStreamsSegmentsAndExportsMaps) {
  RunConfig cfg = config(root_ / "run");
  cfg.mode = Representation::Submap;
  const RunSummary s = run_pipeline(cfg);
  for (const auto& rec : s.sessions) EXPECT_GT(rec.received.bytes(MsgType::Segment), 0u);
  ASSERT_TRUE(fs::is_directory(cfg.out / "submaps"));
  const json last = stable_snapshot(sorted_files(cfg.out / "snapshots").back());
  ASSERT_FALSE(last.at("objects").empty());
  for (const auto& o : last.at("objects")) {
    ASSERT_TRUE(o.contains("submap"));
    const fs::path ref = cfg.out / o.at("submap").at("path").get<std::string>();
    ASSERT_TRUE(fs::exists(ref)) << ref;
    std::ifstream in(ref);
    const SubMapSnapshot snap = import_submap(in);
    EXPECT_EQ(snap.map.occupied_indices().size(), o.at("submap").at("occupied_voxels").get<std::size_t>());
    EXPECT_GT(snap.map.occupied_indices().size(), 0u);
  }
}

TEST_F(AppTest, InvalidScenarioLeavesNoArtifacts) {
  const fs::path bad = root_ / "bad.json";
  std::ofstream(bad) << R"({"cameras": [], "objects": []})";
  RunConfig cfg;
  cfg.scenario_path = bad;
  cfg.out = root_ / "run";
  try {
    run_pipeline(cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::ConfigError);
  }
  EXPECT_FALSE(fs::exists(cfg.out));
  EXPECT_FALSE(fs::exists(root_ / "run.tmp"));
}

TEST_F(AppTest, EvalNeedsArtifacts) {
  EvalRequest req;
  req.run_dir = root_ / "nothing";
  try {
    run_eval(req);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingArtifacts);
  }
}

TEST_F(AppTest, EvalReportsEveryVariant) {
  RunConfig cfg = config(root_ / "run");
  cfg.extra_variants = {IcpMode::None};
  run_pipeline(cfg);
  EvalRequest req;
  req.run_dir = cfg.out;
  const auto reports = run_eval(req);
  ASSERT_EQ(reports.size(), 2u);
  for (const auto& r : reports) {
    EXPECT_EQ(r.frames, 6u);
    EXPECT_GT(r.matched, 0u);
    ASSERT_TRUE(r.bandwidth.has_value());
    EXPECT_GT(r.bandwidth->observation_bps, 0.0);
    EXPECT_EQ(r.bandwidth->segment_bps, 0.0);
  }
  for (const char* f : {"report.txt", "report.json", "eval_frames.jsonl"}) EXPECT_TRUE(fs::exists(cfg.out / f)) << f;
}

TEST_F(AppTest, ReplayReproducesLiveSnapshots) {
  for (auto mode : {Representation::Mesh, Representation::Submap}) {
    RunConfig cfg = config(root_ / "live");
    cfg.mode = mode;
    fs::remove_all(cfg.out);
    run_pipeline(cfg);
    const fs::path again = root_ / "again";
    fs::remove_all(again);
    const RunSummary s = run_replay(cfg.out, again);
    EXPECT_EQ(s.snapshots, 6u);
    const auto a = sorted_files(cfg.out / "snapshots");
    const auto b = sorted_files(again / "snapshots");
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      EXPECT_EQ(a[i].filename(), b[i].filename());
      EXPECT_EQ(slurp(a[i]), slurp(b[i])) << a[i];
    }
  }
}

TEST_F(AppTest, CorruptReplayIsRejected) {
  const fs::path out = root_ / "run";
  run_pipeline(config(out));
  const fs::path f = sorted_files(out / "replay").front();
  fs::resize_file(f, fs::file_size(f) - 7);
  try {
    run_replay(out, root_ / "again");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CorruptFile);
  }
  EXPECT_FALSE(fs::exists(root_ / "again"));
}

TEST_F(AppTest, SimWritesGroundTruthOnly) {
  RunConfig cfg = config(root_ / "sim");
  run_sim(cfg);
  EXPECT_TRUE(fs::exists(cfg.out / "gt.jsonl"));
  EXPECT_TRUE(fs::exists(cfg.out / "detections.jsonl"));
  EXPECT_FALSE(fs::exists(cfg.out / "snapshots"));
  std::ifstream in(cfg.out / "gt.jsonl");
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const GroundTruthFrame f = gt_frame_from_json(json::parse(line));
    EXPECT_EQ(f.index, n);
    ++n;
  }
  EXPECT_EQ(n, 6u);
}
