#pragma once

#include "objmap/backend.hpp"
#include "objmap/eval.hpp"
#include "objmap/scenario.hpp"
#include "objmap/sensor_pipeline.hpp"
#include "objmap/simulator.hpp"
#include "objmap/transport.hpp"

#include <json.hpp>

#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace objmap {

enum class Representation { Mesh, Submap };

std::string to_string(Representation r);
Representation parse_representation(const std::string& text);

struct RunConfig {
  std::filesystem::path scenario_path;  // empty: built-in default scenario
  std::optional<std::uint64_t> seed;    // overrides the scenario seed
  Representation mode = Representation::Mesh;
  std::string addr = "127.0.0.1:0";
  std::filesystem::path out = "objmap_out";
  IcpMode icp = IcpMode::Local;
  std::vector<IcpMode> extra_variants;  // additional runs written under variants/
  PoseConfig pose;
  SegmentationConfig segmentation;
  FusionConfig fusion;
  TrackerConfig tracker;
  double submap_resolution = 0.05;
  std::size_t max_segment_points = 250;
  std::size_t queue_capacity = 64;
  bool write_replay = true;

  /// Segments go on the wire in submap mode and for backend ICP.
  bool stream_segments() const { return mode == Representation::Submap || icp == IcpMode::Backend; }
  void validate() const;
};

/// Keys mirror the CLI flags with underscores (tau_dist, sync_window_ms, ...).
/// Unknown keys are a ConfigError.
void apply_config_json(RunConfig& cfg, const nlohmann::json& j);
nlohmann::json run_config_to_json(const RunConfig& cfg);

/// Scenario named by the config (or the default one) with the seed override.
ScenarioConfig resolve_scenario(const RunConfig& cfg);

std::string variant_name(IcpMode icp);

SensorConfig sensor_config(const RunConfig& cfg, IcpMode icp, std::uint64_t seed);
BackendConfig backend_config(const RunConfig& cfg, IcpMode icp);

/// Simulated camera node: observe, estimate, stream every frame, close.
void run_sensor(const ScenarioConfig& scenario, std::span<const GroundTruthFrame> gt, std::size_t camera_index,
                const SensorConfig& cfg, SessionWriter& writer);

using SnapshotFn = std::function<void(const SceneSnapshot&)>;

struct SessionRecord {
  std::uint16_t sensor_id = 0;
  SessionStats received;
  std::optional<SessionStats> sent;  // filled in by in-process runs
  std::string error;
};

/// Backend ingest: one reader thread per attached byte stream feeding a
/// bounded queue; the thread calling run() synchronizes, fuses, tracks and
/// reports snapshots.
class BackendServer {
 public:
  BackendServer(Backend& backend, std::vector<std::uint16_t> sensors, double window_ms, std::size_t queue_capacity,
                SnapshotFn on_snapshot);
  ~BackendServer();

  /// Safe to call from another thread while run() is active.
  void attach(std::unique_ptr<ByteSource> source);
  /// Signals that no more sessions will be attached (e.g. accept failed).
  void fail(std::exception_ptr error);
  /// Returns once `expected_sessions` sessions have ended.
  void run(std::size_t expected_sessions);

  std::vector<SessionRecord> sessions() const;
  std::size_t snapshots() const { return snapshots_; }
  /// First session or acceptor error, if any.
  std::exception_ptr error() const;

 private:
  struct Event {
    std::size_t session = 0;
    std::optional<SensorFrame> frame;
    bool end = false;
    std::exception_ptr error;
    bool fatal = false;
  };
  void process_ready(std::vector<FrameSet> sets);

  Backend& backend_;
  std::vector<std::uint16_t> sensors_;
  FrameSynchronizer sync_;
  BoundedQueue<Event> queue_;
  SnapshotFn on_snapshot_;
  mutable std::mutex mu_;
  std::vector<std::unique_ptr<ByteSource>> sources_;
  std::vector<std::thread> threads_;
  std::vector<SessionRecord> records_;
  std::exception_ptr error_;
  std::size_t snapshots_ = 0;
};

/// Writes snapshots/frame_NNNNNN.json (and sub-map exports) under `dir`.
SnapshotFn snapshot_writer(const std::filesystem::path& dir, std::map<std::uint16_t, ObjectModel> models,
                           bool export_submaps);

nlohmann::json sessions_to_json(std::span<const SessionRecord> sessions);
std::vector<SessionLog> sessions_from_json(const nlohmann::json& j);

struct RunSummary {
  std::size_t frames = 0;
  std::size_t snapshots = 0;
  std::vector<SessionRecord> sessions;
};

/// In-process sensors and backend over loopback TCP. Artifacts appear in
/// cfg.out only on success (written to a temporary sibling and renamed).
RunSummary run_pipeline(const RunConfig& cfg);

/// Standalone backend: accepts one connection per scenario camera.
RunSummary run_backend_node(const RunConfig& cfg);
/// Standalone simulated sensor streaming to cfg.addr.
void run_sensor_node(const RunConfig& cfg, std::uint16_t camera_id, const std::filesystem::path& replay_file = {});

/// Feeds recorded replay files of a run directory into a fresh backend and
/// writes its snapshots to `out`.
RunSummary run_replay(const std::filesystem::path& run_dir, const std::filesystem::path& out);
/// Streams the replay files to a remote backend, one connection per file.
void replay_to_backend(const std::filesystem::path& run_dir, const std::string& addr, bool realtime);

/// Ground truth and scenario export without running the pipeline.
void run_sim(const RunConfig& cfg);

struct EvalRequest {
  std::filesystem::path run_dir;
  std::filesystem::path gt_path;  // default: run_dir/gt.jsonl
  EvalOptions options;
};
/// Writes report.txt, report.json and eval_frames.jsonl into the run dir.
/// MissingArtifacts when ground truth, scenario or snapshots are absent.
std::vector<VariantReport> run_eval(const EvalRequest& req);

}  // namespace objmap
