#include "objmap/run.hpp"

#include "objmap/error.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace objmap {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string to_string(Representation r) { return r == Representation::Mesh ? "mesh" : "submap"; }

Representation parse_representation(const std::string& text) {
  if (text == "mesh") return Representation::Mesh;
  if (text == "submap") return Representation::Submap;
  throw Error(ErrorCode::ConfigError, "unknown representation '" + text + "' (expected mesh or submap)");
}

std::string variant_name(IcpMode icp) {
  switch (icp) {
    case IcpMode::None:
      return "pnp";
    case IcpMode::Local:
      return "icp_local";
    case IcpMode::Backend:
      return "icp_backend";
  }
  return "pnp";
}

void RunConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::ConfigError, m); };
  try {
    pose.validate();
    tracker.validate();
  } catch (const Error& e) {
    fail(e.what());
  }
  if (!(fusion.sync_window_ms >= 0.0)) fail("sync_window_ms must be non-negative");
  if (!(fusion.gating_dist > 0.0) || !(fusion.weight_eps > 0.0)) fail("fusion gate and weight eps must be positive");
  if (!(segmentation.cluster_tolerance > 0.0) || segmentation.sor_k == 0 || !(segmentation.sor_stddev_mult >= 0.0)) {
    fail("segmentation parameters out of range");
  }
  if (!(submap_resolution > 0.0)) fail("submap resolution must be positive");
  if (max_segment_points == 0) fail("max_segment_points must be positive");
  if (queue_capacity == 0) fail("queue_capacity must be positive");
}

void apply_config_json(RunConfig& cfg, const json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ConfigError, "config file must hold a JSON object");
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "scenario") {
        cfg.scenario_path = v.get<std::string>();
      } else if (key == "seed") {
        if (v.is_null()) {
          cfg.seed.reset();
        } else {
          cfg.seed = v.get<std::uint64_t>();
        }
      } else if (key == "mode") {
        cfg.mode = parse_representation(v.get<std::string>());
      } else if (key == "addr") {
        cfg.addr = v.get<std::string>();
      } else if (key == "out") {
        cfg.out = v.get<std::string>();
      } else if (key == "icp") {
        cfg.icp = parse_icp_mode(v.get<std::string>());
      } else if (key == "variants") {
        cfg.extra_variants.clear();
        for (const auto& s : v) cfg.extra_variants.push_back(parse_icp_mode(s.get<std::string>()));
      } else if (key == "tau_dist") {
        cfg.pose.tau_dist = v.get<double>();
      } else if (key == "ransac_iters") {
        cfg.pose.ransac_iters = v.get<int>();
      } else if (key == "ransac_reproj_thresh") {
        cfg.pose.ransac_reproj_thresh = v.get<double>();
      } else if (key == "icp_max_iters") {
        cfg.pose.icp_max_iters = v.get<int>();
      } else if (key == "icp_corr_dist") {
        cfg.pose.icp_corr_dist = v.get<double>();
      } else if (key == "icp_eps") {
        cfg.pose.icp_eps = v.get<double>();
      } else if (key == "snap_ground_height") {
        cfg.pose.snap_ground_height = v.get<bool>();
      } else if (key == "cluster_tolerance") {
        cfg.segmentation.cluster_tolerance = v.get<double>();
      } else if (key == "min_cluster_points") {
        cfg.segmentation.min_cluster_points = v.get<std::size_t>();
      } else if (key == "sor_k") {
        cfg.segmentation.sor_k = v.get<std::size_t>();
      } else if (key == "sor_stddev_mult") {
        cfg.segmentation.sor_stddev_mult = v.get<double>();
      } else if (key == "sync_window_ms") {
        cfg.fusion.sync_window_ms = v.get<double>();
      } else if (key == "gating_dist") {
        cfg.fusion.gating_dist = v.get<double>();
      } else if (key == "weight_eps") {
        cfg.fusion.weight_eps = v.get<double>();
      } else if (key == "tau_track") {
        cfg.tracker.tau_track = v.get<double>();
      } else if (key == "window") {
        cfg.tracker.window = v.get<std::size_t>();
      } else if (key == "max_unseen_s") {
        cfg.tracker.max_unseen_s = v.get<double>();
      } else if (key == "min_hits_confirm") {
        cfg.tracker.min_hits_confirm = v.get<std::uint32_t>();
      } else if (key == "tau_occ") {
        cfg.tracker.tau_occ = v.get<std::uint32_t>();
      } else if (key == "submap_resolution") {
        cfg.submap_resolution = v.get<double>();
      } else if (key == "max_segment_points") {
        cfg.max_segment_points = v.get<std::size_t>();
      } else if (key == "queue_capacity") {
        cfg.queue_capacity = v.get<std::size_t>();
      } else if (key == "write_replay") {
        cfg.write_replay = v.get<bool>();
      } else {
        throw Error(ErrorCode::ConfigError, "unknown config key '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("config: ") + e.what());
  }
}

json run_config_to_json(const RunConfig& cfg) {
  json variants = json::array();
  for (auto v : cfg.extra_variants) variants.push_back(to_string(v));
  json j = {{"scenario", cfg.scenario_path.string()},
            {"mode", to_string(cfg.mode)},
            {"addr", cfg.addr},
            {"icp", to_string(cfg.icp)},
            {"variants", variants},
            {"tau_dist", cfg.pose.tau_dist},
            {"ransac_iters", cfg.pose.ransac_iters},
            {"ransac_reproj_thresh", cfg.pose.ransac_reproj_thresh},
            {"icp_max_iters", cfg.pose.icp_max_iters},
            {"icp_corr_dist", cfg.pose.icp_corr_dist},
            {"icp_eps", cfg.pose.icp_eps},
            {"snap_ground_height", cfg.pose.snap_ground_height},
            {"cluster_tolerance", cfg.segmentation.cluster_tolerance},
            {"min_cluster_points", cfg.segmentation.min_cluster_points},
            {"sor_k", cfg.segmentation.sor_k},
            {"sor_stddev_mult", cfg.segmentation.sor_stddev_mult},
            {"sync_window_ms", cfg.fusion.sync_window_ms},
            {"gating_dist", cfg.fusion.gating_dist},
            {"weight_eps", cfg.fusion.weight_eps},
            {"tau_track", cfg.tracker.tau_track},
            {"window", cfg.tracker.window},
            {"max_unseen_s", cfg.tracker.max_unseen_s},
            {"min_hits_confirm", cfg.tracker.min_hits_confirm},
            {"tau_occ", cfg.tracker.tau_occ},
            {"submap_resolution", cfg.submap_resolution},
            {"max_segment_points", cfg.max_segment_points},
            {"queue_capacity", cfg.queue_capacity},
            {"write_replay", cfg.write_replay}};
  j["seed"] = cfg.seed ? json(*cfg.seed) : json(nullptr);
  return j;
}

ScenarioConfig resolve_scenario(const RunConfig& cfg) {
  ScenarioConfig s = cfg.scenario_path.empty() ? default_scenario() : load_scenario(cfg.scenario_path);
  if (cfg.seed) s.seed = *cfg.seed;
  s.validate();
  return s;
}

namespace {

bool streams_segments(const RunConfig& cfg, IcpMode icp) {
  return cfg.mode == Representation::Submap || icp == IcpMode::Backend;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "write failed on " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingArtifacts, "missing " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CorruptFile, path.string() + ": " + e.what());
  }
}

std::string frame_name(std::size_t frame) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%06zu", frame);
  return buf;
}

// Builds into "<out>.tmp" and swaps it into place only when the body succeeds.
template <typename Body>
auto with_staging(const fs::path& out, Body body) {
  fs::path tmp = out;
  tmp += ".tmp";
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  try {
    auto result = body(tmp);
    fs::remove_all(out);
    fs::rename(tmp, out);
    return result;
  } catch (...) {
    std::error_code ec;
    fs::remove_all(tmp, ec);
    throw;
  }
}

std::size_t camera_index(const ScenarioConfig& s, std::uint16_t id) {
  for (std::size_t i = 0; i < s.cameras.size(); ++i) {
    if (s.cameras[i].id == id) return i;
  }
  throw Error(ErrorCode::ConfigError, "scenario has no camera " + std::to_string(id));
}

void write_gt(const fs::path& path, std::span<const GroundTruthFrame> gt) {
  std::string text;
  for (const auto& f : gt) text += gt_frame_to_json(f).dump() + "\n";
  write_text(path, text);
}

SocketAddress connect_address(const SocketAddress& bind, std::uint16_t port) {
  SocketAddress a = bind;
  if (a.host == "0.0.0.0") a.host = "127.0.0.1";
  a.port = port;
  return a;
}

void rethrow_first(std::span<const std::exception_ptr> errors) {
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

// One variant of an in-process run: sensors and backend over loopback TCP.
RunSummary run_variant(const RunConfig& cfg, const ScenarioConfig& scenario, std::span<const GroundTruthFrame> gt,
                       IcpMode icp, const fs::path& dir, bool write_replay) {
  fs::create_directories(dir);
  const auto models = scenario.models_by_class();
  Backend backend(backend_config(cfg, icp), models);
  BackendServer server(backend, scenario.camera_ids(), cfg.fusion.sync_window_ms, cfg.queue_capacity,
                       snapshot_writer(dir, models, cfg.mode == Representation::Submap));
  const SocketAddress bind = SocketAddress::parse(cfg.addr);
  TcpListener listener(bind);
  const SocketAddress target = connect_address(bind, listener.port());
  const std::size_t n = scenario.cameras.size();
  if (write_replay) fs::create_directories(dir / "replay");

  std::thread acceptor([&] {
    try {
      for (std::size_t i = 0; i < n; ++i) server.attach(listener.accept());
    } catch (...) {
      server.fail(std::current_exception());
    }
  });

  const SensorConfig scfg = sensor_config(cfg, icp, scenario.seed);
  std::vector<std::exception_ptr> sensor_errors(n);
  std::vector<std::optional<SessionStats>> sent(n);
  std::vector<std::thread> sensors;
  for (std::size_t i = 0; i < n; ++i) {
    sensors.emplace_back([&, i] {
      try {
        auto stream = TcpStream::connect(target);
        std::unique_ptr<FileSink> file;
        std::unique_ptr<TeeSink> tee;
        ByteSink* sink = stream.get();
        if (write_replay) {
          char name[32];
          std::snprintf(name, sizeof(name), "sensor_%02u.omap", static_cast<unsigned>(scenario.cameras[i].id));
          file = std::make_unique<FileSink>(dir / "replay" / name);
          tee = std::make_unique<TeeSink>(*stream, *file);
          sink = tee.get();
        }
        SessionWriter writer(*sink, streams_segments(cfg, icp) ? StreamMode::WithSegments : StreamMode::ObservationsOnly);
        run_sensor(scenario, gt, i, scfg, writer);
        writer.close();
        sent[i] = writer.stats();
      } catch (...) {
        sensor_errors[i] = std::current_exception();
      }
    });
  }

  server.run(n);
  acceptor.join();
  for (auto& t : sensors) t.join();
  if (auto e = server.error()) std::rethrow_exception(e);
  rethrow_first(sensor_errors);

  RunSummary summary;
  summary.frames = gt.size();
  summary.snapshots = server.snapshots();
  summary.sessions = server.sessions();
  for (auto& rec : summary.sessions) {
    for (std::size_t i = 0; i < n; ++i) {
      if (scenario.cameras[i].id == rec.sensor_id) rec.sent = sent[i];
    }
  }
  std::sort(summary.sessions.begin(), summary.sessions.end(),
            [](const SessionRecord& a, const SessionRecord& b) { return a.sensor_id < b.sensor_id; });
  write_text(dir / "sessions.json", sessions_to_json(summary.sessions).dump(2) + "\n");
  return summary;
}

json run_json(const RunConfig& cfg, const ScenarioConfig& scenario, const RunSummary& s) {
  json variants = json::array({variant_name(cfg.icp)});
  for (auto v : cfg.extra_variants) variants.push_back(variant_name(v));
  json cfg_json = run_config_to_json(cfg);
  return {{"scenario", scenario.name}, {"seed", scenario.seed},         {"variant", variant_name(cfg.icp)},
          {"variants", variants},      {"frames", s.frames},            {"snapshots", s.snapshots},
          {"config", cfg_json},        {"stream_segments", streams_segments(cfg, cfg.icp)}};
}

}  // namespace

SensorConfig sensor_config(const RunConfig& cfg, IcpMode icp, std::uint64_t seed) {
  SensorConfig s;
  s.pose = cfg.pose;
  s.segmentation = cfg.segmentation;
  s.icp = icp;
  s.include_segments = streams_segments(cfg, icp);
  s.max_segment_points = cfg.max_segment_points;
  s.seed = seed;
  return s;
}

BackendConfig backend_config(const RunConfig& cfg, IcpMode icp) {
  BackendConfig b;
  b.fusion = cfg.fusion;
  b.tracker = cfg.tracker;
  b.tracker.integrate_submaps = cfg.mode == Representation::Submap;
  b.tracker.submap_resolution = cfg.submap_resolution;
  b.pose = cfg.pose;
  b.icp = icp;
  return b;
}

void run_sensor(const ScenarioConfig& scenario, std::span<const GroundTruthFrame> gt, std::size_t camera_index,
                const SensorConfig& cfg, SessionWriter& writer) {
  const ScenarioCamera& cam = scenario.cameras.at(camera_index);
  const SensorPipeline pipeline(cam.id, cam.model, scenario.models_by_class(), cfg);
  for (const auto& frame : gt) {
    const std::vector<SimDetection> dets = observe(scenario, frame, camera_index);
    writer.send(pipeline.process(frame.index, frame.timestamp_us, dets));
  }
}

BackendServer::BackendServer(Backend& backend, std::vector<std::uint16_t> sensors, double window_ms,
                             std::size_t queue_capacity, SnapshotFn on_snapshot)
    : backend_(backend),
      sensors_(std::move(sensors)),
      sync_(sensors_, window_ms),
      queue_(queue_capacity),
      on_snapshot_(std::move(on_snapshot)) {}

BackendServer::~BackendServer() {
  queue_.close();
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(mu_);
    for (auto& s : sources_) s->abort();
    threads.swap(threads_);
  }
  for (auto& t : threads) t.join();
}

void BackendServer::attach(std::unique_ptr<ByteSource> source) {
  std::lock_guard lock(mu_);
  const std::size_t idx = records_.size();
  records_.emplace_back();
  ByteSource* raw = source.get();
  sources_.push_back(std::move(source));
  threads_.emplace_back([this, idx, raw] {
    SessionReader reader(*raw);
    Event end;
    end.session = idx;
    end.end = true;
    try {
      while (auto f = reader.next_frame()) {
        Event ev;
        ev.session = idx;
        ev.frame = std::move(*f);
        if (!queue_.push(std::move(ev))) return;
      }
    } catch (...) {
      end.error = std::current_exception();
    }
    {
      std::lock_guard lock(mu_);
      records_[idx].received = reader.stats();
    }
    queue_.push(std::move(end));
  });
}

void BackendServer::fail(std::exception_ptr error) {
  Event ev;
  ev.fatal = true;
  ev.error = std::move(error);
  queue_.push(std::move(ev));
}

void BackendServer::process_ready(std::vector<FrameSet> sets) {
  for (const auto& fs : sets) {
    const SceneSnapshot snap = backend_.process(fs);
    if (on_snapshot_) on_snapshot_(snap);
    ++snapshots_;
  }
}

void BackendServer::run(std::size_t expected_sessions) {
  std::size_t ended = 0;
  std::map<std::size_t, std::uint16_t> session_sensor;
  std::set<std::size_t> rejected;
  const std::set<std::uint16_t> known(sensors_.begin(), sensors_.end());
  auto record_error = [&](std::size_t session, std::exception_ptr e) {
    std::lock_guard lock(mu_);
    if (!error_) error_ = e;
    try {
      std::rethrow_exception(e);
    } catch (const std::exception& ex) {
      records_[session].error = ex.what();
    } catch (...) {
      records_[session].error = "unknown error";
    }
  };

  while (ended < expected_sessions) {
    std::optional<Event> ev = queue_.pop();
    if (!ev) break;
    if (ev->fatal) {
      std::lock_guard lock(mu_);
      if (!error_) error_ = ev->error;
      break;
    }
    if (ev->frame) {
      if (rejected.contains(ev->session)) continue;
      const std::uint16_t id = ev->frame->sensor_id;
      const auto seen = session_sensor.find(ev->session);
      std::string problem;
      if (!known.contains(id)) {
        problem = "unexpected sensor id " + std::to_string(id);
      } else if (seen == session_sensor.end()) {
        for (const auto& [s, other] : session_sensor) {
          if (other == id) problem = "sensor id " + std::to_string(id) + " already connected";
        }
      } else if (seen->second != id) {
        problem = "sensor id changed within one session";
      }
      if (!problem.empty()) {
        rejected.insert(ev->session);
        record_error(ev->session, std::make_exception_ptr(Error(ErrorCode::ProtocolError, problem)));
        continue;
      }
      if (seen == session_sensor.end()) {
        session_sensor[ev->session] = id;
        std::lock_guard lock(mu_);
        records_[ev->session].sensor_id = id;
      }
      try {
        sync_.push(std::move(*ev->frame));
      } catch (const Error& e) {
        rejected.insert(ev->session);
        record_error(ev->session, std::make_exception_ptr(Error(ErrorCode::ProtocolError, e.what())));
        if (auto it = session_sensor.find(ev->session); it != session_sensor.end()) sync_.finish(it->second);
        continue;
      }
      process_ready(sync_.pop_ready());
    } else if (ev->end) {
      ++ended;
      if (ev->error) record_error(ev->session, ev->error);
      if (auto it = session_sensor.find(ev->session); it != session_sensor.end()) sync_.finish(it->second);
      process_ready(sync_.pop_ready());
    }
  }
  process_ready(sync_.flush());
  queue_.close();
  std::lock_guard lock(mu_);
  for (auto& s : sources_) s->abort();
}

std::vector<SessionRecord> BackendServer::sessions() const {
  std::lock_guard lock(mu_);
  return records_;
}

std::exception_ptr BackendServer::error() const {
  std::lock_guard lock(mu_);
  return error_;
}

SnapshotFn snapshot_writer(const fs::path& dir, std::map<std::uint16_t, ObjectModel> models, bool export_submaps) {
  fs::create_directories(dir / "snapshots");
  if (export_submaps) fs::create_directories(dir / "submaps");
  return [dir, models = std::move(models), export_submaps](const SceneSnapshot& snap) {
    const std::string name = frame_name(snap.frame);
    std::string ref;
    if (export_submaps) {
      const fs::path sub = dir / "submaps" / name;
      bool any = false;
      for (const auto& t : snap.tracks) {
        if (!t.submap) continue;
        if (!any) fs::create_directories(sub);
        any = true;
        char file[48];
        std::snprintf(file, sizeof(file), "track_%06llu.txt", static_cast<unsigned long long>(t.id));
        std::ostringstream os;
        export_submap(os, *t.submap, t.pose);
        write_text(sub / file, os.str());
      }
      ref = "submaps/" + name + "/track_{track}.txt";
    }
    write_text(dir / "snapshots" / (name + ".json"), snapshot_to_json(snap, models, ref).dump(2) + "\n");
  };
}

namespace {

json stats_json(const SessionStats& s) {
  json bytes = json::object();
  json msgs = json::object();
  for (const auto& [t, b] : s.payload_bytes) bytes[std::to_string(t)] = b;
  for (const auto& [t, m] : s.messages) msgs[std::to_string(t)] = m;
  return {{"frames", s.frames},
          {"first_us", s.first_us},
          {"last_us", s.last_us},
          {"payload_bytes", bytes},
          {"messages", msgs}};
}

}  // namespace

json sessions_to_json(std::span<const SessionRecord> sessions) {
  json arr = json::array();
  for (const auto& s : sessions) {
    json o = {{"sensor_id", s.sensor_id}, {"received", stats_json(s.received)}};
    if (s.sent) o["sent"] = stats_json(*s.sent);
    if (!s.error.empty()) o["error"] = s.error;
    arr.push_back(std::move(o));
  }
  return {{"sessions", arr}};
}

std::vector<SessionLog> sessions_from_json(const json& j) {
  std::vector<SessionLog> out;
  try {
    for (const auto& s : j.at("sessions")) {
      SessionLog log;
      log.sensor_id = s.at("sensor_id").get<std::uint16_t>();
      const json& r = s.at("received");
      log.frames = r.at("frames").get<std::uint64_t>();
      for (const auto& [k, v] : r.at("payload_bytes").items()) {
        log.payload_bytes[static_cast<std::uint8_t>(std::stoi(k))] = v.get<std::uint64_t>();
      }
      for (const auto& [k, v] : r.at("messages").items()) {
        log.messages[static_cast<std::uint8_t>(std::stoi(k))] = v.get<std::uint64_t>();
      }
      out.push_back(std::move(log));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("sessions log: ") + e.what());
  }
  return out;
}

RunSummary run_pipeline(const RunConfig& cfg) {
  cfg.validate();
  const ScenarioConfig scenario = resolve_scenario(cfg);
  const std::vector<GroundTruthFrame> gt = generate(scenario);
  return with_staging(cfg.out, [&](const fs::path& tmp) {
    write_text(tmp / "scenario.json", scenario_to_json(scenario).dump(2) + "\n");
    write_gt(tmp / "gt.jsonl", gt);
    RunSummary summary = run_variant(cfg, scenario, gt, cfg.icp, tmp, cfg.write_replay);
    for (IcpMode v : cfg.extra_variants) {
      if (v == cfg.icp) continue;
      run_variant(cfg, scenario, gt, v, tmp / "variants" / variant_name(v), false);
    }
    write_text(tmp / "run.json", run_json(cfg, scenario, summary).dump(2) + "\n");
    return summary;
  });
}

RunSummary run_backend_node(const RunConfig& cfg) {
  cfg.validate();
  const ScenarioConfig scenario = resolve_scenario(cfg);
  const SocketAddress bind = SocketAddress::parse(cfg.addr);
  TcpListener listener(bind);
  std::cerr << "objmap backend listening on " << bind.host << ":" << listener.port() << " for "
            << scenario.cameras.size() << " sensors\n";
  return with_staging(cfg.out, [&](const fs::path& tmp) {
    const auto models = scenario.models_by_class();
    Backend backend(backend_config(cfg, cfg.icp), models);
    BackendServer server(backend, scenario.camera_ids(), cfg.fusion.sync_window_ms, cfg.queue_capacity,
                         snapshot_writer(tmp, models, cfg.mode == Representation::Submap));
    const std::size_t n = scenario.cameras.size();
    std::thread acceptor([&] {
      try {
        for (std::size_t i = 0; i < n; ++i) server.attach(listener.accept(std::chrono::minutes(10)));
      } catch (...) {
        server.fail(std::current_exception());
      }
    });
    server.run(n);
    acceptor.join();
    if (auto e = server.error()) std::rethrow_exception(e);
    RunSummary summary;
    summary.frames = scenario.frame_count();
    summary.snapshots = server.snapshots();
    summary.sessions = server.sessions();
    std::sort(summary.sessions.begin(), summary.sessions.end(),
              [](const SessionRecord& a, const SessionRecord& b) { return a.sensor_id < b.sensor_id; });
    write_text(tmp / "scenario.json", scenario_to_json(scenario).dump(2) + "\n");
    write_text(tmp / "sessions.json", sessions_to_json(summary.sessions).dump(2) + "\n");
    RunConfig rc = cfg;
    rc.extra_variants.clear();
    write_text(tmp / "run.json", run_json(rc, scenario, summary).dump(2) + "\n");
    return summary;
  });
}

void run_sensor_node(const RunConfig& cfg, std::uint16_t camera_id, const fs::path& replay_file) {
  cfg.validate();
  const ScenarioConfig scenario = resolve_scenario(cfg);
  const std::size_t idx = camera_index(scenario, camera_id);
  const std::vector<GroundTruthFrame> gt = generate(scenario);
  auto stream = TcpStream::connect(SocketAddress::parse(cfg.addr), std::chrono::seconds(30));
  std::unique_ptr<FileSink> file;
  std::unique_ptr<TeeSink> tee;
  ByteSink* sink = stream.get();
  if (!replay_file.empty()) {
    file = std::make_unique<FileSink>(replay_file);
    tee = std::make_unique<TeeSink>(*stream, *file);
    sink = tee.get();
  }
  SessionWriter writer(*sink, streams_segments(cfg, cfg.icp) ? StreamMode::WithSegments : StreamMode::ObservationsOnly);
  run_sensor(scenario, gt, idx, sensor_config(cfg, cfg.icp, scenario.seed), writer);
  writer.close();
}

namespace {

std::vector<fs::path> replay_files(const fs::path& run_dir) {
  const fs::path dir = run_dir / "replay";
  if (!fs::is_directory(dir)) throw Error(ErrorCode::MissingArtifacts, "no replay directory in " + run_dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".omap") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw Error(ErrorCode::MissingArtifacts, "no replay files in " + dir.string());
  return files;
}

RunConfig config_of_run(const fs::path& run_dir) {
  const json run = read_json(run_dir / "run.json");
  RunConfig cfg;
  json c = run.at("config");
  c.erase("scenario");
  apply_config_json(cfg, c);
  return cfg;
}

}  // namespace

RunSummary run_replay(const fs::path& run_dir, const fs::path& out) {
  RunConfig cfg = config_of_run(run_dir);
  const ScenarioConfig scenario = parse_scenario(read_json(run_dir / "scenario.json"), run_dir);
  const std::vector<fs::path> files = replay_files(run_dir);
  cfg.extra_variants.clear();
  return with_staging(out, [&](const fs::path& tmp) {
    const auto models = scenario.models_by_class();
    Backend backend(backend_config(cfg, cfg.icp), models);
    BackendServer server(backend, scenario.camera_ids(), cfg.fusion.sync_window_ms, cfg.queue_capacity,
                         snapshot_writer(tmp, models, cfg.mode == Representation::Submap));
    for (const auto& f : files) server.attach(std::make_unique<FileSource>(f));
    server.run(files.size());
    if (auto e = server.error()) std::rethrow_exception(e);
    RunSummary summary;
    summary.frames = scenario.frame_count();
    summary.snapshots = server.snapshots();
    summary.sessions = server.sessions();
    std::sort(summary.sessions.begin(), summary.sessions.end(),
              [](const SessionRecord& a, const SessionRecord& b) { return a.sensor_id < b.sensor_id; });
    write_text(tmp / "scenario.json", scenario_to_json(scenario).dump(2) + "\n");
    write_text(tmp / "sessions.json", sessions_to_json(summary.sessions).dump(2) + "\n");
    write_text(tmp / "run.json", run_json(cfg, scenario, summary).dump(2) + "\n");
    if (fs::exists(run_dir / "gt.jsonl")) fs::copy_file(run_dir / "gt.jsonl", tmp / "gt.jsonl");
    return summary;
  });
}

void replay_to_backend(const fs::path& run_dir, const std::string& addr, bool realtime) {
  const std::vector<fs::path> files = replay_files(run_dir);
  for (const auto& f : files) read_replay(f);  // validate before connecting
  const SocketAddress target = SocketAddress::parse(addr);
  std::vector<std::exception_ptr> errors(files.size());
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < files.size(); ++i) {
    threads.emplace_back([&, i] {
      try {
        auto stream = TcpStream::connect(target, std::chrono::seconds(30));
        replay_to(files[i], *stream, realtime);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  rethrow_first(errors);
}

void run_sim(const RunConfig& cfg) {
  const ScenarioConfig scenario = resolve_scenario(cfg);
  const std::vector<GroundTruthFrame> gt = generate(scenario);
  with_staging(cfg.out, [&](const fs::path& tmp) {
    write_text(tmp / "scenario.json", scenario_to_json(scenario).dump(2) + "\n");
    write_gt(tmp / "gt.jsonl", gt);
    std::string det;
    for (const auto& f : gt) {
      for (std::size_t c = 0; c < scenario.cameras.size(); ++c) {
        for (const auto& d : observe(scenario, f, c)) {
          json j = {{"frame", f.index},
                    {"camera", scenario.cameras[c].id},
                    {"object", d.object},
                    {"class_id", d.class_id},
                    {"segment_points", d.segment.size()}};
          if (d.keypoints) {
            json kps = json::array();
            for (std::size_t l = 0; l < d.keypoints->points.size(); ++l) {
              const Pixel& p = d.keypoints->points[l];
              kps.push_back({{"u", p.u}, {"v", p.v}, {"valid", static_cast<bool>(d.keypoints->valid[l])}});
            }
            j["keypoints"] = kps;
          }
          det += j.dump() + "\n";
        }
      }
    }
    write_text(tmp / "detections.jsonl", det);
    return 0;
  });
}

namespace {

std::vector<json> load_snapshots(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::MissingArtifacts, "missing snapshot directory " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<json> out;
  for (const auto& f : files) out.push_back(read_json(f));
  return out;
}

std::vector<GroundTruthFrame> load_gt(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::MissingArtifacts, "missing ground truth " + path.string());
  std::vector<GroundTruthFrame> gt;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      gt.push_back(gt_frame_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw Error(ErrorCode::CorruptFile, path.string() + ": " + e.what());
    }
  }
  return gt;
}

}  // namespace

std::vector<VariantReport> run_eval(const EvalRequest& req) {
  const fs::path& dir = req.run_dir;
  const fs::path gt_path = req.gt_path.empty() ? dir / "gt.jsonl" : req.gt_path;
  if (!fs::exists(dir / "scenario.json")) throw Error(ErrorCode::MissingArtifacts, "missing scenario.json in " + dir.string());
  if (!fs::exists(gt_path)) throw Error(ErrorCode::MissingArtifacts, "missing ground truth " + gt_path.string());
  const ScenarioConfig scenario = parse_scenario(read_json(dir / "scenario.json"), dir);
  const std::vector<GroundTruthFrame> gt = load_gt(gt_path);

  std::vector<std::pair<std::string, fs::path>> variants;
  std::string primary = "primary";
  if (fs::exists(dir / "run.json")) primary = read_json(dir / "run.json").value("variant", primary);
  variants.emplace_back(primary, dir);
  if (fs::is_directory(dir / "variants")) {
    std::vector<fs::path> subs;
    for (const auto& e : fs::directory_iterator(dir / "variants")) {
      if (e.is_directory()) subs.push_back(e.path());
    }
    std::sort(subs.begin(), subs.end());
    for (const auto& s : subs) variants.emplace_back(s.filename().string(), s);
  }

  std::vector<VariantReport> reports;
  std::string frames_log;
  for (const auto& [name, vdir] : variants) {
    const std::vector<json> snaps = load_snapshots(vdir / "snapshots");
    VariantReport rep = evaluate_snapshots(scenario, gt, snaps, req.options);
    rep.name = name;
    if (fs::exists(vdir / "sessions.json")) {
      const std::vector<SessionLog> logs = sessions_from_json(read_json(vdir / "sessions.json"));
      rep.bandwidth = bandwidth_report(logs, scenario.frame_rate_hz);
    }
    for (const auto& r : rep.records) {
      json iou = json::object();
      for (const auto& [c, v] : r.iou) iou[std::to_string(c)] = v;
      frames_log += json({{"variant", name},
                          {"frame", r.frame},
                          {"object", r.object},
                          {"track_id", r.track_id},
                          {"trans_cm", r.trans_cm},
                          {"rot_deg", r.rot_deg},
                          {"iou", iou}})
                        .dump() +
                    "\n";
    }
    reports.push_back(std::move(rep));
  }
  write_text(dir / "report.txt", report_to_text(reports));
  write_text(dir / "report.json", report_to_json(reports).dump(2) + "\n");
  write_text(dir / "eval_frames.jsonl", frames_log);
  return reports;
}

}  // namespace objmap
