#include "objmap/eval.hpp"

#include "objmap/error.hpp"
#include "objmap/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <tuple>

namespace objmap {

using json = nlohmann::json;

double trans_error_cm(const Pose& est, const Pose& gt) { return 100.0 * (est.t() - gt.t()).norm(); }

double rot_error_deg(const Pose& est, const Pose& gt) { return geodesic_deg(est.q(), gt.q()); }

double iou_dilated(const Mask& pred, const Mask& gt, int dilate_px) {
  if (pred.width != gt.width || pred.height != gt.height) {
    throw Error(ErrorCode::DimensionMismatch, "IoU of masks with different sizes");
  }
  // The dilated ground truth only widens what counts as a hit; the union uses
  // the original mask so a perfect prediction still scores 1.
  const Mask g = dilate(gt, dilate_px);
  std::size_t inter = 0;
  std::size_t uni = 0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    inter += static_cast<std::size_t>(pred.data[i] & g.data[i]);
    uni += static_cast<std::size_t>(pred.data[i] | gt.data[i]);
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

Mask render_model_mask(const ObjectModel& model, const Pose& pose, const CameraModel& cam) {
  Mask mask(cam.width, cam.height);
  const Pose cam_from_obj = compose(cam.world_to_camera(), pose);
  for (const auto& p : model.cloud) {
    const Vec3 pc = apply(cam_from_obj, p);
    if (pc.z() <= 1e-6) continue;
    fill_disc(mask, project(cam, pc), model.splat_radius * cam.fx / pc.z());
  }
  return mask;
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd m;
  m.n = values.size();
  if (values.empty()) return m;
  double sum = 0.0;
  for (double v : values) sum += v;
  m.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - m.mean) * (v - m.mean);
  m.std = std::sqrt(sq / static_cast<double>(values.size()));
  return m;
}

BandwidthReport bandwidth_report(std::span<const SessionLog> sessions, double frame_rate_hz) {
  BandwidthReport r;
  if (sessions.empty() || !(frame_rate_hz > 0.0)) return r;
  auto get = [](const SessionLog& s, MsgType t) {
    const auto it = s.payload_bytes.find(static_cast<std::uint8_t>(t));
    return it == s.payload_bytes.end() ? 0.0 : static_cast<double>(it->second);
  };
  std::size_t counted = 0;
  for (const auto& s : sessions) {
    if (s.frames == 0) {
      r.per_sensor[s.sensor_id] = {0.0, 0.0};
      continue;
    }
    const double dur = static_cast<double>(s.frames) / frame_rate_hz;
    r.duration_s = std::max(r.duration_s, dur);
    const double obs = get(s, MsgType::Observation) / dur;
    const double seg = get(s, MsgType::Segment) / dur;
    double other = 0.0;
    for (const auto& [t, b] : s.payload_bytes) {
      if (t != static_cast<std::uint8_t>(MsgType::Observation) && t != static_cast<std::uint8_t>(MsgType::Segment)) {
        other += static_cast<double>(b);
      }
    }
    r.observation_bps += obs;
    r.segment_bps += seg;
    r.other_bps += other / dur;
    r.per_sensor[s.sensor_id] = {obs, seg};
    ++counted;
  }
  if (counted > 0) {
    r.observation_bps /= static_cast<double>(counted);
    r.segment_bps /= static_cast<double>(counted);
    r.other_bps /= static_cast<double>(counted);
  }
  return r;
}

namespace {

struct Estimate {
  std::uint64_t track_id;
  std::uint16_t class_id;
  Pose pose;
};

Vec3 json_vec3(const json& j) { return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

Pose json_pose(const json& position, const json& orientation) {
  return Pose::from_raw(json_vec3(position), Quat(orientation.at(0).get<double>(), orientation.at(1).get<double>(),
                                                  orientation.at(2).get<double>(), orientation.at(3).get<double>()));
}

json mean_std_json(const MeanStd& m) { return {{"mean", m.mean}, {"std", m.std}, {"n", m.n}}; }

}  // namespace

void aggregate(VariantReport& report) {
  std::vector<double> t;
  std::vector<double> r;
  std::vector<double> all_iou;
  std::map<std::uint16_t, std::vector<double>> cam_iou;
  for (const auto& rec : report.records) {
    t.push_back(rec.trans_cm);
    r.push_back(rec.rot_deg);
    for (const auto& [cam, v] : rec.iou) {
      cam_iou[cam].push_back(v);
      all_iou.push_back(v);
    }
  }
  report.trans_cm = mean_std(t);
  report.rot_deg = mean_std(r);
  report.iou_total = mean_std(all_iou);
  report.iou_per_camera.clear();
  for (const auto& [cam, v] : cam_iou) report.iou_per_camera[cam] = mean_std(v);
  report.matched = report.records.size();
}

VariantReport evaluate_snapshots(const ScenarioConfig& scenario, std::span<const GroundTruthFrame> gt,
                                 std::span<const json> snapshots, const EvalOptions& opts) {
  VariantReport rep;
  std::map<std::string, const ObjectModel*> models;
  for (const auto& [name, m] : scenario.models) models[name] = &m;
  std::map<std::uint64_t, std::size_t> gt_by_time;
  for (std::size_t i = 0; i < gt.size(); ++i) gt_by_time[gt[i].timestamp_us] = i;
  std::map<std::uint32_t, std::uint64_t> last_track;

  for (const auto& snap : snapshots) {
    const std::uint64_t ts = snap.at("timestamp_us").get<std::uint64_t>();
    // Frame-sets are stamped with their earliest member; pick the nearest
    // ground-truth instant.
    auto it = gt_by_time.lower_bound(ts);
    if (it == gt_by_time.end() || (it != gt_by_time.begin() && ts - std::prev(it)->first < it->first - ts)) {
      if (it == gt_by_time.begin()) continue;
      --it;
    }
    const GroundTruthFrame& g = gt[it->second];
    ++rep.frames;

    std::vector<Estimate> est;
    for (const auto& o : snap.at("objects")) {
      est.push_back({o.at("track_id").get<std::uint64_t>(), o.at("class_id").get<std::uint16_t>(),
                     json_pose(o.at("position"), o.at("orientation"))});
    }
    struct Cand {
      double d;
      std::size_t e;
      std::size_t o;
    };
    std::vector<Cand> cands;
    for (std::size_t e = 0; e < est.size(); ++e) {
      for (std::size_t o = 0; o < g.objects.size(); ++o) {
        if (est[e].class_id != g.objects[o].class_id) continue;
        const double d = (est[e].pose.t() - g.objects[o].pose.t()).norm();
        if (d <= opts.match_gate) cands.push_back({d, e, o});
      }
    }
    std::sort(cands.begin(), cands.end(),
              [](const Cand& a, const Cand& b) { return std::tie(a.d, a.e, a.o) < std::tie(b.d, b.e, b.o); });
    std::vector<bool> e_used(est.size(), false);
    std::vector<bool> o_used(g.objects.size(), false);
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (const auto& c : cands) {
      if (e_used[c.e] || o_used[c.o]) continue;
      e_used[c.e] = o_used[c.o] = true;
      pairs.emplace_back(c.o, c.e);
    }
    std::sort(pairs.begin(), pairs.end());
    rep.missed += static_cast<std::size_t>(std::count(o_used.begin(), o_used.end(), false));
    rep.false_positives += static_cast<std::size_t>(std::count(e_used.begin(), e_used.end(), false));

    for (const auto& [o, e] : pairs) {
      const GroundTruthObject& go = g.objects[o];
      FrameRecord rec;
      rec.frame = g.index;
      rec.object = go.index;
      rec.track_id = est[e].track_id;
      rec.trans_cm = trans_error_cm(est[e].pose, go.pose);
      rec.rot_deg = rot_error_deg(est[e].pose, go.pose);
      const auto prev = last_track.find(go.index);
      if (prev != last_track.end() && prev->second != rec.track_id) ++rep.id_switches;
      last_track[go.index] = rec.track_id;
      if (opts.iou) {
        const ObjectModel& m = *models.at(go.model);
        for (const auto& cam : scenario.cameras) {
          const Mask gm = render_model_mask(m, go.pose, cam.model);
          if (gm.count() == 0) continue;
          rec.iou[cam.id] = iou_dilated(render_model_mask(m, est[e].pose, cam.model), gm, opts.dilate_px);
        }
      }
      rep.records.push_back(std::move(rec));
    }
  }
  aggregate(rep);
  return rep;
}

json report_to_json(std::span<const VariantReport> variants) {
  json j;
  j["variants"] = json::array();
  for (const auto& v : variants) {
    json o = {{"name", v.name},
              {"frames", v.frames},
              {"matched", v.matched},
              {"missed", v.missed},
              {"false_positives", v.false_positives},
              {"id_switches", v.id_switches},
              {"trans_cm", mean_std_json(v.trans_cm)},
              {"rot_deg", mean_std_json(v.rot_deg)},
              {"iou_total", mean_std_json(v.iou_total)}};
    o["iou_per_camera"] = json::object();
    for (const auto& [cam, m] : v.iou_per_camera) o["iou_per_camera"][std::to_string(cam)] = mean_std_json(m);
    if (v.bandwidth) {
      const BandwidthReport& b = *v.bandwidth;
      json per = json::object();
      for (const auto& [s, p] : b.per_sensor) per[std::to_string(s)] = {{"observation", p.first}, {"segment", p.second}};
      o["bandwidth_Bps"] = {{"duration_s", b.duration_s},
                            {"observation", b.observation_bps},
                            {"segment", b.segment_bps},
                            {"other", b.other_bps},
                            {"per_sensor", per}};
    }
    j["variants"].push_back(std::move(o));
  }
  return j;
}

std::string report_to_text(std::span<const VariantReport> variants) {
  std::string out;
  char line[256];
  auto add = [&](const char* s) { out += s; };

  add("Pose error and reprojection IoU\n");
  std::snprintf(line, sizeof(line), "%-12s %10s %10s %10s %10s %8s %8s %8s %7s %6s\n", "variant", "E_trans/cm",
                "sd_trans", "E_rot/deg", "sd_rot", "E_IoU", "sd_IoU", "matched", "missed", "id_sw");
  add(line);
  for (const auto& v : variants) {
    std::snprintf(line, sizeof(line), "%-12s %10.4f %10.4f %10.4f %10.4f %8.4f %8.4f %8zu %7zu %6zu\n", v.name.c_str(),
                  v.trans_cm.mean, v.trans_cm.std, v.rot_deg.mean, v.rot_deg.std, v.iou_total.mean, v.iou_total.std,
                  v.matched, v.missed, v.id_switches);
    add(line);
  }

  std::set<std::uint16_t> cams;
  for (const auto& v : variants) {
    for (const auto& [c, m] : v.iou_per_camera) cams.insert(c);
  }
  if (!cams.empty()) {
    add("\nIoU per camera (mean / sd)\n");
    std::snprintf(line, sizeof(line), "%-12s", "variant");
    add(line);
    for (auto c : cams) {
      std::snprintf(line, sizeof(line), " %15s", ("cam" + std::to_string(c)).c_str());
      add(line);
    }
    add("\n");
    for (const auto& v : variants) {
      std::snprintf(line, sizeof(line), "%-12s", v.name.c_str());
      add(line);
      for (auto c : cams) {
        const auto it = v.iou_per_camera.find(c);
        if (it == v.iou_per_camera.end()) {
          std::snprintf(line, sizeof(line), " %15s", "-");
        } else {
          std::snprintf(line, sizeof(line), "   %6.4f/%6.4f", it->second.mean, it->second.std);
        }
        add(line);
      }
      add("\n");
    }
  }

  bool any_bw = false;
  for (const auto& v : variants) any_bw = any_bw || v.bandwidth.has_value();
  if (any_bw) {
    add("\nBandwidth per sensor session (payload bytes/s)\n");
    std::snprintf(line, sizeof(line), "%-12s %14s %14s %14s\n", "variant", "observations", "segments", "total");
    add(line);
    for (const auto& v : variants) {
      if (!v.bandwidth) continue;
      const BandwidthReport& b = *v.bandwidth;
      std::snprintf(line, sizeof(line), "%-12s %14.2f %14.2f %14.2f\n", v.name.c_str(), b.observation_bps,
                    b.segment_bps, b.observation_bps + b.segment_bps);
      add(line);
    }
  }
  return out;
}

json gt_frame_to_json(const GroundTruthFrame& f) {
  json j;
  j["frame"] = f.index;
  j["timestamp_us"] = f.timestamp_us;
  j["objects"] = json::array();
  for (const auto& o : f.objects) {
    const Vec3& p = o.pose.t();
    const Quat& q = o.pose.q();
    j["objects"].push_back({{"index", o.index},
                            {"class_id", o.class_id},
                            {"model", o.model},
                            {"position", {p.x(), p.y(), p.z()}},
                            {"orientation", {q.w(), q.x(), q.y(), q.z()}}});
  }
  j["visibility"] = json::array();
  for (const auto& v : f.visibility) {
    j["visibility"].push_back({{"camera", v.camera},
                               {"object", v.object},
                               {"visible_keypoints", v.visible_keypoints},
                               {"fraction", v.fraction}});
  }
  return j;
}

GroundTruthFrame gt_frame_from_json(const json& j) {
  GroundTruthFrame f;
  f.index = j.at("frame").get<std::size_t>();
  f.timestamp_us = j.at("timestamp_us").get<std::uint64_t>();
  for (const auto& o : j.at("objects")) {
    f.objects.push_back({o.at("index").get<std::uint32_t>(), o.at("class_id").get<std::uint16_t>(),
                         o.at("model").get<std::string>(), json_pose(o.at("position"), o.at("orientation"))});
  }
  if (j.contains("visibility")) {
    for (const auto& v : j.at("visibility")) {
      f.visibility.push_back({v.at("camera").get<std::uint16_t>(), v.at("object").get<std::uint32_t>(),
                              v.at("visible_keypoints").get<std::vector<std::size_t>>(),
                              v.at("fraction").get<double>()});
    }
  }
  return f;
}

}  // namespace objmap
