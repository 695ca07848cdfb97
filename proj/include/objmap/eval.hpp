#pragma once

#include "objmap/geometry.hpp"
#include "objmap/image.hpp"
#include "objmap/object_model.hpp"
#include "objmap/scenario.hpp"
#include "objmap/simulator.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace objmap {

/// 100 * |t_est - t_gt| (cm).
double trans_error_cm(const Pose& est, const Pose& gt);
/// Quaternion geodesic distance (degrees).
double rot_error_deg(const Pose& est, const Pose& gt);

/// |pred ∩ dilate(gt)| / |pred ∪ gt| with a square kernel of side dilate_px;
/// 1 when both are empty. DimensionMismatch on differing sizes.
double iou_dilated(const Mask& pred, const Mask& gt, int dilate_px = 10);

/// Silhouette of the model cloud at `pose`, every point drawn as a disc of
/// radius splat_radius * fx / z.
Mask render_model_mask(const ObjectModel& model, const Pose& pose, const CameraModel& cam);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population
  std::size_t n = 0;
};
MeanStd mean_std(std::span<const double> values);

/// One logged sensor session.
struct SessionLog {
  std::uint16_t sensor_id = 0;
  std::uint64_t frames = 0;
  std::map<std::uint8_t, std::uint64_t> payload_bytes;  // by msg_type
  std::map<std::uint8_t, std::uint64_t> messages;
};

struct BandwidthReport {
  double duration_s = 0.0;  // per session, frames / frame rate
  double observation_bps = 0.0;  // payload bytes per second, mean over sessions
  double segment_bps = 0.0;
  double other_bps = 0.0;
  std::map<std::uint16_t, std::pair<double, double>> per_sensor;  // (observation, segment) B/s
};

/// Payload bytes divided by the session duration (frames / frame_rate),
/// split by message type and averaged over sessions. Idle input gives zeros.
BandwidthReport bandwidth_report(std::span<const SessionLog> sessions, double frame_rate_hz);

struct EvalOptions {
  double match_gate = 1.0;  // m, same-class estimate/ground-truth pairing radius
  bool iou = true;
  int dilate_px = 10;
};

/// Per matched (frame, object) errors, the log the aggregates are computed from.
struct FrameRecord {
  std::size_t frame = 0;
  std::uint32_t object = 0;
  std::uint64_t track_id = 0;
  double trans_cm = 0.0;
  double rot_deg = 0.0;
  std::map<std::uint16_t, double> iou;  // by camera, only cameras that see the object
};

struct VariantReport {
  std::string name;
  std::size_t frames = 0;
  std::size_t matched = 0;
  std::size_t missed = 0;
  std::size_t false_positives = 0;
  std::size_t id_switches = 0;
  MeanStd trans_cm;
  MeanStd rot_deg;
  std::map<std::uint16_t, MeanStd> iou_per_camera;
  MeanStd iou_total;
  std::vector<FrameRecord> records;
  std::optional<BandwidthReport> bandwidth;
};

/// Compares snapshot JSON documents (one per frame, in order) against ground
/// truth. Estimates and ground-truth objects are paired per frame by global
/// greedy nearest distance within the match gate, same class only.
VariantReport evaluate_snapshots(const ScenarioConfig& scenario, std::span<const GroundTruthFrame> gt,
                                 std::span<const nlohmann::json> snapshots, const EvalOptions& opts);

/// Recomputes the aggregates of a report from its records.
void aggregate(VariantReport& report);

nlohmann::json report_to_json(std::span<const VariantReport> variants);
/// Aligned text tables: pose errors and IoU per variant, IoU per camera,
/// bandwidth.
std::string report_to_text(std::span<const VariantReport> variants);

nlohmann::json gt_frame_to_json(const GroundTruthFrame& f);
GroundTruthFrame gt_frame_from_json(const nlohmann::json& j);

}  // namespace objmap
