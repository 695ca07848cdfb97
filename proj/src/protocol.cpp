#include "objmap/protocol.hpp"

#include "objmap/error.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

namespace objmap {

namespace {

template <typename U>
void put_uint(std::uint8_t* p, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) p[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

template <typename U>
U get_uint(const std::uint8_t* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v = static_cast<U>(v | (static_cast<U>(p[i]) << (8 * i)));
  return v;
}

void put_f64(std::uint8_t* p, double v) { put_uint(p, std::bit_cast<std::uint64_t>(v)); }
void put_f32(std::uint8_t* p, float v) { put_uint(p, std::bit_cast<std::uint32_t>(v)); }
double get_f64(const std::uint8_t* p) { return std::bit_cast<double>(get_uint<std::uint64_t>(p)); }
float get_f32(const std::uint8_t* p) { return std::bit_cast<float>(get_uint<std::uint32_t>(p)); }

}  // namespace

std::array<std::uint8_t, kObservationSize> encode_observation(const ObjectObservation& obs) {
  std::array<std::uint8_t, kObservationSize> b{};
  std::uint8_t* p = b.data();
  put_uint(p + 0, obs.timestamp_us);
  put_uint(p + 8, obs.sensor_id);
  put_uint(p + 10, obs.class_id);
  const Vec3& t = obs.pose.t();
  const Quat& q = obs.pose.q();
  put_f64(p + 12, t.x());
  put_f64(p + 20, t.y());
  put_f64(p + 28, t.z());
  put_f64(p + 36, q.w());
  put_f64(p + 44, q.x());
  put_f64(p + 52, q.y());
  put_f64(p + 60, q.z());
  put_f32(p + 68, obs.assoc_dist);
  for (std::size_t i = 0; i < 3; ++i) put_f32(p + 72 + 4 * i, obs.ellipsoid[i]);
  return b;
}

ObjectObservation decode_observation(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != kObservationSize) {
    throw Error(ErrorCode::BadLength, "observation record is " + std::to_string(bytes.size()) + " bytes, expected 84");
  }
  const std::uint8_t* p = bytes.data();
  ObjectObservation obs;
  obs.timestamp_us = get_uint<std::uint64_t>(p);
  obs.sensor_id = get_uint<std::uint16_t>(p + 8);
  obs.class_id = get_uint<std::uint16_t>(p + 10);
  const Vec3 t(get_f64(p + 12), get_f64(p + 20), get_f64(p + 28));
  const Quat q(get_f64(p + 36), get_f64(p + 44), get_f64(p + 52), get_f64(p + 60));
  const double n = q.norm();
  if (!std::isfinite(n) || std::abs(n - 1.0) > 1e-6) throw Error(ErrorCode::BadQuaternion, "quaternion is not unit length");
  obs.pose = Pose::from_raw(t, q);
  obs.assoc_dist = get_f32(p + 68);
  for (std::size_t i = 0; i < 3; ++i) obs.ellipsoid[i] = get_f32(p + 72 + 4 * i);
  return obs;
}

Bytes encode_segment(const PointCloudSegment& seg) {
  if (seg.size() > kMaxSegmentPoints) throw Error(ErrorCode::BadLength, "segment exceeds 2^24 - 1 points");
  Bytes b(kSegmentHeaderSize + kSegmentPointSize * seg.size());
  std::uint8_t* p = b.data();
  put_uint(p, seg.timestamp_us);
  put_uint(p + 8, seg.sensor_id);
  put_uint(p + 10, seg.class_id);
  put_uint(p + 12, static_cast<std::uint32_t>(seg.size()));
  p += kSegmentHeaderSize;
  for (const auto& pt : seg.points) {
    put_f64(p, pt.xyz.x());
    put_f64(p + 8, pt.xyz.y());
    put_f64(p + 16, pt.xyz.z());
    put_uint(p + 24, pt.rgb);
    put_f32(p + 28, pt.confidence);
    put_uint(p + 32, pt.class_id);
    p += kSegmentPointSize;
  }
  return b;
}

PointCloudSegment decode_segment(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kSegmentHeaderSize) throw Error(ErrorCode::BadLength, "segment header truncated");
  const std::uint8_t* p = bytes.data();
  PointCloudSegment seg;
  seg.frame = CloudFrame::World;
  seg.timestamp_us = get_uint<std::uint64_t>(p);
  seg.sensor_id = get_uint<std::uint16_t>(p + 8);
  seg.class_id = get_uint<std::uint16_t>(p + 10);
  const std::uint32_t count = get_uint<std::uint32_t>(p + 12);
  if (count > kMaxSegmentPoints) throw Error(ErrorCode::BadLength, "segment point count out of range");
  const std::size_t body = bytes.size() - kSegmentHeaderSize;
  if (body != kSegmentPointSize * static_cast<std::size_t>(count)) {
    throw Error(ErrorCode::CountMismatch, "segment body of " + std::to_string(body) + " bytes for " +
                                              std::to_string(count) + " points");
  }
  seg.points.resize(count);
  p += kSegmentHeaderSize;
  for (auto& pt : seg.points) {
    pt.xyz = Vec3(get_f64(p), get_f64(p + 8), get_f64(p + 16));
    pt.rgb = get_uint<std::uint32_t>(p + 24);
    pt.confidence = get_f32(p + 28);
    pt.class_id = get_uint<std::uint32_t>(p + 32);
    p += kSegmentPointSize;
  }
  return seg;
}

std::array<std::uint8_t, kFrameEndSize> encode_frame_end(const FrameEnd& f) {
  std::array<std::uint8_t, kFrameEndSize> b{};
  put_uint(b.data(), f.timestamp_us);
  put_uint(b.data() + 8, f.sensor_id);
  put_uint(b.data() + 10, f.count);
  return b;
}

FrameEnd decode_frame_end(std::span<const std::uint8_t> bytes) {
  if (bytes.size() != kFrameEndSize) throw Error(ErrorCode::BadLength, "frame-end record must be 12 bytes");
  return {get_uint<std::uint64_t>(bytes.data()), get_uint<std::uint16_t>(bytes.data() + 8),
          get_uint<std::uint16_t>(bytes.data() + 10)};
}

void append_envelope(Bytes& out, std::uint8_t msg_type, std::span<const std::uint8_t> payload) {
  if (payload.size() > 0xFFFFFFFFull) throw Error(ErrorCode::BadLength, "payload too large for one envelope");
  const std::size_t at = out.size();
  out.resize(at + kEnvelopeHeaderSize + payload.size());
  std::uint8_t* p = out.data() + at;
  for (std::size_t i = 0; i < kMagic.size(); ++i) p[i] = kMagic[i];
  p[4] = kProtocolVersion;
  p[5] = msg_type;
  put_uint(p + 6, static_cast<std::uint32_t>(payload.size()));
  std::copy(payload.begin(), payload.end(), p + kEnvelopeHeaderSize);
}

Bytes make_envelope(std::uint8_t msg_type, std::span<const std::uint8_t> payload) {
  Bytes out;
  append_envelope(out, msg_type, payload);
  return out;
}

void EnvelopeParser::feed(std::span<const std::uint8_t> bytes) {
  if (pos_ > 0 && pos_ >= buf_.size() / 2) {
    buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(pos_));
    pos_ = 0;
  }
  buf_.insert(buf_.end(), bytes.begin(), bytes.end());
}

std::optional<Envelope> EnvelopeParser::next() {
  const std::size_t avail = buf_.size() - pos_;
  const std::uint8_t* p = buf_.data() + pos_;
  // Check the magic as soon as its bytes arrive so garbage fails fast.
  for (std::size_t i = 0; i < std::min(avail, kMagic.size()); ++i) {
    if (p[i] != kMagic[i]) {
      throw Error(ErrorCode::ProtocolError, "bad magic at stream offset " + std::to_string(consumed_));
    }
  }
  if (avail >= 5 && p[4] != kProtocolVersion) {
    throw Error(ErrorCode::ProtocolError, "unsupported protocol version " + std::to_string(p[4]));
  }
  if (avail < kEnvelopeHeaderSize) return std::nullopt;
  const std::uint32_t len = get_uint<std::uint32_t>(p + 6);
  if (avail < kEnvelopeHeaderSize + len) return std::nullopt;
  Envelope env;
  env.msg_type = p[5];
  env.payload.assign(p + kEnvelopeHeaderSize, p + kEnvelopeHeaderSize + len);
  pos_ += kEnvelopeHeaderSize + len;
  consumed_ += kEnvelopeHeaderSize + len;
  return env;
}

}  // namespace objmap
