#pragma once

#include "objmap/observation.hpp"
#include "objmap/point_cloud.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace objmap {

// Wire layout, all little-endian IEEE-754:
//
//   observation (84 B): ts u64 | sensor u16 | class u16 | position 3xf64 |
//                       quaternion wxyz 4xf64 | assoc_dist f32 | ellipsoid 3xf32
//   segment: header (16 B) ts u64 | sensor u16 | class u16 | count u32,
//            then 36 B per point: xyz 3xf64 | rgb u32 | confidence f32 | class u32
//   frame end (12 B): ts u64 | sensor u16 | observation count u16
//   envelope: 'O' 'M' 'A' 'P' | version u8 | msg_type u8 | payload_len u32 | payload

inline constexpr std::size_t kObservationSize = 84;
inline constexpr std::size_t kSegmentHeaderSize = 16;
inline constexpr std::size_t kSegmentPointSize = 36;
inline constexpr std::size_t kFrameEndSize = 12;
inline constexpr std::size_t kEnvelopeHeaderSize = 10;
inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::array<std::uint8_t, 4> kMagic{'O', 'M', 'A', 'P'};
inline constexpr std::uint32_t kMaxSegmentPoints = (1u << 24) - 1;

enum class MsgType : std::uint8_t {
  Observation = 1,
  Segment = 2,
  FrameEnd = 3,  // closes one sensor frame; lets the receiver see empty frames
};

using Bytes = std::vector<std::uint8_t>;

std::array<std::uint8_t, kObservationSize> encode_observation(const ObjectObservation& obs);
/// Throws BadLength unless exactly 84 bytes, BadQuaternion if | |q| - 1 | > 1e-6.
ObjectObservation decode_observation(std::span<const std::uint8_t> bytes);

/// Throws BadLength if the segment has 2^24 or more points.
Bytes encode_segment(const PointCloudSegment& seg);
/// Decoded segments are tagged as world frame. Throws BadLength on a short
/// header, CountMismatch when the body disagrees with the point count.
PointCloudSegment decode_segment(std::span<const std::uint8_t> bytes);

struct FrameEnd {
  std::uint64_t timestamp_us = 0;
  std::uint16_t sensor_id = 0;
  std::uint16_t count = 0;

  bool operator==(const FrameEnd&) const = default;
};
std::array<std::uint8_t, kFrameEndSize> encode_frame_end(const FrameEnd& f);
FrameEnd decode_frame_end(std::span<const std::uint8_t> bytes);

struct Envelope {
  std::uint8_t msg_type = 0;
  Bytes payload;
};

void append_envelope(Bytes& out, std::uint8_t msg_type, std::span<const std::uint8_t> payload);
Bytes make_envelope(std::uint8_t msg_type, std::span<const std::uint8_t> payload);

/// Incremental envelope parser over an arbitrary chunking of the byte stream.
class EnvelopeParser {
 public:
  void feed(std::span<const std::uint8_t> bytes);
  /// Next complete envelope, or nullopt if more bytes are needed. Throws
  /// ProtocolError on bad magic or version.
  std::optional<Envelope> next();
  /// Bytes buffered but not yet returned as a complete envelope.
  std::size_t pending() const { return buf_.size() - pos_; }
  /// Stream offset of the first pending byte.
  std::uint64_t offset() const { return consumed_; }

 private:
  Bytes buf_;
  std::size_t pos_ = 0;
  std::uint64_t consumed_ = 0;
};

}  // namespace objmap
