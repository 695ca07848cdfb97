#pragma once

#include "objmap/fusion.hpp"
#include "objmap/protocol.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>

namespace objmap {

class ByteSink {
 public:
  virtual ~ByteSink() = default;
  virtual void write(std::span<const std::uint8_t> bytes) = 0;
  virtual void close() {}
};

class ByteSource {
 public:
  virtual ~ByteSource() = default;
  /// Blocks until at least one byte is available; returns 0 at end of stream.
  virtual std::size_t read(std::span<std::uint8_t> buf) = 0;
  /// Unblocks a pending read from another thread (best effort).
  virtual void abort() {}
};

class MemorySink : public ByteSink {
 public:
  void write(std::span<const std::uint8_t> bytes) override { data.insert(data.end(), bytes.begin(), bytes.end()); }
  Bytes data;
};

class MemorySource : public ByteSource {
 public:
  explicit MemorySource(Bytes data) : data_(std::move(data)) {}
  std::size_t read(std::span<std::uint8_t> buf) override;

 private:
  Bytes data_;
  std::size_t pos_ = 0;
};

class FileSink : public ByteSink {
 public:
  explicit FileSink(const std::filesystem::path& path);
  void write(std::span<const std::uint8_t> bytes) override;
  void close() override;

 private:
  std::ofstream out_;
  std::filesystem::path path_;
};

class FileSource : public ByteSource {
 public:
  explicit FileSource(const std::filesystem::path& path);
  std::size_t read(std::span<std::uint8_t> buf) override;

 private:
  std::ifstream in_;
};

/// Writes every chunk to two sinks (live stream plus replay file).
class TeeSink : public ByteSink {
 public:
  TeeSink(ByteSink& a, ByteSink& b) : a_(a), b_(b) {}
  void write(std::span<const std::uint8_t> bytes) override {
    a_.write(bytes);
    b_.write(bytes);
  }
  void close() override {
    a_.close();
    b_.close();
  }

 private:
  ByteSink& a_;
  ByteSink& b_;
};

struct SocketAddress {
  std::string host = "127.0.0.1";
  std::uint16_t port = 7447;

  /// "host:port", "host" or ":port".
  static SocketAddress parse(const std::string& text);
  std::string str() const { return host + ":" + std::to_string(port); }
};

class TcpStream : public ByteSink, public ByteSource {
 public:
  explicit TcpStream(int fd) : fd_(fd) {}
  ~TcpStream() override;
  TcpStream(const TcpStream&) = delete;
  TcpStream& operator=(const TcpStream&) = delete;

  /// Retries refused connections until the timeout expires, then IoError.
  static std::unique_ptr<TcpStream> connect(const SocketAddress& addr,
                                            std::chrono::milliseconds timeout = std::chrono::milliseconds(5000));

  void write(std::span<const std::uint8_t> bytes) override;
  std::size_t read(std::span<std::uint8_t> buf) override;
  /// Half-closes the write side so the peer sees end of stream.
  void close() override;
  void abort() override;

 private:
  int fd_;
};

class TcpListener {
 public:
  /// Port 0 binds an ephemeral port; see port(). IoError on bind failure.
  explicit TcpListener(const SocketAddress& addr);
  ~TcpListener();
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;

  std::uint16_t port() const { return port_; }
  /// IoError if no peer connects within the timeout.
  std::unique_ptr<TcpStream> accept(std::chrono::milliseconds timeout = std::chrono::milliseconds(30000));

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

/// Blocking multi-producer queue with a capacity bound; push blocks while
/// full, which propagates back-pressure to the producer.
template <typename T>
class BoundedQueue {
 public:
  explicit BoundedQueue(std::size_t capacity) : capacity_(capacity == 0 ? 1 : capacity) {}

  /// Returns false if the queue was closed.
  bool push(T item) {
    std::unique_lock lock(mu_);
    not_full_.wait(lock, [&] { return closed_ || items_.size() < capacity_; });
    if (closed_) return false;
    items_.push_back(std::move(item));
    not_empty_.notify_one();
    return true;
  }

  /// Blocks until an item arrives; nullopt once closed and drained.
  std::optional<T> pop() {
    std::unique_lock lock(mu_);
    not_empty_.wait(lock, [&] { return closed_ || !items_.empty(); });
    if (items_.empty()) return std::nullopt;
    T item = std::move(items_.front());
    items_.pop_front();
    not_full_.notify_one();
    return item;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    not_empty_.notify_all();
    not_full_.notify_all();
  }

 private:
  std::mutex mu_;
  std::condition_variable not_empty_;
  std::condition_variable not_full_;
  std::deque<T> items_;
  std::size_t capacity_;
  bool closed_ = false;
};

enum class StreamMode { ObservationsOnly, WithSegments };

/// Payload byte and message counters per msg_type.
struct SessionStats {
  std::map<std::uint8_t, std::uint64_t> payload_bytes;
  std::map<std::uint8_t, std::uint64_t> messages;
  std::uint64_t frames = 0;
  std::uint64_t first_us = 0;
  std::uint64_t last_us = 0;

  void count(std::uint8_t msg_type, std::size_t payload);
  void saw_frame(std::uint64_t timestamp_us);
  std::uint64_t bytes(MsgType t) const;
};

/// Sensor side of a session: one envelope per observation (followed by its
/// segment in with-segments mode) and a frame-end marker per frame.
class SessionWriter {
 public:
  SessionWriter(ByteSink& sink, StreamMode mode) : sink_(sink), mode_(mode) {}

  void send(const SensorFrame& frame);
  void close() { sink_.close(); }
  const SessionStats& stats() const { return stats_; }

 private:
  ByteSink& sink_;
  StreamMode mode_;
  SessionStats stats_;
  Bytes buf_;
};

/// Backend side: demultiplexes envelopes by msg_type, pairs segments with
/// observations by (timestamp, sensor, ordinal) and skips unknown types.
class SessionReader {
 public:
  explicit SessionReader(ByteSource& source) : source_(source) {}

  /// Next complete sensor frame, or nullopt at end of stream. ProtocolError on
  /// framing violations, CorruptFile if the stream ends inside an envelope.
  std::optional<SensorFrame> next_frame();
  const SessionStats& stats() const { return stats_; }

 private:
  std::optional<Envelope> next_envelope();
  void handle(const Envelope& env);

  ByteSource& source_;
  EnvelopeParser parser_;
  SessionStats stats_;
  std::optional<SensorFrame> current_;
  std::size_t segments_in_frame_ = 0;
  std::deque<SensorFrame> ready_;
  bool eof_ = false;
};

/// Reads a replay file fully, validating envelope framing. CorruptFile names
/// the offset of a truncated or malformed envelope.
std::vector<Envelope> read_replay(const std::filesystem::path& path);

/// Re-emits a replay file's envelopes into a sink. With `realtime`, envelopes
/// are paced by the gaps between frame timestamps.
std::uint64_t replay_to(const std::filesystem::path& path, ByteSink& sink, bool realtime = false);

}  // namespace objmap
