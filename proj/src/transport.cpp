#include "objmap/transport.hpp"

#include "objmap/error.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cerrno>
#include <cstring>
#include <thread>

namespace objmap {

std::size_t MemorySource::read(std::span<std::uint8_t> buf) {
  const std::size_t n = std::min(buf.size(), data_.size() - pos_);
  std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(pos_), n, buf.begin());
  pos_ += n;
  return n;
}

FileSink::FileSink(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
  if (!out_) throw Error(ErrorCode::IoError, "cannot open " + path.string() + " for writing");
}

void FileSink::write(std::span<const std::uint8_t> bytes) {
  out_.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out_) throw Error(ErrorCode::IoError, "write failed on " + path_.string());
}

void FileSink::close() {
  if (out_.is_open()) out_.close();
}

FileSource::FileSource(const std::filesystem::path& path) : in_(path, std::ios::binary) {
  if (!in_) throw Error(ErrorCode::IoError, "cannot open " + path.string());
}

std::size_t FileSource::read(std::span<std::uint8_t> buf) {
  in_.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  return static_cast<std::size_t>(in_.gcount());
}

SocketAddress SocketAddress::parse(const std::string& text) {
  SocketAddress a;
  const auto colon = text.rfind(':');
  std::string host = colon == std::string::npos ? text : text.substr(0, colon);
  if (!host.empty()) a.host = host;
  if (colon != std::string::npos) {
    const std::string port = text.substr(colon + 1);
    try {
      std::size_t used = 0;
      const unsigned long p = std::stoul(port, &used);
      if (used != port.size() || p > 65535) throw std::out_of_range(port);
      a.port = static_cast<std::uint16_t>(p);
    } catch (const std::exception&) {
      throw Error(ErrorCode::ConfigError, "bad port in address '" + text + "'");
    }
  }
  return a;
}

namespace {

sockaddr_in resolve(const SocketAddress& addr) {
  sockaddr_in sa{};
  sa.sin_family = AF_INET;
  sa.sin_port = htons(addr.port);
  if (addr.host == "localhost") {
    sa.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  } else if (inet_pton(AF_INET, addr.host.c_str(), &sa.sin_addr) != 1) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (getaddrinfo(addr.host.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
      throw Error(ErrorCode::IoError, "cannot resolve host '" + addr.host + "'");
    }
    sa.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    freeaddrinfo(res);
  }
  return sa;
}

std::string errno_text() { return std::strerror(errno); }

}  // namespace

TcpStream::~TcpStream() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<TcpStream> TcpStream::connect(const SocketAddress& addr, std::chrono::milliseconds timeout) {
  const sockaddr_in sa = resolve(addr);
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  while (true) {
    const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw Error(ErrorCode::IoError, "socket: " + errno_text());
    if (::connect(fd, reinterpret_cast<const sockaddr*>(&sa), sizeof(sa)) == 0) {
      const int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      return std::make_unique<TcpStream>(fd);
    }
    const int err = errno;
    ::close(fd);
    if ((err != ECONNREFUSED && err != EAGAIN) || std::chrono::steady_clock::now() >= deadline) {
      throw Error(ErrorCode::IoError, "connect to " + addr.str() + ": " + std::strerror(err));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
  }
}

void TcpStream::write(std::span<const std::uint8_t> bytes) {
  std::size_t off = 0;
  while (off < bytes.size()) {
    const ssize_t n = ::send(fd_, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error(ErrorCode::IoError, "send: " + errno_text());
    }
    off += static_cast<std::size_t>(n);
  }
}

std::size_t TcpStream::read(std::span<std::uint8_t> buf) {
  while (true) {
    const ssize_t n = ::recv(fd_, buf.data(), buf.size(), 0);
    if (n >= 0) return static_cast<std::size_t>(n);
    if (errno == EINTR) continue;
    if (errno == ECONNRESET) return 0;
    throw Error(ErrorCode::IoError, "recv: " + errno_text());
  }
}

void TcpStream::close() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_WR);
}

void TcpStream::abort() {
  if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

TcpListener::TcpListener(const SocketAddress& addr) {
  const sockaddr_in sa = resolve(addr);
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw Error(ErrorCode::IoError, "socket: " + errno_text());
  const int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(fd_, reinterpret_cast<const sockaddr*>(&sa), sizeof(sa)) != 0 || ::listen(fd_, 64) != 0) {
    const std::string msg = errno_text();
    ::close(fd_);
    fd_ = -1;
    throw Error(ErrorCode::IoError, "cannot bind " + addr.str() + ": " + msg);
  }
  sockaddr_in bound{};
  socklen_t len = sizeof(bound);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

std::unique_ptr<TcpStream> TcpListener::accept(std::chrono::milliseconds timeout) {
  pollfd pfd{fd_, POLLIN, 0};
  while (true) {
    const int r = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
    if (r < 0 && errno == EINTR) continue;
    if (r < 0) throw Error(ErrorCode::IoError, "poll: " + errno_text());
    if (r == 0) throw Error(ErrorCode::IoError, "timed out waiting for a sensor connection");
    break;
  }
  const int fd = ::accept(fd_, nullptr, nullptr);
  if (fd < 0) throw Error(ErrorCode::IoError, "accept: " + errno_text());
  return std::make_unique<TcpStream>(fd);
}

void SessionStats::count(std::uint8_t msg_type, std::size_t payload) {
  payload_bytes[msg_type] += payload;
  ++messages[msg_type];
}

void SessionStats::saw_frame(std::uint64_t timestamp_us) {
  if (frames == 0) first_us = timestamp_us;
  last_us = timestamp_us;
  ++frames;
}

std::uint64_t SessionStats::bytes(MsgType t) const {
  const auto it = payload_bytes.find(static_cast<std::uint8_t>(t));
  return it == payload_bytes.end() ? 0 : it->second;
}

void SessionWriter::send(const SensorFrame& frame) {
  if (frame.observations.size() > 0xFFFF) throw Error(ErrorCode::BadLength, "too many observations in one frame");
  buf_.clear();
  for (const auto& obs : frame.observations) {
    const auto rec = encode_observation(obs);
    append_envelope(buf_, static_cast<std::uint8_t>(MsgType::Observation), rec);
    stats_.count(static_cast<std::uint8_t>(MsgType::Observation), rec.size());
    if (mode_ == StreamMode::WithSegments) {
      PointCloudSegment seg = obs.segment ? *obs.segment : PointCloudSegment{};
      seg.timestamp_us = obs.timestamp_us;
      seg.sensor_id = obs.sensor_id;
      seg.class_id = obs.class_id;
      const Bytes payload = encode_segment(seg);
      append_envelope(buf_, static_cast<std::uint8_t>(MsgType::Segment), payload);
      stats_.count(static_cast<std::uint8_t>(MsgType::Segment), payload.size());
    }
  }
  const auto marker = encode_frame_end(
      {frame.timestamp_us, frame.sensor_id, static_cast<std::uint16_t>(frame.observations.size())});
  append_envelope(buf_, static_cast<std::uint8_t>(MsgType::FrameEnd), marker);
  stats_.count(static_cast<std::uint8_t>(MsgType::FrameEnd), marker.size());
  stats_.saw_frame(frame.timestamp_us);
  sink_.write(buf_);
}

std::optional<Envelope> SessionReader::next_envelope() {
  std::array<std::uint8_t, 65536> chunk;
  while (true) {
    if (auto env = parser_.next()) return env;
    if (eof_) return std::nullopt;
    const std::size_t n = source_.read(chunk);
    if (n == 0) {
      eof_ = true;
      if (parser_.pending() > 0) {
        throw Error(ErrorCode::CorruptFile,
                    "stream ended inside the envelope at offset " + std::to_string(parser_.offset()));
      }
      return std::nullopt;
    }
    parser_.feed(std::span(chunk.data(), n));
  }
}

void SessionReader::handle(const Envelope& env) {
  stats_.count(env.msg_type, env.payload.size());
  auto close_current = [&] {
    if (!current_) return;
    stats_.saw_frame(current_->timestamp_us);
    ready_.push_back(std::move(*current_));
    current_.reset();
    segments_in_frame_ = 0;
  };
  auto open = [&](std::uint64_t ts, std::uint16_t sensor) {
    if (current_ && (current_->timestamp_us != ts || current_->sensor_id != sensor)) close_current();
    if (!current_) {
      current_.emplace();
      current_->timestamp_us = ts;
      current_->sensor_id = sensor;
    }
  };

  switch (env.msg_type) {
    case static_cast<std::uint8_t>(MsgType::Observation): {
      ObjectObservation obs = decode_observation(env.payload);
      open(obs.timestamp_us, obs.sensor_id);
      current_->observations.push_back(std::move(obs));
      break;
    }
    case static_cast<std::uint8_t>(MsgType::Segment): {
      PointCloudSegment seg = decode_segment(env.payload);
      if (!current_ || current_->timestamp_us != seg.timestamp_us || current_->sensor_id != seg.sensor_id ||
          segments_in_frame_ >= current_->observations.size()) {
        throw Error(ErrorCode::ProtocolError, "segment without a matching observation");
      }
      ObjectObservation& obs = current_->observations[segments_in_frame_++];
      if (obs.class_id != seg.class_id) throw Error(ErrorCode::ProtocolError, "segment class differs from observation");
      obs.segment = std::move(seg);
      break;
    }
    case static_cast<std::uint8_t>(MsgType::FrameEnd): {
      const FrameEnd f = decode_frame_end(env.payload);
      open(f.timestamp_us, f.sensor_id);
      if (current_->observations.size() != f.count) {
        throw Error(ErrorCode::CountMismatch, "frame-end announces " + std::to_string(f.count) + " observations, got " +
                                                  std::to_string(current_->observations.size()));
      }
      close_current();
      break;
    }
    default:
      break;  // unknown message types are skipped
  }
}

std::optional<SensorFrame> SessionReader::next_frame() {
  while (ready_.empty()) {
    auto env = next_envelope();
    if (!env) {
      if (current_) {
        stats_.saw_frame(current_->timestamp_us);
        ready_.push_back(std::move(*current_));
        current_.reset();
      }
      break;
    }
    handle(*env);
  }
  if (ready_.empty()) return std::nullopt;
  SensorFrame f = std::move(ready_.front());
  ready_.pop_front();
  return f;
}

std::vector<Envelope> read_replay(const std::filesystem::path& path) {
  FileSource src(path);
  EnvelopeParser parser;
  std::vector<Envelope> out;
  std::array<std::uint8_t, 65536> chunk;
  try {
    while (true) {
      while (auto env = parser.next()) out.push_back(std::move(*env));
      const std::size_t n = src.read(chunk);
      if (n == 0) break;
      parser.feed(std::span(chunk.data(), n));
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::ProtocolError) throw;
    throw Error(ErrorCode::CorruptFile, path.string() + ": " + e.what());
  }
  if (parser.pending() > 0) {
    throw Error(ErrorCode::CorruptFile,
                path.string() + ": truncated envelope at offset " + std::to_string(parser.offset()));
  }
  return out;
}

std::uint64_t replay_to(const std::filesystem::path& path, ByteSink& sink, bool realtime) {
  const std::vector<Envelope> envs = read_replay(path);
  std::uint64_t total = 0;
  std::optional<std::uint64_t> first_ts;
  const auto start = std::chrono::steady_clock::now();
  Bytes buf;
  for (const auto& env : envs) {
    buf.clear();
    append_envelope(buf, env.msg_type, env.payload);
    sink.write(buf);
    total += buf.size();
    if (realtime && env.msg_type == static_cast<std::uint8_t>(MsgType::FrameEnd)) {
      const FrameEnd f = decode_frame_end(env.payload);
      if (!first_ts) first_ts = f.timestamp_us;
      std::this_thread::sleep_until(start + std::chrono::microseconds(f.timestamp_us - *first_ts));
    }
  }
  sink.close();
  return total;
}

}  // namespace objmap
