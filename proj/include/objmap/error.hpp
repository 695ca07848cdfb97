#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace objmap {

enum class ErrorCode {
  InvalidArgument,
  BehindCamera,
  InvalidDepth,
  EmptyInput,
  TooFewKeypoints,
  NoConsensus,
  DegenerateSegment,
  EmptyGroup,
  NoSegments,
  BadLength,
  BadQuaternion,
  CountMismatch,
  ProtocolError,
  ConfigError,
  CorruptFile,
  DimensionMismatch,
  MissingArtifacts,
  IoError,
};

std::string_view to_string(ErrorCode code);

// Every failure raised by the library carries a code so callers and tests can
// branch on the kind of failure without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace objmap
