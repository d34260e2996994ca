#pragma once

#include <stdexcept>
#include <string>

namespace slsmil {

enum class ErrorCode {
  InvalidArgument,
  DegenerateAxis,
  ImageTooSmall,
  ChannelSizeMismatch,
  CenterOutsideImage,
  TooFewImages,
  ShapeMismatch,
  EmptyBag,
  InsufficientData,
  IoFailure,
  BadMagic,
  VersionMismatch,
  PlacementFailure,
  ParseError,
  ConfigError,
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::DegenerateAxis: return "DegenerateAxis";
    case ErrorCode::ImageTooSmall: return "ImageTooSmall";
    case ErrorCode::ChannelSizeMismatch: return "ChannelSizeMismatch";
    case ErrorCode::CenterOutsideImage: return "CenterOutsideImage";
    case ErrorCode::TooFewImages: return "TooFewImages";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::EmptyBag: return "EmptyBag";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::PlacementFailure: return "PlacementFailure";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Every failure raised by the library carries one of the codes above so
/// callers (mostly the CLI) can map it to a diagnostic without string parsing.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace slsmil
