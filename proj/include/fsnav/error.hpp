#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace fsnav {

enum class ErrorKind {
  InvalidChannels,
  ImageTooSmall,
  IndexError,
  ConfigError,
  DistortionError,
  AboveHorizon,
  BackendError,
  BackendTimeout,
  ProtocolError,
  ShapeError,
  DomainError,
  SceneError,
  IoError,
  ParseError,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidChannels: return "InvalidChannels";
    case ErrorKind::ImageTooSmall: return "ImageTooSmall";
    case ErrorKind::IndexError: return "IndexError";
    case ErrorKind::ConfigError: return "ConfigError";
    case ErrorKind::DistortionError: return "DistortionError";
    case ErrorKind::AboveHorizon: return "AboveHorizon";
    case ErrorKind::BackendError: return "BackendError";
    case ErrorKind::BackendTimeout: return "BackendTimeout";
    case ErrorKind::ProtocolError: return "ProtocolError";
    case ErrorKind::ShapeError: return "ShapeError";
    case ErrorKind::DomainError: return "DomainError";
    case ErrorKind::SceneError: return "SceneError";
    case ErrorKind::IoError: return "IoError";
    case ErrorKind::ParseError: return "ParseError";
  }
  return "Error";
}

/// Single exception type for the library; callers dispatch on kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace fsnav
