#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace lungseg {

enum class ErrorCode {
  FileNotFound,
  UnsupportedFormat,
  CorruptHeader,
  IoError,
  InvalidSpec,
  NoBodyFound,
  NoCandidateRegion,
  MissingSide,
  OutOfBounds,
  SeedOutsideDomain,
  InvalidTheta,
  InvalidParams,
  EmptyResult,
  WrongMode,
  InvalidStroke,
  StaleRecord,
  GeometryMismatch,
  EmptyInput,
  IncompleteTable,
  ConstantSeries,
  ParseError,
  IndexOutOfRange,
  InvalidWindow,
  WrongSession,
  NoMask,
  Timeout,
};

inline constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::FileNotFound: return "FileNotFound";
    case ErrorCode::UnsupportedFormat: return "UnsupportedFormat";
    case ErrorCode::CorruptHeader: return "CorruptHeader";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::NoBodyFound: return "NoBodyFound";
    case ErrorCode::NoCandidateRegion: return "NoCandidateRegion";
    case ErrorCode::MissingSide: return "MissingSide";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::SeedOutsideDomain: return "SeedOutsideDomain";
    case ErrorCode::InvalidTheta: return "InvalidTheta";
    case ErrorCode::InvalidParams: return "InvalidParams";
    case ErrorCode::EmptyResult: return "EmptyResult";
    case ErrorCode::WrongMode: return "WrongMode";
    case ErrorCode::InvalidStroke: return "InvalidStroke";
    case ErrorCode::StaleRecord: return "StaleRecord";
    case ErrorCode::GeometryMismatch: return "GeometryMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::IncompleteTable: return "IncompleteTable";
    case ErrorCode::ConstantSeries: return "ConstantSeries";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorCode::InvalidWindow: return "InvalidWindow";
    case ErrorCode::WrongSession: return "WrongSession";
    case ErrorCode::NoMask: return "NoMask";
    case ErrorCode::Timeout: return "Timeout";
  }
  return "Unknown";
}

/// Every failure raised by the library. `side()` is set for per-lung
/// failures (MissingSide, EmptyResult) so callers can ask for a manual seed.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, std::string side = {})
      : std::runtime_error(message), code_(code), side_(std::move(side)) {}

  ErrorCode code() const noexcept { return code_; }
  std::string_view code_name() const noexcept { return to_string(code_); }
  const std::string& side() const noexcept { return side_; }

 private:
  ErrorCode code_;
  std::string side_;
};

}  // namespace lungseg
