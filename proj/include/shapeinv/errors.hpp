#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace shapeinv {

enum class ErrorCode
{
  EvenSampleCount,
  TooSmall,
  BandTooWide,
  LengthMismatch,
  NonHermitianSpectrum,
  ConstraintViolation,
  DegenerateAmplitude,
  ZeroReferenceAmplitude,
  DegenerateSpectrum,
  ZeroAmplitudeCoordinate,
  EmptySpectrum,
  DegenerateShape,
  NotConverged,
  ConfigInvalid,
  ParseError,
  GridMismatch,
  RaggedColumns,
  IoError
};

inline std::string_view
to_string(ErrorCode code)
{
  switch (code) {
    case ErrorCode::EvenSampleCount: return "EvenSampleCount";
    case ErrorCode::TooSmall: return "TooSmall";
    case ErrorCode::BandTooWide: return "BandTooWide";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::NonHermitianSpectrum: return "NonHermitianSpectrum";
    case ErrorCode::ConstraintViolation: return "ConstraintViolation";
    case ErrorCode::DegenerateAmplitude: return "DegenerateAmplitude";
    case ErrorCode::ZeroReferenceAmplitude: return "ZeroReferenceAmplitude";
    case ErrorCode::DegenerateSpectrum: return "DegenerateSpectrum";
    case ErrorCode::ZeroAmplitudeCoordinate: return "ZeroAmplitudeCoordinate";
    case ErrorCode::EmptySpectrum: return "EmptySpectrum";
    case ErrorCode::DegenerateShape: return "DegenerateShape";
    case ErrorCode::NotConverged: return "NotConverged";
    case ErrorCode::ConfigInvalid: return "ConfigInvalid";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::GridMismatch: return "GridMismatch";
    case ErrorCode::RaggedColumns: return "RaggedColumns";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

//! Exception carrying a machine-readable error code.
class Error : public std::runtime_error
{
public:
  Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what)
    , code_(code)
  {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

} // namespace shapeinv
