#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace subdiff {

enum class ErrorKind {
  GraphDisconnected,
  EigenFailure,
  RankDeficient,
  InfeasibleConstraints,
  SpectralViolation,
  NotPSD,
  CombinerRejected,
  SingularProjection,
  NonFiniteIterate,
  SeriesDiverges,
  NotConverged,
  InvalidConfig,
  OutputUnwritable,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::GraphDisconnected: return "GraphDisconnected";
    case ErrorKind::EigenFailure: return "EigenFailure";
    case ErrorKind::RankDeficient: return "RankDeficient";
    case ErrorKind::InfeasibleConstraints: return "InfeasibleConstraints";
    case ErrorKind::SpectralViolation: return "SpectralViolation";
    case ErrorKind::NotPSD: return "NotPSD";
    case ErrorKind::CombinerRejected: return "CombinerRejected";
    case ErrorKind::SingularProjection: return "SingularProjection";
    case ErrorKind::NonFiniteIterate: return "NonFiniteIterate";
    case ErrorKind::SeriesDiverges: return "SeriesDiverges";
    case ErrorKind::NotConverged: return "NotConverged";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::OutputUnwritable: return "OutputUnwritable";
  }
  return "Unknown";
}

/// Configuration and I/O problems map to CLI exit code 1, everything else
/// is a numerical failure (exit code 2).
constexpr bool is_configuration_error(ErrorKind kind) {
  return kind == ErrorKind::InvalidConfig ||
         kind == ErrorKind::OutputUnwritable;
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace subdiff
