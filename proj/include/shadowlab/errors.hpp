#pragma once

#include <stdexcept>
#include <string>

namespace shadowlab {

// Trajectory left the declared model domain; values beyond are undefined.
struct OutOfDomainError : std::runtime_error {
  explicit OutOfDomainError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical integration exceeded its step budget.
struct StepBudgetError : std::runtime_error {
  explicit StepBudgetError(const std::string& what) : std::runtime_error(what) {}
};

// System fails a structural precondition (spectra, dimensions, section data).
struct ModelError : std::invalid_argument {
  explicit ModelError(const std::string& what) : std::invalid_argument(what) {}
};

// No frame of the supported obstruction cases exists for this system.
struct FrameError : std::runtime_error {
  explicit FrameError(const std::string& what) : std::runtime_error(what) {}
};

// Certificate search exhausted its escalation schedule.
struct CertificationError : std::runtime_error {
  explicit CertificationError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace shadowlab
