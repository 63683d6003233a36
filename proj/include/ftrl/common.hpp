#ifndef FTRL_COMMON_HPP
#define FTRL_COMMON_HPP

#include <bit>
#include <stdexcept>
#include <string>

namespace ftrl {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

/// Thrown when a caller breaks a documented precondition (bad shapes,
/// out-of-range arguments). These are programming errors, not data errors.
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

/// Thrown when a tensor operation produces NaN/Inf while finite checks are on.
class NonFiniteError : public std::runtime_error {
 public:
  explicit NonFiniteError(const std::string& what) : std::runtime_error(what) {}
};

/// Thrown for file-format and I/O failures (CSV, checkpoints, run records).
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Toggle the per-operation NaN/Inf scan. On by default: RL losses that go
/// non-finite should fail fast instead of silently corrupting an update.
void set_finite_checks(bool enabled);
bool finite_checks_enabled();

}  // namespace ftrl

#endif  // FTRL_COMMON_HPP
