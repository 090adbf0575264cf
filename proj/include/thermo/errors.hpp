#pragma once

#include <stdexcept>
#include <string>

namespace thermo {

enum class Err {
  Unconstrained,
  InfeasibleThermal,
  NoSolution,
  MotExceedsBudget,
  MotWithPolling,
  Diverged,
  ItemTooLarge,
  GenRetryExceeded,
  InfeasibleAmbient,
  DegenerateTarget,
  SingularA,
  ComplexEigen,
  InfeasibleIdle,
  Infeasible,
  TooShort,
  MissingProfile,
  DuplicateMask,
  RankDeficient,
  Singular,
  NonConvergence,
  FlatTrace,
  UnknownFrequency,
  ParseError,
  ConfigError,
};

const char* err_name(Err e);

class Error : public std::runtime_error {
 public:
  Error(Err code, const std::string& detail)
      : std::runtime_error(std::string(err_name(code)) + ": " + detail), code_(code) {}
  Err code() const { return code_; }

 private:
  Err code_;
};

[[noreturn]] inline void fail(Err code, const std::string& detail) { throw Error(code, detail); }

inline void require(bool ok, Err code, const char* what) {
  if (!ok) fail(code, what);
}

}  // namespace thermo
