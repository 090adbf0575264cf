#include "thermo/errors.hpp"

namespace thermo {

const char* err_name(Err e) {
  switch (e) {
    case Err::Unconstrained: return "Unconstrained";
    case Err::InfeasibleThermal: return "InfeasibleThermal";
    case Err::NoSolution: return "NoSolution";
    case Err::MotExceedsBudget: return "MotExceedsBudget";
    case Err::MotWithPolling: return "MotWithPolling";
    case Err::Diverged: return "Diverged";
    case Err::ItemTooLarge: return "ItemTooLarge";
    case Err::GenRetryExceeded: return "GenRetryExceeded";
    case Err::InfeasibleAmbient: return "InfeasibleAmbient";
    case Err::DegenerateTarget: return "DegenerateTarget";
    case Err::SingularA: return "SingularA";
    case Err::ComplexEigen: return "ComplexEigen";
    case Err::InfeasibleIdle: return "InfeasibleIdle";
    case Err::Infeasible: return "Infeasible";
    case Err::TooShort: return "TooShort";
    case Err::MissingProfile: return "MissingProfile";
    case Err::DuplicateMask: return "DuplicateMask";
    case Err::RankDeficient: return "RankDeficient";
    case Err::Singular: return "Singular";
    case Err::NonConvergence: return "NonConvergence";
    case Err::FlatTrace: return "FlatTrace";
    case Err::UnknownFrequency: return "UnknownFrequency";
    case Err::ParseError: return "ParseError";
    case Err::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace thermo
