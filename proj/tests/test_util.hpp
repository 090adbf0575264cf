#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "thermo/thermal.hpp"

// Shared helpers for the test suites: deterministic RNG draws (engine-defined
// sequences only, no distribution objects) and synthetic model generators.
namespace testutil {

using thermo::core::MatrixThermalParams;
using thermo::core::MatrixXd;
using thermo::core::PeriodicPowerSignal;
using thermo::core::VectorXd;

inline double urand(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;  // [0, 1)
}

inline double urange(std::mt19937_64& g, double lo, double hi) {
  return lo + (hi - lo) * urand(g);
}

inline int irange(std::mt19937_64& g, int lo, int hi) {  // inclusive
  return lo + static_cast<int>(g() % static_cast<std::uint64_t>(hi - lo + 1));
}

// Physically structured stable model: symmetric nonnegative conduction plus an
// ambient leak on the diagonal, so the spectrum is real and strictly negative.
inline MatrixThermalParams random_stable_model(std::mt19937_64& g, int n,
                                               double b_lo = 0.5, double b_hi = 2.0) {
  MatrixXd A = MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double k = urange(g, 0.02, 0.25);
      A(i, j) = k;
      A(j, i) = k;
    }
  for (int i = 0; i < n; ++i) {
    const double leak = urange(g, 0.05, 0.6);
    A(i, i) = -(leak + A.row(i).sum());
  }
  const double b = urange(g, b_lo, b_hi);
  return MatrixThermalParams::make(A, VectorXd::Constant(n, b));
}

inline PeriodicPowerSignal random_signal(std::mt19937_64& g) {
  PeriodicPowerSignal s;
  s.p_static = urange(g, 0.0, 0.3);
  s.p_dynamic = urange(g, 0.5, 3.0);
  s.util = urange(g, 0.05, 0.95);
  s.period = urange(g, 0.5, 5.0);
  s.offset = urange(g, 0.0, s.period);
  return s;
}

// Per-node running maximum of the RK4 trajectory over [t0, t1], sampled at every
// signal switch plus a uniform grid (grid_per_second points per second).
inline VectorXd oracle_peak(VectorXd theta, double t0, double t1,
                            const MatrixThermalParams& mp,
                            const std::vector<PeriodicPowerSignal>& sigs, double step,
                            double grid_per_second = 50.0) {
  auto power = thermo::core::power_from_signals(sigs);
  std::vector<double> pts = thermo::core::switch_times(sigs, t0, t1);
  const int extra = std::max(2, static_cast<int>((t1 - t0) * grid_per_second));
  for (int i = 0; i <= extra; ++i) pts.push_back(t0 + (t1 - t0) * i / extra);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  VectorXd peak = theta;
  for (size_t i = 0; i + 1 < pts.size(); ++i) {
    const double a = pts[i], b = pts[i + 1];
    theta = thermo::core::ode_oracle(theta, a, b, mp, power, step, {(a + b) / 2.0});
    peak = peak.cwiseMax(theta);
  }
  return peak;
}

}  // namespace testutil
