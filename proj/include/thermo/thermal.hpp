#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "thermo/errors.hpp"

namespace thermo::core {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Lumped single-node model: d(theta)/dt = beta*theta + b*P(t), theta measured as a
// rise over ambient. alpha is the steady rise at full sustained power; lambda and
// gamma describe the conduction envelope used for multi-node budget design.
struct ScalarThermalParams {
  double alpha = 0.0;   // degC rise at full power, > 0
  double beta = 0.0;    // 1/s, < 0
  double lambda = 1.0;  // max_i (1 + sum_{j!=i} gamma(i,j)), >= 1
  MatrixXd gamma;       // symmetric, zero diagonal; empty means no conduction
  double b = 0.0;       // degC/(s*W); required only by ops that take explicit power

  static ScalarThermalParams single(double alpha, double beta, double b = 0.0);
  // lambda is derived from gamma.
  static ScalarThermalParams conducted(double alpha, double beta, MatrixXd gamma,
                                       double b = 0.0);
  void validate() const;
};

// Periodic rectangular power signal: P_S always on, P_D added on the duty window
// [offset + m*period, offset + m*period + util*period).
struct PeriodicPowerSignal {
  double p_static = 0.0;
  double p_dynamic = 0.0;
  double util = 0.0;
  double period = 1.0;
  double offset = 0.0;

  void validate() const;
  bool active_at(double t) const;
  double power_at(double t) const;
  double mean_power() const { return p_static + p_dynamic * util; }
};

struct SeriesTruncation {
  int terms = 500;
};

inline constexpr SeriesTruncation kReportSeries{500};
inline constexpr SeriesTruncation kTestSeries{200};

// Multi-node model d(theta)/dt = A*theta + B*P(t) with diagonal B. The
// eigendecomposition is computed once at construction; eigenvalues must be real
// (imaginary part below 1e-8 * ||A||_F) and strictly negative.
struct MatrixThermalParams {
  MatrixXd A;
  VectorXd Bdiag;
  MatrixXd V;     // eigenvectors, columns aligned with D
  VectorXd D;     // eigenvalues sorted descending (slowest mode first)
  MatrixXd Vinv;
  VectorXd chip_offset;  // degC rise from always-on blocks; used at I/O edges only

  int n() const { return static_cast<int>(A.rows()); }
  MatrixXd exp_at(double dt) const;  // e^{A*dt} via V diag(e^{D dt}) V^-1

  static MatrixThermalParams make(MatrixXd A, VectorXd Bdiag,
                                  VectorXd chip_offset = VectorXd());
};

// theta(t0+dt) under full constant power: alpha + (theta0 - alpha) e^{beta dt}.
double temp_const_power(double theta0, double dt, const ScalarThermalParams& p);

// theta(t0+dt) with no power input: theta0 e^{beta dt}.
double temp_cooling(double theta0, double dt, double beta);

// K-term partial sum of the periodic steady-response series for a rectangular
// power pulse; periodic in t with the signal period.
double fourier_S(double beta, double p_dyn, double util, double period, double offset,
                 double t, SeriesTruncation trunc);

// Closed-form transient of the single node driven by a periodic signal. Requires p.b.
double temp_transient_single(double theta0, double t0, double t,
                             const ScalarThermalParams& p, const PeriodicPowerSignal& sig,
                             SeriesTruncation trunc);

struct SteadyBand {
  double theta_min = 0.0;
  double theta_max = 0.0;
  double theta_avg = 0.0;
};

// Steady-state oscillation envelope and average for the single node. Requires p.b.
SteadyBand steady_band_single(const ScalarThermalParams& p, const PeriodicPowerSignal& sig,
                              SeriesTruncation trunc);

// Highest ambient (absolute degC) at which the steady peak of a duty-cycle `util`
// signal still meets theta_max_abs. Requires p.b.
double max_ambient_for_util(double theta_max_abs, double util, double period,
                            const ScalarThermalParams& p, double p_static,
                            double p_dynamic);

// Inverse of max_ambient_for_util: largest safe duty cycle at the given ambient,
// clamped to [0, 1]. Throws InfeasibleAmbient when even util = 0 violates the cap.
double max_util_for_ambient(double theta_max_abs, double ambient, double period,
                            const ScalarThermalParams& p, double p_static,
                            double p_dynamic);

// Time until the period-averaged temperature settles within 1% of the target
// signal's steady average, starting from theta0 at the signal's t = 0.
double shifting_time(double theta0, const PeriodicPowerSignal& target,
                     const ScalarThermalParams& p, SeriesTruncation trunc);

// Closed-form multi-node transient under per-node periodic signals.
VectorXd temp_multicore(const VectorXd& theta0, double t0, double t,
                        const MatrixThermalParams& mp,
                        const std::vector<PeriodicPowerSignal>& sigs,
                        SeriesTruncation trunc);

// Sum of two zero-initial responses computed under the same model.
VectorXd superpose(const VectorXd& resp_a, const VectorXd& resp_b);

// Fixed-step classical RK4 integration of d(theta)/dt = A theta + B P(t).
// When breakpoints are supplied, integration is split at them and the power is
// treated as constant on each sub-interval (exact for rectangular signals);
// otherwise P is sampled at the RK4 stage times.
VectorXd ode_oracle(const VectorXd& theta0, double t0, double t,
                    const MatrixThermalParams& mp,
                    const std::function<VectorXd(double)>& power, double step,
                    const std::vector<double>& breakpoints = {});

// All switching instants of the given signals inside [t0, t], sorted and deduped;
// suitable as ode_oracle breakpoints.
std::vector<double> switch_times(const std::vector<PeriodicPowerSignal>& sigs, double t0,
                                 double t);

// Piecewise-constant power vector for a set of rectangular signals.
std::function<VectorXd(double)> power_from_signals(std::vector<PeriodicPowerSignal> sigs);

}  // namespace thermo::core
