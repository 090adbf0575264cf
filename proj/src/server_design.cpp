#include "thermo/server_design.hpp"

#include <algorithm>
#include <cmath>

namespace thermo::server {

namespace {

// Steady-state burn time so the own contribution peaks exactly at cap:
// e^{beta t} = 1 + cap (e^{beta T} - 1) / alpha, the closed form of burning
// from the worst steady start and cooling the rest of the period.
double burn_time(double cap, double period, double alpha, double beta) {
  return std::log1p(cap * std::expm1(beta * period) / alpha) / beta;
}

BudgetResult capped_budget(double cap, double period,
                           const core::ScalarThermalParams& p) {
  require(period > 0.0, Err::ConfigError, "server period must be positive");
  if (cap <= 0.0)
    fail(Err::InfeasibleThermal, "thermal cap leaves no room for a budget");
  if (cap >= p.alpha) return {period, true};
  const double t_wk = burn_time(cap, period, p.alpha, p.beta);
  if (!(t_wk > 0.0))
    fail(Err::InfeasibleThermal, "budget formula yielded a nonpositive time");
  return {t_wk, false};
}

struct DeviceState {
  double steady = 0.0;  // own contribution at the period start
  double budget = 0.0;
  double peak = 0.0;
  bool unconstrained = false;
};

// Single-device design against an own-contribution cap; peak equals the cap
// unless the device saturates below it.
DeviceState design_device(double cap, double period, double alpha, double beta) {
  DeviceState d;
  if (cap >= alpha) {
    d.steady = alpha;
    d.budget = period;
    d.peak = alpha;
    d.unconstrained = true;
    return d;
  }
  d.budget = burn_time(cap, period, alpha, beta);
  d.peak = cap;
  d.steady = cap * std::exp(beta * (period - d.budget));
  return d;
}

}  // namespace

BudgetResult polling_budget_single(double theta_max, double period,
                                   const core::ScalarThermalParams& p) {
  p.validate();
  return capped_budget(theta_max, period, p);
}

BudgetResult polling_budget_multicore(double theta_max_per_node, double period,
                                      const core::ScalarThermalParams& p) {
  p.validate();
  require(p.lambda >= 1.0, Err::ConfigError, "lambda must be at least 1");
  return capped_budget(theta_max_per_node / p.lambda, period, p);
}

BudgetResult deferrable_budget(double theta_max, double period,
                               const core::ScalarThermalParams& p) {
  p.validate();
  require(p.lambda >= 1.0, Err::ConfigError, "lambda must be at least 1");
  // A contiguous 2C burn every 2T is the worst back-to-back pattern, so the
  // polling design at horizon 2T yields 2C and the budget is half of it.
  const BudgetResult doubled =
      capped_budget(theta_max / p.lambda, 2.0 * period, p);
  return {doubled.budget / 2.0, doubled.unconstrained};
}

BudgetResult budget_for_policy(tasks::ServerPolicy policy, double theta_max,
                               double period,
                               const core::ScalarThermalParams& p) {
  if (policy == tasks::ServerPolicy::deferrable)
    return deferrable_budget(theta_max, period, p);
  return polling_budget_multicore(theta_max, period, p);
}

CpuGpuBudgets cpu_gpu_budgets(double theta_max_cpu, double theta_max_gpu,
                              double period_cpu, double period_gpu,
                              const core::ScalarThermalParams& cpu_p,
                              const core::ScalarThermalParams& gpu_p,
                              CrossConduction gamma_cross) {
  cpu_p.validate();
  gpu_p.validate();
  require(period_cpu > 0.0 && period_gpu > 0.0, Err::ConfigError,
          "server periods must be positive");
  require(cpu_p.lambda >= 1.0, Err::ConfigError, "lambda must be at least 1");
  require(gamma_cross.cpu_from_gpu >= 0.0 && gamma_cross.gpu_from_cpus >= 0.0,
          Err::ConfigError, "cross conduction must be nonnegative");
  if (theta_max_cpu <= 0.0 || theta_max_gpu <= 0.0)
    fail(Err::NoSolution, "a nonpositive cap admits no budget");

  // Damped fixed point on the own steady-state temperatures: each round
  // derives the cap left for one device by the other device's current peak,
  // redesigns against it, and averages the steady values.
  constexpr int kMaxIter = 10000;
  constexpr double kTol = 1e-9;
  constexpr double kDamping = 0.5;

  DeviceState cpu = design_device(theta_max_cpu / cpu_p.lambda, period_cpu,
                                  cpu_p.alpha, cpu_p.beta);
  DeviceState gpu =
      design_device(theta_max_gpu, period_gpu, gpu_p.alpha, gpu_p.beta);

  double cap_cpu = 0.0, cap_gpu = 0.0;
  bool converged = false;
  for (int it = 0; it < kMaxIter; ++it) {
    cap_cpu =
        (theta_max_cpu - gamma_cross.cpu_from_gpu * gpu.peak) / cpu_p.lambda;
    cap_gpu = theta_max_gpu - gamma_cross.gpu_from_cpus * cpu.peak;
    // A transiently exhausted cap may recover as the other peak shrinks.
    const double floor_c = 1e-12 * cpu_p.alpha;
    const double floor_g = 1e-12 * gpu_p.alpha;
    DeviceState next_c = design_device(std::max(cap_cpu, floor_c), period_cpu,
                                       cpu_p.alpha, cpu_p.beta);
    DeviceState next_g = design_device(std::max(cap_gpu, floor_g), period_gpu,
                                       gpu_p.alpha, gpu_p.beta);
    const double dc = std::abs(next_c.steady - cpu.steady);
    const double dg = std::abs(next_g.steady - gpu.steady);
    cpu.steady += kDamping * (next_c.steady - cpu.steady);
    gpu.steady += kDamping * (next_g.steady - gpu.steady);
    cpu.peak += kDamping * (next_c.peak - cpu.peak);
    gpu.peak += kDamping * (next_g.peak - gpu.peak);
    cpu.budget = next_c.budget;
    gpu.budget = next_g.budget;
    cpu.unconstrained = next_c.unconstrained;
    gpu.unconstrained = next_g.unconstrained;
    if (dc < kTol && dg < kTol) {
      converged = true;
      break;
    }
  }
  if (!converged)
    fail(Err::NoSolution, "coupled budget iteration did not converge");
  if (cap_cpu <= 0.0 || cap_gpu <= 0.0 || cpu.budget <= 0.0 || gpu.budget <= 0.0)
    fail(Err::NoSolution, "coupled design admits no positive budget");
  return {{cpu.budget, cpu.unconstrained}, {gpu.budget, gpu.unconstrained}};
}

double max_server_utilization(double theta_max,
                              const core::ScalarThermalParams& p) {
  p.validate();
  if (theta_max <= 0.0) return 0.0;
  return std::min(1.0, theta_max / (p.lambda * p.alpha));
}

MotResult apply_mot_reservation(tasks::usec budget, tasks::ServerPolicy policy,
                                const std::vector<tasks::TaskSpec>& ts) {
  if (policy == tasks::ServerPolicy::polling)
    fail(Err::MotWithPolling,
         "mot reservation requires a deferrable or sporadic server");
  tasks::usec mot = 0;
  for (const auto& t : ts)
    if (t.uses_gpu) mot = std::max({mot, t.m1, t.m2});
  if (mot >= budget)
    fail(Err::MotExceedsBudget, "worst transfer time swallows the budget");
  return {budget - mot, mot};
}

tasks::usec server_jitter(const tasks::ServerSpec& s) {
  s.validate();
  if (s.policy == tasks::ServerPolicy::polling) return s.period;
  return s.period - s.effective_budget();
}

}  // namespace thermo::server
