#pragma once

#include <vector>

#include "thermo/tasks.hpp"
#include "thermo/thermal.hpp"

namespace thermo::server {

// Budgets are designed in seconds; callers floor to the microsecond grid.
struct BudgetResult {
  double budget = 0.0;
  // Set when the cap sits at or above the saturation temperature, so the
  // node may run continuously and the full period is returned.
  bool unconstrained = false;
};

// Largest budget a polling server may burn at the start of each period
// without the steady-state peak exceeding theta_max (a rise above ambient).
// Conduction is ignored; use the multicore variant for lambda > 1.
BudgetResult polling_budget_single(double theta_max, double period,
                                   const core::ScalarThermalParams& p);

// Same design with the cap shared across in-phase neighbours: the own
// contribution may only reach theta_max / p.lambda.
BudgetResult polling_budget_multicore(double theta_max_per_node, double period,
                                      const core::ScalarThermalParams& p);

// Back-to-back-safe budget: a deferrable server can place one budget at the
// end of a period and the next immediately after, so the design must survive
// a contiguous burn of twice the budget every two periods.
BudgetResult deferrable_budget(double theta_max, double period,
                               const core::ScalarThermalParams& p);

// polling/sporadic share the polling design; deferrable uses the halved form.
BudgetResult budget_for_policy(tasks::ServerPolicy policy, double theta_max,
                               double period, const core::ScalarThermalParams& p);

struct CrossConduction {
  double cpu_from_gpu = 0.0;   // coefficient seen by the hottest cpu node
  double gpu_from_cpus = 0.0;  // summed coefficient from all cpu nodes
};

struct CpuGpuBudgets {
  BudgetResult cpu;
  BudgetResult gpu;
};

// Couples the cpu and gpu designs: each device's peak heats the other, so the
// pair of budgets is the fixed point where both caps are met with equality.
CpuGpuBudgets cpu_gpu_budgets(double theta_max_cpu, double theta_max_gpu,
                              double period_cpu, double period_gpu,
                              const core::ScalarThermalParams& cpu_p,
                              const core::ScalarThermalParams& gpu_p,
                              CrossConduction gamma_cross);

// Utilization ceiling of any thermally safe server: the T -> 0 limit of C/T.
double max_server_utilization(double theta_max, const core::ScalarThermalParams& p);

struct MotResult {
  tasks::usec effective_budget = 0;
  tasks::usec mot = 0;
};

// Reserves the worst single data-transfer time out of the budget so remote
// waiters never stall on a depleted server mid-transfer.
MotResult apply_mot_reservation(tasks::usec budget, tasks::ServerPolicy policy,
                                const std::vector<tasks::TaskSpec>& ts);

// Release jitter a task inherits from its server.
tasks::usec server_jitter(const tasks::ServerSpec& s);

}  // namespace thermo::server
