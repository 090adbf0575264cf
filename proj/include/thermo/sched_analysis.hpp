#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "thermo/tasks.hpp"

namespace thermo::sched {

using tasks::GpuServerSpec;
using tasks::QueuePolicy;
using tasks::ServerPolicy;
using tasks::ServerSpec;
using tasks::TaskSpec;
using tasks::Taskset;
using tasks::usec;

struct AnalysisOptions {
  bool mot_enabled = false;        // honor ServerSpec::mot_reserve carve-outs
  bool rm_local_blocking = false;  // single-blocking bound, valid under RM only
};

// Extra delay around one GPU segment: waiting out the GPU server jitter plus,
// without MOT, one CPU replenishment gap on each side of the kernel.
usec handover_delay(const TaskSpec& t, const ServerSpec& cpu_srv,
                    const GpuServerSpec& gpu_srv, bool mot_enabled);

// One GPU segment of a lower-priority same-server task per normal segment,
// never more than the GPU budget available within one period.
usec local_blocking(const TaskSpec& t, const Taskset& ts,
                    const AnalysisOptions& opt = {});

struct RemoteBlocking {
  usec bound = 0;
  bool diverged = false;  // recurrence escaped past the task period
};

// Waiting time in the priority-ordered GPU queue: one lower-priority segment
// plus repeating higher-priority segments.
RemoteBlocking remote_blocking_priority(const TaskSpec& t, const Taskset& ts,
                                        const AnalysisOptions& opt = {});

// Waiting time in the FCFS queue with a pre-packed service order: every task
// waits the same number of GPU periods, one per bin plus one.
usec remote_blocking_bins(const TaskSpec& t, const Taskset& ts,
                          const AnalysisOptions& opt = {});

// First-fit-decreasing count of capacity-sized bins holding all items.
int ffd_bin_count(std::vector<usec> items, usec capacity);

struct TaskResult {
  usec response = 0;
  usec local = 0;
  usec remote = 0;
  usec handover = 0;
  bool schedulable = false;
  bool remote_diverged = false;
};

// Fixed point of the full response-time recurrence for ts.tasks[task_index].
// higher_w carries the response times of already-analyzed tasks, indexed like
// ts.tasks; same-server higher-priority entries must be present.
TaskResult response_time(std::size_t task_index, const Taskset& ts,
                         QueuePolicy queue, const AnalysisOptions& opt,
                         const std::vector<std::optional<usec>>& higher_w);

struct HsfTask {
  usec wcet = 0;
  usec period = 0;
  usec response = 0;  // only read when carry_in is set
};

// Classic hierarchical response time for a CPU-only task inside a budgeted
// server; carry_in adds the self-suspension term for each higher task.
usec hsf_response_time(usec wcet, usec period, usec jitter,
                       const ServerSpec& server, const std::vector<HsfTask>& higher,
                       bool carry_in);

struct AnalysisReport {
  struct PerTask {
    usec response = 0;
    usec local = 0;
    usec remote = 0;
    usec handover = 0;
    bool schedulable = false;
    bool remote_diverged = false;
  };
  std::vector<PerTask> per_task;  // aligned with Taskset::tasks
  bool taskset_schedulable = false;
  QueuePolicy queue_used = QueuePolicy::priority;
};

// Analyzes every task under the taskset's queue policy; hybrid tries the
// priority queue first and falls back to the packed FCFS queue.
AnalysisReport analyze_taskset(const Taskset& ts, const AnalysisOptions& opt = {});

struct GenParams {
  int n_cores = 4;
  int n_tasks_min = 8;
  int n_tasks_max = 20;
  double util_min = 0.4;
  double util_max = 1.6;
  usec period_min = 30000;
  usec period_max = 500000;
  double gpu_share_min = 0.10;
  double gpu_share_max = 0.30;
  double gpu_ratio_min = 2.0;  // GPU segment : normal WCET
  double gpu_ratio_max = 3.0;
  double misc_ratio_min = 0.10;  // (M1+M2)/E
  double misc_ratio_max = 0.20;
  usec cpu_server_period = 10000;
  usec cpu_server_budget = 5000;
  usec gpu_server_period = 20000;
  usec gpu_server_budget = 15000;
  ServerPolicy cpu_policy = ServerPolicy::deferrable;
  QueuePolicy queue = QueuePolicy::hybrid;
  std::uint64_t seed = 1;
};

// Random taskset on the microsecond grid: utilizations partitioned under the
// per-task server-utilization cap, GPU segments sized by ratio and resampled
// until they fit the GPU budget, RM priorities, WFD core assignment.
Taskset generate_taskset(const GenParams& gp);

// Worst-fit decreasing: heaviest task first, each onto the least-loaded core.
std::vector<int> wfd_partition(const std::vector<double>& utils, int n_cores);

}  // namespace thermo::sched
