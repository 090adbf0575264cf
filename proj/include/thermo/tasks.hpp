#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "thermo/errors.hpp"

namespace thermo::tasks {

// All scheduling times are integer microseconds so fixed-point recurrences
// terminate with exact equality.
using usec = std::int64_t;

inline constexpr double kUsecPerSec = 1e6;

// Budgets are floored: rounding down can only make a design more conservative.
usec floor_usec(double seconds);
usec round_usec(double seconds);
inline double to_seconds(usec t) { return static_cast<double>(t) / kUsecPerSec; }

enum class ServerPolicy { polling, deferrable, sporadic };
enum class QueuePolicy { priority, fcfs_bins, hybrid };

const char* policy_name(ServerPolicy p);
const char* queue_name(QueuePolicy q);
ServerPolicy parse_policy(const std::string& s);
QueuePolicy parse_queue(const std::string& s);

struct ServerSpec {
  usec budget = 0;
  usec period = 0;
  ServerPolicy policy = ServerPolicy::polling;
  int core = 0;
  int criticality = 0;
  usec mot_reserve = 0;

  // Budget actually available to normal segments once MOT is carved out.
  usec effective_budget() const { return budget - mot_reserve; }
  void validate() const;
};

struct GpuServerSpec {
  usec budget = 0;
  usec period = 0;
  // policy is sporadic by construction; no field needed
  void validate() const;
};

struct TaskSpec {
  usec c1 = 0;
  usec m1 = 0;
  usec k = 0;
  usec m2 = 0;
  usec c2 = 0;
  usec period = 0;
  bool uses_gpu = false;
  int priority = 0;  // higher value = higher priority
  int server = 0;    // index into Taskset::cpu_servers

  usec gpu_segment() const { return m1 + k + m2; }  // E_i
  usec misc_time() const { return m1 + m2; }
  // Accumulated WCET: both normal segments plus the GPU segment when present.
  usec total_wcet() const { return uses_gpu ? c1 + gpu_segment() + c2 : c1; }
  // CPU time actually consumed: the pure kernel runs without the CPU.
  usec cpu_demand() const { return uses_gpu ? c1 + m1 + m2 + c2 : c1; }
  double utilization() const {
    return static_cast<double>(total_wcet()) / static_cast<double>(period);
  }
  void validate() const;
};

struct Taskset {
  std::vector<TaskSpec> tasks;
  std::vector<ServerSpec> cpu_servers;
  GpuServerSpec gpu_server;
  QueuePolicy queue_policy = QueuePolicy::hybrid;

  void validate() const;
};

}  // namespace thermo::tasks
