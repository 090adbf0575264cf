#include "thermo/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>

namespace thermo::tasks {

usec floor_usec(double seconds) {
  return static_cast<usec>(std::floor(seconds * kUsecPerSec));
}

usec round_usec(double seconds) {
  return static_cast<usec>(std::llround(seconds * kUsecPerSec));
}

const char* policy_name(ServerPolicy p) {
  switch (p) {
    case ServerPolicy::polling: return "polling";
    case ServerPolicy::deferrable: return "deferrable";
    case ServerPolicy::sporadic: return "sporadic";
  }
  return "?";
}

const char* queue_name(QueuePolicy q) {
  switch (q) {
    case QueuePolicy::priority: return "priority";
    case QueuePolicy::fcfs_bins: return "fcfs_bins";
    case QueuePolicy::hybrid: return "hybrid";
  }
  return "?";
}

ServerPolicy parse_policy(const std::string& s) {
  if (s == "polling") return ServerPolicy::polling;
  if (s == "deferrable") return ServerPolicy::deferrable;
  if (s == "sporadic") return ServerPolicy::sporadic;
  fail(Err::ParseError, "unknown server policy '" + s + "'");
}

QueuePolicy parse_queue(const std::string& s) {
  if (s == "priority") return QueuePolicy::priority;
  if (s == "fcfs_bins") return QueuePolicy::fcfs_bins;
  if (s == "hybrid") return QueuePolicy::hybrid;
  fail(Err::ParseError, "unknown queue policy '" + s + "'");
}

void ServerSpec::validate() const {
  require(period > 0, Err::ConfigError, "server period must be positive");
  require(budget > 0 && budget <= period, Err::ConfigError,
          "server budget must satisfy 0 < C <= T");
  require(mot_reserve >= 0 && mot_reserve < budget, Err::ConfigError,
          "mot reserve must satisfy 0 <= mot < budget");
  if (policy == ServerPolicy::polling)
    require(mot_reserve == 0, Err::MotWithPolling,
            "mot reservation is not compatible with a polling server");
}

void GpuServerSpec::validate() const {
  require(period > 0, Err::ConfigError, "gpu server period must be positive");
  require(budget > 0 && budget <= period, Err::ConfigError,
          "gpu server budget must satisfy 0 < C <= T");
}

void TaskSpec::validate() const {
  require(period > 0, Err::ConfigError, "task period must be positive");
  require(c1 >= 0 && m1 >= 0 && k >= 0 && m2 >= 0 && c2 >= 0, Err::ConfigError,
          "task segments must be nonnegative");
  if (!uses_gpu)
    require(m1 == 0 && k == 0 && m2 == 0 && c2 == 0, Err::ConfigError,
            "a cpu-only task has no gpu segment and no second normal segment");
  else
    require(gpu_segment() > 0, Err::ConfigError,
            "a gpu-using task needs a nonempty gpu segment");
  require(total_wcet() > 0, Err::ConfigError, "task needs positive demand");
  require(total_wcet() <= period, Err::ConfigError,
          "task demand exceeds its period");
}

void Taskset::validate() const {
  const bool any_gpu = std::any_of(tasks.begin(), tasks.end(),
                                   [](const TaskSpec& t) { return t.uses_gpu; });
  if (any_gpu) gpu_server.validate();
  for (const auto& s : cpu_servers) s.validate();
  std::set<std::pair<int, int>> prio_seen;
  for (const auto& t : tasks) {
    t.validate();
    require(t.server >= 0 && t.server < static_cast<int>(cpu_servers.size()),
            Err::ConfigError, "task references an unknown cpu server");
    require(prio_seen.insert({t.server, t.priority}).second, Err::ConfigError,
            "task priorities must be unique per server");
    if (t.uses_gpu)
      require(t.gpu_segment() <= gpu_server.budget, Err::ConfigError,
              "gpu segment exceeds the gpu server budget");
  }
}

}  // namespace thermo::tasks
