#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "thermo/mcs.hpp"
#include "thermo/tasks.hpp"
#include "thermo/thermal.hpp"

namespace thermo::sim {

using tasks::QueuePolicy;
using tasks::ServerPolicy;
using tasks::Taskset;
using tasks::usec;

enum class ReleasePattern { synchronous, random_phase, scripted };

struct AmbientSample {
  double t = 0.0;        // seconds from simulation start
  double ambient = 0.0;  // absolute degC
};

// Criticality-mode control: the plan drives mcs::mode_step at every ambient
// sample; emitted actions suspend or resume servers by criticality.
struct McsRuntime {
  mcs::McsPlan plan;
  std::vector<AmbientSample> samples;  // strictly increasing t
};

struct SimConfig {
  Taskset ts;

  // Thermal nodes are cores in index order, then the optional GPU node.
  // A scalar model is a 1x1 MatrixThermalParams.
  core::MatrixThermalParams thermal;
  Eigen::VectorXd p_static;  // W per node, always on; empty = zeros
  Eigen::VectorXd p_active;  // W per node, added while the node executes
  int gpu_node = -1;         // node heated by kernels; -1 = kernels heat nothing
  double ambient = 0.0;      // absolute degC; overridden by mcs samples
  double theta_max_abs = std::numeric_limits<double>::infinity();
  Eigen::VectorXd theta0_rise;  // initial rise over ambient; empty = zeros

  usec duration = 0;
  ReleasePattern release = ReleasePattern::synchronous;
  std::uint64_t seed = 0;  // random_phase offsets
  std::vector<std::vector<usec>> scripted_releases;  // per task, ascending

  bool record_thermal = true;  // false skips all temperature bookkeeping
  usec sample_interval = 0;    // uniform grid spacing; 0 = event boundaries only
  std::optional<McsRuntime> mcs;

  void validate() const;
};

// Same-timestamp processing order: server replenishments, then ambient/mode
// steps, then job releases, then phase completions, then scheduling. Ties
// within a group break by entity index.
enum class EventKind {
  replenish,    // server (or gpu when server == kGpuServer); amount added
  deplete,      // unused budget discarded; amount lost
  release,      // job release (task, job)
  start,        // task begins or resumes on its core
  stop,         // task preempted or stalled
  complete,     // job finished (task, job)
  gpu_request,  // task enqueues for the gpu
  gpu_acquire,  // lock granted
  gpu_release,  // lock released
  mode_change,  // extra = level id, amount = 1 while shifting; -1 = shutdown
  terminate,    // server suspended by the mode controller
  resume,       // server resumed by the mode controller
};

const char* event_kind_name(EventKind k);

// server index meaning "the gpu server" in events.
inline constexpr int kGpuServer = -2;

struct Event {
  usec t = 0;
  EventKind kind = EventKind::release;
  int task = -1;
  int server = -1;
  long job = -1;
  int extra = -1;   // core for start/stop, level for mode events
  usec amount = 0;  // budget delta for replenish/deplete
};

struct TempSample {
  usec t = 0;
  Eigen::VectorXd theta_abs;  // absolute degC per node
};

// One constant-power stretch: theta evolves from theta0_rise under
// mode_power[mode] over [t0, t1). Rise domain, ambient recorded for I/O.
struct ThermalSegment {
  usec t0 = 0;
  usec t1 = 0;
  Eigen::VectorXd theta0_rise;
  int mode = 0;
  double ambient = 0.0;
};

struct Violation {
  double t = 0.0;  // seconds
  int node = 0;
  double theta_abs = 0.0;
};

struct JobRecord {
  usec release = 0;
  usec completion = -1;  // -1 = unfinished at duration
  bool missed = false;   // past its implicit deadline (= period)
};

struct SimTrace {
  std::vector<Event> events;
  std::vector<TempSample> temps;
  std::vector<ThermalSegment> segments;
  std::vector<Eigen::VectorXd> mode_power;   // W per node, indexed by segment mode
  std::vector<std::vector<JobRecord>> jobs;  // aligned with Taskset::tasks
  std::vector<usec> consumed;                // per cpu server, gpu appended last
  std::vector<usec> replenished;
  std::vector<Violation> violations;

  core::MatrixThermalParams thermal;  // copy for post-hoc verification
  int n_nodes = 0;
  usec duration = 0;
};

SimTrace simulate(const SimConfig& cfg);

// Exact per-segment exceedance scan: each node's trajectory is an exponential
// sum, so interior extrema come from sign changes of its derivative (bisected),
// plus the segment end. Empty when theta_max_abs is infinite.
std::vector<Violation> verify_thermal(const SimTrace& trace, double theta_max_abs);

struct Metrics {
  struct PerTask {
    long jobs = 0;
    usec max_response = 0;
    long deadline_misses = 0;
  };
  struct PerServer {
    usec consumed = 0;
    usec replenished = 0;
    double busy_fraction = 0.0;  // consumed / duration
  };
  std::vector<PerTask> per_task;
  std::vector<PerServer> per_server;  // cpu servers, gpu appended last
  Eigen::VectorXd peak_abs;           // max absolute degC per node, -inf if untracked
};

Metrics collect_metrics(const SimTrace& trace);

// One JSON object per line, keys in fixed order; byte-identical across runs.
std::string export_events_jsonl(const SimTrace& trace);

// "t_s,core0_C,...[,gpu_C]" rows at six decimals; gpu column present when the
// trace has more nodes than cores.
std::string export_temps_csv(const SimTrace& trace, int n_cores);

}  // namespace thermo::sim
