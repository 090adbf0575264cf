#pragma once

#include <optional>
#include <vector>

#include "thermo/tasks.hpp"
#include "thermo/thermal.hpp"

namespace thermo::mcs {

// One criticality level. Servers with criticality >= id are eligible at this
// level; power parameters describe the aggregate signal those servers drive.
struct LevelSpec {
  int id = 0;
  double p_static = 0.0;   // W while the core idles
  double p_dynamic = 0.0;  // W added while eligible servers execute
};

struct McsConfig {
  int n_cores = 1;
  std::vector<LevelSpec> levels;           // strictly ascending id
  std::vector<tasks::ServerSpec> servers;  // criticality set to a level id
  core::ScalarThermalParams thermal;       // beta and b are required
  double theta_max_abs = 0.0;              // degC
  // The idle-period bound is anchored to this ambient: the allowed rise is
  // theta_max_abs - design_ambient. The per-level critical ambient recovers
  // it exactly whenever the bound is active.
  double design_ambient = 0.0;  // degC
  double grid = 1e-3;           // u_idle sweep resolution

  void validate() const;
  int level_index(int level_id) const;  // ConfigError when unknown
};

// Homogeneous across cores: every core gets the same idle budget and period.
struct IdleServerSpec {
  double util = 0.0;    // guaranteed idle fraction per period
  double period = 0.0;  // s
  int level = 0;        // level id
  bool per_core = true;
};

// Largest per-core utilization of the servers eligible at the level.
double level_utilization(const McsConfig& cfg, int level_id);

// Largest period at which a core that idles u_idle of every period stays at
// or below theta_max_rise (degC above ambient) under the worst placement of
// the remaining active time, which is a contiguous burn spanning two periods.
// Returns +inf when even continuous activity stays below the cap.
double idle_server_period(double u_idle, const core::ScalarThermalParams& p,
                          double theta_max_rise, double p_static,
                          double p_dynamic);

// Lowest-priority response of the idle budget on one core against the
// eligible servers; the idle server is schedulable iff this stays <= period.
double idle_server_response(const McsConfig& cfg, int level_id,
                            const IdleServerSpec& idle, int core);

// Sweeps u_idle downward from the schedulability ceiling on the config grid,
// pairing each candidate with its exact thermal period bound; returns the
// first candidate whose idle budget is schedulable on every core.
IdleServerSpec search_idle_server(const McsConfig& cfg, int level_id);

// Highest ambient at which the level's worst-case activity pattern still
// respects theta_max_abs, given the idle server found for the level.
double critical_ambient(const McsConfig& cfg, int level_id);

// Cooling delay before servers of to_level may resume after the system ran
// at from_level: time for the temperature to settle within 1% of the
// from-level steady average, starting from the hottest admissible state.
double level_shift_time(const McsConfig& cfg, int from_level_id,
                        int to_level_id);

// Design-time summary consumed by the runtime mode machine.
struct McsPlan {
  std::vector<int> level_ids;            // ascending
  std::vector<IdleServerSpec> idle;      // per level
  std::vector<double> ambient;           // critical ambient per level
  std::vector<double> shift_down;        // [i]: delay entering level i from i+1
};

McsPlan plan(const McsConfig& cfg);

enum class ModeKind { mode, shifting, shutdown };

struct ModeState {
  ModeKind kind = ModeKind::mode;
  int index = 0;  // mode: current level index; shifting: target level index
  double entered_at = 0.0;
  std::optional<double> pending_resume_at;
};

enum class ActionKind { terminate_below, resume_level, shutdown };

struct ModeAction {
  ActionKind kind;
  int level;  // level id the action refers to; 0 for shutdown
};

struct StepResult {
  ModeState state;
  std::vector<ModeAction> actions;
};

// Mode matching the ambient at startup; shutdown when above every threshold.
ModeState initial_mode(const McsPlan& plan, double ambient, double now);

// Pure transition: rising ambient escalates in the same sample (aborting a
// shift in progress without emitting its resume); falling ambient descends
// one level at a time through a shifting state whose resume fires no earlier
// than entry plus the planned delay. Shutdown is absorbing.
StepResult mode_step(const ModeState& state, double ambient, double now,
                     const McsPlan& plan);

}  // namespace thermo::mcs
