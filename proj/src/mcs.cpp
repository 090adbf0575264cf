#include "thermo/mcs.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace thermo::mcs {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Steady peak of a duty-cycled burn, as a fraction of the full-power rise.
// Increasing in period: longer contiguous burns bite deeper into the cap.
double peak_fraction(double util, double period, double beta) {
  return std::expm1(beta * util * period) / std::expm1(beta * period);
}

// Fallback period when the thermal bound is vacuous: long enough that the
// timing test dominates, short enough to stay meaningful.
double uncapped_period(const McsConfig& cfg, int level_id) {
  tasks::usec longest = 0;
  for (const auto& s : cfg.servers)
    if (s.criticality >= level_id) longest = std::max(longest, s.period);
  return longest > 0 ? 10.0 * tasks::to_seconds(longest) : 1.0;
}

}  // namespace

void McsConfig::validate() const {
  require(n_cores >= 1, Err::ConfigError, "n_cores must be positive");
  require(!levels.empty(), Err::ConfigError, "at least one level required");
  for (std::size_t i = 0; i + 1 < levels.size(); ++i)
    require(levels[i].id < levels[i + 1].id, Err::ConfigError,
            "level ids must be strictly ascending");
  for (const auto& l : levels) {
    require(l.p_static >= 0.0 && l.p_dynamic >= 0.0, Err::ConfigError,
            "level powers must be nonnegative");
  }
  thermal.validate();
  require(thermal.b > 0.0, Err::ConfigError, "thermal.b required");
  require(theta_max_abs > design_ambient, Err::ConfigError,
          "theta_max_abs must exceed design_ambient");
  require(grid > 0.0 && grid < 1.0, Err::ConfigError, "grid in (0,1)");
  for (const auto& s : servers) {
    s.validate();
    require(s.core >= 0 && s.core < n_cores, Err::ConfigError,
            "server core out of range");
    bool known = false;
    for (const auto& l : levels) known = known || l.id == s.criticality;
    require(known, Err::ConfigError, "server criticality is not a level id");
  }
}

int McsConfig::level_index(int level_id) const {
  for (std::size_t i = 0; i < levels.size(); ++i)
    if (levels[i].id == level_id) return static_cast<int>(i);
  fail(Err::ConfigError, "unknown level id");
}

double level_utilization(const McsConfig& cfg, int level_id) {
  cfg.level_index(level_id);
  double best = 0.0;
  for (int c = 0; c < cfg.n_cores; ++c) {
    double sum = 0.0;
    for (const auto& s : cfg.servers)
      if (s.core == c && s.criticality >= level_id)
        sum += static_cast<double>(s.budget) / static_cast<double>(s.period);
    best = std::max(best, sum);
  }
  return best;
}

double idle_server_period(double u_idle, const core::ScalarThermalParams& p,
                          double theta_max_rise, double p_static,
                          double p_dynamic) {
  require(u_idle > 0.0 && u_idle < 1.0, Err::ConfigError,
          "u_idle must lie in (0,1)");
  p.validate();
  require(p.b > 0.0, Err::ConfigError, "thermal.b required");
  const double rise_static = -p.b * p_static / p.beta;
  const double gain = -p.b * p_dynamic / p.beta;
  const double active = 1.0 - u_idle;
  if (gain == 0.0) {
    require(rise_static < theta_max_rise, Err::InfeasibleIdle,
            "static rise alone exceeds the cap");
    return kInf;
  }
  // Target fraction of the dynamic rise the worst burn may reach.
  const double x = (theta_max_rise - rise_static) / gain;
  require(x > active, Err::InfeasibleIdle,
          "cap is below the idle-limit rise for this utilization");
  if (x >= 1.0) return kInf;

  // peak_fraction(active, 2T, beta) grows from `active` (T->0) to 1 (T->inf);
  // bracket then bisect the unique crossing.
  double lo = 0.0, hi = 1.0;
  int guard = 0;
  while (peak_fraction(active, 2.0 * hi, p.beta) < x) {
    lo = hi;
    hi *= 2.0;
    if (++guard > 120) return kInf;
  }
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (peak_fraction(active, 2.0 * mid, p.beta) < x ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double idle_server_response(const McsConfig& cfg, int level_id,
                            const IdleServerSpec& idle, int core) {
  cfg.level_index(level_id);
  require(core >= 0 && core < cfg.n_cores, Err::ConfigError,
          "core out of range");
  struct Srv {
    double budget, period;
  };
  std::vector<Srv> eligible;
  for (const auto& s : cfg.servers)
    if (s.core == core && s.criticality >= level_id)
      eligible.push_back(
          {tasks::to_seconds(s.budget), tasks::to_seconds(s.period)});

  const double own = idle.util * idle.period;
  double r = own;
  for (int iter = 0; iter < 100000; ++iter) {
    double next = own;
    for (const auto& s : eligible)
      next += std::ceil(r / s.period) * s.budget;
    if (next == r || next > idle.period) return next;
    r = next;
  }
  return r;
}

IdleServerSpec search_idle_server(const McsConfig& cfg, int level_id) {
  cfg.validate();
  const int li = cfg.level_index(level_id);
  const auto& lv = cfg.levels[li];
  const double rise_budget = cfg.theta_max_abs - cfg.design_ambient;
  const double rise_static = -cfg.thermal.b * lv.p_static / cfg.thermal.beta;
  const double gain = -cfg.thermal.b * lv.p_dynamic / cfg.thermal.beta;

  // Thermally admissible utilizations: the T->0 peak must sit under the cap.
  double u_floor = 0.0;
  bool uncapped = false;
  if (gain == 0.0) {
    require(rise_static < rise_budget, Err::Infeasible,
            "static rise alone exceeds the cap");
    uncapped = true;
  } else {
    const double x = (rise_budget - rise_static) / gain;
    require(x > 0.0, Err::Infeasible, "static rise alone exceeds the cap");
    uncapped = x >= 1.0;
    u_floor = std::max(0.0, 1.0 - x);
  }

  const double ceiling = 1.0 - level_utilization(cfg, level_id);
  double u = std::floor(std::min(ceiling, 1.0 - cfg.grid) / cfg.grid) *
             cfg.grid;
  for (; u > u_floor; u -= cfg.grid) {
    if (u <= 0.0) break;
    double t = uncapped
                   ? uncapped_period(cfg, level_id)
                   : idle_server_period(u, cfg.thermal, rise_budget,
                                        lv.p_static, lv.p_dynamic);
    if (!std::isfinite(t)) t = uncapped_period(cfg, level_id);
    IdleServerSpec spec{u, t, level_id, true};
    bool ok = true;
    for (int c = 0; c < cfg.n_cores && ok; ++c)
      ok = idle_server_response(cfg, level_id, spec, c) <= t;
    if (ok) return spec;
  }
  fail(Err::Infeasible, "no schedulable idle server on the grid");
}

double critical_ambient(const McsConfig& cfg, int level_id) {
  const auto& lv = cfg.levels[cfg.level_index(level_id)];
  const IdleServerSpec spec = search_idle_server(cfg, level_id);
  // Worst placement of the active time is a contiguous burn spanning two
  // idle-server periods, so the steady test runs at the doubled period.
  return core::max_ambient_for_util(cfg.theta_max_abs, 1.0 - spec.util,
                                    2.0 * spec.period, cfg.thermal,
                                    lv.p_static, lv.p_dynamic);
}

namespace {

core::PeriodicPowerSignal level_signal(const LevelSpec& lv,
                                       const IdleServerSpec& spec) {
  core::PeriodicPowerSignal sig;
  sig.p_static = lv.p_static;
  sig.p_dynamic = lv.p_dynamic;
  sig.util = 1.0 - spec.util;
  sig.period = 2.0 * spec.period;
  return sig;
}

// Steady-trajectory temperature at the signal's phase origin.
double steady_phase0(const core::PeriodicPowerSignal& sig,
                     const core::ScalarThermalParams& p) {
  const auto band = core::steady_band_single(p, sig, core::kReportSeries);
  return band.theta_avg +
         p.b * core::fourier_S(p.beta, sig.p_dynamic, sig.util, sig.period,
                               sig.offset, 0.0, core::kReportSeries);
}

}  // namespace

double level_shift_time(const McsConfig& cfg, int from_level_id,
                        int to_level_id) {
  const int fi = cfg.level_index(from_level_id);
  const int ti = cfg.level_index(to_level_id);
  require(fi == ti + 1, Err::ConfigError,
          "to_level must sit immediately below from_level");

  // The system settles at the lighter from-level workload before the
  // to-level servers resume; the wait ends when the temperature is within
  // 1% of the to-level steady average.
  const auto from_sig = level_signal(cfg.levels[fi],
                                     search_idle_server(cfg, from_level_id));
  const auto to_sig = level_signal(cfg.levels[ti],
                                   search_idle_server(cfg, to_level_id));
  const double theta0 = steady_phase0(from_sig, cfg.thermal);
  return core::shifting_time(theta0, to_sig, cfg.thermal, core::kReportSeries);
}

McsPlan plan(const McsConfig& cfg) {
  cfg.validate();
  McsPlan out;
  for (const auto& l : cfg.levels) {
    out.level_ids.push_back(l.id);
    out.idle.push_back(search_idle_server(cfg, l.id));
    out.ambient.push_back(critical_ambient(cfg, l.id));
  }
  for (std::size_t i = 0; i + 1 < out.ambient.size(); ++i)
    require(out.ambient[i] <= out.ambient[i + 1], Err::ConfigError,
            "critical ambients must be nondecreasing across levels");
  for (std::size_t i = 0; i + 1 < cfg.levels.size(); ++i)
    out.shift_down.push_back(
        level_shift_time(cfg, cfg.levels[i + 1].id, cfg.levels[i].id));
  return out;
}

ModeState initial_mode(const McsPlan& plan, double ambient, double now) {
  for (std::size_t i = 0; i < plan.ambient.size(); ++i)
    if (ambient <= plan.ambient[i])
      return {ModeKind::mode, static_cast<int>(i), now, std::nullopt};
  return {ModeKind::shutdown, 0, now, std::nullopt};
}

namespace {

// Lowest level index whose threshold covers the ambient; m when none does.
int covering_index(const McsPlan& plan, double ambient, int from) {
  int i = from;
  const int m = static_cast<int>(plan.ambient.size());
  while (i < m && ambient > plan.ambient[i]) ++i;
  return i;
}

StepResult escalate(double ambient, double now, const McsPlan& plan,
                    int running_index) {
  const int m = static_cast<int>(plan.ambient.size());
  const int target = covering_index(plan, ambient, running_index);
  if (target == m) {
    StepResult r{{ModeKind::shutdown, 0, now, std::nullopt}, {}};
    r.actions.push_back({ActionKind::shutdown, 0});
    return r;
  }
  StepResult r{{ModeKind::mode, target, now, std::nullopt}, {}};
  if (target > running_index)
    r.actions.push_back({ActionKind::terminate_below, plan.level_ids[target]});
  return r;
}

}  // namespace

StepResult mode_step(const ModeState& state, double ambient, double now,
                     const McsPlan& plan) {
  if (state.kind == ModeKind::shutdown) return {state, {}};

  if (state.kind == ModeKind::shifting) {
    const int tgt = state.index;
    const int running = tgt + 1;
    // Any re-rise above the target threshold aborts the descent; a rise
    // above the running threshold escalates in the same sample.
    if (ambient >= plan.ambient[tgt])
      return escalate(ambient, now, plan, running);
    if (state.pending_resume_at && now >= *state.pending_resume_at) {
      StepResult r{{ModeKind::mode, tgt, now, std::nullopt}, {}};
      r.actions.push_back({ActionKind::resume_level, plan.level_ids[tgt]});
      return r;
    }
    return {state, {}};
  }

  const int i = state.index;
  if (ambient > plan.ambient[i]) return escalate(ambient, now, plan, i);
  if (i > 0 && ambient < plan.ambient[i - 1]) {
    ModeState next{ModeKind::shifting, i - 1, now,
                   now + plan.shift_down[i - 1]};
    return {next, {}};
  }
  return {state, {}};
}

}  // namespace thermo::mcs
