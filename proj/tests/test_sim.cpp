#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "test_util.hpp"
#include "thermo/mcs.hpp"
#include "thermo/sched_analysis.hpp"
#include "thermo/server_design.hpp"
#include "thermo/simulator.hpp"

using namespace thermo;
using sim::Event;
using sim::EventKind;
using tasks::usec;

namespace {

core::MatrixThermalParams scalar_node(double beta, double b) {
  core::MatrixXd A(1, 1);
  A << beta;
  return core::MatrixThermalParams::make(A, core::VectorXd::Constant(1, b));
}

std::vector<Event> filter(const sim::SimTrace& tr, EventKind k, int task = -1,
                          int server = std::numeric_limits<int>::min()) {
  std::vector<Event> out;
  for (const auto& e : tr.events)
    if (e.kind == k && (task < 0 || e.task == task) &&
        (server == std::numeric_limits<int>::min() || e.server == server))
      out.push_back(e);
  return out;
}

struct Interval {
  usec a = 0, b = 0;
};

// CPU occupancy of one task from its start/stop/complete events.
std::vector<Interval> busy_intervals(const sim::SimTrace& tr, int task) {
  std::vector<Interval> out;
  usec open = -1;
  for (const auto& e : tr.events) {
    if (e.task != task) continue;
    if (e.kind == EventKind::start) {
      open = e.t;
    } else if ((e.kind == EventKind::stop || e.kind == EventKind::complete) &&
               open >= 0) {
      if (e.t > open) out.push_back({open, e.t});
      open = -1;
    }
  }
  if (open >= 0) out.push_back({open, tr.duration});
  return out;
}

usec overlap(const std::vector<Interval>& iv, usec a, usec b) {
  usec total = 0;
  for (const auto& i : iv)
    total += std::max<usec>(0, std::min(i.b, b) - std::max(i.a, a));
  return total;
}

tasks::TaskSpec cpu_task(usec c1, usec period, int prio, int server) {
  tasks::TaskSpec t;
  t.c1 = c1;
  t.period = period;
  t.priority = prio;
  t.server = server;
  return t;
}

tasks::TaskSpec gpu_task(usec c1, usec m1, usec k, usec m2, usec c2, usec period,
                         int prio, int server) {
  tasks::TaskSpec t;
  t.c1 = c1;
  t.m1 = m1;
  t.k = k;
  t.m2 = m2;
  t.c2 = c2;
  t.period = period;
  t.uses_gpu = true;
  t.priority = prio;
  t.server = server;
  return t;
}

tasks::ServerSpec mk_server(usec budget, usec period, int core,
                         tasks::ServerPolicy pol) {
  tasks::ServerSpec s;
  s.budget = budget;
  s.period = period;
  s.core = core;
  s.policy = pol;
  return s;
}

// Polling server that burns its whole budget every period on one node.
sim::SimConfig polling_burn_config(double burn_scale) {
  const core::ScalarThermalParams p = core::ScalarThermalParams::single(25.0, -0.4, 0.02);
  const double T = 0.05;
  const auto br = server::polling_budget_single(10.0, T, p);
  REQUIRE(!br.unconstrained);
  usec C = tasks::floor_usec(br.budget * burn_scale);
  C = std::min<usec>(C, 50000);

  sim::SimConfig cfg;
  cfg.ts.cpu_servers = {mk_server(C, 50000, 0, tasks::ServerPolicy::polling)};
  cfg.ts.tasks = {cpu_task(C, 50000, 1, 0)};
  cfg.thermal = scalar_node(-0.4, 0.02);
  cfg.p_active = core::VectorXd::Constant(1, 500.0);
  cfg.ambient = 40.0;
  cfg.duration = 25000000;
  return cfg;
}

}  // namespace

TEST_CASE("an idle chip decays toward ambient and emits nothing") {
  sim::SimConfig cfg;
  cfg.ts.cpu_servers = {mk_server(2000, 10000, 0, tasks::ServerPolicy::polling)};
  cfg.thermal = scalar_node(-0.4, 0.02);
  cfg.ambient = 40.0;
  cfg.theta0_rise = core::VectorXd::Constant(1, 10.0);
  cfg.duration = 5000000;

  const auto tr = sim::simulate(cfg);
  CHECK(tr.events.empty());
  REQUIRE(!tr.temps.empty());
  CHECK(tr.temps.front().theta_abs[0] == doctest::Approx(50.0));
  CHECK(tr.temps.back().theta_abs[0] ==
        doctest::Approx(40.0 + 10.0 * std::exp(-0.4 * 5.0)).epsilon(1e-9));
  for (std::size_t i = 1; i < tr.temps.size(); ++i)
    CHECK(tr.temps[i].theta_abs[0] < tr.temps[i - 1].theta_abs[0]);

  const auto m = sim::collect_metrics(tr);
  CHECK(m.per_task.empty());
  REQUIRE(m.per_server.size() == 2);
  CHECK(m.per_server[0].consumed == 0);
  CHECK(m.peak_abs[0] == doctest::Approx(50.0).epsilon(1e-9));
}

TEST_CASE("a polling server burning its designed budget sits on the cap") {
  const auto cfg = polling_burn_config(1.0);
  const auto tr = sim::simulate(cfg);
  const auto m = sim::collect_metrics(tr);
  const double peak_rise = m.peak_abs[0] - cfg.ambient;

  const core::ScalarThermalParams p = core::ScalarThermalParams::single(25.0, -0.4, 0.02);
  core::PeriodicPowerSignal sig;
  sig.p_dynamic = 500.0;
  sig.util = tasks::to_seconds(cfg.ts.cpu_servers[0].budget) / 0.05;
  sig.period = 0.05;
  const auto band = core::steady_band_single(p, sig, core::kTestSeries);

  CHECK(band.theta_max == doctest::Approx(10.0).epsilon(2e-3));
  CHECK(peak_rise == doctest::Approx(band.theta_max).epsilon(1e-3));
  CHECK(peak_rise <= 10.0 + 1e-6);
  CHECK(peak_rise > 9.9);
}

TEST_CASE("back-to-back gpu segments hand over without a gap") {
  sim::SimConfig cfg;
  cfg.ts.cpu_servers = {mk_server(100000, 100000, 0, tasks::ServerPolicy::deferrable),
                        mk_server(100000, 100000, 1, tasks::ServerPolicy::deferrable)};
  cfg.ts.gpu_server.budget = 16000;
  cfg.ts.gpu_server.period = 100000;
  cfg.ts.tasks = {gpu_task(1000, 2000, 4000, 2000, 1000, 100000, 1, 0),
                  gpu_task(2000, 2000, 4000, 2000, 1000, 100000, 1, 1)};
  cfg.record_thermal = false;
  cfg.duration = 200000;

  const auto tr = sim::simulate(cfg);
  const auto acq = filter(tr, EventKind::gpu_acquire);
  const auto rel = filter(tr, EventKind::gpu_release);
  REQUIRE(acq.size() == 4);
  REQUIRE(rel.size() == 4);
  CHECK(acq[0].t == 1000);
  CHECK(acq[0].task == 0);
  CHECK(rel[0].t == 9000);
  CHECK(rel[0].task == 0);
  CHECK(acq[1].t == 9000);  // contiguous handover at the release instant
  CHECK(acq[1].task == 1);
  CHECK(rel[1].t == 17000);
  CHECK(acq[2].t == 101000);
  CHECK(acq[3].t == 109000);

  // the release precedes the acquire in the event stream
  const auto pos = [&](const Event& e) {
    for (std::size_t i = 0; i < tr.events.size(); ++i) {
      const auto& x = tr.events[i];
      if (x.t == e.t && x.kind == e.kind && x.task == e.task) return i;
    }
    return tr.events.size();
  };
  CHECK(pos(rel[0]) < pos(acq[1]));

  // each consumption chunk returns exactly one gpu period after it opened
  const auto rep = filter(tr, EventKind::replenish, -1, sim::kGpuServer);
  REQUIRE(rep.size() >= 3);
  CHECK(rep[0].t == 0);
  CHECK(rep[0].amount == 16000);
  CHECK(rep[1].t == 101000);
  CHECK(rep[1].amount == 8000);
  CHECK(rep[2].t == 109000);
  CHECK(rep[2].amount == 8000);
}

TEST_CASE("budgets are conserved per hyperperiod under every policy") {
  sim::SimConfig cfg;
  cfg.ts.cpu_servers = {mk_server(2000, 10000, 0, tasks::ServerPolicy::polling),
                        mk_server(3000, 15000, 1, tasks::ServerPolicy::deferrable),
                        mk_server(2000, 10000, 2, tasks::ServerPolicy::sporadic)};
  cfg.ts.tasks = {cpu_task(2000, 10000, 1, 0), cpu_task(3000, 15000, 1, 1),
                  cpu_task(2000, 10000, 1, 2)};
  cfg.record_thermal = false;
  const usec H = 30000;
  cfg.duration = 10 * H;

  const auto tr = sim::simulate(cfg);

  for (std::size_t s = 0; s < 3; ++s) {
    CHECK(tr.consumed[s] <= tr.replenished[s]);
    CHECK(tr.replenished[s] - tr.consumed[s] <= cfg.ts.cpu_servers[s].budget);
    const auto busy = busy_intervals(tr, static_cast<int>(s));
    const usec per_h =
        H / cfg.ts.cpu_servers[s].period * cfg.ts.cpu_servers[s].budget;
    for (usec w = 0; w < cfg.duration; w += H)
      CHECK(overlap(busy, w, w + H) <= per_h + cfg.ts.cpu_servers[s].budget);
  }

  // polling grants arrive only on period boundaries, at full size
  for (const auto& e : filter(tr, EventKind::replenish, -1, 0)) {
    CHECK(e.t % 10000 == 0);
    CHECK(e.amount == 2000);
  }

  // sporadic grants return the consumed chunk exactly one period later
  const auto busy2 = busy_intervals(tr, 2);
  const auto rep2 = filter(tr, EventKind::replenish, -1, 2);
  REQUIRE(rep2.size() > 2);
  for (std::size_t i = 0; i < rep2.size(); ++i) {
    if (rep2[i].t == 0) continue;  // initial capacity
    const usec start = rep2[i].t - 10000;
    CHECK(overlap(busy2, start, start + rep2[i].amount) == rep2[i].amount);
  }
}

TEST_CASE("the gpu lock is exclusive, kernels run through, holders are boosted") {
  sim::SimConfig cfg;
  cfg.ts.cpu_servers = {mk_server(20000, 20000, 0, tasks::ServerPolicy::deferrable),
                        mk_server(20000, 20000, 1, tasks::ServerPolicy::deferrable)};
  cfg.ts.gpu_server.budget = 18000;
  cfg.ts.gpu_server.period = 20000;
  cfg.ts.tasks = {gpu_task(1000, 1000, 3000, 1000, 500, 20000, 2, 0),
                  cpu_task(4000, 10000, 1, 0),
                  gpu_task(500, 1500, 2000, 1500, 0, 20000, 1, 1)};
  cfg.record_thermal = false;
  cfg.duration = 200000;

  const auto tr = sim::simulate(cfg);
  const auto acq = filter(tr, EventKind::gpu_acquire);
  const auto rel = filter(tr, EventKind::gpu_release);
  REQUIRE(acq.size() == rel.size());
  REQUIRE(!acq.empty());

  for (std::size_t i = 0; i < acq.size(); ++i) {
    CHECK(rel[i].task == acq[i].task);
    CHECK(rel[i].t >= acq[i].t);
    if (i + 1 < acq.size()) CHECK(acq[i + 1].t >= rel[i].t);  // mutual exclusion

    const auto& sp = cfg.ts.tasks[acq[i].task];
    // generous budgets: the segment runs stall-free
    CHECK(rel[i].t - acq[i].t == sp.gpu_segment());

    // no start or stop of the holder strictly inside its kernel window
    const usec k0 = acq[i].t + sp.m1, k1 = k0 + sp.k;
    for (const auto& e : tr.events)
      if (e.task == acq[i].task &&
          (e.kind == EventKind::start || e.kind == EventKind::stop))
        CHECK(!(e.t > k0 && e.t < k1));

    // boosting: same-server tasks may start only while the holder is in its
    // kernel phase
    if (acq[i].task == 0)
      for (const auto& e : filter(tr, EventKind::start, 1))
        if (e.t >= acq[i].t && e.t < rel[i].t) {
          CHECK(e.t >= k0);
          CHECK(e.t < k1);
        }
  }

  const auto m = sim::collect_metrics(tr);
  for (const auto& pt : m.per_task) CHECK(pt.deadline_misses == 0);
}

TEST_CASE("the event-driven temperature matches the ode oracle") {
  std::mt19937_64 g(2024);
  const auto mp = testutil::random_stable_model(g, 3);

  sim::SimConfig cfg;
  cfg.ts.cpu_servers = {mk_server(3000, 10000, 0, tasks::ServerPolicy::deferrable),
                        mk_server(4000, 12000, 1, tasks::ServerPolicy::deferrable)};
  cfg.ts.gpu_server.budget = 8000;
  cfg.ts.gpu_server.period = 20000;
  cfg.ts.tasks = {cpu_task(2500, 10000, 1, 0),
                  gpu_task(500, 500, 2000, 500, 500, 24000, 1, 1)};
  cfg.thermal = mp;
  cfg.gpu_node = 2;
  cfg.p_static = core::VectorXd::Zero(3);
  cfg.p_static << 0.3, 0.2, 0.1;
  cfg.p_active = core::VectorXd::Zero(3);
  cfg.p_active << 2.0, 1.5, 3.0;
  cfg.ambient = 25.0;
  cfg.duration = 120000;
  cfg.sample_interval = 1700;

  const auto tr = sim::simulate(cfg);
  REQUIRE(!tr.segments.empty());

  core::VectorXd th = core::VectorXd::Zero(3);
  double max_err = 0.0;
  for (const auto& seg : tr.segments) {
    max_err = std::max(max_err, (seg.theta0_rise - th).cwiseAbs().maxCoeff());
    const core::VectorXd P = tr.mode_power[seg.mode];
    th = core::ode_oracle(th, tasks::to_seconds(seg.t0), tasks::to_seconds(seg.t1),
                          mp, [&](double) { return P; }, 1e-5);
  }
  CHECK(max_err <= 1e-6);
  CHECK((tr.temps.back().theta_abs.array() - 25.0 - th.array()).abs().maxCoeff() <=
        1e-6);

  // an interior grid sample agrees with the oracle integrated mid-segment
  bool checked_interior = false;
  for (const auto& s : tr.temps) {
    if (s.t == 0 || s.t % cfg.sample_interval != 0) continue;
    for (const auto& seg : tr.segments) {
      if (!(seg.t0 < s.t && s.t < seg.t1)) continue;
      const core::VectorXd P = tr.mode_power[seg.mode];
      const core::VectorXd want = core::ode_oracle(
          seg.theta0_rise, tasks::to_seconds(seg.t0), tasks::to_seconds(s.t), mp,
          [&](double) { return P; }, 1e-5);
      CHECK((s.theta_abs.array() - 25.0 - want.array()).abs().maxCoeff() <= 1e-6);
      checked_interior = true;
      break;
    }
    if (checked_interior) break;
  }
  CHECK(checked_interior);
}

TEST_CASE("identical configs replay to identical exports") {
  std::mt19937_64 g(99);
  const auto mp = testutil::random_stable_model(g, 3);

  sim::SimConfig cfg;
  cfg.ts.cpu_servers = {mk_server(3000, 10000, 0, tasks::ServerPolicy::deferrable),
                        mk_server(4000, 12000, 1, tasks::ServerPolicy::sporadic)};
  cfg.ts.gpu_server.budget = 8000;
  cfg.ts.gpu_server.period = 20000;
  cfg.ts.tasks = {cpu_task(2500, 10000, 1, 0),
                  gpu_task(500, 500, 2000, 500, 500, 24000, 1, 1)};
  cfg.thermal = mp;
  cfg.gpu_node = 2;
  cfg.p_active = core::VectorXd::Constant(3, 1.0);
  cfg.release = sim::ReleasePattern::random_phase;
  cfg.seed = 42;
  cfg.duration = 100000;
  cfg.sample_interval = 1000;

  const auto a = sim::simulate(cfg);
  const auto b = sim::simulate(cfg);
  CHECK(sim::export_events_jsonl(a) == sim::export_events_jsonl(b));
  CHECK(sim::export_temps_csv(a, 2) == sim::export_temps_csv(b, 2));
  CHECK(!sim::export_events_jsonl(a).empty());

  const std::string csv = sim::export_temps_csv(a, 2);
  CHECK(csv.rfind("t_s,core0_C,core1_C,gpu_C\n", 0) == 0);
}

TEST_CASE("mode transitions in the trace mirror the controller exactly") {
  mcs::McsPlan plan;
  plan.level_ids = {1, 2};
  plan.idle.resize(2);
  plan.ambient = {45.0, 55.0};
  plan.shift_down = {3.0};

  sim::SimConfig cfg;
  cfg.ts.cpu_servers = {mk_server(2000, 10000, 0, tasks::ServerPolicy::deferrable),
                        mk_server(2000, 10000, 1, tasks::ServerPolicy::deferrable)};
  cfg.ts.cpu_servers[0].criticality = 1;
  cfg.ts.cpu_servers[1].criticality = 2;
  cfg.ts.tasks = {cpu_task(1000, 10000, 1, 0), cpu_task(1000, 10000, 1, 1)};
  cfg.record_thermal = false;
  cfg.ambient = 40.0;
  cfg.duration = 200000;
  sim::McsRuntime rt;
  rt.plan = plan;
  rt.samples = {{0.01, 40.0}, {0.05, 50.0}, {0.09, 42.0},
                {0.12, 50.0}, {0.15, 60.0}, {0.18, 40.0}};
  cfg.mcs = rt;

  const auto tr = sim::simulate(cfg);

  // replay the controller and derive the expected event stream
  struct Exp {
    usec t;
    EventKind kind;
    int server;
    int extra;
    usec amount;
  };
  std::vector<Exp> want;
  std::vector<bool> susp(2, false);
  const auto apply = [&](usec t, const std::vector<mcs::ModeAction>& acts) {
    for (const auto& a : acts) {
      if (a.kind == mcs::ActionKind::terminate_below ||
          a.kind == mcs::ActionKind::shutdown) {
        const int lvl = a.kind == mcs::ActionKind::shutdown
                            ? std::numeric_limits<int>::max()
                            : a.level;
        for (int s = 0; s < 2; ++s)
          if (cfg.ts.cpu_servers[s].criticality < lvl && !susp[s]) {
            want.push_back({t, EventKind::terminate, s, -1, 0});
            susp[s] = true;
          }
      } else {
        for (int s = 0; s < 2; ++s)
          if (cfg.ts.cpu_servers[s].criticality >= a.level && susp[s]) {
            want.push_back({t, EventKind::resume, s, -1, 0});
            susp[s] = false;
          }
      }
    }
  };
  auto st = mcs::initial_mode(plan, 40.0, 0.0);
  want.push_back({0, EventKind::mode_change, -1, plan.level_ids[st.index], 0});
  for (const auto& s : rt.samples) {
    const usec t = static_cast<usec>(std::llround(s.t * 1e6));
    const auto res = mcs::mode_step(st, s.ambient, s.t, plan);
    if (res.state.kind != st.kind || res.state.index != st.index) {
      const int lvl = res.state.kind == mcs::ModeKind::shutdown
                          ? -1
                          : plan.level_ids[res.state.index];
      want.push_back({t, EventKind::mode_change, -1, lvl,
                      res.state.kind == mcs::ModeKind::shifting ? 1 : 0});
    }
    st = res.state;
    apply(t, res.actions);
  }

  std::vector<Event> got;
  for (const auto& e : tr.events)
    if (e.kind == EventKind::mode_change || e.kind == EventKind::terminate ||
        e.kind == EventKind::resume)
      got.push_back(e);

  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i].t == want[i].t);
    CHECK(got[i].kind == want[i].kind);
    if (want[i].kind != EventKind::mode_change) {
      CHECK(got[i].server == want[i].server);
    } else {
      CHECK(got[i].extra == want[i].extra);
      CHECK(got[i].amount == want[i].amount);
    }
  }

  // suspended servers release no work: once terminated at 0.05 s and never
  // resumed, task 0 never starts again
  for (const auto& e : filter(tr, EventKind::start, 0)) CHECK(e.t <= 50000);
  CHECK(!filter(tr, EventKind::terminate).empty());
  CHECK(filter(tr, EventKind::resume).empty());
}

TEST_CASE("thermal verification flags inflated budgets and clears designed ones") {
  auto cfg = polling_burn_config(1.0);
  cfg.theta_max_abs = cfg.ambient + 10.0 + 0.05;
  const auto ok = sim::simulate(cfg);
  CHECK(ok.violations.empty());
  CHECK(sim::verify_thermal(ok, cfg.theta_max_abs).empty());
  CHECK(sim::verify_thermal(ok, std::numeric_limits<double>::infinity()).empty());

  auto hot = polling_burn_config(1.5);
  hot.theta_max_abs = hot.ambient + 10.0 + 0.05;
  const auto bad = sim::simulate(hot);
  REQUIRE(!bad.violations.empty());
  CHECK(bad.violations.front().node == 0);
  CHECK(bad.violations.front().theta_abs > hot.theta_max_abs);
}

TEST_CASE("metrics aggregate jobs, budgets and peaks") {
  const auto cfg = polling_burn_config(1.0);
  const auto tr = sim::simulate(cfg);
  const auto m = sim::collect_metrics(tr);

  REQUIRE(m.per_task.size() == 1);
  CHECK(m.per_task[0].jobs == static_cast<long>(cfg.duration / 50000 + 1));
  CHECK(m.per_server[0].consumed == tr.consumed[0]);
  CHECK(m.per_server[0].busy_fraction ==
        doctest::Approx(static_cast<double>(tr.consumed[0]) /
                        static_cast<double>(cfg.duration)));

  // the burn peaks exactly at a stop boundary, so the sampled maximum and the
  // per-segment analytic peak agree
  double sample_max = -1e300;
  for (const auto& s : tr.temps) sample_max = std::max(sample_max, s.theta_abs[0]);
  CHECK(m.peak_abs[0] == doctest::Approx(sample_max).epsilon(1e-12));
}

TEST_CASE("analysis bounds hold in simulation for a schedulable set") {
  sched::GenParams gp;
  gp.n_cores = 2;
  gp.n_tasks_min = 6;
  gp.n_tasks_max = 6;
  gp.util_min = 0.4;
  gp.util_max = 0.7;
  gp.period_min = 30000;
  gp.period_max = 120000;

  tasks::Taskset ts;
  sched::AnalysisReport rep;
  bool found = false;
  for (std::uint64_t seed = 1; seed <= 100 && !found; ++seed) {
    gp.seed = seed;
    ts = sched::generate_taskset(gp);
    rep = sched::analyze_taskset(ts);
    found = rep.taskset_schedulable;
  }
  REQUIRE(found);

  sim::SimConfig cfg;
  cfg.ts = ts;
  cfg.ts.queue_policy = rep.queue_used;
  cfg.record_thermal = false;
  usec max_period = 0;
  for (const auto& t : ts.tasks) max_period = std::max(max_period, t.period);
  cfg.duration = 30 * max_period;

  const auto m = sim::collect_metrics(sim::simulate(cfg));
  for (std::size_t i = 0; i < ts.tasks.size(); ++i) {
    REQUIRE(rep.per_task[i].schedulable);
    CHECK(m.per_task[i].deadline_misses == 0);
    CHECK(m.per_task[i].max_response <= rep.per_task[i].response);
  }
}
