#include "thermo/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <map>
#include <random>

namespace thermo::sim {

namespace {

constexpr usec kNever = std::numeric_limits<usec>::max() / 4;

enum class Phase { idle, c1, wait_gpu, m1, k, m2, c2 };

bool cpu_phase(Phase p) {
  return p == Phase::c1 || p == Phase::m1 || p == Phase::m2 || p == Phase::c2;
}
bool locked_phase(Phase p) { return p == Phase::m1 || p == Phase::m2; }

struct Chunk {
  usec t = 0;
  usec amount = 0;
};

struct TaskRt {
  int core = 0;
  usec next_release = kNever;
  std::size_t script_i = 0;
  std::deque<long> queue;  // pending job record indices

  long cur_job = -1;
  usec cur_release = 0;
  Phase phase = Phase::idle;
  usec phase_left = 0;
  bool holds_gpu = false;
  usec k_end = kNever;
};

struct ServerRt {
  usec budget = 0;
  usec next_tick = kNever;
  std::deque<Chunk> chunks;  // sporadic replenishments in flight
  bool suspended = false;
  usec open_start = -1;  // sporadic consumption chunk under construction
  usec open_amount = 0;
  bool consuming = false;
};

struct GpuRt {
  usec budget = 0;
  std::deque<Chunk> chunks;
  int holder = -1;
  struct Waiter {
    int task;
    long seq;
  };
  std::vector<Waiter> queue;
  long seq = 0;
  usec open_start = -1;
  usec open_amount = 0;
  bool consuming = false;
};

double to_sec(usec t) { return static_cast<double>(t) * 1e-6; }

struct Engine {
  const SimConfig& cfg;
  const Taskset& ts;
  const bool has_gpu;
  const QueuePolicy queue_policy;
  const int n_cores;
  const int n_nodes;
  const bool thermal_on;

  std::vector<TaskRt> tr;
  std::vector<ServerRt> sr;
  GpuRt gpu;
  std::vector<std::vector<int>> core_servers;  // server indices per core
  std::vector<std::vector<int>> server_tasks;  // task indices per server
  std::vector<int> running;                    // task per core, -1 idle
  std::vector<long> running_job;

  usec now = 0;
  Eigen::VectorXd theta;  // rise over ambient
  Eigen::VectorXd chip_offset;
  double ambient;
  std::vector<std::pair<usec, double>> samples;  // ambient scenario in usec
  std::size_t sample_i = 0;
  int mode_bits = 0;
  std::map<int, int> mode_ids;
  std::map<int, Eigen::VectorXd> steady_cache;  // per mode id

  bool mcs_on = false;
  mcs::ModeState mode_state{};

  SimTrace out;

  explicit Engine(const SimConfig& c)
      : cfg(c),
        ts(c.ts),
        has_gpu(std::any_of(ts.tasks.begin(), ts.tasks.end(),
                            [](const auto& t) { return t.uses_gpu; })),
        queue_policy(ts.queue_policy == QueuePolicy::hybrid
                         ? QueuePolicy::priority
                         : ts.queue_policy),
        n_cores(core_count(ts)),
        n_nodes(c.thermal.n()),
        thermal_on(c.record_thermal) {}

  static int core_count(const Taskset& ts) {
    int m = 0;
    for (const auto& s : ts.cpu_servers) m = std::max(m, s.core + 1);
    return std::max(m, 1);
  }

  void ev(EventKind k, int task, int server, long job, int extra, usec amount) {
    out.events.push_back({now, k, task, server, job, extra, amount});
  }

  // ---- setup ----

  void init() {
    tr.resize(ts.tasks.size());
    sr.resize(ts.cpu_servers.size());
    core_servers.resize(n_cores);
    server_tasks.resize(ts.cpu_servers.size());
    running.assign(n_cores, -1);
    running_job.assign(n_cores, -1);
    out.jobs.resize(ts.tasks.size());
    out.consumed.assign(ts.cpu_servers.size() + 1, 0);
    out.replenished.assign(ts.cpu_servers.size() + 1, 0);
    out.thermal = cfg.thermal;
    out.n_nodes = n_nodes;
    out.duration = cfg.duration;

    for (std::size_t i = 0; i < ts.cpu_servers.size(); ++i)
      core_servers[ts.cpu_servers[i].core].push_back(static_cast<int>(i));
    for (std::size_t i = 0; i < ts.tasks.size(); ++i) {
      tr[i].core = ts.cpu_servers[ts.tasks[i].server].core;
      server_tasks[ts.tasks[i].server].push_back(static_cast<int>(i));
    }

    std::mt19937_64 gen(cfg.seed);
    for (std::size_t i = 0; i < ts.tasks.size(); ++i) {
      switch (cfg.release) {
        case ReleasePattern::synchronous:
          tr[i].next_release = 0;
          break;
        case ReleasePattern::random_phase:
          tr[i].next_release = static_cast<usec>(
              gen() % static_cast<std::uint64_t>(ts.tasks[i].period));
          break;
        case ReleasePattern::scripted:
          tr[i].next_release = cfg.scripted_releases[i].empty()
                                   ? kNever
                                   : cfg.scripted_releases[i][0];
          break;
      }
    }

    // initial grants count as replenishments so conservation windows balance
    for (std::size_t i = 0; i < ts.cpu_servers.size(); ++i) {
      const auto& s = ts.cpu_servers[i];
      switch (s.policy) {
        case ServerPolicy::polling:
          sr[i].budget = 0;
          sr[i].next_tick = 0;
          break;
        case ServerPolicy::deferrable:
          sr[i].budget = s.budget;
          sr[i].next_tick = s.period;
          record_replenish(static_cast<int>(i), s.budget);
          break;
        case ServerPolicy::sporadic:
          sr[i].budget = s.budget;
          sr[i].next_tick = kNever;
          record_replenish(static_cast<int>(i), s.budget);
          break;
      }
    }
    if (has_gpu) {
      gpu.budget = ts.gpu_server.budget;
      record_replenish(kGpuServer, gpu.budget);
    }

    theta = cfg.theta0_rise.size() ? cfg.theta0_rise
                                   : Eigen::VectorXd::Zero(n_nodes);
    chip_offset = cfg.thermal.chip_offset.size()
                      ? cfg.thermal.chip_offset
                      : Eigen::VectorXd::Zero(n_nodes);
    ambient = cfg.ambient;

    if (cfg.mcs) {
      mcs_on = true;
      for (const auto& s : cfg.mcs->samples)
        samples.emplace_back(static_cast<usec>(std::llround(s.t * 1e6)),
                             s.ambient);
      double a0 = ambient;
      if (!samples.empty() && samples.front().first == 0)
        a0 = samples.front().second;
      mode_state = mcs::initial_mode(cfg.mcs->plan, a0, 0.0);
      emit_mode_change();
      if (mode_state.kind == mcs::ModeKind::shutdown)
        suspend_below(std::numeric_limits<int>::max());
      else
        suspend_below(cfg.mcs->plan.level_ids[mode_state.index]);
    }
  }

  void record_replenish(int server, usec amount) {
    if (amount <= 0) return;
    ev(EventKind::replenish, -1, server, -1, -1, amount);
    const std::size_t slot =
        server == kGpuServer ? ts.cpu_servers.size() : static_cast<std::size_t>(server);
    out.replenished[slot] += amount;
  }

  // ---- mode controller ----

  void emit_mode_change() {
    const bool shifting = mode_state.kind == mcs::ModeKind::shifting;
    const int level = mode_state.kind == mcs::ModeKind::shutdown
                          ? -1
                          : cfg.mcs->plan.level_ids[mode_state.index];
    ev(EventKind::mode_change, -1, -1, -1, level, shifting ? 1 : 0);
  }

  void suspend_below(int level) {
    for (std::size_t i = 0; i < ts.cpu_servers.size(); ++i)
      if (ts.cpu_servers[i].criticality < level && !sr[i].suspended)
        suspend_server(static_cast<int>(i));
  }

  void suspend_server(int si) {
    ServerRt& s = sr[si];
    ev(EventKind::terminate, -1, si, -1, -1, 0);
    s.suspended = true;
    close_server_chunk(si);
    s.consuming = false;
    if (s.budget > 0) {
      ev(EventKind::deplete, -1, si, -1, -1, s.budget);
      s.budget = 0;
    }
    s.chunks.clear();
    for (int ti : server_tasks[si]) {
      TaskRt& t = tr[ti];
      if (running[t.core] == ti) {
        ev(EventKind::stop, ti, ts.tasks[ti].server, t.cur_job, t.core, 0);
        running[t.core] = -1;
        running_job[t.core] = -1;
      }
      if (t.phase == Phase::wait_gpu)
        gpu.queue.erase(std::remove_if(gpu.queue.begin(), gpu.queue.end(),
                                       [&](const auto& w) { return w.task == ti; }),
                        gpu.queue.end());
      if (t.holds_gpu) release_lock(ti);
      t.phase = Phase::idle;
      t.phase_left = 0;
      t.cur_job = -1;
      t.queue.clear();
    }
  }

  void resume_at_least(int level) {
    for (std::size_t i = 0; i < ts.cpu_servers.size(); ++i) {
      if (ts.cpu_servers[i].criticality < level || !sr[i].suspended) continue;
      ServerRt& s = sr[i];
      s.suspended = false;
      ev(EventKind::resume, -1, static_cast<int>(i), -1, -1, 0);
      // polling and deferrable refill at their next boundary; sporadic has no
      // boundary, so it returns at capacity
      if (ts.cpu_servers[i].policy == ServerPolicy::sporadic) {
        s.budget = ts.cpu_servers[i].budget;
        record_replenish(static_cast<int>(i), s.budget);
      }
    }
  }

  void step_mode(double a) {
    ambient = a;
    if (!mcs_on) return;
    const auto res =
        mcs::mode_step(mode_state, a, to_sec(now), cfg.mcs->plan);
    const bool changed = res.state.kind != mode_state.kind ||
                         res.state.index != mode_state.index;
    mode_state = res.state;
    if (changed) emit_mode_change();
    for (const auto& act : res.actions) {
      switch (act.kind) {
        case mcs::ActionKind::terminate_below:
          suspend_below(act.level);
          break;
        case mcs::ActionKind::resume_level:
          resume_at_least(act.level);
          break;
        case mcs::ActionKind::shutdown:
          suspend_below(std::numeric_limits<int>::max());
          break;
      }
    }
  }

  // ---- budget accounting ----

  void close_server_chunk(int si) {
    ServerRt& s = sr[si];
    if (s.open_start < 0) return;
    s.chunks.push_back({s.open_start + ts.cpu_servers[si].period, s.open_amount});
    s.open_start = -1;
    s.open_amount = 0;
  }

  void close_gpu_chunk() {
    if (gpu.open_start < 0) return;
    gpu.chunks.push_back({gpu.open_start + ts.gpu_server.period, gpu.open_amount});
    gpu.open_start = -1;
    gpu.open_amount = 0;
  }

  bool server_ready_work(int si) const {
    if (sr[si].suspended) return false;
    for (int ti : server_tasks[si])
      if (cpu_phase(tr[ti].phase)) return true;
    return false;
  }

  // ---- job lifecycle ----

  void release_lock(int ti) {
    close_gpu_chunk();
    gpu.consuming = false;
    gpu.holder = -1;
    tr[ti].holds_gpu = false;
    ev(EventKind::gpu_release, ti, kGpuServer, tr[ti].cur_job, -1, 0);
  }

  void complete_job(int ti) {
    TaskRt& t = tr[ti];
    JobRecord& rec = out.jobs[ti][t.cur_job];
    rec.completion = now;
    rec.missed = now > rec.release + ts.tasks[ti].period;
    ev(EventKind::complete, ti, ts.tasks[ti].server, t.cur_job, t.core, 0);
    t.phase = Phase::idle;
    t.phase_left = 0;
    t.cur_job = -1;
    if (!t.queue.empty()) bind_next_job(ti);
  }

  void bind_next_job(int ti) {
    TaskRt& t = tr[ti];
    t.cur_job = t.queue.front();
    t.queue.pop_front();
    t.cur_release = out.jobs[ti][t.cur_job].release;
    t.phase = Phase::c1;
    t.phase_left = ts.tasks[ti].c1;
    if (t.phase_left == 0) finish_phase(ti);
  }

  void finish_phase(int ti) {
    TaskRt& t = tr[ti];
    const tasks::TaskSpec& sp = ts.tasks[ti];
    switch (t.phase) {
      case Phase::c1:
        if (!sp.uses_gpu) {
          complete_job(ti);
          return;
        }
        t.phase = Phase::wait_gpu;
        ev(EventKind::gpu_request, ti, kGpuServer, t.cur_job, -1, 0);
        gpu.queue.push_back({ti, gpu.seq++});
        return;
      case Phase::m1:
        t.phase = Phase::k;
        t.phase_left = sp.k;
        t.k_end = now + sp.k;
        if (sp.k == 0) finish_phase(ti);
        return;
      case Phase::k:
        t.phase = Phase::m2;
        t.phase_left = sp.m2;
        if (sp.m2 == 0) finish_phase(ti);
        return;
      case Phase::m2:
        release_lock(ti);
        t.phase = Phase::c2;
        t.phase_left = sp.c2;
        if (sp.c2 == 0) finish_phase(ti);
        return;
      case Phase::c2:
        complete_job(ti);
        return;
      default:
        return;
    }
  }

  void release_job(int ti) {
    TaskRt& t = tr[ti];
    if (sr[ts.tasks[ti].server].suspended) return;  // suppressed entirely
    out.jobs[ti].push_back({now, -1, false});
    const long rec = static_cast<long>(out.jobs[ti].size()) - 1;
    t.queue.push_back(rec);
    ev(EventKind::release, ti, ts.tasks[ti].server, rec, t.core, 0);
    if (t.cur_job < 0) bind_next_job(ti);
  }

  // ---- gpu queue ----

  void grant_pass() {
    if (!has_gpu || gpu.holder >= 0 || gpu.queue.empty()) return;
    std::size_t pick = 0;
    if (queue_policy == QueuePolicy::priority) {
      for (std::size_t i = 1; i < gpu.queue.size(); ++i) {
        const int a = ts.tasks[gpu.queue[i].task].priority;
        const int b = ts.tasks[gpu.queue[pick].task].priority;
        if (a > b || (a == b && gpu.queue[i].seq < gpu.queue[pick].seq)) pick = i;
      }
    } else {  // fcfs: arrival order; head-of-line blocks until it has budget
      for (std::size_t i = 1; i < gpu.queue.size(); ++i)
        if (gpu.queue[i].seq < gpu.queue[pick].seq) pick = i;
    }
    const int ti = gpu.queue[pick].task;
    if (gpu.budget < ts.tasks[ti].gpu_segment()) return;
    gpu.queue.erase(gpu.queue.begin() + static_cast<long>(pick));
    gpu.holder = ti;
    tr[ti].holds_gpu = true;
    ev(EventKind::gpu_acquire, ti, kGpuServer, tr[ti].cur_job, -1, 0);
    tr[ti].phase = Phase::m1;
    tr[ti].phase_left = ts.tasks[ti].m1;
    if (tr[ti].phase_left == 0) finish_phase(ti);
  }

  // ---- scheduling ----

  // Effective-priority pick for one server: a lock holder is boosted to the
  // top, so while it has CPU work nothing else of this server runs; during its
  // kernel the next-highest ready task may run.
  int server_candidate(int si) const {
    const ServerRt& s = sr[si];
    if (s.suspended || s.budget <= 0) return -1;
    int holder = -1;
    for (int ti : server_tasks[si])
      if (tr[ti].holds_gpu) holder = ti;
    if (holder >= 0 && locked_phase(tr[holder].phase)) return holder;
    const usec mot = ts.cpu_servers[si].mot_reserve;
    if (s.budget <= mot) return -1;  // only lock holders may tap the reserve
    int best = -1;
    for (int ti : server_tasks[si]) {
      const Phase p = tr[ti].phase;
      if (p != Phase::c1 && p != Phase::c2) continue;
      if (best < 0 || ts.tasks[ti].priority > ts.tasks[best].priority) best = ti;
    }
    return best;
  }

  void reschedule() {
    // polling budget survives only while the server has ready work
    for (std::size_t i = 0; i < ts.cpu_servers.size(); ++i) {
      if (ts.cpu_servers[i].policy != ServerPolicy::polling) continue;
      if (sr[i].budget > 0 && !server_ready_work(static_cast<int>(i))) {
        ev(EventKind::deplete, -1, static_cast<int>(i), -1, -1, sr[i].budget);
        sr[i].budget = 0;
      }
    }
    for (int core = 0; core < n_cores; ++core) {
      int pick = -1;
      for (int si : core_servers[core])
        if ((pick = server_candidate(si)) >= 0) break;
      const int old = running[core];
      const long old_job = running_job[core];
      const long new_job = pick >= 0 ? tr[pick].cur_job : -1;
      if (old == pick && old_job == new_job) continue;
      if (old >= 0 && tr[old].cur_job == old_job && old_job >= 0)
        ev(EventKind::stop, old, ts.tasks[old].server, old_job, core, 0);
      if (pick >= 0)
        ev(EventKind::start, pick, ts.tasks[pick].server, new_job, core, 0);
      running[core] = pick;
      running_job[core] = new_job;
    }
    // close sporadic consumption chunks when a server pauses
    for (std::size_t i = 0; i < ts.cpu_servers.size(); ++i) {
      const bool consuming_now = server_consuming(static_cast<int>(i));
      if (sr[i].consuming && !consuming_now &&
          ts.cpu_servers[i].policy == ServerPolicy::sporadic)
        close_server_chunk(static_cast<int>(i));
      sr[i].consuming = consuming_now;
    }
    if (has_gpu) {
      const bool consuming_now = gpu_consuming();
      if (gpu.consuming && !consuming_now) close_gpu_chunk();
      gpu.consuming = consuming_now;
    }
    mode_bits = 0;
    for (int core = 0; core < n_cores; ++core)
      if (running[core] >= 0) mode_bits |= 1 << core;
    if (cfg.gpu_node >= 0 && gpu.holder >= 0 && tr[gpu.holder].phase == Phase::k)
      mode_bits |= 1 << cfg.gpu_node;
  }

  bool server_consuming(int si) const {
    for (int ti : server_tasks[si])
      if (running[tr[ti].core] == ti) return true;
    return false;
  }

  bool gpu_consuming() const {
    if (gpu.holder < 0) return false;
    const TaskRt& h = tr[gpu.holder];
    return h.phase == Phase::k || running[h.core] == gpu.holder;
  }

  // ---- time advance ----

  usec next_time() const {
    usec t = cfg.duration;
    for (int core = 0; core < n_cores; ++core) {
      const int ti = running[core];
      if (ti < 0) continue;
      const TaskRt& r = tr[ti];
      const ServerRt& s = sr[ts.tasks[ti].server];
      const usec mot =
          locked_phase(r.phase) ? 0 : ts.cpu_servers[ts.tasks[ti].server].mot_reserve;
      t = std::min(t, now + std::min(r.phase_left, s.budget - mot));
    }
    if (gpu.holder >= 0 && tr[gpu.holder].phase == Phase::k)
      t = std::min(t, tr[gpu.holder].k_end);
    for (const auto& s : sr) {
      t = std::min(t, s.next_tick);
      if (!s.chunks.empty()) t = std::min(t, s.chunks.front().t);
    }
    if (!gpu.chunks.empty()) t = std::min(t, gpu.chunks.front().t);
    for (const auto& r : tr) t = std::min(t, r.next_release);
    if (sample_i < samples.size()) t = std::min(t, samples[sample_i].first);
    return std::min(t, cfg.duration);
  }

  int mode_index(int bits) {
    auto it = mode_ids.find(bits);
    if (it != mode_ids.end()) return it->second;
    Eigen::VectorXd p = cfg.p_static.size() ? cfg.p_static
                                            : Eigen::VectorXd::Zero(n_nodes);
    if (cfg.p_active.size())
      for (int j = 0; j < n_nodes; ++j)
        if (bits & (1 << j)) p[j] += cfg.p_active[j];
    const int id = static_cast<int>(out.mode_power.size());
    out.mode_power.push_back(p);
    mode_ids.emplace(bits, id);
    steady_cache.emplace(
        id, cfg.thermal.A.partialPivLu().solve(
                (-(cfg.thermal.Bdiag.array() * p.array())).matrix()));
    return id;
  }

  void sample_theta(usec t, const Eigen::VectorXd& rise) {
    Eigen::VectorXd abs = rise + chip_offset;
    abs.array() += ambient;
    out.temps.push_back({t, std::move(abs)});
  }

  void advance(usec to) {
    if (to == now) return;
    const usec dt = to - now;
    // budget burn for every running consumer
    for (int core = 0; core < n_cores; ++core) {
      const int ti = running[core];
      if (ti < 0) continue;
      TaskRt& r = tr[ti];
      const int si = ts.tasks[ti].server;
      r.phase_left -= dt;
      sr[si].budget -= dt;
      out.consumed[si] += dt;
      if (ts.cpu_servers[si].policy == ServerPolicy::sporadic) {
        if (sr[si].open_start < 0) sr[si].open_start = now;
        sr[si].open_amount += dt;
      }
      if (locked_phase(r.phase)) burn_gpu(dt);
    }
    if (gpu.holder >= 0 && tr[gpu.holder].phase == Phase::k) {
      tr[gpu.holder].phase_left -= dt;
      burn_gpu(dt);
    }
    if (thermal_on) {
      const int id = mode_index(mode_bits);
      out.segments.push_back({now, to, theta, id, ambient});
      const Eigen::VectorXd& s = steady_cache.at(id);
      if (cfg.sample_interval > 0) {
        usec g = (now / cfg.sample_interval + 1) * cfg.sample_interval;
        for (; g < to; g += cfg.sample_interval) {
          const Eigen::VectorXd rise =
              s + cfg.thermal.exp_at(to_sec(g - now)) * (theta - s);
          sample_theta(g, rise);
        }
      }
      theta = s + cfg.thermal.exp_at(to_sec(dt)) * (theta - s);
    }
    now = to;
  }

  void burn_gpu(usec dt) {
    gpu.budget -= dt;
    out.consumed[ts.cpu_servers.size()] += dt;
    if (gpu.open_start < 0) gpu.open_start = now;
    gpu.open_amount += dt;
  }

  // ---- event processing, in the documented same-timestamp order ----

  void process() {
    // replenishments
    for (std::size_t i = 0; i < ts.cpu_servers.size(); ++i) {
      ServerRt& s = sr[i];
      while (!s.chunks.empty() && s.chunks.front().t == now) {
        if (!s.suspended) {
          s.budget += s.chunks.front().amount;
          record_replenish(static_cast<int>(i), s.chunks.front().amount);
        }
        s.chunks.pop_front();
      }
      if (s.next_tick == now) {
        const auto& spec = ts.cpu_servers[i];
        if (!s.suspended) {
          if (spec.policy == ServerPolicy::deferrable) {
            record_replenish(static_cast<int>(i), spec.budget - s.budget);
            s.budget = spec.budget;
          } else if (spec.policy == ServerPolicy::polling) {
            if (server_ready_work(static_cast<int>(i))) {
              record_replenish(static_cast<int>(i), spec.budget - s.budget);
              s.budget = spec.budget;
            } else if (s.budget > 0) {
              ev(EventKind::deplete, -1, static_cast<int>(i), -1, -1, s.budget);
              s.budget = 0;
            }
          }
        }
        s.next_tick += spec.period;
      }
    }
    while (!gpu.chunks.empty() && gpu.chunks.front().t == now) {
      gpu.budget += gpu.chunks.front().amount;
      record_replenish(kGpuServer, gpu.chunks.front().amount);
      gpu.chunks.pop_front();
    }

    // ambient / mode controller
    while (sample_i < samples.size() && samples[sample_i].first == now) {
      step_mode(samples[sample_i].second);
      ++sample_i;
    }

    // job releases
    for (std::size_t i = 0; i < ts.tasks.size(); ++i) {
      TaskRt& t = tr[i];
      while (t.next_release == now) {
        release_job(static_cast<int>(i));
        if (cfg.release == ReleasePattern::scripted) {
          ++t.script_i;
          t.next_release = t.script_i < cfg.scripted_releases[i].size()
                               ? cfg.scripted_releases[i][t.script_i]
                               : kNever;
        } else {
          t.next_release += ts.tasks[i].period;
        }
      }
    }

    // phase completions: the kernel first, then per-core cpu phases
    if (gpu.holder >= 0 && tr[gpu.holder].phase == Phase::k &&
        tr[gpu.holder].k_end == now)
      finish_phase(gpu.holder);
    for (int core = 0; core < n_cores; ++core) {
      const int ti = running[core];
      if (ti >= 0 && cpu_phase(tr[ti].phase) && tr[ti].phase_left == 0)
        finish_phase(ti);
    }

    grant_pass();
    reschedule();
  }

  SimTrace run() {
    init();
    process();
    if (thermal_on) sample_theta(0, theta);
    while (now < cfg.duration) {
      const usec t = next_time();
      if (t > now) {
        advance(t);
        if (thermal_on) sample_theta(now, theta);
      }
      process();
    }
    for (std::size_t i = 0; i < ts.tasks.size(); ++i)
      for (auto& rec : out.jobs[i])
        if (rec.completion < 0 && now > rec.release + ts.tasks[i].period)
          rec.missed = true;
    if (thermal_on && std::isfinite(cfg.theta_max_abs))
      out.violations = verify_thermal(out, cfg.theta_max_abs);
    return std::move(out);
  }
};

// Peak of one node's trajectory over a constant-power segment: the interior
// extrema are roots of an n-term exponential sum, bracketed on a coarse grid
// and bisected.
double segment_node_peak(const core::MatrixThermalParams& mp,
                         const Eigen::VectorXd& steady,
                         const Eigen::VectorXd& theta0, int node, double dt,
                         double* t_at) {
  const Eigen::VectorXd w = mp.Vinv * (theta0 - steady);
  const int n = mp.n();
  const auto value = [&](double t) {
    double v = steady[node];
    for (int i = 0; i < n; ++i)
      v += mp.V(node, i) * w[i] * std::exp(mp.D[i] * t);
    return v;
  };
  const auto slope = [&](double t) {
    double v = 0.0;
    for (int i = 0; i < n; ++i)
      v += mp.V(node, i) * w[i] * mp.D[i] * std::exp(mp.D[i] * t);
    return v;
  };
  double best = value(dt);
  double best_t = dt;
  const double v0 = value(0.0);
  if (v0 > best) {
    best = v0;
    best_t = 0.0;
  }
  const int grid = 16 * n;
  double prev_t = 0.0, prev_s = slope(0.0);
  for (int i = 1; i <= grid; ++i) {
    const double t = dt * i / grid;
    const double s = slope(t);
    if (prev_s > 0.0 && s <= 0.0) {  // local max inside the bracket
      double lo = prev_t, hi = t;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (slope(mid) > 0.0 ? lo : hi) = mid;
      }
      const double v = value(0.5 * (lo + hi));
      if (v > best) {
        best = v;
        best_t = 0.5 * (lo + hi);
      }
    }
    prev_t = t;
    prev_s = s;
  }
  if (t_at) *t_at = best_t;
  return best;
}

Eigen::VectorXd segment_steady(const SimTrace& trace, int mode) {
  const Eigen::VectorXd& p = trace.mode_power[mode];
  return trace.thermal.A.partialPivLu().solve(
      (-(trace.thermal.Bdiag.array() * p.array())).matrix());
}

}  // namespace

void SimConfig::validate() const {
  require(duration > 0, Err::ConfigError, "duration must be positive");
  if (!ts.tasks.empty()) ts.validate();
  for (const auto& s : ts.cpu_servers) s.validate();
  const int n = thermal.n();
  require(!record_thermal || n >= 1, Err::ConfigError,
          "thermal model needs at least one node");
  int cores = 1;
  for (const auto& s : ts.cpu_servers) cores = std::max(cores, s.core + 1);
  require(!record_thermal || cores <= n, Err::ConfigError,
          "thermal model has fewer nodes than cores");
  require(gpu_node < n, Err::ConfigError, "gpu node is not a thermal node");
  require(p_static.size() == 0 || p_static.size() == n, Err::ConfigError,
          "static power vector size mismatch");
  require(p_active.size() == 0 || p_active.size() == n, Err::ConfigError,
          "active power vector size mismatch");
  require(theta0_rise.size() == 0 || theta0_rise.size() == n, Err::ConfigError,
          "initial temperature vector size mismatch");
  if (release == ReleasePattern::scripted) {
    require(scripted_releases.size() == ts.tasks.size(), Err::ConfigError,
            "scripted releases must cover every task");
    for (const auto& list : scripted_releases)
      require(std::is_sorted(list.begin(), list.end()), Err::ConfigError,
              "scripted releases must ascend");
  }
  if (mcs) {
    require(!mcs->plan.level_ids.empty(), Err::ConfigError,
            "mcs plan has no levels");
    for (std::size_t i = 1; i < mcs->samples.size(); ++i)
      require(mcs->samples[i - 1].t < mcs->samples[i].t, Err::ConfigError,
              "ambient samples must strictly ascend");
  }
}

SimTrace simulate(const SimConfig& cfg) {
  cfg.validate();
  Engine e(cfg);
  return e.run();
}

std::vector<Violation> verify_thermal(const SimTrace& trace,
                                      double theta_max_abs) {
  std::vector<Violation> out;
  if (!std::isfinite(theta_max_abs)) return out;
  std::map<int, Eigen::VectorXd> steady;
  const Eigen::VectorXd offset = trace.thermal.chip_offset.size()
                                     ? trace.thermal.chip_offset
                                     : Eigen::VectorXd::Zero(trace.n_nodes);
  for (const auto& seg : trace.segments) {
    auto it = steady.find(seg.mode);
    if (it == steady.end())
      it = steady.emplace(seg.mode, segment_steady(trace, seg.mode)).first;
    const double dt = to_sec(seg.t1 - seg.t0);
    for (int node = 0; node < trace.n_nodes; ++node) {
      double t_at = 0.0;
      const double peak = segment_node_peak(trace.thermal, it->second,
                                            seg.theta0_rise, node, dt, &t_at) +
                          offset[node] + seg.ambient;
      if (peak > theta_max_abs)
        out.push_back({to_sec(seg.t0) + t_at, node, peak});
    }
  }
  return out;
}

Metrics collect_metrics(const SimTrace& trace) {
  Metrics m;
  m.per_task.resize(trace.jobs.size());
  for (std::size_t i = 0; i < trace.jobs.size(); ++i) {
    auto& pt = m.per_task[i];
    for (const auto& rec : trace.jobs[i]) {
      ++pt.jobs;
      if (rec.completion >= 0)
        pt.max_response = std::max(pt.max_response, rec.completion - rec.release);
      pt.deadline_misses += rec.missed ? 1 : 0;
    }
  }
  m.per_server.resize(trace.consumed.size());
  for (std::size_t i = 0; i < trace.consumed.size(); ++i) {
    m.per_server[i].consumed = trace.consumed[i];
    m.per_server[i].replenished = trace.replenished[i];
    m.per_server[i].busy_fraction =
        trace.duration > 0
            ? static_cast<double>(trace.consumed[i]) /
                  static_cast<double>(trace.duration)
            : 0.0;
  }
  m.peak_abs = Eigen::VectorXd::Constant(
      trace.n_nodes, -std::numeric_limits<double>::infinity());
  std::map<int, Eigen::VectorXd> steady;
  const Eigen::VectorXd offset = trace.thermal.chip_offset.size()
                                     ? trace.thermal.chip_offset
                                     : Eigen::VectorXd::Zero(trace.n_nodes);
  for (const auto& seg : trace.segments) {
    auto it = steady.find(seg.mode);
    if (it == steady.end())
      it = steady.emplace(seg.mode, segment_steady(trace, seg.mode)).first;
    const double dt = to_sec(seg.t1 - seg.t0);
    for (int node = 0; node < trace.n_nodes; ++node) {
      const double peak = segment_node_peak(trace.thermal, it->second,
                                            seg.theta0_rise, node, dt, nullptr) +
                          offset[node] + seg.ambient;
      m.peak_abs[node] = std::max(m.peak_abs[node], peak);
    }
  }
  return m;
}

const char* event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::replenish: return "replenish";
    case EventKind::deplete: return "deplete";
    case EventKind::release: return "release";
    case EventKind::start: return "start";
    case EventKind::stop: return "stop";
    case EventKind::complete: return "complete";
    case EventKind::gpu_request: return "gpu_request";
    case EventKind::gpu_acquire: return "gpu_acquire";
    case EventKind::gpu_release: return "gpu_release";
    case EventKind::mode_change: return "mode_change";
    case EventKind::terminate: return "terminate";
    case EventKind::resume: return "resume";
  }
  return "?";
}

std::string export_events_jsonl(const SimTrace& trace) {
  std::string out;
  out.reserve(trace.events.size() * 96);
  char line[192];
  for (const auto& e : trace.events) {
    std::snprintf(line, sizeof line,
                  "{\"t_us\":%lld,\"kind\":\"%s\",\"task\":%d,\"server\":%d,"
                  "\"job\":%ld,\"extra\":%d,\"amount\":%lld}\n",
                  static_cast<long long>(e.t), event_kind_name(e.kind), e.task,
                  e.server, e.job, e.extra, static_cast<long long>(e.amount));
    out += line;
  }
  return out;
}

std::string export_temps_csv(const SimTrace& trace, int n_cores) {
  std::string out = "t_s";
  char buf[64];
  for (int j = 0; j < trace.n_nodes; ++j) {
    if (j < n_cores)
      std::snprintf(buf, sizeof buf, ",core%d_C", j);
    else if (j == n_cores)
      std::snprintf(buf, sizeof buf, ",gpu_C");
    else
      std::snprintf(buf, sizeof buf, ",node%d_C", j);
    out += buf;
  }
  out += '\n';
  for (const auto& s : trace.temps) {
    std::snprintf(buf, sizeof buf, "%.6f", to_sec(s.t));
    out += buf;
    for (int j = 0; j < trace.n_nodes; ++j) {
      std::snprintf(buf, sizeof buf, ",%.6f", s.theta_abs[j]);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace thermo::sim
