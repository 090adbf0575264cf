#include "thermo/sched_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace thermo::sched {

namespace {

// ceil(a / b) for b > 0, contributing nothing when a is not positive.
usec ceil_pos(usec a, usec b) {
  if (a <= 0) return 0;
  return (a + b - 1) / b;
}

double u01(std::mt19937_64& g) {
  return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

double u_range(std::mt19937_64& g, double lo, double hi) {
  return lo + (hi - lo) * u01(g);
}

usec i_range(std::mt19937_64& g, usec lo, usec hi) {
  return lo + static_cast<usec>(g() % static_cast<std::uint64_t>(hi - lo + 1));
}

}  // namespace

usec handover_delay(const TaskSpec& t, const ServerSpec& cpu_srv,
                    const GpuServerSpec& gpu_srv, bool mot_enabled) {
  if (!t.uses_gpu) return 0;
  if (mot_enabled && cpu_srv.policy == ServerPolicy::polling)
    fail(Err::MotWithPolling, "mot cannot back a polling server");
  const usec gpu_jitter = gpu_srv.period - gpu_srv.budget;
  if (mot_enabled) return gpu_jitter;
  if (cpu_srv.policy == ServerPolicy::polling)
    return gpu_jitter + 2 * cpu_srv.period;
  return gpu_jitter + 2 * (cpu_srv.period - cpu_srv.effective_budget());
}

usec local_blocking(const TaskSpec& t, const Taskset& ts,
                    const AnalysisOptions& opt) {
  usec transfer_sum = 0;
  for (const auto& l : ts.tasks)
    if (l.server == t.server && l.priority < t.priority && l.uses_gpu)
      transfer_sum += l.gpu_segment() - l.k;
  const usec budget_bound =
      (ceil_pos(t.period, ts.gpu_server.period) + 1) * ts.gpu_server.budget;
  const usec per_segment = std::min(budget_bound, transfer_sum);
  const usec segments = (opt.rm_local_blocking || !t.uses_gpu) ? 1 : 2;
  return segments * per_segment;
}

RemoteBlocking remote_blocking_priority(const TaskSpec& t, const Taskset& ts,
                                        const AnalysisOptions& opt) {
  require(t.uses_gpu, Err::ConfigError, "remote blocking needs a gpu task");
  usec max_lower = 0;
  struct Higher {
    usec w_prime;
    usec period;
  };
  std::vector<Higher> higher;
  for (const auto& g : ts.tasks) {
    if (!g.uses_gpu || &g == &t) continue;
    const usec w_prime =
        handover_delay(g, ts.cpu_servers[g.server], ts.gpu_server,
                       opt.mot_enabled) +
        g.gpu_segment();
    if (g.priority < t.priority)
      max_lower = std::max(max_lower, w_prime);
    else  // cross-server priority ties count as interference
      higher.push_back({w_prime, g.period});
  }
  usec b = max_lower;
  for (;;) {
    usec next = max_lower;
    for (const auto& h : higher)
      next += (ceil_pos(b, h.period) + 1) * h.w_prime;
    if (next == b) return {b, false};
    if (next > t.period) return {next, true};
    b = next;
  }
}

int ffd_bin_count(std::vector<usec> items, usec capacity) {
  require(capacity > 0, Err::ConfigError, "bin capacity must be positive");
  std::sort(items.begin(), items.end(), std::greater<>());
  std::vector<usec> space;
  for (usec it : items) {
    if (it > capacity)
      fail(Err::ItemTooLarge, "a gpu segment exceeds the gpu budget");
    bool placed = false;
    for (auto& s : space)
      if (s >= it) {
        s -= it;
        placed = true;
        break;
      }
    if (!placed) space.push_back(capacity - it);
  }
  return static_cast<int>(space.size());
}

usec remote_blocking_bins(const TaskSpec& t, const Taskset& ts,
                          const AnalysisOptions& opt) {
  require(t.uses_gpu, Err::ConfigError, "remote blocking needs a gpu task");
  std::vector<usec> items;
  for (const auto& g : ts.tasks)
    if (g.uses_gpu) items.push_back(g.gpu_segment());
  const usec n_gpu = static_cast<usec>(items.size());
  const usec bins = ffd_bin_count(std::move(items), ts.gpu_server.budget);
  const usec service = (bins + 1) * ts.gpu_server.period;
  const auto& srv = ts.cpu_servers[t.server];
  if (opt.mot_enabled) {
    require(srv.policy != ServerPolicy::polling, Err::MotWithPolling,
            "mot cannot back a polling server");
    return service;
  }
  if (srv.policy == ServerPolicy::polling)
    return service + 2 * (n_gpu - 1) * srv.period;
  return service + 2 * (n_gpu - 1) * (srv.period - srv.effective_budget());
}

TaskResult response_time(std::size_t task_index, const Taskset& ts,
                         QueuePolicy queue, const AnalysisOptions& opt,
                         const std::vector<std::optional<usec>>& higher_w) {
  require(queue != QueuePolicy::hybrid, Err::ConfigError,
          "response_time needs a concrete queue policy");
  const TaskSpec& t = ts.tasks[task_index];
  const ServerSpec& srv = ts.cpu_servers[t.server];

  TaskResult r;
  r.handover = handover_delay(t, srv, ts.gpu_server, opt.mot_enabled);
  r.local = local_blocking(t, ts, opt);
  if (t.uses_gpu) {
    if (queue == QueuePolicy::priority) {
      const auto rb = remote_blocking_priority(t, ts, opt);
      r.remote = rb.bound;
      r.remote_diverged = rb.diverged;
    } else {
      r.remote = remote_blocking_bins(t, ts, opt);
    }
  }

  const usec c_srv = srv.effective_budget();
  const usec t_srv = srv.period;
  const usec jitter =
      srv.policy == ServerPolicy::polling ? srv.period : t_srv - c_srv;
  const usec s_i = t.uses_gpu ? 1 : 0;
  const usec demand = t.total_wcet();

  struct Hp {
    usec wcet;
    usec period;
    usec carry;  // W_h - C_h
  };
  std::vector<Hp> hp;
  for (std::size_t j = 0; j < ts.tasks.size(); ++j) {
    const auto& h = ts.tasks[j];
    if (h.server != t.server || h.priority <= t.priority) continue;
    require(higher_w[j].has_value(), Err::ConfigError,
            "higher-priority tasks must be analyzed first");
    hp.push_back({h.total_wcet(), h.period, *higher_w[j] - h.total_wcet()});
  }

  const usec base = demand + r.local + r.remote + r.handover;
  usec w = demand;
  for (;;) {
    usec next = base;
    next += ceil_pos(w + c_srv - s_i * (r.handover + t.k), t_srv) * (t_srv - c_srv);
    for (const auto& h : hp)
      next += ceil_pos(w + jitter + h.carry - s_i * (r.handover + t.gpu_segment()),
                       h.period) *
              h.wcet;
    if (next == w) break;
    w = next;
    if (w > t.period) break;
  }
  r.response = w;
  r.schedulable = !r.remote_diverged && w <= t.period;
  return r;
}

usec hsf_response_time(usec wcet, usec period, usec jitter,
                       const ServerSpec& server, const std::vector<HsfTask>& higher,
                       bool carry_in) {
  const usec c_srv = server.effective_budget();
  const usec t_srv = server.period;
  usec w = wcet;
  for (;;) {
    usec next = wcet;
    next += ceil_pos(w + c_srv, t_srv) * (t_srv - c_srv);
    for (const auto& h : higher) {
      const usec carry = carry_in ? h.response - h.wcet : 0;
      next += ceil_pos(w + jitter + carry, h.period) * h.wcet;
    }
    if (next == w) return w;
    w = next;
    if (w > period) return w;
  }
}

namespace {

AnalysisReport analyze_with_queue(const Taskset& ts, QueuePolicy queue,
                                  const AnalysisOptions& opt) {
  AnalysisReport rep;
  rep.queue_used = queue;
  rep.per_task.resize(ts.tasks.size());
  std::vector<std::optional<usec>> w(ts.tasks.size());

  // highest priority first within each server, so carry-in terms are ready
  std::vector<std::size_t> order(ts.tasks.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (ts.tasks[a].server != ts.tasks[b].server)
      return ts.tasks[a].server < ts.tasks[b].server;
    return ts.tasks[a].priority > ts.tasks[b].priority;
  });

  rep.taskset_schedulable = true;
  for (std::size_t idx : order) {
    const TaskResult r = response_time(idx, ts, queue, opt, w);
    w[idx] = r.response;
    auto& p = rep.per_task[idx];
    p.response = r.response;
    p.local = r.local;
    p.remote = r.remote;
    p.handover = r.handover;
    p.schedulable = r.schedulable;
    p.remote_diverged = r.remote_diverged;
    rep.taskset_schedulable &= r.schedulable;
  }
  return rep;
}

int count_schedulable(const AnalysisReport& r) {
  int n = 0;
  for (const auto& p : r.per_task) n += p.schedulable ? 1 : 0;
  return n;
}

}  // namespace

AnalysisReport analyze_taskset(const Taskset& ts, const AnalysisOptions& opt) {
  ts.validate();
  if (ts.queue_policy != QueuePolicy::hybrid)
    return analyze_with_queue(ts, ts.queue_policy, opt);
  AnalysisReport prio = analyze_with_queue(ts, QueuePolicy::priority, opt);
  if (prio.taskset_schedulable) return prio;
  AnalysisReport bins = analyze_with_queue(ts, QueuePolicy::fcfs_bins, opt);
  if (bins.taskset_schedulable) return bins;
  // neither works; prefer the priority queue unless the packed queue saves
  // strictly more tasks
  return count_schedulable(bins) > count_schedulable(prio) ? bins : prio;
}

std::vector<int> wfd_partition(const std::vector<double>& utils, int n_cores) {
  require(n_cores > 0, Err::ConfigError, "need at least one core");
  std::vector<std::size_t> order(utils.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return utils[a] > utils[b]; });
  std::vector<double> load(n_cores, 0.0);
  std::vector<int> core(utils.size(), 0);
  for (std::size_t idx : order) {
    const int target = static_cast<int>(
        std::min_element(load.begin(), load.end()) - load.begin());
    core[idx] = target;
    load[target] += utils[idx];
  }
  return core;
}

namespace {

constexpr int kGenRetries = 10000;

// UUniFast: unbiased split of `total` utilization into n parts.
std::vector<double> uunifast(std::mt19937_64& g, int n, double total) {
  std::vector<double> u(n);
  double sum = total;
  for (int i = 0; i < n - 1; ++i) {
    const double next = sum * std::pow(u01(g), 1.0 / static_cast<double>(n - 1 - i));
    u[i] = sum - next;
    sum = next;
  }
  u[n - 1] = sum;
  return u;
}

}  // namespace

Taskset generate_taskset(const GenParams& gp) {
  require(gp.n_cores > 0, Err::ConfigError, "need at least one core");
  require(gp.n_tasks_min > 0 && gp.n_tasks_min <= gp.n_tasks_max,
          Err::ConfigError, "task count range is empty");
  require(gp.period_min > 0 && gp.period_min <= gp.period_max, Err::ConfigError,
          "period range is empty");
  std::mt19937_64 g(gp.seed);

  const int n = static_cast<int>(i_range(g, gp.n_tasks_min, gp.n_tasks_max));
  const double util_total = u_range(g, gp.util_min, gp.util_max);
  const double cap = static_cast<double>(gp.cpu_server_budget) /
                     static_cast<double>(gp.cpu_server_period);

  std::vector<double> utils;
  int tries = 0;
  for (;;) {
    utils = uunifast(g, n, util_total);
    const bool ok = std::all_of(utils.begin(), utils.end(),
                                [&](double u) { return u <= cap; });
    if (ok) break;
    if (++tries >= kGenRetries)
      fail(Err::GenRetryExceeded,
           "could not partition the utilization under the server cap");
  }

  const double gpu_share = u_range(g, gp.gpu_share_min, gp.gpu_share_max);
  const int n_gpu = std::min(
      n, static_cast<int>(std::lround(gpu_share * static_cast<double>(n))));
  std::vector<int> ids(n);
  std::iota(ids.begin(), ids.end(), 0);
  for (int i = n - 1; i > 0; --i)
    std::swap(ids[i], ids[i_range(g, 0, i)]);  // Fisher-Yates
  std::vector<bool> is_gpu(n, false);
  for (int i = 0; i < n_gpu; ++i) is_gpu[ids[i]] = true;

  Taskset ts;
  ts.queue_policy = gp.queue;
  ts.gpu_server = {gp.gpu_server_budget, gp.gpu_server_period};
  for (int c = 0; c < gp.n_cores; ++c) {
    ServerSpec s;
    s.budget = gp.cpu_server_budget;
    s.period = gp.cpu_server_period;
    s.policy = gp.cpu_policy;
    s.core = c;
    ts.cpu_servers.push_back(s);
  }

  for (int i = 0; i < n; ++i) {
    TaskSpec t;
    t.uses_gpu = is_gpu[i];
    // The demand follows the drawn utilization; a fresh period (and ratio) is
    // drawn on every attempt until the GPU segment fits its budget.
    for (int attempt = 0;; ++attempt) {
      if (attempt >= kGenRetries)
        fail(Err::GenRetryExceeded, "gpu segment cannot fit the gpu budget");
      t.period = i_range(g, gp.period_min, gp.period_max);
      // gpu tasks need room for c1, c2 and a three-way gpu segment split
      const usec min_demand = t.uses_gpu ? 5 : 1;
      const usec demand = std::max<usec>(
          min_demand,
          static_cast<usec>(std::llround(utils[i] * static_cast<double>(t.period))));
      if (!t.uses_gpu) {
        t.c1 = demand;
        break;
      }
      const double ratio = u_range(g, gp.gpu_ratio_min, gp.gpu_ratio_max);
      const usec e = static_cast<usec>(
          std::llround(static_cast<double>(demand) * ratio / (1.0 + ratio)));
      if (e < 3 || e >= demand || e > gp.gpu_server_budget) continue;
      const usec normal = demand - e;
      t.c1 = i_range(g, 1, normal);  // both normal segments stay nonempty
      t.c2 = normal - t.c1;
      if (t.c2 == 0) {
        t.c2 = 1;
        t.c1 -= 1;
      }
      if (t.c1 == 0) continue;
      const double misc_ratio = u_range(g, gp.misc_ratio_min, gp.misc_ratio_max);
      usec misc = std::max<usec>(
          2, static_cast<usec>(std::llround(misc_ratio * static_cast<double>(e))));
      if (misc >= e) misc = e - 1;
      t.m1 = i_range(g, 1, misc - 1);
      t.m2 = misc - t.m1;
      t.k = e - misc;
      break;
    }
    ts.tasks.push_back(t);
  }

  // rate-monotonic: the shortest period gets the highest priority value
  std::vector<std::size_t> by_period(ts.tasks.size());
  std::iota(by_period.begin(), by_period.end(), 0);
  std::stable_sort(by_period.begin(), by_period.end(),
                   [&](std::size_t a, std::size_t b) {
                     return ts.tasks[a].period > ts.tasks[b].period;
                   });
  for (std::size_t rank = 0; rank < by_period.size(); ++rank)
    ts.tasks[by_period[rank]].priority = static_cast<int>(rank + 1);

  std::vector<double> utils_final;
  for (const auto& t : ts.tasks) utils_final.push_back(t.utilization());
  const std::vector<int> cores = wfd_partition(utils_final, gp.n_cores);
  for (std::size_t i = 0; i < ts.tasks.size(); ++i) ts.tasks[i].server = cores[i];

  ts.validate();
  return ts;
}

}  // namespace thermo::sched
