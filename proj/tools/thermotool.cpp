#include <CLI11.hpp>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "thermo/io.hpp"
#include "thermo/server_design.hpp"

namespace fs = std::filesystem;
namespace io = thermo::io;
namespace est = thermo::est;
namespace mcs = thermo::mcs;
namespace sched = thermo::sched;
namespace server = thermo::server;
namespace sim = thermo::sim;
namespace tasks = thermo::tasks;
using io::Json;
using thermo::Err;
using thermo::fail;

namespace {

std::string dump(const Json& j) { return j.dump(2) + "\n"; }

std::string dir_of(const std::string& path) { return fs::path(path).parent_path().string(); }

std::string resolve(const std::string& base_dir, const std::string& file) {
  fs::path p(file);
  if (p.is_absolute() || base_dir.empty()) return file;
  return (fs::path(base_dir) / p).string();
}

void warn(const std::string& msg) { std::cerr << "thermotool: warning: " << msg << "\n"; }

// All-or-nothing output sets: refuse before the first byte is written.
void refuse_existing(const std::vector<std::string>& paths, bool force) {
  if (force) return;
  for (const auto& p : paths)
    if (fs::exists(p)) fail(Err::ConfigError, p + ": exists, pass --force to overwrite");
}

void merge_into(Json& doc, const Json& fields) {
  for (const auto& item : fields.items()) doc[item.key()] = item.value();
}

struct OutOpts {
  std::string output;
  bool force = false;
};

// ---------------------------------------------------------------- design-server

void run_design(const std::string& cfg_path, const OutOpts& out) {
  std::string raw;
  Json cfg = io::load_config(cfg_path, &raw);
  const std::string& ctx = cfg_path;
  std::string mode = io::jstr_or(cfg, "mode", "single", ctx);
  Json doc = io::report_envelope(raw);
  doc["mode"] = mode;

  if (mode == "cpu_gpu") {
    io::check_keys(cfg, {"schema", "mode", "cpu", "gpu", "cross"}, ctx);
    auto side = [&](const char* key, double& theta, double& period) {
      const Json& s = io::jreq(cfg, key, ctx);
      std::string sctx = ctx + "." + key;
      io::check_keys(s, {"theta_max_rise", "period_ms", "thermal"}, sctx);
      theta = io::jnum(s, "theta_max_rise", sctx);
      period = io::jnum(s, "period_ms", sctx) / 1000.0;
      return io::scalar_thermal_from_json(io::jreq(s, "thermal", sctx));
    };
    double theta_c = 0, period_c = 0, theta_g = 0, period_g = 0;
    auto cpu_p = side("cpu", theta_c, period_c);
    auto gpu_p = side("gpu", theta_g, period_g);
    const Json& cr = io::jreq(cfg, "cross", ctx);
    io::check_keys(cr, {"cpu_from_gpu", "gpu_from_cpus"}, ctx + ".cross");
    server::CrossConduction cross;
    cross.cpu_from_gpu = io::jnum(cr, "cpu_from_gpu", ctx + ".cross");
    cross.gpu_from_cpus = io::jnum(cr, "gpu_from_cpus", ctx + ".cross");
    auto b = server::cpu_gpu_budgets(theta_c, theta_g, period_c, period_g, cpu_p, gpu_p, cross);
    auto side_doc = [](const server::BudgetResult& r, double period) {
      Json e;
      e["budget_ms"] = r.budget * 1000.0;
      e["unconstrained"] = r.unconstrained;
      e["utilization"] = r.budget / period;
      return e;
    };
    doc["cpu"] = side_doc(b.cpu, period_c);
    doc["gpu"] = side_doc(b.gpu, period_g);
    if (b.cpu.unconstrained) warn("cpu budget unconstrained: cap at or above saturation");
    if (b.gpu.unconstrained) warn("gpu budget unconstrained: cap at or above saturation");
  } else if (mode == "single" || mode == "multicore") {
    io::check_keys(
        cfg, {"schema", "mode", "policy", "theta_max_rise", "period_ms", "thermal", "tasks"},
        ctx);
    auto policy = tasks::parse_policy(io::jstr_or(cfg, "policy", "polling", ctx));
    double theta = io::jnum(cfg, "theta_max_rise", ctx);
    double period = io::jnum(cfg, "period_ms", ctx) / 1000.0;
    auto p = io::scalar_thermal_from_json(io::jreq(cfg, "thermal", ctx));
    if (mode == "multicore" && policy != tasks::ServerPolicy::polling)
      fail(Err::ConfigError, ctx + ": the multicore design is polling-based");
    server::BudgetResult r = mode == "multicore"
                                 ? server::polling_budget_multicore(theta, period, p)
                                 : server::budget_for_policy(policy, theta, period, p);
    doc["policy"] = tasks::policy_name(policy);
    doc["period_ms"] = period * 1000.0;
    doc["budget_ms"] = r.budget * 1000.0;
    doc["unconstrained"] = r.unconstrained;
    doc["utilization"] = r.budget / period;
    doc["max_utilization"] = server::max_server_utilization(theta, p);
    if (cfg.contains("tasks")) {
      auto served = io::tasklist_from_json(cfg.at("tasks"), ctx + ".tasks");
      auto mot = server::apply_mot_reservation(tasks::floor_usec(r.budget), policy, served);
      doc["mot_ms"] = io::ms_from_usec(mot.mot);
      doc["effective_budget_ms"] = io::ms_from_usec(mot.effective_budget);
    }
    if (r.unconstrained) warn("budget unconstrained: cap at or above saturation");
  } else {
    fail(Err::ConfigError, ctx + ": unknown mode '" + mode + "'");
  }
  io::write_file(out.output, dump(doc), out.force);
}

// --------------------------------------------------------------------- analyze

void run_analyze(const std::string& ts_path, bool mot, bool rm_local, const OutOpts& out) {
  std::string raw;
  Json j = io::load_config(ts_path, &raw);
  sched::AnalysisOptions opt;
  opt.mot_enabled = mot;
  opt.rm_local_blocking = rm_local;
  Json doc = io::report_envelope(raw);
  if (j.contains("tasksets")) {
    const Json& arr = j.at("tasksets");
    if (!arr.is_array()) fail(Err::ConfigError, ts_path + ": tasksets must be an array");
    doc["reports"] = Json::array();
    for (const auto& tj : arr) {
      auto ts = io::taskset_from_json(tj);
      doc["reports"].push_back(io::analysis_to_json(sched::analyze_taskset(ts, opt)));
    }
  } else {
    auto ts = io::taskset_from_json(j);
    merge_into(doc, io::analysis_to_json(sched::analyze_taskset(ts, opt)));
  }
  io::write_file(out.output, dump(doc), out.force);
}

// ---------------------------------------------------------------- gen-tasksets

void run_gen(std::uint64_t seed, bool seed_given, int count, const std::string& cfg_path,
             const OutOpts& out) {
  sched::GenParams gp;
  std::string raw;
  if (!cfg_path.empty()) gp = io::genparams_from_json(io::load_config(cfg_path, &raw));
  std::uint64_t base = seed_given ? seed : gp.seed;
  if (raw.empty())
    raw = "gen-tasksets seed=" + std::to_string(base) + " count=" + std::to_string(count);
  Json doc = io::report_envelope(raw);
  doc["seed"] = base;
  doc["count"] = count;
  doc["tasksets"] = Json::array();
  for (int i = 0; i < count; ++i) {
    gp.seed = base + static_cast<std::uint64_t>(i);
    doc["tasksets"].push_back(io::taskset_to_json(sched::generate_taskset(gp)));
  }
  io::write_file(out.output, dump(doc), out.force);
}

// -------------------------------------------------------------------- simulate

void write_sim_outputs(const std::string& prefix, bool force, const std::string& raw,
                       const sim::SimConfig& cfg, const sim::SimTrace& trace) {
  std::string metrics_path = prefix + ".metrics.json";
  std::string events_path = prefix + ".events.jsonl";
  std::string temps_path = prefix + ".temps.csv";
  std::vector<std::string> targets{metrics_path, events_path};
  if (cfg.record_thermal) targets.push_back(temps_path);
  refuse_existing(targets, force);

  Json doc = io::report_envelope(raw);
  merge_into(doc, io::metrics_to_json(trace, sim::collect_metrics(trace)));
  io::write_file(metrics_path, dump(doc), true);
  io::write_file(events_path, sim::export_events_jsonl(trace), true);
  if (cfg.record_thermal) {
    int n_cores = cfg.gpu_node >= 0 ? trace.n_nodes - 1 : trace.n_nodes;
    io::write_file(temps_path, sim::export_temps_csv(trace, n_cores), true);
  }
}

void run_simulate(const std::string& cfg_path, const std::string& prefix, bool force) {
  std::string raw;
  Json j = io::load_config(cfg_path, &raw);
  sim::SimConfig cfg = io::sim_config_from_json(j, dir_of(cfg_path));
  cfg.validate();
  auto trace = sim::simulate(cfg);
  write_sim_outputs(prefix, force, raw, cfg, trace);
}

// ------------------------------------------------------------ mcs-plan, mcs-run

void run_mcs_plan(const std::string& cfg_path, const OutOpts& out) {
  std::string raw;
  Json j = io::load_config(cfg_path, &raw);
  auto cfg = io::mcs_config_from_json(j);
  Json doc = io::report_envelope(raw);
  merge_into(doc, io::mcs_plan_to_json(mcs::plan(cfg)));
  io::write_file(out.output, dump(doc), out.force);
}

void run_mcs_run(const std::string& cfg_path, const std::string& plan_path,
                 const std::string& prefix, bool force) {
  std::string raw;
  Json j = io::load_config(cfg_path, &raw);
  sim::SimConfig cfg = io::sim_config_from_json(j, dir_of(cfg_path));
  sim::McsRuntime rt;
  rt.plan = io::mcs_plan_from_json(io::load_config(plan_path));
  rt.samples = io::ambient_schedule_from_json(io::jreq(j, "ambient_schedule", cfg_path),
                                              cfg_path + ".ambient_schedule");
  cfg.mcs = std::move(rt);
  cfg.validate();
  auto trace = sim::simulate(cfg);
  write_sim_outputs(prefix, force, raw, cfg, trace);
}

// -------------------------------------------------------------------- estimate

struct FreqBlock {
  double freq = 0.0;
  est::SteadyProfile idle;
  std::vector<est::SteadyProfile> profiles;
  std::optional<double> idle_ip;
  std::vector<std::optional<double>> profile_ip;  // aligned with profiles
};

std::pair<Eigen::VectorXd, std::optional<double>> read_steady_entry(const Json& e,
                                                                    const std::string& ectx,
                                                                    const std::string& dir,
                                                                    int n, int window,
                                                                    bool is_profile) {
  if (is_profile)
    io::check_keys(e, {"label", "mask", "temps", "file", "ip_c"}, ectx);
  else
    io::check_keys(e, {"temps", "file", "ip_c"}, ectx);
  if (e.contains("temps") == e.contains("file"))
    fail(Err::ConfigError, ectx + ": exactly one of temps, file required");
  Eigen::VectorXd temps;
  std::optional<double> ip;
  if (e.contains("temps")) {
    temps = io::vec_from_json(e.at("temps"), ectx + ".temps");
    if (temps.size() != n) fail(Err::ConfigError, ectx + ": temps must have one entry per core");
  } else {
    auto tf = io::read_trace_file(resolve(dir, io::jstr(e, "file", ectx)), n);
    temps = est::smooth_steady(tf.trace, window);
    if (static_cast<int>(tf.gpu.size()) >= window) {
      double acc = 0.0;
      for (std::size_t k = tf.gpu.size() - window; k < tf.gpu.size(); ++k) acc += tf.gpu[k];
      ip = acc / window;
    }
  }
  if (e.contains("ip_c")) ip = io::jnum(e, "ip_c", ectx);
  return {temps, ip};
}

void run_estimate(const std::string& man_path, const OutOpts& out) {
  std::string raw;
  Json j = io::load_config(man_path, &raw);
  const std::string& ctx = man_path;
  std::string dir = dir_of(man_path);
  io::check_keys(j,
                 {"schema", "cores", "window", "quant_step", "margin", "template",
                  "monotone_scales", "frequencies", "transient"},
                 ctx);
  int n = static_cast<int>(io::jint(j, "cores", ctx));
  int window = static_cast<int>(io::jint_or(j, "window", 50, ctx));
  double quant = io::jnum_or(j, "quant_step", 1.0, ctx);
  double margin = io::jnum_or(j, "margin", 0.5, ctx);
  std::string tmpl_kind = io::jstr_or(j, "template", "floorplan_shared", ctx);
  est::FitOptions fit_opts;
  fit_opts.monotone_scales = io::jbool_or(j, "monotone_scales", false, ctx);

  const Json& freqs = io::jreq(j, "frequencies", ctx);
  if (!freqs.is_array() || freqs.empty())
    fail(Err::ConfigError, ctx + ": frequencies must be a nonempty array");

  std::vector<FreqBlock> blocks;
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    const std::string fctx = ctx + ".frequencies[" + std::to_string(i) + "]";
    io::check_keys(freqs[i], {"freq_hz", "idle", "profiles"}, fctx);
    FreqBlock blk;
    blk.freq = io::jnum(freqs[i], "freq_hz", fctx);
    for (const auto& prev : blocks)
      if (prev.freq == blk.freq)
        fail(Err::ConfigError, fctx + ": duplicate frequency");
    auto [idle_temps, idle_ip] =
        read_steady_entry(io::jreq(freqs[i], "idle", fctx), fctx + ".idle", dir, n, window,
                          false);
    blk.idle = est::SteadyProfile{0, blk.freq, idle_temps, "idle"};
    blk.idle_ip = idle_ip;
    const Json& profs = io::jreq(freqs[i], "profiles", fctx);
    if (!profs.is_array()) fail(Err::ConfigError, fctx + ": profiles must be an array");
    for (std::size_t k = 0; k < profs.size(); ++k) {
      const std::string pctx = fctx + ".profiles[" + std::to_string(k) + "]";
      std::string mask_str = io::jstr(profs[k], "mask", pctx);
      auto [temps, ip] = read_steady_entry(profs[k], pctx, dir, n, window, true);
      est::SteadyProfile p;
      p.mask = io::parse_mask(mask_str, n);
      p.freq_hz = blk.freq;
      p.temps = temps;
      p.label = io::jstr_or(profs[k], "label", mask_str, pctx);
      blk.profiles.push_back(std::move(p));
      blk.profile_ip.push_back(ip);
    }
    blocks.push_back(std::move(blk));
  }

  // Consistency gate: reported, warned about, never silently dropped.
  Json anomaly = Json::array();
  for (const auto& blk : blocks) {
    auto all = blk.profiles;
    all.push_back(blk.idle);
    auto rep = est::detect_anomaly(all, quant);
    Json e;
    e["freq_hz"] = blk.freq;
    e["clean"] = rep.clean;
    e["identities_checked"] = rep.identities_checked;
    e["faulty"] = rep.faulty;
    e["suspects"] = rep.suspects;
    anomaly.push_back(e);
    if (!rep.clean) {
      std::string who;
      for (const auto& s : rep.faulty) who += " " + s;
      for (const auto& s : rep.suspects) who += " " + s;
      warn("inconsistent profiles at " + std::to_string(blk.freq) + " Hz:" + who);
    }
  }

  auto is_onehot = [n](const FreqBlock& blk) {
    if (static_cast<int>(blk.profiles.size()) != n) return false;
    est::Mask seen = 0;
    for (const auto& p : blk.profiles) {
      bool single = p.mask != 0 && (p.mask & (p.mask - 1)) == 0;
      if (!single || (seen & p.mask)) return false;
      seen |= p.mask;
    }
    return seen == (est::Mask{1} << n) - 1;
  };

  std::vector<est::ProfileMatrix> sets;
  for (const auto& blk : blocks)
    sets.push_back(is_onehot(blk) ? est::build_Y_onehot(blk.profiles, blk.idle)
                                  : est::build_Y_ensemble(blk.profiles, blk.idle));

  const FreqBlock& base = blocks.front();
  Eigen::VectorXd ip_temps;
  if (is_onehot(base) && base.idle_ip) {
    bool complete = true;
    Eigen::VectorXd ip(n + 1);
    for (std::size_t k = 0; k < base.profiles.size(); ++k) {
      int core = 0;
      while (!(base.profiles[k].mask & (est::Mask{1} << core))) ++core;
      if (base.profile_ip[k])
        ip(core) = *base.profile_ip[k];
      else
        complete = false;
    }
    ip(n) = *base.idle_ip;
    if (complete) ip_temps = ip;
  }
  auto fp = est::estimate_floorplan(sets[0].Y, sets[0].Y0, margin, ip_temps);

  est::Template tmpl;
  if (tmpl_kind == "dense")
    tmpl = est::Template::dense(n);
  else if (tmpl_kind == "floorplan_shared")
    tmpl = est::Template::from_floorplan(fp.adj, true);
  else if (tmpl_kind == "floorplan_pairs")
    tmpl = est::Template::from_floorplan(fp.adj, false);
  else
    fail(Err::ConfigError, ctx + ": unknown template '" + tmpl_kind + "'");

  auto mf = est::fit_multifreq(sets, tmpl, fit_opts);
  if (!mf.converged) warn("template fit hit the iteration cap; using the best iterate");

  const Json& tr = io::jreq(j, "transient", ctx);
  io::check_keys(tr, {"file", "freq_hz", "activity", "ambient_c"}, ctx + ".transient");
  auto trace = io::read_trace(resolve(dir, io::jstr(tr, "file", ctx + ".transient")), n);
  trace.freq_hz = io::jnum(tr, "freq_hz", ctx + ".transient");
  trace.ambient = io::jnum_or(tr, "ambient_c", 0.0, ctx + ".transient");
  est::Mask act = io::parse_mask(io::jstr(tr, "activity", ctx + ".transient"), n);
  trace.activity.assign(trace.t.size(), act);

  auto sc = mf.scale_by_freq.find(trace.freq_hz);
  if (sc == mf.scale_by_freq.end())
    fail(Err::ConfigError, ctx + ": transient frequency not among the profiled frequencies");
  Eigen::MatrixXd At_f = sc->second * mf.A_tilde_base;
  Eigen::MatrixXd V;
  Eigen::VectorXd lam;
  est::atilde_modes(At_f, V, lam);
  const FreqBlock* tr_blk = nullptr;
  for (const auto& blk : blocks)
    if (blk.freq == trace.freq_hz) tr_blk = &blk;
  thermo::require(tr_blk != nullptr, Err::ConfigError, "transient frequency has no profile block");
  auto gf = est::fit_gamma(trace, V, lam, tr_blk->idle.temps);

  est::EstimationResult res;
  res.A_tilde_base = mf.A_tilde_base;
  res.base_freq = mf.base_freq;
  res.gamma_base = gf.gamma * sc->second;
  res.scale_by_freq = mf.scale_by_freq;
  for (const auto& blk : blocks) res.chip_by_freq[blk.freq] = blk.idle.temps;
  res.floorplan = fp;

  Json doc = io::report_envelope(raw);
  merge_into(doc, io::estimation_result_to_json(res));
  doc["anomaly"] = anomaly;
  Json fit;
  fit["cost"] = mf.cost;
  fit["iters"] = mf.iters;
  fit["converged"] = mf.converged;
  fit["params"] = io::vec_to_json(mf.params);
  doc["fit"] = fit;
  Json gfit;
  gfit["freq_hz"] = trace.freq_hz;
  gfit["gamma"] = gf.gamma;
  gfit["rmse"] = gf.rmse;
  doc["gamma_fit"] = gfit;
  io::write_file(out.output, dump(doc), out.force);
}

// --------------------------------------------------------------------- predict

void run_predict(const std::string& res_path, const std::string& mask_str, double t0, double t,
                 double freq, bool freq_given, const std::string& theta0_str,
                 const OutOpts& out) {
  std::string raw;
  Json j = io::load_config(res_path, &raw);
  auto res = io::estimation_result_from_json(j);
  int n = static_cast<int>(res.A_tilde_base.rows());
  est::Mask m = io::parse_mask(mask_str, n);
  double f = freq_given ? freq : res.base_freq;
  Eigen::VectorXd theta0;
  if (!theta0_str.empty()) {
    std::vector<double> vals;
    std::string cur;
    for (char c : theta0_str + ",") {
      if (c == ',') {
        char* end = nullptr;
        double v = std::strtod(cur.c_str(), &end);
        if (cur.empty() || end != cur.c_str() + cur.size())
          fail(Err::ConfigError, "theta0: bad number '" + cur + "'");
        vals.push_back(v);
        cur.clear();
      } else {
        cur += c;
      }
    }
    if (static_cast<int>(vals.size()) != n)
      fail(Err::ConfigError, "theta0: expected one entry per core");
    theta0 = Eigen::Map<Eigen::VectorXd>(vals.data(), n);
  }
  Eigen::VectorXd temps = est::predict_temperature(res, m, theta0, t0, t, f);
  Json doc = io::report_envelope(raw);
  doc["freq_hz"] = f;
  doc["mask"] = mask_str;
  doc["t0_s"] = t0;
  doc["t_s"] = t;
  doc["temps_c"] = io::vec_to_json(temps);
  if (out.output.empty())
    std::cout << dump(doc);
  else
    io::write_file(out.output, dump(doc), out.force);
}

// ---------------------------------------------------------------------- report

void run_report(const std::string& analysis_path, const std::string& metrics_path,
                const OutOpts& out) {
  std::string raw_a, raw_m;
  Json a = io::load_config(analysis_path, &raw_a);
  Json m = io::load_config(metrics_path, &raw_m);
  if (a.contains("reports"))
    fail(Err::ConfigError,
         analysis_path + ": holds multiple reports; analyze a single taskset for cross-linking");
  const Json& at = io::jreq(a, "tasks", analysis_path);
  const Json& mt = io::jreq(m, "per_task", metrics_path);
  if (!at.is_array() || !mt.is_array())
    fail(Err::ConfigError, "task sections must be arrays");
  if (at.size() != mt.size())
    fail(Err::ConfigError, "task counts differ: analysis has " + std::to_string(at.size()) +
                               ", metrics has " + std::to_string(mt.size()));

  Json doc = io::report_envelope(raw_a + raw_m);
  doc["analysis_hash"] = io::fnv1a_hex(raw_a);
  doc["metrics_hash"] = io::fnv1a_hex(raw_m);
  doc["taskset_schedulable"] = io::jreq(a, "taskset_schedulable", analysis_path);
  doc["tasks"] = Json::array();
  bool all_sound = true;
  for (std::size_t i = 0; i < at.size(); ++i) {
    const std::string actx = analysis_path + ".tasks[" + std::to_string(i) + "]";
    const std::string mctx = metrics_path + ".per_task[" + std::to_string(i) + "]";
    bool sched = io::jbool_or(at[i], "schedulable", false, actx);
    double bound = io::jnum(at[i], "response_ms", actx);
    double observed = io::jnum(mt[i], "max_response_ms", mctx);
    long misses = io::jint(mt[i], "deadline_misses", mctx);
    long jobs = io::jint(mt[i], "jobs", mctx);
    bool sound = !sched || (bound + 1e-9 >= observed && misses == 0);
    all_sound = all_sound && sound;
    Json e;
    e["analytic_schedulable"] = sched;
    e["response_bound_ms"] = bound;
    e["observed_max_response_ms"] = observed;
    e["observed_jobs"] = jobs;
    e["observed_misses"] = misses;
    e["sound"] = sound;
    doc["tasks"].push_back(e);
  }
  doc["all_sound"] = all_sound;
  io::write_file(out.output, dump(doc), out.force);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"thermal-aware server design, schedulability analysis, simulation, estimation"};
  app.require_subcommand(1);

  std::function<void()> action;

  // design-server
  {
    auto* sub = app.add_subcommand("design-server", "thermally safe server budgets");
    auto cfg = std::make_shared<std::string>();
    auto out = std::make_shared<OutOpts>();
    sub->add_option("-c,--config", *cfg, "design config")->required();
    sub->add_option("-o,--output", out->output, "output file")->required();
    sub->add_flag("--force", out->force, "overwrite existing outputs");
    sub->callback([cfg, out, &action] { action = [=] { run_design(*cfg, *out); }; });
  }
  // analyze
  {
    auto* sub = app.add_subcommand("analyze", "response-time analysis of a taskset file");
    auto ts = std::make_shared<std::string>();
    auto mot = std::make_shared<bool>(false);
    auto rm = std::make_shared<bool>(false);
    auto out = std::make_shared<OutOpts>();
    sub->add_option("-t,--taskset", *ts, "taskset file (single or gen-tasksets output)")
        ->required();
    sub->add_flag("--mot", *mot, "honor per-server transfer reservations");
    sub->add_flag("--rm-local-blocking", *rm, "single local blocking term (RM only)");
    sub->add_option("-o,--output", out->output, "output file")->required();
    sub->add_flag("--force", out->force, "overwrite existing outputs");
    sub->callback([ts, mot, rm, out, &action] {
      action = [=] { run_analyze(*ts, *mot, *rm, *out); };
    });
  }
  // gen-tasksets
  {
    auto* sub = app.add_subcommand("gen-tasksets", "random tasksets on the microsecond grid");
    auto seed = std::make_shared<std::uint64_t>(1);
    auto count = std::make_shared<int>(1);
    auto cfg = std::make_shared<std::string>();
    auto out = std::make_shared<OutOpts>();
    auto* seed_opt = sub->add_option("--seed", *seed, "base seed; taskset i uses seed+i");
    sub->add_option("--count", *count, "number of tasksets")->check(CLI::PositiveNumber);
    sub->add_option("-c,--config", *cfg, "generator parameter overrides");
    sub->add_option("-o,--output", out->output, "output file")->required();
    sub->add_flag("--force", out->force, "overwrite existing outputs");
    sub->callback([seed, seed_opt, count, cfg, out, &action] {
      bool given = seed_opt->count() > 0;
      action = [=] { run_gen(*seed, given, *count, *cfg, *out); };
    });
  }
  // simulate
  {
    auto* sub = app.add_subcommand("simulate", "event-driven schedule and temperature trace");
    auto cfg = std::make_shared<std::string>();
    auto prefix = std::make_shared<std::string>();
    auto force = std::make_shared<bool>(false);
    sub->add_option("-c,--config", *cfg, "simulation config")->required();
    sub->add_option("--out-prefix", *prefix, "output prefix (.metrics.json, .events.jsonl, .temps.csv)")
        ->required();
    sub->add_flag("--force", *force, "overwrite existing outputs");
    sub->callback([cfg, prefix, force, &action] {
      action = [=] { run_simulate(*cfg, *prefix, *force); };
    });
  }
  // mcs-plan
  {
    auto* sub = app.add_subcommand("mcs-plan", "criticality levels: idle servers and thresholds");
    auto cfg = std::make_shared<std::string>();
    auto out = std::make_shared<OutOpts>();
    sub->add_option("-c,--config", *cfg, "mcs config")->required();
    sub->add_option("-o,--output", out->output, "output file")->required();
    sub->add_flag("--force", out->force, "overwrite existing outputs");
    sub->callback([cfg, out, &action] { action = [=] { run_mcs_plan(*cfg, *out); }; });
  }
  // mcs-run
  {
    auto* sub = app.add_subcommand("mcs-run", "simulate under a mode plan and ambient schedule");
    auto cfg = std::make_shared<std::string>();
    auto plan = std::make_shared<std::string>();
    auto prefix = std::make_shared<std::string>();
    auto force = std::make_shared<bool>(false);
    sub->add_option("-c,--config", *cfg, "simulation config with ambient_schedule")->required();
    sub->add_option("-p,--plan", *plan, "plan file from mcs-plan")->required();
    sub->add_option("--out-prefix", *prefix, "output prefix")->required();
    sub->add_flag("--force", *force, "overwrite existing outputs");
    sub->callback([cfg, plan, prefix, force, &action] {
      action = [=] { run_mcs_run(*cfg, *plan, *prefix, *force); };
    });
  }
  // estimate
  {
    auto* sub = app.add_subcommand("estimate", "thermal model from steady profiles and a transient");
    auto man = std::make_shared<std::string>();
    auto out = std::make_shared<OutOpts>();
    sub->add_option("-m,--manifest", *man, "profile manifest")->required();
    sub->add_option("-o,--output", out->output, "output file")->required();
    sub->add_flag("--force", out->force, "overwrite existing outputs");
    sub->callback([man, out, &action] { action = [=] { run_estimate(*man, *out); }; });
  }
  // predict
  {
    auto* sub = app.add_subcommand("predict", "temperatures from an estimated model");
    auto res = std::make_shared<std::string>();
    auto mask = std::make_shared<std::string>();
    auto t0 = std::make_shared<double>(0.0);
    auto t = std::make_shared<double>(0.0);
    auto freq = std::make_shared<double>(0.0);
    auto theta0 = std::make_shared<std::string>();
    auto out = std::make_shared<OutOpts>();
    sub->add_option("-r,--result", *res, "estimate output file")->required();
    sub->add_option("--mask", *mask, "activity bitstring, character i = core i")->required();
    sub->add_option("--t0", *t0, "activity start time, seconds");
    sub->add_option("--t", *t, "query time, seconds")->required();
    auto* freq_opt = sub->add_option("--freq", *freq, "frequency in Hz (default: base)");
    sub->add_option("--theta0", *theta0, "initial temps, comma-separated (default: idle steady)");
    sub->add_option("-o,--output", out->output, "output file (default: stdout)");
    sub->add_flag("--force", out->force, "overwrite existing outputs");
    sub->callback([res, mask, t0, t, freq, freq_opt, theta0, out, &action] {
      bool given = freq_opt->count() > 0;
      action = [=] { run_predict(*res, *mask, *t0, *t, *freq, given, *theta0, *out); };
    });
  }
  // report
  {
    auto* sub = app.add_subcommand("report", "cross-link analysis bounds with simulation metrics");
    auto an = std::make_shared<std::string>();
    auto me = std::make_shared<std::string>();
    auto out = std::make_shared<OutOpts>();
    sub->add_option("-a,--analysis", *an, "analyze output for the taskset")->required();
    sub->add_option("-m,--metrics", *me, "simulate metrics for the same taskset")->required();
    sub->add_option("-o,--output", out->output, "output file")->required();
    sub->add_flag("--force", out->force, "overwrite existing outputs");
    sub->callback([an, me, out, &action] { action = [=] { run_report(*an, *me, *out); }; });
  }

  try {
    app.parse(argc, argv);
    if (action) action();
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "thermotool: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
