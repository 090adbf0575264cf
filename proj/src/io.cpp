#include "thermo/io.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace thermo::io {

namespace fs = std::filesystem;

std::string fnv1a_hex(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Err::ParseError, path + ": cannot open");
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void write_file(const std::string& path, std::string_view content, bool force) {
  if (!force && fs::exists(path))
    fail(Err::ConfigError, path + ": exists, pass --force to overwrite");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(Err::ConfigError, path + ": cannot write");
  out << content;
  if (!out) fail(Err::ConfigError, path + ": write failed");
}

Json parse_json(const std::string& text, const std::string& ctx) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(Err::ParseError, ctx + ": " + e.what());
  }
}

Json load_config(const std::string& path, std::string* raw_out) {
  std::string raw = read_file(path);
  Json j = parse_json(raw, path);
  if (!j.is_object()) fail(Err::ConfigError, path + ": top level must be an object");
  std::string schema = jstr(j, "schema", path);
  if (schema != kSchema)
    fail(Err::ConfigError, path + ": schema '" + schema + "', expected '" + kSchema + "'");
  if (raw_out) *raw_out = std::move(raw);
  return j;
}

void check_keys(const Json& j, std::initializer_list<const char*> allowed,
                const std::string& ctx) {
  if (!j.is_object()) fail(Err::ConfigError, ctx + ": must be an object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        ok = true;
        break;
      }
    if (!ok) fail(Err::ConfigError, ctx + ": unknown key '" + item.key() + "'");
  }
}

const Json& jreq(const Json& j, const char* key, const std::string& ctx) {
  auto it = j.find(key);
  if (it == j.end()) fail(Err::ConfigError, ctx + ": missing key '" + key + "'");
  return *it;
}

double jnum(const Json& j, const char* key, const std::string& ctx) {
  const Json& v = jreq(j, key, ctx);
  if (!v.is_number()) fail(Err::ConfigError, ctx + ": key '" + key + "' must be a number");
  return v.get<double>();
}

double jnum_or(const Json& j, const char* key, double def, const std::string& ctx) {
  return j.contains(key) ? jnum(j, key, ctx) : def;
}

long jint(const Json& j, const char* key, const std::string& ctx) {
  const Json& v = jreq(j, key, ctx);
  if (!v.is_number_integer())
    fail(Err::ConfigError, ctx + ": key '" + key + "' must be an integer");
  return v.get<long>();
}

long jint_or(const Json& j, const char* key, long def, const std::string& ctx) {
  return j.contains(key) ? jint(j, key, ctx) : def;
}

bool jbool_or(const Json& j, const char* key, bool def, const std::string& ctx) {
  if (!j.contains(key)) return def;
  const Json& v = j.at(key);
  if (!v.is_boolean()) fail(Err::ConfigError, ctx + ": key '" + key + "' must be a boolean");
  return v.get<bool>();
}

std::string jstr(const Json& j, const char* key, const std::string& ctx) {
  const Json& v = jreq(j, key, ctx);
  if (!v.is_string()) fail(Err::ConfigError, ctx + ": key '" + key + "' must be a string");
  return v.get<std::string>();
}

std::string jstr_or(const Json& j, const char* key, const std::string& def,
                    const std::string& ctx) {
  return j.contains(key) ? jstr(j, key, ctx) : def;
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  char* end = nullptr;
  out = std::strtod(s.c_str(), &end);
  return end == s.c_str() + s.size() && std::isfinite(out);
}

std::string at_line(const std::string& path, int line) {
  return path + ":" + std::to_string(line);
}

}  // namespace

TraceFile read_trace_file(const std::string& path, int expect_cores) {
  std::ifstream in(path);
  if (!in) fail(Err::ParseError, path + ": cannot open");

  std::string line;
  if (!std::getline(in, line)) fail(Err::ParseError, at_line(path, 1) + ": empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  auto cols = split_csv(line);
  if (cols.empty() || cols[0] != "t_s")
    fail(Err::ParseError, at_line(path, 1) + ": header must start with t_s");
  bool has_gpu = cols.back() == "gpu_C";
  int n = static_cast<int>(cols.size()) - 1 - (has_gpu ? 1 : 0);
  if (n < 1) fail(Err::ParseError, at_line(path, 1) + ": no core columns");
  for (int i = 0; i < n; ++i) {
    std::string want = "core" + std::to_string(i) + "_C";
    if (cols[1 + i] != want)
      fail(Err::ParseError,
           at_line(path, 1) + ": column " + std::to_string(i + 2) + " is '" + cols[1 + i] +
               "', expected '" + want + "'");
  }
  if (expect_cores >= 0 && n != expect_cores)
    fail(Err::ParseError, at_line(path, 1) + ": header has " + std::to_string(n) +
                              " cores, expected " + std::to_string(expect_cores));

  TraceFile out;
  out.trace.t.clear();
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) fail(Err::ParseError, at_line(path, lineno) + ": empty line");
    auto fields = split_csv(line);
    if (fields.size() != cols.size())
      fail(Err::ParseError, at_line(path, lineno) + ": expected " +
                                std::to_string(cols.size()) + " fields, got " +
                                std::to_string(fields.size()));
    double t = 0.0;
    if (!parse_double(fields[0], t))
      fail(Err::ParseError, at_line(path, lineno) + ": bad number '" + fields[0] + "'");
    if (!out.trace.t.empty() && t <= out.trace.t.back())
      fail(Err::ParseError, at_line(path, lineno) + ": nonmonotone timestamp");
    Eigen::VectorXd row(n);
    for (int i = 0; i < n; ++i) {
      double v = 0.0;
      if (!parse_double(fields[1 + i], v))
        fail(Err::ParseError, at_line(path, lineno) + ": bad number '" + fields[1 + i] + "'");
      row(i) = v;
    }
    if (has_gpu) {
      double v = 0.0;
      if (!parse_double(fields.back(), v))
        fail(Err::ParseError, at_line(path, lineno) + ": bad number '" + fields.back() + "'");
      out.gpu.push_back(v);
    }
    out.trace.t.push_back(t);
    out.trace.temps.push_back(std::move(row));
  }
  if (out.trace.t.empty()) fail(Err::ParseError, path + ": no samples");
  out.trace.activity.assign(out.trace.t.size(), 0);
  return out;
}

est::TransientTrace read_trace(const std::string& path, int expect_cores) {
  return read_trace_file(path, expect_cores).trace;
}

std::string format_trace_csv(const est::TransientTrace& trace) {
  if (trace.temps.empty()) fail(Err::ConfigError, "trace has no samples");
  int n = static_cast<int>(trace.temps[0].size());
  std::string out = "t_s";
  for (int i = 0; i < n; ++i) out += ",core" + std::to_string(i) + "_C";
  out += "\n";
  char buf[64];
  for (std::size_t k = 0; k < trace.t.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.6f", trace.t[k]);
    out += buf;
    for (int i = 0; i < n; ++i) {
      std::snprintf(buf, sizeof buf, ",%.6f", trace.temps[k](i));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

est::Mask parse_mask(const std::string& s, int n_cores) {
  if (static_cast<int>(s.size()) != n_cores)
    fail(Err::ConfigError,
         "mask '" + s + "': length " + std::to_string(s.size()) + ", expected " +
             std::to_string(n_cores));
  est::Mask m = 0;
  for (int i = 0; i < n_cores; ++i) {
    if (s[i] == '1')
      m |= est::Mask{1} << i;
    else if (s[i] != '0')
      fail(Err::ConfigError, "mask '" + s + "': characters must be 0 or 1");
  }
  return m;
}

std::string mask_string(est::Mask m, int n_cores) {
  std::string s(static_cast<std::size_t>(n_cores), '0');
  for (int i = 0; i < n_cores; ++i)
    if (m & (est::Mask{1} << i)) s[i] = '1';
  return s;
}

tasks::usec usec_from_ms(double ms) {
  return static_cast<tasks::usec>(std::llround(ms * 1000.0));
}

double ms_from_usec(tasks::usec t) { return static_cast<double>(t) / 1000.0; }

namespace {

tasks::ServerSpec server_from_json(const Json& j, const std::string& ctx) {
  check_keys(j, {"budget_ms", "period_ms", "policy", "core", "criticality", "mot_ms"}, ctx);
  tasks::ServerSpec s;
  s.budget = usec_from_ms(jnum(j, "budget_ms", ctx));
  s.period = usec_from_ms(jnum(j, "period_ms", ctx));
  s.policy = tasks::parse_policy(jstr_or(j, "policy", "polling", ctx));
  s.core = static_cast<int>(jint_or(j, "core", 0, ctx));
  s.criticality = static_cast<int>(jint_or(j, "criticality", 0, ctx));
  s.mot_reserve = usec_from_ms(jnum_or(j, "mot_ms", 0.0, ctx));
  return s;
}

Json server_to_json(const tasks::ServerSpec& s) {
  Json j;
  j["budget_ms"] = ms_from_usec(s.budget);
  j["period_ms"] = ms_from_usec(s.period);
  j["policy"] = tasks::policy_name(s.policy);
  j["core"] = s.core;
  j["criticality"] = s.criticality;
  j["mot_ms"] = ms_from_usec(s.mot_reserve);
  return j;
}

tasks::TaskSpec task_from_json(const Json& j, const std::string& ctx) {
  check_keys(j,
             {"c1_ms", "m1_ms", "k_ms", "m2_ms", "c2_ms", "period_ms", "uses_gpu", "priority",
              "server"},
             ctx);
  tasks::TaskSpec t;
  t.c1 = usec_from_ms(jnum(j, "c1_ms", ctx));
  t.m1 = usec_from_ms(jnum_or(j, "m1_ms", 0.0, ctx));
  t.k = usec_from_ms(jnum_or(j, "k_ms", 0.0, ctx));
  t.m2 = usec_from_ms(jnum_or(j, "m2_ms", 0.0, ctx));
  t.c2 = usec_from_ms(jnum_or(j, "c2_ms", 0.0, ctx));
  t.period = usec_from_ms(jnum(j, "period_ms", ctx));
  t.uses_gpu = jbool_or(j, "uses_gpu", false, ctx);
  t.priority = static_cast<int>(jint(j, "priority", ctx));
  t.server = static_cast<int>(jint_or(j, "server", 0, ctx));
  return t;
}

Json task_to_json(const tasks::TaskSpec& t) {
  Json j;
  j["c1_ms"] = ms_from_usec(t.c1);
  j["m1_ms"] = ms_from_usec(t.m1);
  j["k_ms"] = ms_from_usec(t.k);
  j["m2_ms"] = ms_from_usec(t.m2);
  j["c2_ms"] = ms_from_usec(t.c2);
  j["period_ms"] = ms_from_usec(t.period);
  j["uses_gpu"] = t.uses_gpu;
  j["priority"] = t.priority;
  j["server"] = t.server;
  return j;
}

}  // namespace

std::vector<tasks::TaskSpec> tasklist_from_json(const Json& arr, const std::string& ctx) {
  if (!arr.is_array()) fail(Err::ConfigError, ctx + ": must be an array");
  std::vector<tasks::TaskSpec> out;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    out.push_back(task_from_json(arr[i], ctx + "[" + std::to_string(i) + "]"));
    out.back().validate();
  }
  return out;
}

tasks::Taskset taskset_from_json(const Json& j) {
  const std::string ctx = "taskset";
  check_keys(j, {"schema", "queue_policy", "cpu_servers", "gpu_server", "tasks"}, ctx);
  tasks::Taskset ts;
  ts.queue_policy = tasks::parse_queue(jstr_or(j, "queue_policy", "hybrid", ctx));

  const Json& servers = jreq(j, "cpu_servers", ctx);
  if (!servers.is_array()) fail(Err::ConfigError, ctx + ": cpu_servers must be an array");
  for (std::size_t i = 0; i < servers.size(); ++i)
    ts.cpu_servers.push_back(
        server_from_json(servers[i], ctx + ".cpu_servers[" + std::to_string(i) + "]"));

  const Json& gpu = jreq(j, "gpu_server", ctx);
  check_keys(gpu, {"budget_ms", "period_ms"}, ctx + ".gpu_server");
  ts.gpu_server.budget = usec_from_ms(jnum(gpu, "budget_ms", ctx + ".gpu_server"));
  ts.gpu_server.period = usec_from_ms(jnum(gpu, "period_ms", ctx + ".gpu_server"));

  const Json& tsk = jreq(j, "tasks", ctx);
  if (!tsk.is_array()) fail(Err::ConfigError, ctx + ": tasks must be an array");
  for (std::size_t i = 0; i < tsk.size(); ++i)
    ts.tasks.push_back(task_from_json(tsk[i], ctx + ".tasks[" + std::to_string(i) + "]"));

  ts.validate();
  return ts;
}

Json taskset_to_json(const tasks::Taskset& ts) {
  Json j;
  j["queue_policy"] = tasks::queue_name(ts.queue_policy);
  j["cpu_servers"] = Json::array();
  for (const auto& s : ts.cpu_servers) j["cpu_servers"].push_back(server_to_json(s));
  Json gpu;
  gpu["budget_ms"] = ms_from_usec(ts.gpu_server.budget);
  gpu["period_ms"] = ms_from_usec(ts.gpu_server.period);
  j["gpu_server"] = gpu;
  j["tasks"] = Json::array();
  for (const auto& t : ts.tasks) j["tasks"].push_back(task_to_json(t));
  return j;
}

core::ScalarThermalParams scalar_thermal_from_json(const Json& j) {
  const std::string ctx = "thermal";
  check_keys(j, {"alpha", "beta", "b", "gamma"}, ctx);
  double alpha = jnum(j, "alpha", ctx);
  double beta = jnum(j, "beta", ctx);
  double b = jnum_or(j, "b", 0.0, ctx);
  if (j.contains("gamma"))
    return core::ScalarThermalParams::conducted(alpha, beta,
                                                mat_from_json(j.at("gamma"), ctx + ".gamma"), b);
  return core::ScalarThermalParams::single(alpha, beta, b);
}

Json scalar_thermal_to_json(const core::ScalarThermalParams& p) {
  Json j;
  j["alpha"] = p.alpha;
  j["beta"] = p.beta;
  j["b"] = p.b;
  if (p.gamma.size() > 0) j["gamma"] = mat_to_json(p.gamma);
  return j;
}

core::MatrixThermalParams matrix_thermal_from_json(const Json& j) {
  const std::string ctx = "thermal";
  check_keys(j, {"A", "b_diag", "chip_offset"}, ctx);
  Eigen::MatrixXd A = mat_from_json(jreq(j, "A", ctx), ctx + ".A");
  Eigen::VectorXd b = vec_from_json(jreq(j, "b_diag", ctx), ctx + ".b_diag");
  Eigen::VectorXd chip;
  if (j.contains("chip_offset")) chip = vec_from_json(j.at("chip_offset"), ctx + ".chip_offset");
  return core::MatrixThermalParams::make(std::move(A), std::move(b), std::move(chip));
}

Json matrix_thermal_to_json(const core::MatrixThermalParams& p) {
  Json j;
  j["A"] = mat_to_json(p.A);
  j["b_diag"] = vec_to_json(p.Bdiag);
  if (p.chip_offset.size() > 0) j["chip_offset"] = vec_to_json(p.chip_offset);
  return j;
}

sched::GenParams genparams_from_json(const Json& j) {
  const std::string ctx = "gen";
  check_keys(j,
             {"schema", "n_cores", "n_tasks_min", "n_tasks_max", "util_min", "util_max",
              "period_min_ms", "period_max_ms", "gpu_share_min", "gpu_share_max",
              "gpu_ratio_min", "gpu_ratio_max", "misc_ratio_min", "misc_ratio_max",
              "cpu_server_period_ms", "cpu_server_budget_ms", "gpu_server_period_ms",
              "gpu_server_budget_ms", "cpu_policy", "queue", "seed"},
             ctx);
  sched::GenParams gp;
  gp.n_cores = static_cast<int>(jint_or(j, "n_cores", gp.n_cores, ctx));
  gp.n_tasks_min = static_cast<int>(jint_or(j, "n_tasks_min", gp.n_tasks_min, ctx));
  gp.n_tasks_max = static_cast<int>(jint_or(j, "n_tasks_max", gp.n_tasks_max, ctx));
  gp.util_min = jnum_or(j, "util_min", gp.util_min, ctx);
  gp.util_max = jnum_or(j, "util_max", gp.util_max, ctx);
  gp.period_min = usec_from_ms(jnum_or(j, "period_min_ms", ms_from_usec(gp.period_min), ctx));
  gp.period_max = usec_from_ms(jnum_or(j, "period_max_ms", ms_from_usec(gp.period_max), ctx));
  gp.gpu_share_min = jnum_or(j, "gpu_share_min", gp.gpu_share_min, ctx);
  gp.gpu_share_max = jnum_or(j, "gpu_share_max", gp.gpu_share_max, ctx);
  gp.gpu_ratio_min = jnum_or(j, "gpu_ratio_min", gp.gpu_ratio_min, ctx);
  gp.gpu_ratio_max = jnum_or(j, "gpu_ratio_max", gp.gpu_ratio_max, ctx);
  gp.misc_ratio_min = jnum_or(j, "misc_ratio_min", gp.misc_ratio_min, ctx);
  gp.misc_ratio_max = jnum_or(j, "misc_ratio_max", gp.misc_ratio_max, ctx);
  gp.cpu_server_period =
      usec_from_ms(jnum_or(j, "cpu_server_period_ms", ms_from_usec(gp.cpu_server_period), ctx));
  gp.cpu_server_budget =
      usec_from_ms(jnum_or(j, "cpu_server_budget_ms", ms_from_usec(gp.cpu_server_budget), ctx));
  gp.gpu_server_period =
      usec_from_ms(jnum_or(j, "gpu_server_period_ms", ms_from_usec(gp.gpu_server_period), ctx));
  gp.gpu_server_budget =
      usec_from_ms(jnum_or(j, "gpu_server_budget_ms", ms_from_usec(gp.gpu_server_budget), ctx));
  gp.cpu_policy = tasks::parse_policy(jstr_or(j, "cpu_policy", "deferrable", ctx));
  gp.queue = tasks::parse_queue(jstr_or(j, "queue", "hybrid", ctx));
  gp.seed = static_cast<std::uint64_t>(jint_or(j, "seed", static_cast<long>(gp.seed), ctx));
  return gp;
}

Json analysis_to_json(const sched::AnalysisReport& r) {
  Json j;
  j["queue_used"] = tasks::queue_name(r.queue_used);
  j["taskset_schedulable"] = r.taskset_schedulable;
  j["tasks"] = Json::array();
  for (const auto& t : r.per_task) {
    Json e;
    e["response_ms"] = ms_from_usec(t.response);
    e["local_ms"] = ms_from_usec(t.local);
    e["remote_ms"] = ms_from_usec(t.remote);
    e["handover_ms"] = ms_from_usec(t.handover);
    e["schedulable"] = t.schedulable;
    e["remote_diverged"] = t.remote_diverged;
    j["tasks"].push_back(e);
  }
  return j;
}

mcs::McsConfig mcs_config_from_json(const Json& j) {
  const std::string ctx = "mcs";
  check_keys(j,
             {"schema", "n_cores", "levels", "servers", "thermal", "theta_max_c",
              "design_ambient_c", "grid"},
             ctx);
  mcs::McsConfig cfg;
  cfg.n_cores = static_cast<int>(jint(j, "n_cores", ctx));
  const Json& levels = jreq(j, "levels", ctx);
  if (!levels.is_array()) fail(Err::ConfigError, ctx + ": levels must be an array");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const std::string lctx = ctx + ".levels[" + std::to_string(i) + "]";
    check_keys(levels[i], {"id", "p_static", "p_dynamic"}, lctx);
    mcs::LevelSpec l;
    l.id = static_cast<int>(jint(levels[i], "id", lctx));
    l.p_static = jnum(levels[i], "p_static", lctx);
    l.p_dynamic = jnum(levels[i], "p_dynamic", lctx);
    cfg.levels.push_back(l);
  }
  const Json& servers = jreq(j, "servers", ctx);
  if (!servers.is_array()) fail(Err::ConfigError, ctx + ": servers must be an array");
  for (std::size_t i = 0; i < servers.size(); ++i)
    cfg.servers.push_back(
        server_from_json(servers[i], ctx + ".servers[" + std::to_string(i) + "]"));
  cfg.thermal = scalar_thermal_from_json(jreq(j, "thermal", ctx));
  cfg.theta_max_abs = jnum(j, "theta_max_c", ctx);
  cfg.design_ambient = jnum(j, "design_ambient_c", ctx);
  cfg.grid = jnum_or(j, "grid", cfg.grid, ctx);
  cfg.validate();
  return cfg;
}

Json mcs_plan_to_json(const mcs::McsPlan& p) {
  Json j;
  j["levels"] = Json::array();
  for (std::size_t i = 0; i < p.level_ids.size(); ++i) {
    Json e;
    e["id"] = p.level_ids[i];
    e["idle_util"] = p.idle[i].util;
    e["idle_period_s"] = p.idle[i].period;
    e["per_core"] = p.idle[i].per_core;
    e["critical_ambient_c"] = p.ambient[i];
    j["levels"].push_back(e);
  }
  j["shift_down_s"] = p.shift_down;
  return j;
}

mcs::McsPlan mcs_plan_from_json(const Json& j) {
  const std::string ctx = "plan";
  check_keys(j, {"schema", "config_hash", "levels", "shift_down_s"}, ctx);
  mcs::McsPlan p;
  const Json& levels = jreq(j, "levels", ctx);
  if (!levels.is_array()) fail(Err::ConfigError, ctx + ": levels must be an array");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const std::string lctx = ctx + ".levels[" + std::to_string(i) + "]";
    check_keys(levels[i], {"id", "idle_util", "idle_period_s", "per_core", "critical_ambient_c"},
               lctx);
    mcs::IdleServerSpec idle;
    idle.level = static_cast<int>(jint(levels[i], "id", lctx));
    idle.util = jnum(levels[i], "idle_util", lctx);
    idle.period = jnum(levels[i], "idle_period_s", lctx);
    idle.per_core = jbool_or(levels[i], "per_core", true, lctx);
    p.level_ids.push_back(idle.level);
    p.idle.push_back(idle);
    p.ambient.push_back(jnum(levels[i], "critical_ambient_c", lctx));
  }
  const Json& sd = jreq(j, "shift_down_s", ctx);
  if (!sd.is_array()) fail(Err::ConfigError, ctx + ": shift_down_s must be an array");
  for (std::size_t i = 0; i < sd.size(); ++i) {
    if (!sd[i].is_number()) fail(Err::ConfigError, ctx + ": shift_down_s must hold numbers");
    p.shift_down.push_back(sd[i].get<double>());
  }
  return p;
}

namespace {

std::string resolve(const std::string& base_dir, const std::string& file) {
  fs::path p(file);
  if (p.is_absolute() || base_dir.empty()) return file;
  return (fs::path(base_dir) / p).string();
}

}  // namespace

sim::SimConfig sim_config_from_json(const Json& j, const std::string& base_dir) {
  const std::string ctx = "sim";
  check_keys(j,
             {"schema", "taskset", "taskset_file", "thermal", "p_static", "p_active", "gpu_node",
              "ambient_c", "theta_max_c", "theta0_rise", "duration_ms", "release", "seed",
              "scripted_releases_ms", "record_thermal", "sample_interval_ms", "ambient_schedule"},
             ctx);
  sim::SimConfig cfg;

  if (j.contains("taskset") == j.contains("taskset_file"))
    fail(Err::ConfigError, ctx + ": exactly one of taskset, taskset_file required");
  if (j.contains("taskset")) {
    cfg.ts = taskset_from_json(j.at("taskset"));
  } else {
    std::string path = resolve(base_dir, jstr(j, "taskset_file", ctx));
    cfg.ts = taskset_from_json(parse_json(read_file(path), path));
  }

  cfg.thermal = matrix_thermal_from_json(jreq(j, "thermal", ctx));
  if (j.contains("p_static")) cfg.p_static = vec_from_json(j.at("p_static"), ctx + ".p_static");
  if (j.contains("p_active")) cfg.p_active = vec_from_json(j.at("p_active"), ctx + ".p_active");
  cfg.gpu_node = static_cast<int>(jint_or(j, "gpu_node", -1, ctx));
  cfg.ambient = jnum_or(j, "ambient_c", 0.0, ctx);
  cfg.theta_max_abs = jnum_or(j, "theta_max_c", cfg.theta_max_abs, ctx);
  if (j.contains("theta0_rise"))
    cfg.theta0_rise = vec_from_json(j.at("theta0_rise"), ctx + ".theta0_rise");
  cfg.duration = usec_from_ms(jnum(j, "duration_ms", ctx));

  std::string rel = jstr_or(j, "release", "synchronous", ctx);
  if (rel == "synchronous")
    cfg.release = sim::ReleasePattern::synchronous;
  else if (rel == "random_phase")
    cfg.release = sim::ReleasePattern::random_phase;
  else if (rel == "scripted")
    cfg.release = sim::ReleasePattern::scripted;
  else
    fail(Err::ConfigError, ctx + ": unknown release pattern '" + rel + "'");
  cfg.seed = static_cast<std::uint64_t>(jint_or(j, "seed", 0, ctx));

  if (j.contains("scripted_releases_ms")) {
    const Json& sr = j.at("scripted_releases_ms");
    if (!sr.is_array()) fail(Err::ConfigError, ctx + ": scripted_releases_ms must be an array");
    for (const auto& per_task : sr) {
      if (!per_task.is_array())
        fail(Err::ConfigError, ctx + ": scripted_releases_ms entries must be arrays");
      std::vector<tasks::usec> rels;
      for (const auto& v : per_task) {
        if (!v.is_number())
          fail(Err::ConfigError, ctx + ": scripted_releases_ms must hold numbers");
        rels.push_back(usec_from_ms(v.get<double>()));
      }
      cfg.scripted_releases.push_back(std::move(rels));
    }
  }

  cfg.record_thermal = jbool_or(j, "record_thermal", true, ctx);
  cfg.sample_interval = usec_from_ms(jnum_or(j, "sample_interval_ms", 0.0, ctx));
  return cfg;
}

std::vector<sim::AmbientSample> ambient_schedule_from_json(const Json& j,
                                                           const std::string& ctx) {
  if (!j.is_array()) fail(Err::ConfigError, ctx + ": must be an array");
  std::vector<sim::AmbientSample> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const std::string sctx = ctx + "[" + std::to_string(i) + "]";
    check_keys(j[i], {"t_s", "ambient_c"}, sctx);
    sim::AmbientSample s;
    s.t = jnum(j[i], "t_s", sctx);
    s.ambient = jnum(j[i], "ambient_c", sctx);
    if (!out.empty() && s.t <= out.back().t)
      fail(Err::ConfigError, sctx + ": t_s must be strictly increasing");
    out.push_back(s);
  }
  return out;
}

Json metrics_to_json(const sim::SimTrace& trace, const sim::Metrics& m) {
  Json j;
  j["duration_ms"] = ms_from_usec(trace.duration);
  j["per_task"] = Json::array();
  for (const auto& t : m.per_task) {
    Json e;
    e["jobs"] = t.jobs;
    e["max_response_ms"] = ms_from_usec(t.max_response);
    e["deadline_misses"] = t.deadline_misses;
    j["per_task"].push_back(e);
  }
  j["per_server"] = Json::array();
  for (const auto& s : m.per_server) {
    Json e;
    e["consumed_ms"] = ms_from_usec(s.consumed);
    e["replenished_ms"] = ms_from_usec(s.replenished);
    e["busy_fraction"] = s.busy_fraction;
    j["per_server"].push_back(e);
  }
  bool tracked = m.peak_abs.size() > 0 && m.peak_abs.allFinite();
  j["peak_c"] = tracked ? vec_to_json(m.peak_abs) : Json(nullptr);
  j["violations"] = Json::array();
  for (const auto& v : trace.violations) {
    Json e;
    e["t_s"] = v.t;
    e["node"] = v.node;
    e["theta_c"] = v.theta_abs;
    j["violations"].push_back(e);
  }
  j["n_events"] = trace.events.size();
  return j;
}

Json estimation_result_to_json(const est::EstimationResult& r) {
  Json j;
  j["cores"] = r.A_tilde_base.rows();
  j["base_freq_hz"] = r.base_freq;
  j["gamma_base"] = r.gamma_base;
  j["a_tilde_base"] = mat_to_json(r.A_tilde_base);
  auto rel = est::relative_power(r.scale_by_freq, r.base_freq);
  j["frequencies"] = Json::array();
  for (const auto& [f, s] : r.scale_by_freq) {
    Json e;
    e["freq_hz"] = f;
    e["scale"] = s;
    e["relative_power"] = rel.at(f);
    auto chip = r.chip_by_freq.find(f);
    if (chip == r.chip_by_freq.end())
      fail(Err::ConfigError, "result: no chip offset for frequency " + std::to_string(f));
    e["chip_c"] = vec_to_json(chip->second);
    j["frequencies"].push_back(e);
  }
  Json fp;
  fp["adj"] = r.floorplan.adj;
  fp["ip_neighbors"] = r.floorplan.ip_neighbors;
  j["floorplan"] = fp;
  return j;
}

est::EstimationResult estimation_result_from_json(const Json& j) {
  const std::string ctx = "result";
  check_keys(j,
             {"schema", "config_hash", "cores", "base_freq_hz", "gamma_base", "a_tilde_base",
              "frequencies", "floorplan", "anomaly", "fit", "gamma_fit"},
             ctx);
  est::EstimationResult r;
  int n = static_cast<int>(jint(j, "cores", ctx));
  r.base_freq = jnum(j, "base_freq_hz", ctx);
  r.gamma_base = jnum(j, "gamma_base", ctx);
  r.A_tilde_base = mat_from_json(jreq(j, "a_tilde_base", ctx), ctx + ".a_tilde_base");
  if (r.A_tilde_base.rows() != n)
    fail(Err::ConfigError, ctx + ": a_tilde_base size does not match cores");
  const Json& freqs = jreq(j, "frequencies", ctx);
  if (!freqs.is_array()) fail(Err::ConfigError, ctx + ": frequencies must be an array");
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    const std::string fctx = ctx + ".frequencies[" + std::to_string(i) + "]";
    check_keys(freqs[i], {"freq_hz", "scale", "relative_power", "chip_c"}, fctx);
    double f = jnum(freqs[i], "freq_hz", fctx);
    r.scale_by_freq[f] = jnum(freqs[i], "scale", fctx);
    r.chip_by_freq[f] = vec_from_json(jreq(freqs[i], "chip_c", fctx), fctx + ".chip_c");
  }
  const Json& fp = jreq(j, "floorplan", ctx);
  check_keys(fp, {"adj", "ip_neighbors"}, ctx + ".floorplan");
  const Json& adj = jreq(fp, "adj", ctx + ".floorplan");
  if (!adj.is_array()) fail(Err::ConfigError, ctx + ": floorplan.adj must be an array");
  auto int_list = [&ctx](const Json& arr) {
    std::vector<int> out;
    if (!arr.is_array()) fail(Err::ConfigError, ctx + ": floorplan lists must be arrays");
    for (const auto& v : arr) {
      if (!v.is_number_integer())
        fail(Err::ConfigError, ctx + ": floorplan entries must be integers");
      out.push_back(v.get<int>());
    }
    return out;
  };
  for (const auto& row : adj) r.floorplan.adj.push_back(int_list(row));
  if (fp.contains("ip_neighbors")) r.floorplan.ip_neighbors = int_list(fp.at("ip_neighbors"));
  return r;
}

Json report_envelope(std::string_view config_bytes) {
  Json j;
  j["schema"] = kSchema;
  j["config_hash"] = fnv1a_hex(config_bytes);
  return j;
}

Json vec_to_json(const Eigen::VectorXd& v) {
  Json j = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) j.push_back(v(i));
  return j;
}

Json mat_to_json(const Eigen::MatrixXd& m) {
  Json j = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) row.push_back(m(i, k));
    j.push_back(row);
  }
  return j;
}

Eigen::VectorXd vec_from_json(const Json& j, const std::string& ctx) {
  if (!j.is_array()) fail(Err::ConfigError, ctx + ": must be an array");
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) fail(Err::ConfigError, ctx + ": entries must be numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

Eigen::MatrixXd mat_from_json(const Json& j, const std::string& ctx) {
  if (!j.is_array() || j.empty()) fail(Err::ConfigError, ctx + ": must be a nonempty array");
  std::size_t cols = 0;
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_array()) fail(Err::ConfigError, ctx + ": rows must be arrays");
    if (i == 0)
      cols = j[i].size();
    else if (j[i].size() != cols)
      fail(Err::ConfigError, ctx + ": ragged rows");
  }
  Eigen::MatrixXd m(j.size(), cols);
  for (std::size_t i = 0; i < j.size(); ++i)
    for (std::size_t k = 0; k < cols; ++k) {
      if (!j[i][k].is_number()) fail(Err::ConfigError, ctx + ": entries must be numbers");
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = j[i][k].get<double>();
    }
  return m;
}

}  // namespace thermo::io
