#pragma once

#include <json.hpp>
#include <string>
#include <string_view>
#include <vector>

#include "thermo/estimation.hpp"
#include "thermo/mcs.hpp"
#include "thermo/sched_analysis.hpp"
#include "thermo/simulator.hpp"

namespace thermo::io {

// Insertion order is preserved, so documents serialize with stable field
// ordering as long as fields are inserted in a fixed code order.
using Json = nlohmann::ordered_json;

inline constexpr const char* kSchema = "thermotool-v1";

// 64-bit FNV-1a of the raw bytes, 16 lowercase hex digits. Outputs embed the
// hash of the config that produced them.
std::string fnv1a_hex(std::string_view bytes);

std::string read_file(const std::string& path);  // ParseError when unreadable

// Refuses to replace an existing file unless force.
void write_file(const std::string& path, std::string_view content, bool force);

Json parse_json(const std::string& text, const std::string& ctx);

// read_file + parse_json + schema field check. raw_out, when given, receives
// the file bytes (the hash source for output envelopes).
Json load_config(const std::string& path, std::string* raw_out = nullptr);

// ConfigError on any key outside `allowed`; objects only.
void check_keys(const Json& j, std::initializer_list<const char*> allowed,
                const std::string& ctx);

// Typed field access with ConfigError diagnostics naming ctx and key.
const Json& jreq(const Json& j, const char* key, const std::string& ctx);
double jnum(const Json& j, const char* key, const std::string& ctx);
double jnum_or(const Json& j, const char* key, double def, const std::string& ctx);
long jint(const Json& j, const char* key, const std::string& ctx);
long jint_or(const Json& j, const char* key, long def, const std::string& ctx);
bool jbool_or(const Json& j, const char* key, bool def, const std::string& ctx);
std::string jstr(const Json& j, const char* key, const std::string& ctx);
std::string jstr_or(const Json& j, const char* key, const std::string& def,
                    const std::string& ctx);

// Trace CSV: header "t_s,core0_C,...,core{n-1}_C[,gpu_C]", one row per sample.
// Timestamps must be strictly increasing; every violation is a ParseError
// carrying the 1-based line number. The returned trace holds the core columns
// with activity zeroed; freq and ambient are the caller's to set.
struct TraceFile {
  est::TransientTrace trace;
  std::vector<double> gpu;  // empty when the file has no gpu column
};
TraceFile read_trace_file(const std::string& path, int expect_cores = -1);
est::TransientTrace read_trace(const std::string& path, int expect_cores = -1);

// Inverse of read_trace, six decimals, core columns only.
std::string format_trace_csv(const est::TransientTrace& trace);

// Activity bitstring: character i ('0' or '1') is core i.
est::Mask parse_mask(const std::string& s, int n_cores);
std::string mask_string(est::Mask m, int n_cores);

// Configs carry milliseconds; the scheduling core runs on integer
// microseconds. Converted exactly once, here.
tasks::usec usec_from_ms(double ms);
double ms_from_usec(tasks::usec t);

tasks::Taskset taskset_from_json(const Json& j);
Json taskset_to_json(const tasks::Taskset& ts);
std::vector<tasks::TaskSpec> tasklist_from_json(const Json& arr, const std::string& ctx);

core::ScalarThermalParams scalar_thermal_from_json(const Json& j);
Json scalar_thermal_to_json(const core::ScalarThermalParams& p);
core::MatrixThermalParams matrix_thermal_from_json(const Json& j);
Json matrix_thermal_to_json(const core::MatrixThermalParams& p);

sched::GenParams genparams_from_json(const Json& j);
Json analysis_to_json(const sched::AnalysisReport& r);

mcs::McsConfig mcs_config_from_json(const Json& j);
Json mcs_plan_to_json(const mcs::McsPlan& p);
mcs::McsPlan mcs_plan_from_json(const Json& j);

// Simulation config; file references resolve relative to base_dir. The
// optional "ambient_schedule" section is not consumed here: mcs-run pairs it
// with a plan into a McsRuntime.
sim::SimConfig sim_config_from_json(const Json& j, const std::string& base_dir);
std::vector<sim::AmbientSample> ambient_schedule_from_json(const Json& j,
                                                           const std::string& ctx);
Json metrics_to_json(const sim::SimTrace& trace, const sim::Metrics& m);

Json estimation_result_to_json(const est::EstimationResult& r);
est::EstimationResult estimation_result_from_json(const Json& j);

// Document wrapper: schema first, then the hash of the producing config.
Json report_envelope(std::string_view config_bytes);

Json vec_to_json(const Eigen::VectorXd& v);
Json mat_to_json(const Eigen::MatrixXd& m);
Eigen::VectorXd vec_from_json(const Json& j, const std::string& ctx);
Eigen::MatrixXd mat_from_json(const Json& j, const std::string& ctx);

}  // namespace thermo::io
