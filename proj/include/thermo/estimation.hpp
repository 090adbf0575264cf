#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "thermo/errors.hpp"

// Recovery of the multi-node thermal model from temperature profiles alone.
// Steady-state one-hot profiles pin the conduction shape A_tilde up to the
// power scale gamma; one transient trace pins gamma; profiles at several
// frequencies share one A and expose relative dynamic power. Absolute watts
// stay unidentifiable throughout.
namespace thermo::est {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Bit i set = core i fully utilized. Mask 0 is the all-idle baseline.
using Mask = std::uint32_t;

struct SteadyProfile {
  Mask mask = 0;
  double freq_hz = 0.0;
  VectorXd temps;  // absolute degC, steady, one entry per core
  std::string label;
};

struct TransientTrace {
  double freq_hz = 0.0;
  double ambient = 0.0;
  std::vector<double> t;           // strictly increasing seconds
  std::vector<VectorXd> temps;     // absolute degC per sample
  std::vector<Mask> activity;      // per-sample activity, aligned with t
  void validate(int n_cores) const;
};

// Y row i = steady temps with only core i busy; Y0 = all-idle temps. The
// difference R = Y - ones*Y0^T is the response matrix whose inverse is A_tilde.
struct ProfileMatrix {
  MatrixXd Y;
  VectorXd Y0;
  double freq_hz = 0.0;
};

// Per-core mean of the final `window` samples. TooShort when the trace tail
// has fewer samples than the window.
VectorXd smooth_steady(const TransientTrace& trace, int window);

// Assemble Y from exactly the n one-hot profiles plus the idle baseline.
// MissingProfile / DuplicateMask on bad coverage; input order is irrelevant.
ProfileMatrix build_Y_onehot(const std::vector<SteadyProfile>& profiles,
                             const SteadyProfile& idle);

// Least-squares Y from m >= n profiles with arbitrary nonzero masks, stacking
// mask rows into the predicate matrix D and solving D*R = U - ones*Y0^T.
// Coincides with build_Y_onehot when the masks are exactly the one-hot set.
// RankDeficient when the masks do not span all cores.
ProfileMatrix build_Y_ensemble(const std::vector<SteadyProfile>& profiles,
                               const SteadyProfile& idle);

struct AnomalyReport {
  bool clean = true;
  int identities_checked = 0;
  std::vector<std::string> faulty;    // localized profiles
  std::vector<std::string> suspects;  // candidates when localization fails
};

// Cross-check profiles through superposition: every 2-face of the activity
// hypercube whose four corners were all measured must satisfy
// X_{Z|a|b} - X_{Z|a} - X_{Z|b} + X_Z = 0. Residuals above 2*quant_step per
// core (summed over cores) mark a face inconsistent. A profile lying on every
// inconsistent face and no consistent one is localized as faulty; when that
// set is not a singleton its members are reported as suspects. The idle
// baseline is trusted and never accused.
AnomalyReport detect_anomaly(const std::vector<SteadyProfile>& profiles,
                             double quant_step = 1.0);

// Raw inversion A_tilde = (Y - ones*Y0^T)^-1. Sign and symmetry properties
// are the caller's to check; Singular when the response matrix is not
// invertible (e.g. Y == Y0 everywhere).
MatrixXd invert_Atilde(const MatrixXd& Y, const VectorXd& Y0);

struct Floorplan {
  std::vector<std::vector<int>> adj;  // per core, sorted, symmetric
  std::vector<int> ip_neighbors;      // cores nearest the optional extra node
};

// Adjacency from steady one-hot data. Directed closeness of j as seen from i
// is w(i,j) = y_ii - y_ij (a near neighbor soaks up almost the source's own
// rise); the undirected weight takes the min of the two directions. Each core
// connects to its nearest peer and to every peer within `margin` of that
// nearest. ip_temps (optional, one reading per one-hot profile plus an idle
// reading appended at the end, length n+1) places a non-core node the same
// way, nearest core(s) only.
Floorplan estimate_floorplan(const MatrixXd& Y, const VectorXd& Y0, double margin,
                             const VectorXd& ip_temps = VectorXd());

// Grouping pattern for constrained fits: groups(i,j) = -1 fixes the entry to
// zero (non-adjacent), otherwise entries sharing a group id share one
// parameter. Diagonal groups carry positive values, off-diagonal groups
// negative; a group may not span both. Must be symmetric.
struct Template {
  Eigen::MatrixXi groups;

  int n() const { return static_cast<int>(groups.rows()); }
  void validate() const;

  // Every diagonal entry its own group, every upper pair its own group, no
  // structural zeros: the unconstrained pattern.
  static Template dense(int n);
  // Per-core diagonal groups; adjacent pairs share one conduction value when
  // shared_offdiag, otherwise one group per pair; non-adjacent pairs zero.
  static Template from_floorplan(const std::vector<std::vector<int>>& adj,
                                 bool shared_offdiag = true);
};

struct FitOptions {
  int max_iters = 100000;
  double rel_tol = 1e-10;        // stop when the cost stops moving relatively
  bool monotone_scales = false;  // clamp multi-freq scales nonincreasing in f
};

struct TemplateFit {
  MatrixXd A_tilde;
  VectorXd params;  // one value per group id, signed
  double cost = 0.0;
  int iters = 0;
  bool converged = false;  // false = iteration cap hit, best iterate returned
};

// argmin over grouped parameters of ||T(p)^-1 - (Y - ones*Y0^T)||_F^2 by
// gradient descent with backtracking line search. Signs are enforced by an
// exponential parameter transform, so the returned A_tilde always satisfies
// the template. Never throws on slow convergence; see TemplateFit.converged.
TemplateFit fit_template(const MatrixXd& Y, const VectorXd& Y0, const Template& tmpl,
                         const FitOptions& opts = {});

struct MultiFreqFit {
  MatrixXd A_tilde_base;  // at the first listed frequency
  double base_freq = 0.0;
  // scale s_f with s_base = 1; the model is (Y_f - ones*Y0_f^T) = T^-1 / s_f,
  // so s_f tracks gamma_base/gamma_f and decreases as frequency (power) grows.
  std::map<double, double> scale_by_freq;
  VectorXd params;
  double cost = 0.0;
  int iters = 0;
  bool converged = false;
};

// Joint fit of one template across per-frequency datasets, first entry is the
// base: argmin sum_f ||T(p)^-1 - s_f * R_f||_F^2 with s_base fixed to 1 and
// s_f > 0. With opts.monotone_scales the scales are clamped nonincreasing in
// frequency at return. A single dataset degenerates to fit_template.
MultiFreqFit fit_multifreq(const std::vector<ProfileMatrix>& sets, const Template& tmpl,
                           const FitOptions& opts = {});

// Eigendecomposition of a symmetric A_tilde, eigenvalues ascending. The modes
// feed fit_gamma and predict_temperature: e^{A dt} = V e^{-gamma*L dt} V^T.
void atilde_modes(const MatrixXd& A_tilde, MatrixXd& V, VectorXd& lambda);

struct GammaFit {
  double gamma = 0.0;
  double rmse = 0.0;
};

struct GammaOptions {
  double lo = 1e-4, hi = 1e4;      // search bracket
  double flat_range = 0.25;        // degC; below this the trace carries no signal
};

// 1-D least squares for the power scale gamma on one constant-activity trace:
// prediction chip + V e^{-gamma*L dt} V^T (x0 - chip) + Atilde^-1 (I - ...) H
// against the samples, H = activity indicator. V, lambda from atilde_modes of
// the same frequency's A_tilde; chip_offset = that frequency's idle steady
// temps (the decay target). FlatTrace when the trace range is below
// opts.flat_range; ConfigError when the activity is not constant.
GammaFit fit_gamma(const TransientTrace& trace, const MatrixXd& V, const VectorXd& lambda,
                   const VectorXd& chip_offset, const GammaOptions& opts = {});

struct EstimationResult {
  MatrixXd A_tilde_base;
  double base_freq = 0.0;
  double gamma_base = 0.0;                     // from fit_gamma at base_freq
  std::map<double, double> scale_by_freq;      // s_base = 1
  std::map<double, VectorXd> chip_by_freq;     // idle steady absolute degC
  Floorplan floorplan;
};

// Closed-form temperature at t for a constant activity mask held since t0,
// starting from absolute temps theta0 (empty = start at the idle steady).
// Uses A_tilde_f = s_f * A_tilde_base and gamma_f = gamma_base / s_f, whose
// product -gamma_f * A_tilde_f = A is frequency-invariant. UnknownFrequency
// when freq has no scale or no chip offset.
VectorXd predict_temperature(const EstimationResult& result, Mask activity,
                             const VectorXd& theta0, double t0, double t, double freq);

// Dynamic power relative to the base frequency: P_f / P_base = 1 / s_f,
// normalized so the base maps to exactly 1. Absolute watts are out of reach:
// only gamma = b * P_D is observable and b never separates from P_D.
std::map<double, double> relative_power(const std::map<double, double>& scale_by_freq,
                                        double base_freq);

}  // namespace thermo::est
