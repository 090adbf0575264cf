#include "thermo/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

namespace thermo::est {

namespace {

int popcount(Mask m) {
  int c = 0;
  for (; m; m &= m - 1) ++c;
  return c;
}

MatrixXd response_matrix(const MatrixXd& Y, const VectorXd& Y0) {
  require(Y.rows() == Y.cols() && Y.rows() == Y0.size(), Err::ConfigError,
          "profile matrix must be n x n with an n-vector baseline");
  return Y - VectorXd::Ones(Y.rows()) * Y0.transpose();
}

}  // namespace

void TransientTrace::validate(int n_cores) const {
  require(!t.empty(), Err::ConfigError, "trace has no samples");
  require(temps.size() == t.size(), Err::ConfigError, "trace temps/t length mismatch");
  require(activity.size() == t.size(), Err::ConfigError,
          "trace activity/t length mismatch");
  for (size_t k = 0; k < t.size(); ++k) {
    require(k == 0 || t[k] > t[k - 1], Err::ConfigError, "trace times must increase");
    require(temps[k].size() == n_cores, Err::ConfigError, "trace sample width mismatch");
    require(temps[k].allFinite(), Err::ConfigError, "trace temps must be finite");
  }
}

VectorXd smooth_steady(const TransientTrace& trace, int window) {
  require(window >= 1, Err::ConfigError, "window must be positive");
  require(!trace.temps.empty(), Err::ConfigError, "trace has no samples");
  const int n = static_cast<int>(trace.temps.front().size());
  trace.validate(n);
  if (static_cast<int>(trace.temps.size()) < window)
    fail(Err::TooShort, "trace shorter than the averaging window");
  VectorXd acc = VectorXd::Zero(n);
  for (size_t k = trace.temps.size() - window; k < trace.temps.size(); ++k)
    acc += trace.temps[k];
  return acc / window;
}

ProfileMatrix build_Y_onehot(const std::vector<SteadyProfile>& profiles,
                             const SteadyProfile& idle) {
  const int n = static_cast<int>(idle.temps.size());
  require(n >= 1, Err::ConfigError, "idle profile is empty");
  require(idle.mask == 0, Err::ConfigError, "baseline profile must be all-idle");
  ProfileMatrix out;
  out.Y.setZero(n, n);
  out.Y0 = idle.temps;
  out.freq_hz = idle.freq_hz;
  std::vector<bool> seen(n, false);
  for (const auto& p : profiles) {
    require(popcount(p.mask) == 1, Err::ConfigError,
            "one-hot build takes single-core profiles only");
    require(p.temps.size() == n, Err::ConfigError, "profile width mismatch");
    require(p.freq_hz == idle.freq_hz, Err::ConfigError,
            "profiles span multiple frequencies");
    int core = 0;
    while (!(p.mask & (Mask{1} << core))) ++core;
    require(core < n, Err::ConfigError, "profile mask addresses a core out of range");
    if (seen[core]) fail(Err::DuplicateMask, "two profiles for core " + std::to_string(core));
    seen[core] = true;
    out.Y.row(core) = p.temps.transpose();
  }
  for (int i = 0; i < n; ++i)
    if (!seen[i]) fail(Err::MissingProfile, "no profile for core " + std::to_string(i));
  return out;
}

ProfileMatrix build_Y_ensemble(const std::vector<SteadyProfile>& profiles,
                               const SteadyProfile& idle) {
  const int n = static_cast<int>(idle.temps.size());
  require(n >= 1, Err::ConfigError, "idle profile is empty");
  require(idle.mask == 0, Err::ConfigError, "baseline profile must be all-idle");
  const int m = static_cast<int>(profiles.size());
  if (m < n) fail(Err::RankDeficient, "fewer profiles than cores");
  MatrixXd D(m, n), U(m, n);
  for (int k = 0; k < m; ++k) {
    const auto& p = profiles[k];
    require(p.mask != 0 && p.mask < (Mask{1} << n), Err::ConfigError,
            "profile mask must name at least one in-range core");
    require(p.temps.size() == n, Err::ConfigError, "profile width mismatch");
    require(p.freq_hz == idle.freq_hz, Err::ConfigError,
            "profiles span multiple frequencies");
    for (int j = 0; j < n; ++j) D(k, j) = (p.mask >> j) & 1u ? 1.0 : 0.0;
    U.row(k) = p.temps.transpose();
  }
  const MatrixXd G = D.transpose() * D;
  Eigen::FullPivLU<MatrixXd> lu(G);
  if (lu.rank() < n) fail(Err::RankDeficient, "profile masks do not span all cores");
  const MatrixXd rhs = U - VectorXd::Ones(m) * idle.temps.transpose();
  ProfileMatrix out;
  out.Y = lu.solve(D.transpose() * rhs) + VectorXd::Ones(n) * idle.temps.transpose();
  out.Y0 = idle.temps;
  out.freq_hz = idle.freq_hz;
  return out;
}

AnomalyReport detect_anomaly(const std::vector<SteadyProfile>& profiles,
                             double quant_step) {
  AnomalyReport rep;
  if (profiles.empty()) return rep;
  const int n = static_cast<int>(profiles.front().temps.size());
  std::map<Mask, const SteadyProfile*> by_mask;
  int max_bit = 0;
  for (const auto& p : profiles) {
    require(p.temps.size() == n, Err::ConfigError, "profile width mismatch");
    by_mask.emplace(p.mask, &p);  // first occurrence wins
    for (int b = 0; b < 32; ++b)
      if (p.mask >> b & 1u) max_bit = std::max(max_bit, b + 1);
  }
  const double threshold = 2.0 * quant_step * n;

  // A 2-face of the activity hypercube with all four corners measured obeys
  // X_{Z|a|b} - X_{Z|a} - X_{Z|b} + X_Z = 0 by superposition.
  std::set<Mask> in_bad, in_good;
  for (int a = 0; a < max_bit; ++a)
    for (int b = a + 1; b < max_bit; ++b) {
      const Mask ba = Mask{1} << a, bb = Mask{1} << b;
      for (const auto& [z, pz] : by_mask) {
        if (z & (ba | bb)) continue;
        auto pa = by_mask.find(z | ba);
        auto pb = by_mask.find(z | bb);
        auto pab = by_mask.find(z | ba | bb);
        if (pa == by_mask.end() || pb == by_mask.end() || pab == by_mask.end()) continue;
        ++rep.identities_checked;
        const double resid = (pab->second->temps - pa->second->temps -
                              pb->second->temps + pz->temps)
                                 .lpNorm<1>();
        auto& bucket = resid > threshold ? in_bad : in_good;
        bucket.insert(z);
        bucket.insert(z | ba);
        bucket.insert(z | bb);
        bucket.insert(z | ba | bb);
        if (resid > threshold) rep.clean = false;
      }
    }
  if (rep.clean) return rep;

  // The faulty profile sits on every inconsistent face and no consistent one.
  // The all-idle baseline is trusted by construction.
  std::vector<Mask> candidates;
  for (Mask z : in_bad)
    if (z != 0 && !in_good.count(z)) candidates.push_back(z);
  // in_bad is the union; keep only masks on *every* inconsistent face. Redo the
  // face scan restricted to inconsistent ones to count appearances.
  std::map<Mask, int> bad_count;
  int bad_faces = 0;
  for (int a = 0; a < max_bit; ++a)
    for (int b = a + 1; b < max_bit; ++b) {
      const Mask ba = Mask{1} << a, bb = Mask{1} << b;
      for (const auto& [z, pz] : by_mask) {
        if (z & (ba | bb)) continue;
        auto pa = by_mask.find(z | ba);
        auto pb = by_mask.find(z | bb);
        auto pab = by_mask.find(z | ba | bb);
        if (pa == by_mask.end() || pb == by_mask.end() || pab == by_mask.end()) continue;
        const double resid = (pab->second->temps - pa->second->temps -
                              pb->second->temps + pz->temps)
                                 .lpNorm<1>();
        if (resid <= threshold) continue;
        ++bad_faces;
        for (Mask c : {z, z | ba, z | bb, z | ba | bb}) ++bad_count[c];
      }
    }
  std::vector<Mask> located;
  for (Mask z : candidates)
    if (bad_count[z] == bad_faces) located.push_back(z);
  if (located.size() == 1) {
    rep.faulty.push_back(by_mask.at(located.front())->label);
  } else {
    const auto& pool = located.empty() ? candidates : located;
    for (Mask z : pool) rep.suspects.push_back(by_mask.at(z)->label);
  }
  return rep;
}

MatrixXd invert_Atilde(const MatrixXd& Y, const VectorXd& Y0) {
  const MatrixXd R = response_matrix(Y, Y0);
  Eigen::FullPivLU<MatrixXd> lu(R);
  if (!lu.isInvertible()) fail(Err::Singular, "steady response matrix is singular");
  return lu.inverse();
}

Floorplan estimate_floorplan(const MatrixXd& Y, const VectorXd& Y0, double margin,
                             const VectorXd& ip_temps) {
  const int n = static_cast<int>(Y.rows());
  require(Y.cols() == n && Y0.size() == n, Err::ConfigError, "Y must be square");
  require(n >= 2, Err::ConfigError, "floorplan needs at least two cores");
  require(margin >= 0.0, Err::ConfigError, "margin must be nonnegative");

  // Directed closeness: how little of the source's own rise core j loses.
  // Undirected weight keeps the smaller of the two directions.
  MatrixXd w = MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i != j) w(i, j) = Y(i, i) - Y(i, j);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      const double m = std::min(w(i, j), w(j, i));
      w(i, j) = w(j, i) = m;
    }

  Floorplan fp;
  fp.adj.assign(n, {});
  std::vector<std::set<int>> nb(n);
  for (int i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j)
      if (j != i) best = std::min(best, w(i, j));
    for (int j = 0; j < n; ++j)
      if (j != i && w(i, j) <= best + margin) {
        nb[i].insert(j);
        nb[j].insert(i);
      }
  }
  for (int i = 0; i < n; ++i) fp.adj[i].assign(nb[i].begin(), nb[i].end());

  if (ip_temps.size() > 0) {
    require(ip_temps.size() == n + 1, Err::ConfigError,
            "ip column must hold one reading per profile plus the idle reading");
    // The extra sensor has its own baseline, so compare rises, not raw temps.
    VectorXd wip(n);
    for (int i = 0; i < n; ++i)
      wip(i) = (Y(i, i) - Y0(i)) - (ip_temps(i) - ip_temps(n));
    const double best = wip.minCoeff();
    for (int i = 0; i < n; ++i)
      if (wip(i) <= best + margin) fp.ip_neighbors.push_back(i);
  }
  return fp;
}

void Template::validate() const {
  const int m = n();
  require(m >= 1 && groups.cols() == m, Err::ConfigError, "template must be square");
  std::map<int, int> kind;  // group id -> 0 diag, 1 offdiag
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      require(groups(i, j) == groups(j, i), Err::ConfigError,
              "template groups must be symmetric");
      const int g = groups(i, j);
      if (i == j) require(g >= 0, Err::ConfigError, "diagonal entries cannot be zeroed");
      if (g < 0) continue;
      const int k = i == j ? 0 : 1;
      auto [it, fresh] = kind.emplace(g, k);
      require(fresh || it->second == k, Err::ConfigError,
              "a group cannot span diagonal and off-diagonal entries");
    }
}

Template Template::dense(int n) {
  Template t;
  t.groups.setConstant(n, n, -1);
  int next = 0;
  for (int i = 0; i < n; ++i) t.groups(i, i) = next++;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) t.groups(i, j) = t.groups(j, i) = next++;
  return t;
}

Template Template::from_floorplan(const std::vector<std::vector<int>>& adj,
                                  bool shared_offdiag) {
  const int n = static_cast<int>(adj.size());
  Template t;
  t.groups.setConstant(n, n, -1);
  for (int i = 0; i < n; ++i) t.groups(i, i) = i;
  int next = n;
  for (int i = 0; i < n; ++i)
    for (int j : adj[i]) {
      require(j >= 0 && j < n && j != i, Err::ConfigError, "bad adjacency entry");
      if (j < i) continue;
      t.groups(i, j) = t.groups(j, i) = shared_offdiag ? n : next++;
    }
  return t;
}

namespace {

// Compact view of a template: parameter index per entry plus the sign each
// group carries (diagonal groups positive, off-diagonal negative).
struct GroupIndex {
  Eigen::MatrixXi idx;
  std::vector<double> sign;
  int count = 0;
};

GroupIndex index_groups(const Template& tmpl) {
  tmpl.validate();
  const int n = tmpl.n();
  GroupIndex gi;
  gi.idx.setConstant(n, n, -1);
  // Compact indices follow ascending group id, so params keep the caller's
  // numbering (e.g. from_floorplan puts diagonals first).
  std::map<int, int> remap;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (tmpl.groups(i, j) >= 0) remap.emplace(tmpl.groups(i, j), 0);
  gi.sign.assign(remap.size(), 0.0);
  for (auto& [g, slot] : remap) slot = gi.count++;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const int g = tmpl.groups(i, j);
      if (g < 0) continue;
      gi.idx(i, j) = remap.at(g);
      gi.sign[remap.at(g)] = i == j ? 1.0 : -1.0;
    }
  return gi;
}

MatrixXd assemble(const GroupIndex& gi, const VectorXd& vals) {
  const int n = gi.idx.rows();
  MatrixXd T = MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (gi.idx(i, j) >= 0) T(i, j) = vals(gi.idx(i, j));
  return T;
}

// Group means of the raw inversion of the base response, clamped to the sign
// the template demands. A clean dataset makes this the optimum already.
VectorXd init_values(const GroupIndex& gi, const MatrixXd& R_base) {
  const int n = gi.idx.rows();
  VectorXd sum = VectorXd::Zero(gi.count);
  VectorXd cnt = VectorXd::Zero(gi.count);
  Eigen::FullPivLU<MatrixXd> lu(R_base);
  MatrixXd raw;
  if (lu.isInvertible()) {
    raw = lu.inverse();
  } else {
    raw = MatrixXd::Constant(n, n, -0.1);
    raw.diagonal().setConstant(1.0);
  }
  double scale = 0.0;
  for (int i = 0; i < n; ++i) scale = std::max(scale, std::abs(raw(i, i)));
  if (scale <= 0.0) scale = 1.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (gi.idx(i, j) >= 0) {
        sum(gi.idx(i, j)) += raw(i, j);
        cnt(gi.idx(i, j)) += 1.0;
      }
  VectorXd vals(gi.count);
  const double floor = 1e-6 * scale;
  for (int k = 0; k < gi.count; ++k) {
    const double mean = sum(k) / cnt(k);
    vals(k) = gi.sign[k] > 0 ? std::max(mean, floor) : std::min(mean, -floor);
  }
  return vals;
}

struct DescentResult {
  VectorXd vals;    // signed parameter values
  VectorXd scales;  // per dataset, scales(0) == 1
  double cost = 0.0;
  int iters = 0;
  bool converged = false;
};

// argmin over log-parameters of sum_f ||T^-1 - s_f R_f||_F^2, plain gradient
// descent with Armijo backtracking. The exponential transform keeps every
// entry on its template sign for the whole trajectory.
DescentResult descend(const GroupIndex& gi, const std::vector<MatrixXd>& Rs,
                      const FitOptions& opts) {
  const int F = static_cast<int>(Rs.size());
  const int r = gi.count;
  const int dim = r + (F - 1);

  const VectorXd v0 = init_values(gi, Rs[0]);
  VectorXd x(dim);
  for (int k = 0; k < r; ++k) x(k) = std::log(std::abs(v0(k)));
  for (int f = 1; f < F; ++f) {
    const double num = (Rs[f].array() * Rs[0].array()).sum();
    const double den = (Rs[f].array() * Rs[f].array()).sum();
    x(r + f - 1) = std::log(std::max(num / den, 1e-12));
  }

  const auto unpack = [&](const VectorXd& xx, VectorXd& vals, VectorXd& scales) {
    vals.resize(r);
    for (int k = 0; k < r; ++k) vals(k) = gi.sign[k] * std::exp(xx(k));
    scales.setOnes(F);
    for (int f = 1; f < F; ++f) scales(f) = std::exp(xx(r + f - 1));
  };

  const double bad = std::numeric_limits<double>::infinity();
  const auto cost_at = [&](const VectorXd& xx, MatrixXd* Tinv_out) -> double {
    VectorXd vals, scales;
    unpack(xx, vals, scales);
    const MatrixXd T = assemble(gi, vals);
    Eigen::FullPivLU<MatrixXd> lu(T);
    if (!lu.isInvertible()) return bad;
    const MatrixXd Tinv = lu.inverse();
    if (Tinv_out) *Tinv_out = Tinv;
    double c = 0.0;
    for (int f = 0; f < F; ++f) c += (Tinv - scales(f) * Rs[f]).squaredNorm();
    return c;
  };

  DescentResult out;
  MatrixXd Tinv;
  double cost = cost_at(x, &Tinv);
  if (!std::isfinite(cost)) {
    // Degenerate start: nudge toward a dominant diagonal and retry once.
    for (int k = 0; k < r; ++k)
      if (gi.sign[k] < 0) x(k) -= 2.0;
    cost = cost_at(x, &Tinv);
    require(std::isfinite(cost), Err::Singular, "template admits no invertible start");
  }

  double step = 1.0;
  int it = 0;
  for (; it < opts.max_iters; ++it) {
    VectorXd vals, scales;
    unpack(x, vals, scales);
    // d cost / d T = -T^-T (2 sum_f G_f) T^-T with G_f = T^-1 - s_f R_f.
    MatrixXd Gsum = MatrixXd::Zero(Tinv.rows(), Tinv.cols());
    for (int f = 0; f < F; ++f) Gsum += Tinv - scales(f) * Rs[f];
    const MatrixXd dT = -2.0 * Tinv.transpose() * Gsum * Tinv.transpose();
    VectorXd grad = VectorXd::Zero(dim);
    for (int i = 0; i < gi.idx.rows(); ++i)
      for (int j = 0; j < gi.idx.cols(); ++j)
        if (gi.idx(i, j) >= 0) grad(gi.idx(i, j)) += dT(i, j) * vals(gi.idx(i, j));
    for (int f = 1; f < F; ++f)
      grad(r + f - 1) =
          -2.0 * (Rs[f].array() * (Tinv - scales(f) * Rs[f]).array()).sum() * scales(f);

    const double gnorm2 = grad.squaredNorm();
    if (gnorm2 <= 1e-30 * (1.0 + cost * cost)) {
      out.converged = true;
      break;
    }
    double trial_step = std::min(step * 2.0, 1.0);
    double new_cost = bad;
    VectorXd xn;
    MatrixXd Tinv_n;
    bool accepted = false;
    for (int h = 0; h < 60; ++h) {
      xn = x - trial_step * grad;
      new_cost = cost_at(xn, &Tinv_n);
      if (new_cost <= cost - 1e-4 * trial_step * gnorm2) {
        accepted = true;
        break;
      }
      trial_step *= 0.5;
    }
    if (!accepted) {
      out.converged = true;  // no descent direction left at machine precision
      break;
    }
    const double drop = cost - new_cost;
    x = xn;
    Tinv = Tinv_n;
    cost = new_cost;
    step = trial_step;
    if (drop <= opts.rel_tol * std::max(cost, 1e-300)) {
      ++it;
      out.converged = true;
      break;
    }
  }
  unpack(x, out.vals, out.scales);
  out.cost = cost;
  out.iters = it;
  return out;
}

}  // namespace

TemplateFit fit_template(const MatrixXd& Y, const VectorXd& Y0, const Template& tmpl,
                         const FitOptions& opts) {
  const GroupIndex gi = index_groups(tmpl);
  require(tmpl.n() == Y.rows(), Err::ConfigError, "template size mismatch");
  const DescentResult d = descend(gi, {response_matrix(Y, Y0)}, opts);
  TemplateFit fit;
  fit.A_tilde = assemble(gi, d.vals);
  fit.params = d.vals;
  fit.cost = d.cost;
  fit.iters = d.iters;
  fit.converged = d.converged;
  return fit;
}

MultiFreqFit fit_multifreq(const std::vector<ProfileMatrix>& sets, const Template& tmpl,
                           const FitOptions& opts) {
  require(!sets.empty(), Err::ConfigError, "no datasets");
  const GroupIndex gi = index_groups(tmpl);
  std::vector<MatrixXd> Rs;
  for (const auto& s : sets) {
    require(s.Y.rows() == tmpl.n(), Err::ConfigError, "dataset size mismatch");
    Rs.push_back(response_matrix(s.Y, s.Y0));
  }
  const DescentResult d = descend(gi, Rs, opts);
  MultiFreqFit fit;
  fit.A_tilde_base = assemble(gi, d.vals);
  fit.base_freq = sets[0].freq_hz;
  fit.params = d.vals;
  fit.cost = d.cost;
  fit.iters = d.iters;
  fit.converged = d.converged;
  for (size_t f = 0; f < sets.size(); ++f) fit.scale_by_freq[sets[f].freq_hz] = d.scales(f);
  if (opts.monotone_scales) {
    // Clamp in ascending frequency; the base stays pinned at 1.
    double run = std::numeric_limits<double>::infinity();
    for (auto& [f, s] : fit.scale_by_freq) {
      if (f != fit.base_freq) s = std::min(s, run);
      run = s;
    }
  }
  return fit;
}

void atilde_modes(const MatrixXd& A_tilde, MatrixXd& V, VectorXd& lambda) {
  require(A_tilde.rows() == A_tilde.cols() && A_tilde.rows() >= 1, Err::ConfigError,
          "conduction matrix must be square");
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(0.5 * (A_tilde + A_tilde.transpose()));
  require(es.info() == Eigen::Success, Err::ComplexEigen, "eigendecomposition failed");
  V = es.eigenvectors();
  lambda = es.eigenvalues();
}

namespace {

// chip + V e^{-g*lambda*dt} V^T (x0 - chip) + Atilde^-1 (I - e^{...}) H, all in
// the eigenbasis: lambda must be positive for the forced term.
VectorXd mode_predict(const MatrixXd& V, const VectorXd& lambda, const VectorXd& chip,
                      const VectorXd& w0, const VectorXd& h, double g, double dt) {
  VectorXd y(lambda.size());
  for (int i = 0; i < lambda.size(); ++i) {
    const double e = std::exp(-g * lambda(i) * dt);
    y(i) = e * w0(i) + (1.0 - e) / lambda(i) * h(i);
  }
  return chip + V * y;
}

}  // namespace

GammaFit fit_gamma(const TransientTrace& trace, const MatrixXd& V, const VectorXd& lambda,
                   const VectorXd& chip_offset, const GammaOptions& opts) {
  const int n = static_cast<int>(V.rows());
  require(V.cols() == n && lambda.size() == n && chip_offset.size() == n,
          Err::ConfigError, "mode shapes, rates and offsets must agree");
  require(lambda.minCoeff() > 0.0, Err::ConfigError,
          "conduction matrix must be positive definite");
  trace.validate(n);
  for (size_t k = 1; k < trace.activity.size(); ++k)
    require(trace.activity[k] == trace.activity[0], Err::ConfigError,
            "activity must stay constant over the fitted trace");

  double range = 0.0;
  for (const auto& s : trace.temps)
    range = std::max(range, (s - trace.temps.back()).lpNorm<Eigen::Infinity>());
  if (range < opts.flat_range)
    fail(Err::FlatTrace, "trace carries no transient signal");

  VectorXd H = VectorXd::Zero(n);
  for (int i = 0; i < n; ++i)
    if (trace.activity[0] >> i & 1u) H(i) = 1.0;
  const VectorXd w0 = V.transpose() * (trace.temps[0] - chip_offset);
  const VectorXd h = V.transpose() * H;
  const double t0 = trace.t[0];

  const auto residual = [&](double g) {
    double acc = 0.0;
    for (size_t k = 1; k < trace.t.size(); ++k)
      acc += (mode_predict(V, lambda, chip_offset, w0, h, g, trace.t[k] - t0) -
              trace.temps[k])
                 .squaredNorm();
    return acc;
  };

  // Coarse log-grid scan, then golden-section refinement on the best bracket.
  const double llo = std::log(opts.lo), lhi = std::log(opts.hi);
  const int coarse = 160;
  int best = 0;
  double best_res = std::numeric_limits<double>::infinity();
  for (int k = 0; k <= coarse; ++k) {
    const double r = residual(std::exp(llo + (lhi - llo) * k / coarse));
    if (r < best_res) {
      best_res = r;
      best = k;
    }
  }
  double a = llo + (lhi - llo) * std::max(best - 1, 0) / coarse;
  double b = llo + (lhi - llo) * std::min(best + 1, coarse) / coarse;
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - gr * (b - a), d = a + gr * (b - a);
  double fc = residual(std::exp(c)), fd = residual(std::exp(d));
  for (int k = 0; k < 200 && b - a > 1e-14; ++k) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - gr * (b - a);
      fc = residual(std::exp(c));
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + gr * (b - a);
      fd = residual(std::exp(d));
    }
  }
  GammaFit out;
  out.gamma = std::exp((a + b) / 2.0);
  const size_t terms = (trace.t.size() - 1) * n;
  out.rmse = std::sqrt(residual(out.gamma) / std::max<size_t>(terms, 1));
  return out;
}

VectorXd predict_temperature(const EstimationResult& result, Mask activity,
                             const VectorXd& theta0, double t0, double t, double freq) {
  const int n = static_cast<int>(result.A_tilde_base.rows());
  require(n >= 1, Err::ConfigError, "empty estimation result");
  require(t >= t0, Err::ConfigError, "prediction time precedes the start");
  require(result.gamma_base > 0.0, Err::ConfigError, "gamma has not been calibrated");
  auto sit = result.scale_by_freq.find(freq);
  if (sit == result.scale_by_freq.end())
    fail(Err::UnknownFrequency, "no scale fitted for this frequency");
  auto cit = result.chip_by_freq.find(freq);
  if (cit == result.chip_by_freq.end())
    fail(Err::UnknownFrequency, "no idle profile for this frequency");
  const double s = sit->second;
  const VectorXd& chip = cit->second;
  require(chip.size() == n, Err::ConfigError, "chip offset width mismatch");
  require(activity < (Mask{1} << n), Err::ConfigError, "activity mask out of range");

  MatrixXd V;
  VectorXd lam;
  atilde_modes(result.A_tilde_base, V, lam);
  require(lam.minCoeff() > 0.0, Err::ConfigError,
          "estimated conduction matrix must be positive definite");

  VectorXd H = VectorXd::Zero(n);
  for (int i = 0; i < n; ++i)
    if (activity >> i & 1u) H(i) = 1.0;
  const VectorXd x0 = theta0.size() ? theta0 : chip;
  require(x0.size() == n, Err::ConfigError, "initial temps width mismatch");

  // A = -gamma_f Atilde_f = -gamma_base Atilde_base; the forced term carries
  // the per-frequency 1/s through Atilde_f^-1.
  const VectorXd w0 = V.transpose() * (x0 - chip);
  const VectorXd h = V.transpose() * H / s;
  return mode_predict(V, lam, chip, w0, h, result.gamma_base, t - t0);
}

std::map<double, double> relative_power(const std::map<double, double>& scale_by_freq,
                                        double base_freq) {
  auto bit = scale_by_freq.find(base_freq);
  require(bit != scale_by_freq.end(), Err::ConfigError, "base frequency not present");
  require(bit->second > 0.0, Err::ConfigError, "scales must be positive");
  std::map<double, double> out;
  for (const auto& [f, s] : scale_by_freq) {
    require(s > 0.0, Err::ConfigError, "scales must be positive");
    out[f] = bit->second / s;
  }
  out[base_freq] = 1.0;
  return out;
}

}  // namespace thermo::est
