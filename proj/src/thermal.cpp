#include "thermo/thermal.hpp"

#include <algorithm>
#include <cmath>

namespace thermo::core {

namespace {

constexpr double kPi = 3.14159265358979323846;

}  // namespace

ScalarThermalParams ScalarThermalParams::single(double alpha, double beta, double b) {
  ScalarThermalParams p;
  p.alpha = alpha;
  p.beta = beta;
  p.lambda = 1.0;
  p.b = b;
  p.validate();
  return p;
}

ScalarThermalParams ScalarThermalParams::conducted(double alpha, double beta,
                                                   MatrixXd gamma, double b) {
  ScalarThermalParams p;
  p.alpha = alpha;
  p.beta = beta;
  p.gamma = std::move(gamma);
  p.b = b;
  double lam = 1.0;
  for (Eigen::Index i = 0; i < p.gamma.rows(); ++i)
    lam = std::max(lam, 1.0 + p.gamma.row(i).sum() - p.gamma(i, i));
  p.lambda = lam;
  p.validate();
  return p;
}

void ScalarThermalParams::validate() const {
  require(alpha > 0.0, Err::ConfigError, "alpha must be > 0");
  require(beta < 0.0, Err::ConfigError, "beta must be < 0");
  require(lambda >= 1.0, Err::ConfigError, "lambda must be >= 1");
  require(b >= 0.0, Err::ConfigError, "b must be >= 0");
  if (gamma.size() > 0) {
    require(gamma.rows() == gamma.cols(), Err::ConfigError, "gamma must be square");
    for (Eigen::Index i = 0; i < gamma.rows(); ++i) {
      require(gamma(i, i) == 0.0, Err::ConfigError, "gamma diagonal must be zero");
      for (Eigen::Index j = 0; j < gamma.cols(); ++j) {
        require(gamma(i, j) >= 0.0, Err::ConfigError, "gamma must be nonnegative");
        require(std::abs(gamma(i, j) - gamma(j, i)) <= 1e-12,
                Err::ConfigError, "gamma must be symmetric");
      }
    }
  }
}

void PeriodicPowerSignal::validate() const {
  require(util >= 0.0 && util <= 1.0, Err::ConfigError, "util must be in [0,1]");
  require(period > 0.0, Err::ConfigError, "period must be > 0");
  require(p_static >= 0.0 && p_dynamic >= 0.0, Err::ConfigError, "powers must be >= 0");
  require(offset >= 0.0, Err::ConfigError, "offset must be >= 0");
}

bool PeriodicPowerSignal::active_at(double t) const {
  if (util >= 1.0) return true;
  if (util <= 0.0) return false;
  double x = std::fmod(t - offset, period);
  if (x < 0.0) x += period;
  return x < util * period;
}

double PeriodicPowerSignal::power_at(double t) const {
  return p_static + (active_at(t) ? p_dynamic : 0.0);
}

double temp_const_power(double theta0, double dt, const ScalarThermalParams& p) {
  require(dt >= 0.0, Err::ConfigError, "dt must be >= 0");
  return p.alpha + (theta0 - p.alpha) * std::exp(p.beta * dt);
}

double temp_cooling(double theta0, double dt, double beta) {
  require(dt >= 0.0, Err::ConfigError, "dt must be >= 0");
  require(beta < 0.0, Err::ConfigError, "beta must be < 0");
  return theta0 * std::exp(beta * dt);
}

double fourier_S(double beta, double p_dyn, double util, double period, double offset,
                 double t, SeriesTruncation trunc) {
  require(trunc.terms >= 1, Err::ConfigError, "truncation must keep >= 1 terms");
  if (util <= 0.0 || util >= 1.0 || p_dyn == 0.0) return 0.0;
  const double T = period;
  // Pulse center: the duty window [offset, offset + util*T) is symmetric about psi.
  const double psi = util * T / 2.0 + offset;
  double x = std::fmod(t - psi, T);
  if (x < 0.0) x += T;
  const double Tb = T * beta;
  double sum = 0.0;
  for (int k = 1; k <= trunc.terms; ++k) {
    const double kpi = k * kPi;
    const double w = 2.0 * kpi / T;       // harmonic angular frequency
    const double ang = w * x;
    const double coef = 2.0 * p_dyn * T * std::sin(util * kpi) /
                        (kpi * (Tb * Tb + 4.0 * kpi * kpi));
    sum += coef * (-Tb * std::cos(ang) + 2.0 * kpi * std::sin(ang));
  }
  return sum;
}

double temp_transient_single(double theta0, double t0, double t,
                             const ScalarThermalParams& p, const PeriodicPowerSignal& sig,
                             SeriesTruncation trunc) {
  require(t >= t0, Err::ConfigError, "t must be >= t0");
  require(p.b > 0.0, Err::ConfigError, "input coefficient b is required");
  sig.validate();
  const double decay = std::exp(p.beta * (t - t0));
  const double mean_rise = -(p.b / p.beta) * sig.mean_power();
  const double s_t = fourier_S(p.beta, sig.p_dynamic, sig.util, sig.period, sig.offset,
                               t, trunc);
  const double s_t0 = fourier_S(p.beta, sig.p_dynamic, sig.util, sig.period, sig.offset,
                                t0, trunc);
  return theta0 * decay + mean_rise * (1.0 - decay) + p.b * (s_t - s_t0 * decay);
}

SteadyBand steady_band_single(const ScalarThermalParams& p, const PeriodicPowerSignal& sig,
                              SeriesTruncation /*trunc*/) {
  require(p.b > 0.0, Err::ConfigError, "input coefficient b is required");
  sig.validate();
  const double gain = -(p.b / p.beta);
  SteadyBand band;
  band.theta_avg = gain * sig.mean_power();
  // Peak at the end of the duty window, valley at its start, from the exact
  // two-phase steady cycle.
  const double uT = sig.util * sig.period;
  const double ratio = (sig.util >= 1.0)
                           ? 1.0
                           : std::expm1(p.beta * uT) / std::expm1(p.beta * sig.period);
  band.theta_max = gain * (sig.p_static + sig.p_dynamic * ratio);
  band.theta_min =
      gain * (sig.p_static +
              sig.p_dynamic * std::exp(p.beta * (sig.period - uT)) * ratio);
  return band;
}

double max_ambient_for_util(double theta_max_abs, double util, double period,
                            const ScalarThermalParams& p, double p_static,
                            double p_dynamic) {
  require(util >= 0.0 && util <= 1.0, Err::ConfigError, "util must be in [0,1]");
  require(period > 0.0, Err::ConfigError, "period must be > 0");
  require(p.b > 0.0, Err::ConfigError, "input coefficient b is required");
  const double gain = -(p.b / p.beta);
  const double ratio =
      (util >= 1.0) ? 1.0 : std::expm1(p.beta * util * period) / std::expm1(p.beta * period);
  const double peak_rise = gain * (p_static + p_dynamic * ratio);
  return theta_max_abs - peak_rise;
}

double max_util_for_ambient(double theta_max_abs, double ambient, double period,
                            const ScalarThermalParams& p, double p_static,
                            double p_dynamic) {
  require(period > 0.0, Err::ConfigError, "period must be > 0");
  require(p.b > 0.0, Err::ConfigError, "input coefficient b is required");
  const double gain = -(p.b / p.beta);
  const double target_rise = theta_max_abs - ambient;
  const double idle_rise = gain * p_static;
  if (target_rise < idle_rise - 1e-12)
    fail(Err::InfeasibleAmbient, "static power alone exceeds the temperature cap");
  if (p_dynamic <= 0.0) return 1.0;
  const double full_rise = gain * (p_static + p_dynamic);
  if (target_rise >= full_rise) return 1.0;
  // Invert the steady-peak relation for the duty-window length.
  const double x = (target_rise - idle_rise) / (gain * p_dynamic);
  const double u = std::log1p(x * std::expm1(p.beta * period)) / (p.beta * period);
  return std::clamp(u, 0.0, 1.0);
}

double shifting_time(double theta0, const PeriodicPowerSignal& target,
                     const ScalarThermalParams& p, SeriesTruncation trunc) {
  require(p.b > 0.0, Err::ConfigError, "input coefficient b is required");
  target.validate();
  const double mean_rise = -(p.b / p.beta) * target.mean_power();
  if (std::abs(mean_rise) <= 0.0)
    fail(Err::DegenerateTarget, "target steady average is zero");
  const double s0 = fourier_S(p.beta, target.p_dynamic, target.util, target.period,
                              target.offset, 0.0, trunc);
  const double gap = std::abs(theta0 - mean_rise - p.b * s0);
  const double band = 0.01 * std::abs(mean_rise);
  if (gap <= band) return 0.0;
  return std::log(band / gap) / p.beta;
}

MatrixThermalParams MatrixThermalParams::make(MatrixXd A, VectorXd Bdiag,
                                              VectorXd chip_offset) {
  MatrixThermalParams mp;
  const auto n = A.rows();
  require(n > 0 && A.cols() == n, Err::ConfigError, "A must be square and nonempty");
  require(Bdiag.size() == n, Err::ConfigError, "B diagonal size must match A");
  for (Eigen::Index i = 0; i < n; ++i)
    require(Bdiag(i) > 0.0, Err::ConfigError, "B diagonal entries must be > 0");
  if (chip_offset.size() == 0) chip_offset = VectorXd::Zero(n);
  require(chip_offset.size() == n, Err::ConfigError, "chip_offset size must match A");

  Eigen::EigenSolver<MatrixXd> es(A);
  require(es.info() == Eigen::Success, Err::ConfigError, "eigendecomposition failed");
  const double imag_tol = 1e-8 * A.norm();
  Eigen::VectorXcd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(ev(i).imag()) > imag_tol)
      fail(Err::ComplexEigen, "eigenvalue imaginary part above tolerance");
  }
  std::vector<Eigen::Index> order(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<size_t>(i)] = i;
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return ev(a).real() > ev(b).real();
  });
  mp.D = VectorXd(n);
  mp.V = MatrixXd(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    mp.D(i) = ev(order[static_cast<size_t>(i)]).real();
    mp.V.col(i) = es.eigenvectors().col(order[static_cast<size_t>(i)]).real();
  }
  for (Eigen::Index i = 0; i < n; ++i)
    require(mp.D(i) < 0.0, Err::ConfigError, "model must be stable (eigenvalues < 0)");
  Eigen::FullPivLU<MatrixXd> lu(mp.V);
  require(lu.isInvertible(), Err::ConfigError, "eigenvector basis is defective");
  mp.Vinv = lu.inverse();
  mp.A = std::move(A);
  mp.Bdiag = std::move(Bdiag);
  mp.chip_offset = std::move(chip_offset);
  return mp;
}

MatrixXd MatrixThermalParams::exp_at(double dt) const {
  return V * (D * dt).array().exp().matrix().asDiagonal() * Vinv;
}

VectorXd temp_multicore(const VectorXd& theta0, double t0, double t,
                        const MatrixThermalParams& mp,
                        const std::vector<PeriodicPowerSignal>& sigs,
                        SeriesTruncation trunc) {
  const int n = mp.n();
  require(theta0.size() == n, Err::ConfigError, "theta0 size must match model");
  require(static_cast<int>(sigs.size()) == n, Err::ConfigError,
          "one signal per node is required");
  require(t >= t0, Err::ConfigError, "t must be >= t0");
  for (const auto& s : sigs) s.validate();

  Eigen::FullPivLU<MatrixXd> lu(mp.A);
  if (!lu.isInvertible()) fail(Err::SingularA, "A is not invertible");

  const double dt = t - t0;
  const MatrixXd E = mp.exp_at(dt);
  VectorXd p_inf(n);
  for (int j = 0; j < n; ++j) p_inf(j) = sigs[j].mean_power();
  const VectorXd w = mp.Bdiag.cwiseProduct(p_inf);
  const VectorXd const_part = E * theta0 - lu.solve((MatrixXd::Identity(n, n) - E) * w);

  MatrixXd s_t(n, n), s_t0(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const auto& sg = sigs[static_cast<size_t>(j)];
      s_t(i, j) = fourier_S(mp.D(i), sg.p_dynamic, sg.util, sg.period, sg.offset, t, trunc);
      s_t0(i, j) =
          fourier_S(mp.D(i), sg.p_dynamic, sg.util, sg.period, sg.offset, t0, trunc);
    }
  }
  const Eigen::ArrayXd decay = (mp.D * dt).array().exp();
  const MatrixXd inner = mp.Vinv.cwiseProduct(s_t) -
                         decay.matrix().asDiagonal() * mp.Vinv.cwiseProduct(s_t0);
  return const_part + mp.V * (inner * mp.Bdiag);
}

VectorXd superpose(const VectorXd& resp_a, const VectorXd& resp_b) {
  require(resp_a.size() == resp_b.size(), Err::ConfigError,
          "responses must have equal size");
  return resp_a + resp_b;
}

namespace {

VectorXd rk4_span(VectorXd theta, double a, double b, const MatrixXd& A,
                  const VectorXd& Bdiag, const std::function<VectorXd(double)>& power,
                  double step, bool constant_power) {
  const double span = b - a;
  if (span <= 0.0) return theta;
  const int nsteps = std::max<int>(1, static_cast<int>(std::ceil(span / step)));
  const double h = span / nsteps;
  const VectorXd bp_const =
      constant_power ? VectorXd(Bdiag.cwiseProduct(power(a + span / 2.0))) : VectorXd();
  for (int s = 0; s < nsteps; ++s) {
    const double ts = a + s * h;
    auto f = [&](double tau, const VectorXd& th) -> VectorXd {
      if (constant_power) return A * th + bp_const;
      return A * th + Bdiag.cwiseProduct(power(tau));
    };
    const VectorXd k1 = f(ts, theta);
    const VectorXd k2 = f(ts + h / 2.0, theta + (h / 2.0) * k1);
    const VectorXd k3 = f(ts + h / 2.0, theta + (h / 2.0) * k2);
    const VectorXd k4 = f(ts + h, theta + h * k3);
    theta += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return theta;
}

}  // namespace

VectorXd ode_oracle(const VectorXd& theta0, double t0, double t,
                    const MatrixThermalParams& mp,
                    const std::function<VectorXd(double)>& power, double step,
                    const std::vector<double>& breakpoints) {
  require(step > 0.0, Err::ConfigError, "step must be > 0");
  require(t >= t0, Err::ConfigError, "t must be >= t0");
  require(theta0.size() == mp.n(), Err::ConfigError, "theta0 size must match model");
  if (breakpoints.empty())
    return rk4_span(theta0, t0, t, mp.A, mp.Bdiag, power, step, false);
  std::vector<double> pts;
  pts.push_back(t0);
  for (double bp : breakpoints)
    if (bp > t0 && bp < t) pts.push_back(bp);
  pts.push_back(t);
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  VectorXd theta = theta0;
  for (size_t i = 0; i + 1 < pts.size(); ++i)
    theta = rk4_span(std::move(theta), pts[i], pts[i + 1], mp.A, mp.Bdiag, power, step,
                     true);
  return theta;
}

std::vector<double> switch_times(const std::vector<PeriodicPowerSignal>& sigs, double t0,
                                 double t) {
  std::vector<double> out;
  for (const auto& s : sigs) {
    if (s.util <= 0.0 || s.util >= 1.0 || s.p_dynamic == 0.0) continue;
    const double uT = s.util * s.period;
    const auto m0 = static_cast<long long>(std::floor((t0 - s.offset) / s.period)) - 1;
    const auto m1 = static_cast<long long>(std::ceil((t - s.offset) / s.period)) + 1;
    for (long long m = m0; m <= m1; ++m) {
      const double rise = s.offset + static_cast<double>(m) * s.period;
      for (double edge : {rise, rise + uT})
        if (edge > t0 && edge < t) out.push_back(edge);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::function<VectorXd(double)> power_from_signals(std::vector<PeriodicPowerSignal> sigs) {
  return [sigs = std::move(sigs)](double t) {
    VectorXd p(static_cast<Eigen::Index>(sigs.size()));
    for (size_t j = 0; j < sigs.size(); ++j)
      p(static_cast<Eigen::Index>(j)) = sigs[j].power_at(t);
    return p;
  };
}

}  // namespace thermo::core
