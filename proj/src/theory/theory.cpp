#include "macdmp/theory.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/numeric/odeint.hpp>
#include <cmath>
#include <cstdio>

#include "macdmp/errors.hpp"
#include "macdmp/rng.hpp"

namespace macdmp::theory {

void GaussianDist::validate() const {
  const int d = dim();
  if (d < 1 || cov.rows() != d || cov.cols() != d) throw DomainError("gaussian: mean/cov dimension mismatch");
  if (!cov.isApprox(cov.transpose(), 1e-12) && (cov - cov.transpose()).norm() > 1e-12) {
    throw DomainError("gaussian: covariance is not symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success) throw DomainError("gaussian: covariance is not positive definite");
}

double GaussianDist::second_moment() const { return cov.trace() + mean.squaredNorm(); }

GaussianDist GaussianDist::standard(int d) {
  return {Eigen::VectorXd::Zero(d), Eigen::MatrixXd::Identity(d, d)};
}

GaussianDist GaussianDist::point(const Eigen::VectorXd& x) {
  return {x, Eigen::MatrixXd::Zero(x.size(), x.size())};
}

double integrate_beta(const ScalarFn& beta, double T) {
  if (T < 0.0) throw DomainError("integrate_beta: T must be >= 0");
  if (T == 0.0) return 0.0;
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(beta, 0.0, T, 15, 1e-14);
}

GaussianDist ou_marginal(const GaussianDist& x0, const ScalarFn& beta, double T) {
  const double B = integrate_beta(beta, T);
  const double decay = std::exp(-B);
  const int d = x0.dim();
  GaussianDist out;
  out.mean = std::exp(-0.5 * B) * x0.mean;
  out.cov = decay * x0.cov + (1.0 - decay) * Eigen::MatrixXd::Identity(d, d);
  return out;
}

GaussianDist ou_marginal(const Eigen::VectorXd& x0, const ScalarFn& beta, double T) {
  return ou_marginal(GaussianDist::point(x0), beta, T);
}

double kl_gaussian(const GaussianDist& p, const GaussianDist& q) {
  p.validate();
  q.validate();
  if (p.dim() != q.dim()) throw DomainError("kl_gaussian: dimension mismatch");
  const int d = p.dim();
  Eigen::LLT<Eigen::MatrixXd> lq(q.cov);
  Eigen::LLT<Eigen::MatrixXd> lp(p.cov);
  const Eigen::MatrixXd q_inv_p = lq.solve(p.cov);
  const Eigen::VectorXd diff = q.mean - p.mean;
  const double maha = diff.dot(lq.solve(diff));
  auto logdet = [](const Eigen::LLT<Eigen::MatrixXd>& l) {
    return 2.0 * l.matrixL().toDenseMatrix().diagonal().array().log().sum();
  };
  const double kl = 0.5 * (q_inv_p.trace() - d + maha + logdet(lq) - logdet(lp));
  return std::max(kl, 0.0);
}

// ---- forward convergence ----

bool Lemma2Report::all_pass() const {
  for (const auto& r : rows) {
    if (!r.pass) return false;
  }
  return !rows.empty();
}

Lemma2Report lemma2_check(const GaussianDist& x0, const ScalarFn& beta, std::span<const double> T_grid) {
  Lemma2Report rep;
  rep.dim = x0.dim();
  rep.m2 = x0.second_moment();
  const auto rho = GaussianDist::standard(rep.dim);
  for (double T : T_grid) {
    const double B = integrate_beta(beta, T);
    const double x = std::exp(-B);
    if (x > 0.1) {
      char buf[128];
      std::snprintf(buf, sizeof buf, "lemma2_check: T = %g gives exp(-beta_bar) = %g > 0.1", T, x);
      throw DomainError(buf);
    }
    Lemma2Row row;
    row.T = T;
    row.beta_bar = B;
    row.kl = kl_gaussian(ou_marginal(x0, beta, T), rho);
    row.bound = 0.5 * rep.m2 * x;
    row.slack = rep.dim * x * x;
    row.pass = row.kl <= row.bound + row.slack;
    rep.rows.push_back(row);
  }
  return rep;
}

// ---- KL evolution ----

Moments propagate_moments(const LinearSde& sde, double t) {
  using State = std::array<double, 2>;
  State s{sde.m0, sde.v0};
  if (t <= 0.0) return {s[0], s[1]};
  auto rhs = [&](const State& x, State& dx, double tau) {
    const double a = sde.a(tau);
    const double g = sde.g(tau);
    dx[0] = a * x[0];
    dx[1] = 2.0 * a * x[1] + g * g;
  };
  namespace ode = boost::numeric::odeint;
  ode::integrate_adaptive(ode::make_controlled<ode::runge_kutta_dopri5<State>>(1e-13, 1e-13), rhs, s, 0.0,
                          t, t / 100.0);
  return {s[0], s[1]};
}

double kl_1d(const Moments& p, const Moments& q) {
  if (!(p.var > 0.0) || !(q.var > 0.0)) throw DomainError("kl_1d: degenerate variance");
  const double dm = p.mean - q.mean;
  return 0.5 * (p.var / q.var + dm * dm / q.var - 1.0 + std::log(q.var / p.var));
}

namespace {

// d/dx log(p/q) = A x + B for Gaussians p, q.
std::pair<double, double> log_ratio_slope(const Moments& p, const Moments& q) {
  return {1.0 / q.var - 1.0 / p.var, p.mean / p.var - q.mean / q.var};
}

}  // namespace

double relative_fisher_1d(const Moments& p, const Moments& q) {
  if (!(p.var > 0.0) || !(q.var > 0.0)) throw DomainError("relative_fisher_1d: degenerate variance");
  const auto [A, B] = log_ratio_slope(p, q);
  const double ex2 = p.var + p.mean * p.mean;
  return A * A * ex2 + 2.0 * A * B * p.mean + B * B;
}

bool Lemma3Report::all_pass() const {
  for (const auto& r : rows) {
    if (!r.pass) return false;
  }
  return !rows.empty();
}

Lemma3Report lemma3_check(const LinearSde& p, const LinearSde& q, std::span<const double> taus, double fd_step,
                          double tol, double abs_floor) {
  Lemma3Report rep;
  for (double tau : taus) {
    if (tau - fd_step < 0.0) throw DomainError("lemma3_check: tau grid must start at or after fd_step");
    const double g_p = p.g(tau);
    if (std::abs(g_p - q.g(tau)) > 1e-12 * std::max(1.0, std::abs(g_p))) {
      throw DomainError("lemma3_check: the two processes must share the diffusion coefficient");
    }
    const double kl_plus = kl_1d(propagate_moments(p, tau + fd_step), propagate_moments(q, tau + fd_step));
    const double kl_minus = kl_1d(propagate_moments(p, tau - fd_step), propagate_moments(q, tau - fd_step));
    const auto mp = propagate_moments(p, tau);
    const auto mq = propagate_moments(q, tau);
    const auto [A, B] = log_ratio_slope(mp, mq);
    const double cross = (p.a(tau) - q.a(tau)) * (A * (mp.var + mp.mean * mp.mean) + B * mp.mean);

    Lemma3Row row;
    row.tau = tau;
    row.lhs = (kl_plus - kl_minus) / (2.0 * fd_step);
    row.rhs = -0.5 * g_p * g_p * relative_fisher_1d(mp, mq) + cross;
    const double err = std::abs(row.lhs - row.rhs);
    row.rel_err = err / std::max(std::abs(row.rhs), 1e-12);
    row.pass = err <= tol * std::abs(row.rhs) + abs_floor;
    rep.rows.push_back(row);
  }
  return rep;
}

// ---- mean-field drift ----

void BoundInputs::validate() const {
  if (!(C >= 0.0 && L_J >= 0.0 && L_eps >= 0.0 && M2 >= 0.0 && beta_bar_T >= 0.0)) {
    throw DomainError("bound inputs must be nonnegative");
  }
}

double lemma1_bound(const BoundInputs& in, double beta, double alpha_bar) {
  in.validate();
  if (!(alpha_bar < 1.0)) throw DomainError("lemma1_bound: alpha_bar must be < 1");
  return in.C * in.L_eps * beta / std::sqrt(1.0 - alpha_bar) + std::sqrt(in.C) * in.L_J * beta;
}

bool Lemma1Report::all_pass() const {
  for (const auto& r : rows) {
    if (!r.pass) return false;
  }
  return !rows.empty();
}

Lemma1Report lemma1_empirical(const Lemma1Config& cfg) {
  if (cfg.dim < 1 || cfg.neighbors < 1 || cfg.samples < 1 || !(cfg.radius > 0.0)) {
    throw DomainError("lemma1_empirical: bad configuration");
  }
  const int d = cfg.dim;
  const int n = cfg.neighbors;
  Rng rng = make_rng(cfg.seed, 0);
  auto gaussian_matrix = [&](int r, int c) {
    Eigen::MatrixXd m(r, c);
    for (int i = 0; i < r; ++i) {
      for (int j = 0; j < c; ++j) m(i, j) = standard_normal(rng);
    }
    return m;
  };
  const Eigen::MatrixXd W = gaussian_matrix(d, d) / std::sqrt(d);
  const Eigen::MatrixXd U = gaussian_matrix(d, d) / std::sqrt(d);
  const Eigen::VectorXd u = gaussian_matrix(d, 1);
  const Eigen::MatrixXd G = gaussian_matrix(d, d);
  const Eigen::MatrixXd A = 0.5 * (G + G.transpose());
  const double norm_A = A.jacobiSvd().singularValues()(0);

  // eps depends on the neighbors only through their mean; its Lipschitz
  // constant in the stacked neighbor input is |U| / sqrt(n).
  Lemma1Report rep;
  rep.L_eps = U.jacobiSvd().singularValues()(0) / std::sqrt(static_cast<double>(n));
  rep.L_J = u.norm() * norm_A * cfg.radius;

  auto in_ball = [&]() {
    Eigen::VectorXd v(d);
    for (int i = 0; i < d; ++i) v(i) = standard_normal(rng);
    const double r = cfg.radius * std::pow(uniform01(rng), 1.0 / d);
    return Eigen::VectorXd(v.normalized() * r);
  };

  const double b = cfg.beta;
  const double s = 1.0 / std::sqrt(1.0 - cfg.alpha_bar);
  for (int k = 0; k < cfg.samples; ++k) {
    const Eigen::VectorXd xi = in_ball();
    std::vector<Eigen::VectorXd> xj(n);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    for (auto& v : xj) {
      v = in_ball();
      mean += v;
    }
    mean /= n;

    // Full neighborhood.
    double quad_full = 0.0;
    for (const auto& v : xj) quad_full += 0.5 * v.dot(A * v);
    quad_full /= n;
    const Eigen::VectorXd eps_full = W * xi + U * mean;
    const Eigen::VectorXd gradJ_full = u * quad_full;
    const Eigen::VectorXd drift_full = -0.5 * b * xi + b * s * eps_full - b * gradJ_full;

    // Mean-field replacement.
    const Eigen::VectorXd eps_mf = W * xi + U * mean;
    const Eigen::VectorXd gradJ_mf = u * (0.5 * mean.dot(A * mean));
    const Eigen::VectorXd drift_mf = -0.5 * b * xi + b * s * eps_mf - b * gradJ_mf;

    double C = 0.0;
    for (const auto& v : xj) C = std::max(C, (v - mean).squaredNorm());

    Lemma1Row row;
    row.measured = (drift_full - drift_mf).norm();
    row.bound = lemma1_bound({.C = C, .L_J = rep.L_J, .L_eps = rep.L_eps}, b, cfg.alpha_bar);
    row.pass = row.measured <= row.bound * (1.0 + 1e-12) + 1e-15;
    rep.max_measured = std::max(rep.max_measured, row.measured);
    rep.rows.push_back(row);
  }
  return rep;
}

// ---- perturbed reverse SDE ----

double theorem1_bound(const Theorem1Config& cfg) {
  const double m2 = cfg.data_mean * cfg.data_mean + cfg.data_std * cfg.data_std;
  return 0.5 * m2 * std::exp(-cfg.beta * cfg.T) + 0.5 * cfg.delta * cfg.delta / cfg.beta * cfg.T;
}

Theorem1Row theorem1_check(const Theorem1Config& cfg) {
  if (cfg.steps < 1 || cfg.paths < 2 || !(cfg.beta > 0.0) || !(cfg.T > 0.0) || !(cfg.data_std > 0.0)) {
    throw DomainError("theorem1_check: bad configuration");
  }
  const int steps = cfg.steps;
  const double dt = cfg.T / steps;
  const double m0 = cfg.data_mean;
  const double s0sq = cfg.data_std * cfg.data_std;

  // Score coefficients at tau_n = T - n dt: score(x) = -(x - c_n) / v_n.
  std::vector<double> c(steps), inv_v(steps);
  for (int k = 0; k < steps; ++k) {
    const double tau = cfg.T - k * dt;
    const double a = std::exp(-0.5 * cfg.beta * tau);
    c[k] = a * m0;
    inv_v[k] = 1.0 / (a * a * s0sq + 1.0 - a * a);
  }

  constexpr int kChunk = 1000;
  const int chunks = (cfg.paths + kChunk - 1) / kChunk;
  std::vector<double> x(cfg.paths);
  const double noise = std::sqrt(cfg.beta * dt);
#pragma omp parallel for schedule(static)
  for (int ch = 0; ch < chunks; ++ch) {
    Rng rng = make_rng(cfg.seed, 1000 + static_cast<std::uint64_t>(ch));
    std::normal_distribution<double> nd;
    const int lo = ch * kChunk;
    const int hi = std::min(cfg.paths, lo + kChunk);
    for (int p = lo; p < hi; ++p) x[p] = nd(rng);
    std::vector<double> z(hi - lo);
    for (int k = 0; k < steps; ++k) {
      for (auto& v : z) v = nd(rng);
      const double ck = c[k], ik = inv_v[k];
      for (int p = lo; p < hi; ++p) {
        const double drift = 0.5 * cfg.beta * x[p] - cfg.beta * (x[p] - ck) * ik + cfg.delta;
        x[p] += drift * dt + noise * z[p - lo];
      }
    }
  }

  const double n = cfg.paths;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= n;
  double m2 = 0.0, m3 = 0.0, m4 = 0.0;
  for (double v : x) {
    const double d = v - mean;
    m2 += d * d;
    m3 += d * d * d;
    m4 += d * d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m4 /= n;
  const double var = m2 * n / (n - 1.0);

  Theorem1Row row;
  row.cfg = cfg;
  row.kl = kl_1d({m0, s0sq}, {mean, var});
  row.bound = theorem1_bound(cfg);
  // A Gaussian fit to n exact samples has KL ~ chi2_2 / (2n): mean 1/n, sd 1/n.
  row.allowance = 4.0 / n;
  row.skew = m3 / std::pow(m2, 1.5);
  row.excess_kurtosis = m4 / (m2 * m2) - 3.0;
  row.gaussian_fit_ok =
      std::abs(row.skew) <= 5.0 * std::sqrt(6.0 / n) && std::abs(row.excess_kurtosis) <= 5.0 * std::sqrt(24.0 / n);
  row.pass = row.kl <= row.bound + row.allowance;
  return row;
}

// ---- CSV ----

namespace {

std::string g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_csv(std::ostream& out, const Lemma2Report& r) {
  out << "check,dim,m2,T,beta_bar,kl,bound,slack,pass\n";
  for (const auto& row : r.rows) {
    out << "lemma2," << r.dim << ',' << g17(r.m2) << ',' << g17(row.T) << ',' << g17(row.beta_bar) << ','
        << g17(row.kl) << ',' << g17(row.bound) << ',' << g17(row.slack) << ',' << row.pass << '\n';
  }
}

void write_csv(std::ostream& out, const Lemma3Report& r) {
  out << "check,tau,lhs,rhs,rel_err,pass\n";
  for (const auto& row : r.rows) {
    out << "lemma3," << g17(row.tau) << ',' << g17(row.lhs) << ',' << g17(row.rhs) << ',' << g17(row.rel_err)
        << ',' << row.pass << '\n';
  }
}

void write_csv(std::ostream& out, const Lemma1Report& r) {
  out << "check,sample,L_J,L_eps,measured,bound,pass\n";
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    out << "lemma1," << i << ',' << g17(r.L_J) << ',' << g17(r.L_eps) << ',' << g17(r.rows[i].measured) << ','
        << g17(r.rows[i].bound) << ',' << r.rows[i].pass << '\n';
  }
}

void write_csv(std::ostream& out, std::span<const Theorem1Row> rows) {
  out << "check,delta,T,beta,steps,paths,kl,bound,allowance,skew,excess_kurtosis,gaussian_fit_ok,pass\n";
  for (const auto& r : rows) {
    out << "theorem1," << g17(r.cfg.delta) << ',' << g17(r.cfg.T) << ',' << g17(r.cfg.beta) << ','
        << r.cfg.steps << ',' << r.cfg.paths << ',' << g17(r.kl) << ',' << g17(r.bound) << ','
        << g17(r.allowance) << ',' << g17(r.skew) << ',' << g17(r.excess_kurtosis) << ','
        << r.gaussian_fit_ok << ',' << r.pass << '\n';
  }
}

}  // namespace macdmp::theory
