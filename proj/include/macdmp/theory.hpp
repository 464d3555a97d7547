#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

// Closed-form Gaussian instances of the diffusion error bounds, checked
// numerically.
namespace macdmp::theory {

using ScalarFn = std::function<double(double)>;

struct GaussianDist {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;

  int dim() const { return static_cast<int>(mean.size()); }
  // Throws DomainError unless cov is symmetric positive definite.
  void validate() const;
  // E ||x||^2 = tr(cov) + ||mean||^2.
  double second_moment() const;
  static GaussianDist standard(int d);
  static GaussianDist point(const Eigen::VectorXd& x);  // zero covariance, forward marginals only
};

// \int_0^T beta(s) ds by adaptive Gauss-Kronrod quadrature.
double integrate_beta(const ScalarFn& beta, double T);

// Marginal at time T of dx = -beta/2 x dt + sqrt(beta) dw started from x0:
// mean e^{-B/2} mu, cov e^{-B} Sigma0 + (1 - e^{-B}) I, B = \int_0^T beta.
GaussianDist ou_marginal(const GaussianDist& x0, const ScalarFn& beta, double T);
GaussianDist ou_marginal(const Eigen::VectorXd& x0, const ScalarFn& beta, double T);

// KL(p || q); both covariances must be SPD.
double kl_gaussian(const GaussianDist& p, const GaussianDist& q);

// ---- convergence of the forward process ----

struct Lemma2Row {
  double T = 0.0;
  double beta_bar = 0.0;
  double kl = 0.0;     // exact KL(p_T || N(0, I))
  double bound = 0.0;  // M2 e^{-B} / 2
  double slack = 0.0;  // d e^{-2B}
  bool pass = false;
};

struct Lemma2Report {
  int dim = 0;
  double m2 = 0.0;
  std::vector<Lemma2Row> rows;
  bool all_pass() const;
};

// Every T must satisfy e^{-B(T)} <= 0.1; otherwise DomainError names it.
Lemma2Report lemma2_check(const GaussianDist& x0, const ScalarFn& beta, std::span<const double> T_grid);

// ---- KL evolution between two linear SDEs ----

// dx = a(t) x dt + g(t) dw in one dimension, x(0) ~ N(m0, v0).
struct LinearSde {
  ScalarFn a;
  ScalarFn g;
  double m0 = 0.0;
  double v0 = 1.0;
};

struct Moments {
  double mean = 0.0;
  double var = 1.0;
};

// Integrates m' = a m, v' = 2 a v + g^2 to time t (adaptive Dormand-Prince).
Moments propagate_moments(const LinearSde& sde, double t);

double kl_1d(const Moments& p, const Moments& q);
// Relative Fisher information J(p || q) = E_p[(d/dx log p/q)^2].
double relative_fisher_1d(const Moments& p, const Moments& q);

struct Lemma3Row {
  double tau = 0.0;
  double lhs = 0.0;  // central difference of KL over tau
  double rhs = 0.0;  // -g^2 J / 2 + E<F1 - F2, d log p/q>
  double rel_err = 0.0;
  bool pass = false;
};

struct Lemma3Report {
  std::vector<Lemma3Row> rows;
  bool all_pass() const;
};

// Both SDEs must share g. rel_err = |lhs - rhs| / max(|rhs|, 1e-12); a row
// passes when |lhs - rhs| <= tol |rhs| + abs_floor.
Lemma3Report lemma3_check(const LinearSde& p, const LinearSde& q, std::span<const double> taus,
                          double fd_step = 1e-4, double tol = 1e-2, double abs_floor = 1e-12);

// ---- mean-field drift error ----

struct BoundInputs {
  double C = 0.0;      // bound on squared trajectory deviation from the neighborhood mean
  double L_J = 0.0;
  double L_eps = 0.0;
  double M2 = 0.0;
  double beta_bar_T = 0.0;

  void validate() const;
};

// C L_eps beta / sqrt(1 - abar) + sqrt(C) L_J beta; abar must be < 1.
double lemma1_bound(const BoundInputs& in, double beta, double alpha_bar);

struct Lemma1Config {
  int dim = 3;
  int neighbors = 4;
  double radius = 1.0;  // inputs drawn from the ball of this radius
  int samples = 2000;
  double beta = 0.02;
  double alpha_bar = 0.96;
  std::uint64_t seed = 1;
};

struct Lemma1Row {
  double measured = 0.0;
  double bound = 0.0;
  bool pass = false;
};

struct Lemma1Report {
  double L_J = 0.0;
  double L_eps = 0.0;
  double max_measured = 0.0;
  std::vector<Lemma1Row> rows;
  bool all_pass() const;
};

// Agent i with input x_i and neighbors x_j. The noise model is linear,
// eps = W x_i + U mean_j x_j, and the classifier is
// J = (1/n) sum_j (u.x_i) x_j^T A x_j / 2, whose mean-field version uses the
// neighbor mean. Measures |drift(full) - drift(mean field)| per sample, with
// C the sample's max squared deviation from the neighbor mean and
// L_J = |u| |A| R the Lipschitz constant of grad_{x_i} J in the neighbors.
Lemma1Report lemma1_empirical(const Lemma1Config& cfg);

// ---- end-to-end bound with a perturbed score ----

struct Theorem1Config {
  double data_mean = 1.0;
  double data_std = 0.5;
  double beta = 1.0;  // constant schedule
  double T = 10.0;
  double delta = 0.1;  // constant drift perturbation
  int steps = 10000;
  int paths = 100000;
  std::uint64_t seed = 1;
};

struct Theorem1Row {
  Theorem1Config cfg;
  double kl = 0.0;          // KL(p0 || Gaussian fit of generated samples)
  double bound = 0.0;       // M2 e^{-B}/2 + (1/2) \int delta^2 / beta
  double allowance = 0.0;   // Monte-Carlo 3 sigma for the fitted KL
  double skew = 0.0;
  double excess_kurtosis = 0.0;
  bool gaussian_fit_ok = true;  // false marks the row inconclusive
  bool pass = false;
};

double theorem1_bound(const Theorem1Config& cfg);
Theorem1Row theorem1_check(const Theorem1Config& cfg);

// CSV emission, one row per grid point.
void write_csv(std::ostream& out, const Lemma2Report& r);
void write_csv(std::ostream& out, const Lemma3Report& r);
void write_csv(std::ostream& out, const Lemma1Report& r);
void write_csv(std::ostream& out, std::span<const Theorem1Row> rows);

}  // namespace macdmp::theory
