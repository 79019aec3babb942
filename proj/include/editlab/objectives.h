#ifndef EDITLAB_OBJECTIVES_H_
#define EDITLAB_OBJECTIVES_H_

// Exact evaluation of the KL-regularized objective, its closed-form
// minimizer, suboptimality, implied Bradley-Terry preferences and the
// concentrability diagnostics.

#include <vector>

#include "editlab/env_core.h"

namespace editlab {

struct OptimalPolicyResult {
  Policy pi_star;
  // Z(x) = sum_y pi_ref(y|x) exp(-c(x,y)/beta) and its log.
  std::vector<double> z_norm;
  std::vector<double> log_z;
  // J_beta(pi_star) = E_x[-beta log Z(x)].
  double j_beta_star = 0.0;
};

// pi*(y|x) = pi_ref(y|x) exp(-f(x,y)/beta) / Z(x) for an arbitrary cost table.
OptimalPolicyResult GibbsPolicy(const Distribution& rho, const Policy& pi_ref,
                                const Table& cost, double beta);
OptimalPolicyResult OptimalPolicy(const Environment& env);

// E_{x~rho, y~pi}[c(x,y) + beta log(pi/pi_ref)]. beta = 0 gives J_0. Returns
// +inf when pi puts mass where pi_ref does not and beta > 0.
double JBeta(const Environment& env, const Policy& pi, double beta);
double JBeta(const Distribution& rho, const Policy& pi_ref, const Table& cost,
             const Policy& pi, double beta);

// J_beta(pi) - J_beta(pi*) at the environment's beta.
double SubOpt(const Environment& env, const Policy& pi);
double SubOpt(const Environment& env, const OptimalPolicyResult& opt,
              const Policy& pi);
// J_0(pi) - J_0(pi*).
double SubOptUnreg(const Environment& env, const Policy& pi);
double SubOptUnreg(const Environment& env, const OptimalPolicyResult& opt,
                   const Policy& pi);

double Sigmoid(double z);
double LogSigmoid(double z);

struct PreferenceProbability {
  // sigma((c(x,y) - c(x,y')) / beta)
  double sigmoid = 0.5;
  // pi_ref(y) q(y'|y) / [pi_ref(y) q(y'|y) + pi_ref(y') q(y|y')]
  double mechanistic = 0.5;
};

// Probability that y_prime is preferred to y in context x, both from the
// Bradley-Terry form and from the edit mechanism. Throws
// UndefinedPreferenceError when neither order can occur.
PreferenceProbability BtProbability(const Environment& env, size_t x, size_t y,
                                    size_t y_prime);

struct Diagnostics {
  // max over probes of beta |log pi/pi_ref|
  double v_max = 0.0;
  // sqrt(E_{rho x pi_ref}[(pi*/pi_ref)^2])
  double c_bar_star = 1.0;
  // Largest preference-concentrability ratio seen over the probes. A lower
  // estimate of the supremum over the class.
  double c_pref_estimate = 0.0;
  double eta_max = 0.0;
  double eta_bar_max = 0.0;
};

Diagnostics ComputeDiagnostics(const Environment& env,
                               const std::vector<Policy>& policy_probes);

// Max over (x, y in support of pi_ref) of |log pi(y|x)/pi_ref(y|x)|; +inf
// if pi has mass off the support or misses part of it.
double MaxLogRatio(const Policy& pi, const Policy& pi_ref);

}  // namespace editlab

#endif  // EDITLAB_OBJECTIVES_H_
