#ifndef EDITLAB_USER_MODELS_H_
#define EDITLAB_USER_MODELS_H_

// Constructors for user-edit models that satisfy the balance equation
// q(y'|x,y) pi*(y|x) = q(y|x,y') pi*(y'|x), weak-user transforms, and the
// validator for the balance / steady-state / contraction properties.

#include <cstdint>
#include <vector>

#include "editlab/env_core.h"

namespace editlab {

// Singleton context, N responses, uniform pi_ref, indicator metric delta.
// Every response is edited into y_N with probability
// gamma + (1 - gamma)/N and into each other response with (1 - gamma)/N.
// beta is set to delta*gamma / ln((1 + N gamma - gamma)/(1 - gamma)), the
// unique value making the balance equation exact.
Environment BuildExample1(size_t n, double gamma_min, double delta);
double Example1Beta(size_t n, double gamma_min, double delta);

// Context/response spaces, rho and pi_ref without a user.
struct EnvironmentSkeleton {
  ContextSpace contexts;
  ResponseSpace responses;
  Distribution rho;
  Policy pi_ref;
};

// q0(.|x,y) = pi*_beta(.|x) for every y (pi* the Gibbs policy of `cost`),
// mixed with the identity: q = (1 - w) q0 + w I. Certified floor is
// (1 - w) max_y pi*(y|x).
UserEditModel BuildGibbsUser(const Distribution& rho, const Policy& pi_ref,
                             const Table& cost, double beta, double w);

// Full environment around BuildGibbsUser. The metric is a weighted indicator
// whose weights make the base user's expected edit cost equal `cost`
// exactly: weight(x,y) = cost(x,y) / (1 - pi*(y|x)). With w > 0 the
// environment's beta is (1 - w) beta, under which pi* is unchanged.
Environment BuildGibbsEnvironment(const EnvironmentSkeleton& skeleton,
                                  const Table& cost, double beta, double w);

// (1 - w) q + w I.
UserEditModel WeakenUser(const UserEditModel& user, double w);
// Weakened user with beta scaled by (1 - w).
Environment WeakenEnvironment(const Environment& env, double w);

struct ValidationReport {
  // max_{x,y,y'} |q(y'|x,y) pi*(y|x) - q(y|x,y') pi*(y'|x)|
  double balance_residual = 0.0;
  // per context min_y q(y*(x)|x,y)
  std::vector<double> gamma_certified;
  // max_x TV(q o pi*(.|x), pi*(.|x))
  double steady_state_tv = 0.0;
  // max over probes and contexts of TV(q o pi, pi*) / TV(pi, pi*)
  double contraction_margin = 0.0;
  // max over probes and contexts of
  // TV(q o pi, pi*) - (1 - gamma_floor(x)) TV(pi, pi*); <= 0 when the
  // contraction bound holds.
  double contraction_slack = 0.0;
  size_t probes_checked = 0;
};

inline constexpr uint64_t kProbeSeed = 0xED175EED;

// 100 Dirichlet(1,...,1) policies from kProbeSeed, then pi_ref, then one
// point-mass policy per response.
std::vector<Policy> ContractionProbes(const Environment& env,
                                      size_t num_random = 100,
                                      uint64_t seed = kProbeSeed);

Policy DirichletPolicy(size_t num_contexts, size_t num_responses,
                       RngStream& rng);

ValidationReport Validate(const Environment& env);

}  // namespace editlab

#endif  // EDITLAB_USER_MODELS_H_
