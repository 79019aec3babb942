#include "editlab/objectives.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "editlab/error.h"

namespace editlab {
namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}  // namespace

OptimalPolicyResult GibbsPolicy(const Distribution& rho, const Policy& pi_ref,
                                const Table& cost, double beta) {
  if (!(beta > 0.0)) throw ParameterError("GibbsPolicy: beta must be > 0");
  const size_t nx = pi_ref.num_contexts();
  const size_t ny = pi_ref.num_responses();
  if (cost.size() != nx) throw ParameterError("GibbsPolicy: cost shape");
  OptimalPolicyResult out;
  std::vector<Distribution> rows;
  rows.reserve(nx);
  for (size_t x = 0; x < nx; ++x) {
    if (cost[x].size() != ny) throw ParameterError("GibbsPolicy: cost shape");
    // Shift by the smallest supported cost so the largest weight is <= 1.
    double shift = kInf;
    for (size_t y = 0; y < ny; ++y) {
      if (pi_ref.prob(x, y) > 0.0) shift = std::min(shift, cost[x][y]);
    }
    std::vector<double> w(ny, 0.0);
    double sum = 0.0;
    for (size_t y = 0; y < ny; ++y) {
      const double p = pi_ref.prob(x, y);
      if (p == 0.0) continue;
      w[y] = p * std::exp(-(cost[x][y] - shift) / beta);
      sum += w[y];
    }
    const double log_z = std::log(sum) - shift / beta;
    out.log_z.push_back(log_z);
    out.z_norm.push_back(std::exp(log_z));
    out.j_beta_star += rho[x] * (-beta * log_z);
    for (double& v : w) v /= sum;
    rows.push_back(Distribution::Normalized(std::move(w)));
  }
  out.pi_star = Policy(std::move(rows));
  return out;
}

OptimalPolicyResult OptimalPolicy(const Environment& env) {
  return GibbsPolicy(env.rho(), env.pi_ref(), env.cost_table(), env.beta());
}

double JBeta(const Distribution& rho, const Policy& pi_ref, const Table& cost,
             const Policy& pi, double beta) {
  if (beta < 0.0) throw ParameterError("JBeta: beta must be >= 0");
  if (pi.num_contexts() != pi_ref.num_contexts() ||
      pi.num_responses() != pi_ref.num_responses()) {
    throw ParameterError("JBeta: shape mismatch");
  }
  double total = 0.0;
  for (size_t x = 0; x < pi.num_contexts(); ++x) {
    if (rho[x] == 0.0) continue;
    double inner = 0.0;
    for (size_t y = 0; y < pi.num_responses(); ++y) {
      const double p = pi.prob(x, y);
      if (p == 0.0) continue;
      inner += p * cost[x][y];
      if (beta > 0.0) {
        const double r = pi_ref.prob(x, y);
        if (r == 0.0) return kInf;
        inner += beta * p * std::log(p / r);
      }
    }
    total += rho[x] * inner;
  }
  return total;
}

double JBeta(const Environment& env, const Policy& pi, double beta) {
  return JBeta(env.rho(), env.pi_ref(), env.cost_table(), pi, beta);
}

double SubOpt(const Environment& env, const OptimalPolicyResult& opt,
              const Policy& pi) {
  return JBeta(env, pi, env.beta()) - JBeta(env, opt.pi_star, env.beta());
}

double SubOpt(const Environment& env, const Policy& pi) {
  return SubOpt(env, OptimalPolicy(env), pi);
}

double SubOptUnreg(const Environment& env, const OptimalPolicyResult& opt,
                   const Policy& pi) {
  return JBeta(env, pi, 0.0) - JBeta(env, opt.pi_star, 0.0);
}

double SubOptUnreg(const Environment& env, const Policy& pi) {
  return SubOptUnreg(env, OptimalPolicy(env), pi);
}

double Sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double LogSigmoid(double z) {
  if (z >= 0.0) return -std::log1p(std::exp(-z));
  return z - std::log1p(std::exp(z));
}

PreferenceProbability BtProbability(const Environment& env, size_t x, size_t y,
                                    size_t y_prime) {
  const double forward = env.pi_ref().prob(x, y) * env.user().prob(x, y, y_prime);
  const double backward =
      env.pi_ref().prob(x, y_prime) * env.user().prob(x, y_prime, y);
  if (forward + backward == 0.0) {
    throw UndefinedPreferenceError("no mass on either edit order");
  }
  PreferenceProbability p;
  p.sigmoid = Sigmoid((env.cost(x, y) - env.cost(x, y_prime)) / env.beta());
  p.mechanistic = forward / (forward + backward);
  return p;
}

double MaxLogRatio(const Policy& pi, const Policy& pi_ref) {
  double m = 0.0;
  for (size_t x = 0; x < pi.num_contexts(); ++x) {
    for (size_t y = 0; y < pi.num_responses(); ++y) {
      const double p = pi.prob(x, y);
      const double r = pi_ref.prob(x, y);
      if (p == 0.0 && r == 0.0) continue;
      if (p == 0.0 || r == 0.0) return kInf;
      m = std::max(m, std::abs(std::log(p / r)));
    }
  }
  return m;
}

Diagnostics ComputeDiagnostics(const Environment& env,
                               const std::vector<Policy>& policy_probes) {
  const auto opt = OptimalPolicy(env);
  const auto& pi_ref = env.pi_ref();
  const auto& pi_star = opt.pi_star;
  const double beta = env.beta();
  Diagnostics d;

  for (const auto& pi : policy_probes) {
    d.v_max = std::max(d.v_max, beta * MaxLogRatio(pi, pi_ref));
  }

  double second_moment = 0.0;
  for (size_t x = 0; x < env.num_contexts(); ++x) {
    for (size_t y = 0; y < env.num_responses(); ++y) {
      const double r = pi_ref.prob(x, y);
      const double s = pi_star.prob(x, y);
      if (s == 0.0) continue;
      if (r == 0.0) {
        second_moment = kInf;
        break;
      }
      second_moment += env.rho()[x] * s * s / r;
    }
  }
  d.c_bar_star = std::sqrt(second_moment);

  // Ratio E_{Q_pi}|g| / E_{Q_pi_ref}|g| with
  // g = beta log(pi(y')/pi*(y')) - beta log(pi(y)/pi*(y)) and
  // Q_pi(x,y,y') = rho(x) (pi(y') pi*(y) + pi*(y') pi(y)) / 2.
  auto q_expectation = [&](const Policy& sampler, const Policy& pi) {
    double total = 0.0;
    for (size_t x = 0; x < env.num_contexts(); ++x) {
      const size_t ny = env.num_responses();
      for (size_t a = 0; a < ny; ++a) {
        for (size_t b = 0; b < ny; ++b) {
          const double mass = 0.5 * env.rho()[x] *
                              (sampler.prob(x, b) * pi_star.prob(x, a) +
                               pi_star.prob(x, b) * sampler.prob(x, a));
          if (mass == 0.0) continue;
          auto log_ratio = [&](size_t y) {
            const double p = pi.prob(x, y);
            const double s = pi_star.prob(x, y);
            if (p == 0.0 && s == 0.0) return 0.0;
            if (p == 0.0) return -kInf;
            if (s == 0.0) return kInf;
            return std::log(p / s);
          };
          const double g = beta * (log_ratio(b) - log_ratio(a));
          total += mass * (std::isnan(g) ? kInf : std::abs(g));
        }
      }
    }
    return total;
  };
  for (const auto& pi : policy_probes) {
    const double denom = q_expectation(pi_ref, pi);
    const double numer = q_expectation(pi, pi);
    if (denom > 0.0 && std::isfinite(denom) && std::isfinite(numer)) {
      d.c_pref_estimate = std::max(d.c_pref_estimate, numer / denom);
    }
  }

  double min_floor = 1.0;
  double sq = 0.0;
  for (size_t x = 0; x < env.num_contexts(); ++x) {
    const double g = env.user().gamma_floor(x);
    min_floor = std::min(min_floor, g);
    sq += env.rho()[x] * (1.0 - g) * (1.0 - g);
  }
  d.eta_max = 1.0 - min_floor;
  d.eta_bar_max = std::sqrt(sq);
  return d;
}

}  // namespace editlab
