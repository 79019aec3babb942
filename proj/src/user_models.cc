#include "editlab/user_models.h"

#include <algorithm>
#include <cmath>

#include "editlab/error.h"
#include "editlab/objectives.h"

namespace editlab {

double Example1Beta(size_t n, double gamma_min, double delta) {
  const double g = gamma_min;
  const double ratio = (1.0 + static_cast<double>(n) * g - g) / (1.0 - g);
  return delta * g / std::log(ratio);
}

Environment BuildExample1(size_t n, double gamma_min, double delta) {
  if (n < 2) throw ParameterError("example1: N must be >= 2");
  if (!(gamma_min > 0.0 && gamma_min < 1.0)) {
    throw ParameterError("example1: gamma_min must lie in (0, 1)");
  }
  if (!(delta > 0.0)) throw ParameterError("example1: delta must be > 0");
  const double nd = static_cast<double>(n);
  const double off = (1.0 - gamma_min) / nd;
  std::vector<double> row(n, off);
  row[n - 1] = gamma_min + off;
  UserEditModel::Rows table(1, std::vector<Distribution>(n, Distribution(row)));
  UserEditModel user(std::move(table), {gamma_min}, {n - 1});
  const double beta = Example1Beta(n, gamma_min, delta);
  if (!(beta > 0.0)) throw ParameterError("example1: derived beta not positive");
  return Environment(ContextSpace(FiniteSpace::Named("x", 1)),
                     ResponseSpace(FiniteSpace::Named("y", n)),
                     Distribution::Uniform(1), Policy::Uniform(1, n),
                     std::move(user), EditMetric::Indicator(delta), beta);
}

UserEditModel BuildGibbsUser(const Distribution& rho, const Policy& pi_ref,
                             const Table& cost, double beta, double w) {
  if (!(w >= 0.0 && w < 1.0)) {
    throw ParameterError("gibbs user: laziness w must lie in [0, 1)");
  }
  const auto opt = GibbsPolicy(rho, pi_ref, cost, beta);
  const size_t nx = pi_ref.num_contexts();
  const size_t ny = pi_ref.num_responses();
  UserEditModel::Rows table(nx);
  std::vector<double> floors;
  std::vector<size_t> best;
  for (size_t x = 0; x < nx; ++x) {
    const auto& target = opt.pi_star.row(x);
    for (size_t y = 0; y < ny; ++y) table[x].push_back(target);
    const auto it = std::max_element(target.vec().begin(), target.vec().end());
    best.push_back(static_cast<size_t>(it - target.vec().begin()));
    floors.push_back(*it);
  }
  return WeakenUser(UserEditModel(std::move(table), std::move(floors),
                                  std::move(best)),
                    w);
}

Environment BuildGibbsEnvironment(const EnvironmentSkeleton& skeleton,
                                  const Table& cost, double beta, double w) {
  const auto opt = GibbsPolicy(skeleton.rho, skeleton.pi_ref, cost, beta);
  Table weights = cost;
  for (size_t x = 0; x < weights.size(); ++x) {
    for (size_t y = 0; y < weights[x].size(); ++y) {
      const double stay = opt.pi_star.prob(x, y);
      if (cost[x][y] < 0.0) throw ParameterError("gibbs: costs must be >= 0");
      if (1.0 - stay < 1e-12) {
        throw ParameterError(
            "gibbs: pi* is a point mass; no edit ever happens in context '" +
            skeleton.contexts[x].id + "'");
      }
      weights[x][y] = cost[x][y] / (1.0 - stay);
    }
  }
  UserEditModel user =
      BuildGibbsUser(skeleton.rho, skeleton.pi_ref, cost, beta, w);
  return Environment(skeleton.contexts, skeleton.responses, skeleton.rho,
                     skeleton.pi_ref, std::move(user),
                     EditMetric::WeightedIndicator(std::move(weights)),
                     (1.0 - w) * beta);
}

UserEditModel WeakenUser(const UserEditModel& user, double w) {
  if (!(w >= 0.0 && w < 1.0)) {
    throw ParameterError("weaken: w must lie in [0, 1)");
  }
  if (w == 0.0) return user;
  const size_t ny = user.num_responses();
  UserEditModel::Rows table(user.num_contexts());
  std::vector<double> floors;
  for (size_t x = 0; x < user.num_contexts(); ++x) {
    for (size_t y = 0; y < ny; ++y) {
      std::vector<double> row(ny);
      for (size_t y2 = 0; y2 < ny; ++y2) {
        row[y2] = (1.0 - w) * user.prob(x, y, y2) + (y2 == y ? w : 0.0);
      }
      table[x].push_back(Distribution::Normalized(std::move(row)));
    }
    floors.push_back((1.0 - w) * user.gamma_floor(x));
  }
  return UserEditModel(std::move(table), std::move(floors),
                       user.optimal_responses());
}

Environment WeakenEnvironment(const Environment& env, double w) {
  return env.WithUser(WeakenUser(env.user(), w), (1.0 - w) * env.beta());
}

Policy DirichletPolicy(size_t num_contexts, size_t num_responses,
                       RngStream& rng) {
  std::vector<Distribution> rows;
  rows.reserve(num_contexts);
  for (size_t x = 0; x < num_contexts; ++x) {
    std::vector<double> g(num_responses);
    for (double& v : g) v = rng.Exponential();
    rows.push_back(Distribution::Normalized(std::move(g)));
  }
  return Policy(std::move(rows));
}

std::vector<Policy> ContractionProbes(const Environment& env,
                                      size_t num_random, uint64_t seed) {
  RngStream rng(seed, "contraction_probes");
  std::vector<Policy> probes;
  probes.reserve(num_random + 1 + env.num_responses());
  for (size_t i = 0; i < num_random; ++i) {
    probes.push_back(
        DirichletPolicy(env.num_contexts(), env.num_responses(), rng));
  }
  probes.push_back(env.pi_ref());
  for (size_t y = 0; y < env.num_responses(); ++y) {
    probes.push_back(
        Policy::PointMass(env.num_contexts(), env.num_responses(), y));
  }
  return probes;
}

ValidationReport Validate(const Environment& env) {
  ValidationReport report;
  const auto opt = OptimalPolicy(env);
  const auto& star = opt.pi_star;
  const auto& q = env.user();
  const size_t nx = env.num_contexts();
  const size_t ny = env.num_responses();

  for (size_t x = 0; x < nx; ++x) {
    for (size_t y = 0; y < ny; ++y) {
      for (size_t y2 = 0; y2 < ny; ++y2) {
        const double r = std::abs(q.prob(x, y, y2) * star.prob(x, y) -
                                  q.prob(x, y2, y) * star.prob(x, y2));
        report.balance_residual = std::max(report.balance_residual, r);
      }
    }
    double g = 1.0;
    for (size_t y = 0; y < ny; ++y) {
      g = std::min(g, q.prob(x, y, q.optimal_response(x)));
    }
    report.gamma_certified.push_back(g);
  }

  const Policy pushed = ComposeUser(q, star);
  for (size_t x = 0; x < nx; ++x) {
    report.steady_state_tv =
        std::max(report.steady_state_tv, TvDistance(pushed.row(x), star.row(x)));
  }

  report.contraction_slack = -1.0;
  for (const auto& pi : ContractionProbes(env)) {
    const Policy next = ComposeUser(q, pi);
    for (size_t x = 0; x < nx; ++x) {
      const double before = TvDistance(pi.row(x), star.row(x));
      const double after = TvDistance(next.row(x), star.row(x));
      report.contraction_slack =
          std::max(report.contraction_slack,
                   after - (1.0 - q.gamma_floor(x)) * before);
      if (before > 1e-12) {
        report.contraction_margin =
            std::max(report.contraction_margin, after / before);
      }
    }
    ++report.probes_checked;
  }
  return report;
}

}  // namespace editlab
