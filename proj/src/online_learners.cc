#include "editlab/online_learners.h"

#include <cmath>
#include <limits>

#include "editlab/error.h"
#include "editlab/objectives.h"

namespace editlab {

double RunRecord::total_cost() const {
  return rounds.empty() ? 0.0 : rounds.back().cum_cost;
}

double RunRecord::mean_cost() const {
  return rounds.empty() ? 0.0
                        : total_cost() / static_cast<double>(rounds.size());
}

double RunRecord::total_regret() const {
  return rounds.empty() ? 0.0 : rounds.back().cum_regret;
}

size_t UcbSelect(const std::vector<ArmStats>& arms, size_t t, double alpha) {
  if (arms.empty()) throw ParameterError("UcbSelect: no arms");
  if (t == 0) throw ParameterError("UcbSelect: rounds are 1-based");
  if (t <= arms.size()) return t - 1;
  const double log_t = std::log(static_cast<double>(t));
  double best = std::numeric_limits<double>::infinity();
  size_t best_arm = 0;
  for (size_t i = 0; i < arms.size(); ++i) {
    if (arms[i].pulls == 0) {
      throw InvariantViolation("UcbSelect: unpulled arm after initialization");
    }
    const double n = static_cast<double>(arms[i].pulls);
    const double index = arms[i].total_cost / n - alpha * std::sqrt(log_t / n);
    if (index < best) {
      best = index;
      best_arm = i;
    }
  }
  return best_arm;
}

namespace {

struct Round {
  size_t x, y, y_edit;
  double cost;
};

Round PlayRound(const Environment& env, const Policy& policy, size_t x,
                RngStream& rng) {
  Round r;
  r.x = x;
  r.y = rng.Categorical(policy.row(x).probs());
  r.y_edit = rng.Categorical(env.user().row(x, r.y).probs());
  r.cost = env.edit_cost(x, r.y, r.y_edit);
  return r;
}

void Append(RunRecord& run, int arm, double cost, double subopt) {
  RoundRecord rec;
  rec.t = run.rounds.size() + 1;
  rec.method = run.method;
  rec.arm = arm;
  rec.cost = cost;
  rec.subopt = subopt;
  rec.cum_cost = (run.rounds.empty() ? 0.0 : run.rounds.back().cum_cost) + cost;
  rec.cum_regret =
      (run.rounds.empty() ? 0.0 : run.rounds.back().cum_regret) + subopt;
  run.rounds.push_back(std::move(rec));
}

}  // namespace

RunRecord RunFixedPolicy(const Environment& env, const Policy& policy,
                         const std::string& method, size_t horizon,
                         uint64_t seed) {
  RngStream contexts(seed, "online.contexts");
  RngStream rng(seed, "online." + method);
  const double subopt = SubOpt(env, policy);
  RunRecord run;
  run.method = method;
  run.rounds.reserve(horizon);
  for (size_t t = 1; t <= horizon; ++t) {
    const size_t x = contexts.Categorical(env.rho().probs());
    const Round r = PlayRound(env, policy, x, rng);
    Append(run, -1, r.cost, subopt);
  }
  return run;
}

RunRecord RunLateEnsemble(const Environment& env,
                          const std::vector<Policy>& policies, size_t horizon,
                          double alpha, uint64_t seed,
                          const std::string& method) {
  if (policies.empty()) throw ParameterError("late ensemble: no policies");
  if (horizon < policies.size()) {
    throw ParameterError("late ensemble: horizon shorter than the arm list");
  }
  const auto opt = OptimalPolicy(env);
  std::vector<double> subopt;
  for (const auto& pi : policies) subopt.push_back(SubOpt(env, opt, pi));

  RngStream contexts(seed, "online.contexts");
  RngStream rng(seed, "online." + method);
  std::vector<ArmStats> arms(policies.size());
  RunRecord run;
  run.method = method;
  run.rounds.reserve(horizon);
  for (size_t t = 1; t <= horizon; ++t) {
    const size_t x = contexts.Categorical(env.rho().probs());
    const size_t arm = UcbSelect(arms, t, alpha);
    const Round r = PlayRound(env, policies[arm], x, rng);
    arms[arm].total_cost += r.cost;
    arms[arm].pulls += 1;
    Append(run, static_cast<int>(arm), r.cost, subopt[arm]);
  }
  for (const auto& a : arms) run.arm_pulls.push_back(a.pulls);
  return run;
}

double EpochSchedule::ConfidenceAt(size_t epoch) const {
  const double e = static_cast<double>(epoch);
  return delta / (2.0 * e * e);
}

EpochSchedule MakeEpochSchedule(double gamma_min, double log_pi_size,
                                double delta, size_t horizon) {
  if (!(gamma_min > 0.0 && gamma_min < 1.0)) {
    throw ParameterError("epoch schedule: gamma_min must lie in (0, 1)");
  }
  if (!(delta > 0.0 && delta < 1.0)) {
    throw ParameterError("epoch schedule: delta must lie in (0, 1)");
  }
  if (!(log_pi_size >= 0.0)) {
    throw ParameterError("epoch schedule: log|Pi| must be >= 0");
  }
  if (horizon == 0) throw ParameterError("epoch schedule: horizon >= 1");
  EpochSchedule s;
  s.gamma_min = gamma_min;
  s.log_pi_size = log_pi_size;
  s.delta = delta;
  s.horizon = horizon;
  const double shrink = std::log1p(-gamma_min);  // ln(1 - gamma)
  size_t covered = 0;
  for (size_t e = 1; covered < horizon; ++e) {
    const double ed = static_cast<double>(e);
    const double log_term = log_pi_size + std::log(2.0 * ed * ed / delta);
    // 2 log_term / (1-gamma)^(2e), evaluated in log space.
    const double log_m = std::log(2.0 * log_term) - 2.0 * ed * shrink;
    size_t m;
    if (log_m >= std::log(static_cast<double>(kEpochCap))) {
      m = kEpochCap;
      s.capped = true;
    } else {
      m = static_cast<size_t>(std::ceil(std::exp(log_m) - 1e-9));
      m = std::max<size_t>(m, 1);
    }
    s.m_full.push_back(m);
    const size_t played = std::min(m, horizon - covered);
    s.m.push_back(played);
    covered += played;
  }
  return s;
}

RunRecord RunEpochSupervised(const Environment& env,
                             const EpochSchedule& schedule,
                             const EpochOptions& options, uint64_t seed) {
  const auto opt = OptimalPolicy(env);
  RngStream contexts(seed, "online.contexts");
  RngStream rng(seed, "online.epoch_supervised");
  RunRecord run;
  run.method = "epoch_supervised";
  run.rounds.reserve(schedule.horizon);
  Policy current = env.pi_ref();
  EditDataset all;
  for (size_t e = 1; e <= schedule.num_epochs(); ++e) {
    const size_t m = schedule.m[e - 1];
    EpochStats stats;
    stats.epoch = e;
    stats.rounds = m;
    stats.tv_to_star = ExpectedTv(env, current, opt.pi_star);
    stats.subopt = SubOpt(env, opt, current);
    stats.xi = std::sqrt(
        2.0 *
        (schedule.log_pi_size - std::log(schedule.ConfidenceAt(e))) /
        static_cast<double>(m));
    run.epochs.push_back(stats);

    EditDataset epoch_data;
    epoch_data.records.reserve(m);
    for (size_t n = 0; n < m; ++n) {
      const size_t x = contexts.Categorical(env.rho().probs());
      const Round r = PlayRound(env, current, x, rng);
      epoch_data.records.push_back({r.x, r.y, r.y_edit, r.cost});
      Append(run, -1, r.cost, stats.subopt);
    }
    if (options.cumulative) {
      all.records.insert(all.records.end(), epoch_data.records.begin(),
                         epoch_data.records.end());
    }
    const EditDataset& fit_data = options.cumulative ? all : epoch_data;
    if (options.clipped) {
      current = FitSft(fit_data, env.pi_ref(), options.cls, options.opt).policy;
    } else {
      current = TabularMle(fit_data, current);
    }
  }
  return run;
}

}  // namespace editlab
