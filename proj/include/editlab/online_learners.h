#ifndef EDITLAB_ONLINE_LEARNERS_H_
#define EDITLAB_ONLINE_LEARNERS_H_

// Online phase: a fixed-policy evaluation loop, the late ensemble (lower
// confidence bound on cost over a list of policies) and epoch supervised
// learning.

#include <cstdint>
#include <string>
#include <vector>

#include "editlab/env_core.h"
#include "editlab/offline_learners.h"

namespace editlab {

struct ArmStats {
  double total_cost = 0.0;
  size_t pulls = 0;
};

// Round t is 1-based. Rounds 1..|arms| return arm t-1; afterwards the arm
// minimizing C/N - alpha sqrt(log(t)/N), ties to the lowest index.
size_t UcbSelect(const std::vector<ArmStats>& arms, size_t t, double alpha);

struct RoundRecord {
  size_t t = 0;
  std::string method;
  int arm = -1;
  double cost = 0.0;
  double cum_cost = 0.0;
  double subopt = 0.0;
  double cum_regret = 0.0;

  friend bool operator==(const RoundRecord&, const RoundRecord&) = default;
};

struct EpochStats {
  size_t epoch = 0;        // 1-based
  size_t rounds = 0;       // rounds actually played in this epoch
  double tv_to_star = 0.0; // D(pi_e, pi*)
  double subopt = 0.0;     // SubOpt(pi_e)
  double xi = 0.0;         // sqrt(2 ln(|Pi|/delta_e) / rounds)

  friend bool operator==(const EpochStats&, const EpochStats&) = default;
};

struct RunRecord {
  std::string method;
  std::vector<RoundRecord> rounds;
  std::vector<size_t> arm_pulls;  // late ensemble only
  std::vector<EpochStats> epochs; // epoch supervised only

  double total_cost() const;
  double mean_cost() const;
  double total_regret() const;
  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

// Plays `policy` for T rounds: x ~ rho, y ~ policy, y' ~ q, c = Delta(y, y').
// Contexts come from the stream (seed, "online.contexts") so that every
// method run with the same seed sees the same context sequence; responses
// and edits come from (seed, "online.<method>").
RunRecord RunFixedPolicy(const Environment& env, const Policy& policy,
                         const std::string& method, size_t horizon,
                         uint64_t seed);

RunRecord RunLateEnsemble(const Environment& env,
                          const std::vector<Policy>& policies, size_t horizon,
                          double alpha, uint64_t seed,
                          const std::string& method = "late_ensemble");

inline constexpr size_t kEpochCap = 1000000;

struct EpochSchedule {
  double gamma_min = 0.5;
  double log_pi_size = 0.0;
  double delta = 0.1;
  size_t horizon = 1;
  // Rounds per epoch, the last one truncated to the horizon.
  std::vector<size_t> m;
  // Untruncated theoretical sizes (after the cap).
  std::vector<size_t> m_full;
  bool capped = false;

  size_t num_epochs() const { return m.size(); }
  // delta_e = delta / (2 e^2), e 1-based.
  double ConfidenceAt(size_t epoch) const;
};

// m_e = ceil(2 (log|Pi| + ln(2 e^2 / delta)) / (1 - gamma)^(2e)), capped at
// kEpochCap; epochs are added until their sizes cover the horizon.
EpochSchedule MakeEpochSchedule(double gamma_min, double log_pi_size,
                                double delta, size_t horizon);

struct EpochOptions {
  // Refit on all epochs' data rather than the current epoch only.
  bool cumulative = false;
  // Fit in the clipped class with projected descent instead of the tabular
  // closed form.
  bool clipped = false;
  ClassParams cls;
  OptimizerSettings opt;
};

RunRecord RunEpochSupervised(const Environment& env,
                             const EpochSchedule& schedule,
                             const EpochOptions& options, uint64_t seed);

}  // namespace editlab

#endif  // EDITLAB_ONLINE_LEARNERS_H_
