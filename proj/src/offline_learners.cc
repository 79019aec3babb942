#include "editlab/offline_learners.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <tuple>
#include <utility>

#include "editlab/error.h"
#include "editlab/objectives.h"

namespace editlab {
namespace {

Table ZerosLike(size_t nx, size_t ny) {
  return Table(nx, std::vector<double>(ny, 0.0));
}

// Log-softmax of theta over the support of pi_ref in context x.
std::vector<double> LogPolicyRow(const Policy& pi_ref,
                                 const std::vector<double>& theta, size_t x) {
  const size_t ny = theta.size();
  double m = -std::numeric_limits<double>::infinity();
  for (size_t y = 0; y < ny; ++y) {
    const double r = pi_ref.prob(x, y);
    if (r > 0.0) m = std::max(m, std::log(r) + theta[y]);
  }
  double s = 0.0;
  for (size_t y = 0; y < ny; ++y) {
    const double r = pi_ref.prob(x, y);
    if (r > 0.0) s += std::exp(std::log(r) + theta[y] - m);
  }
  const double log_norm = m + std::log(s);
  std::vector<double> out(ny, -std::numeric_limits<double>::infinity());
  for (size_t y = 0; y < ny; ++y) {
    const double r = pi_ref.prob(x, y);
    if (r > 0.0) out[y] = std::log(r) + theta[y] - log_norm;
  }
  return out;
}

template <typename Loss>
FitResult ProjectedDescent(const Loss& loss, const Policy& pi_ref,
                           const ClassParams& cls,
                           const OptimizerSettings& opt) {
  opt.Check();
  if (!(cls.v_max > 0.0) || !(cls.beta > 0.0)) {
    throw ParameterError("class params: v_max and beta must be > 0");
  }
  const size_t nx = pi_ref.num_contexts();
  const size_t ny = pi_ref.num_responses();
  const double bound = cls.clip();
  Table theta = ZerosLike(nx, ny);
  FitResult result;
  for (size_t it = 0; it < opt.max_iterations; ++it) {
    const Table grad = loss.Gradient(theta);
    double step_norm_sq = 0.0;
    for (size_t x = 0; x < nx; ++x) {
      for (size_t y = 0; y < ny; ++y) {
        if (pi_ref.prob(x, y) == 0.0) continue;
        const double next = std::clamp(
            theta[x][y] - opt.step_size * grad[x][y], -bound, bound);
        const double g = (theta[x][y] - next) / opt.step_size;
        step_norm_sq += g * g;
        theta[x][y] = next;
      }
    }
    result.iterations = it + 1;
    if (std::sqrt(step_norm_sq) < opt.tolerance) {
      result.converged = true;
      break;
    }
  }
  result.final_loss = loss.Value(theta);
  result.policy = PolicyFromParams(pi_ref, theta);
  result.theta = std::move(theta);
  return result;
}

}  // namespace

Policy PolicyFromParams(const Policy& pi_ref, const Table& theta) {
  std::vector<Distribution> rows;
  rows.reserve(pi_ref.num_contexts());
  for (size_t x = 0; x < pi_ref.num_contexts(); ++x) {
    const auto logp = LogPolicyRow(pi_ref, theta.at(x), x);
    std::vector<double> p(logp.size());
    for (size_t y = 0; y < p.size(); ++y) p[y] = std::exp(logp[y]);
    rows.push_back(Distribution::Normalized(std::move(p)));
  }
  return Policy(std::move(rows));
}

bool IsRealizable(const Policy& target, const Policy& pi_ref,
                  const ClassParams& cls) {
  for (size_t x = 0; x < pi_ref.num_contexts(); ++x) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (size_t y = 0; y < pi_ref.num_responses(); ++y) {
      const double r = pi_ref.prob(x, y);
      const double p = target.prob(x, y);
      if (r == 0.0) {
        if (p > 0.0) return false;
        continue;
      }
      if (p == 0.0) return false;
      const double lr = std::log(p / r);
      lo = std::min(lo, lr);
      hi = std::max(hi, lr);
    }
    if (hi - lo > 2.0 * cls.clip() + 1e-12) return false;
  }
  return true;
}

void OptimizerSettings::Check() const {
  if (!(step_size > 0.0) || max_iterations == 0 || !(tolerance > 0.0)) {
    throw ParameterError("optimizer settings must be positive");
  }
}

SftLoss::SftLoss(const EditDataset& data, const Policy& pi_ref)
    : pi_ref_(pi_ref),
      weight_(ZerosLike(pi_ref.num_contexts(), pi_ref.num_responses())) {
  if (data.records.empty()) throw ParameterError("SFT: empty dataset");
  const double inv_n = 1.0 / static_cast<double>(data.size());
  for (const auto& r : data.records) {
    if (pi_ref.prob(r.x, r.y_edit) == 0.0) {
      throw ParameterError(
          "SFT: edited response outside the support of pi_ref");
    }
    weight_.at(r.x).at(r.y_edit) += inv_n;
  }
}

double SftLoss::Value(const Table& theta) const {
  double v = 0.0;
  for (size_t x = 0; x < weight_.size(); ++x) {
    const auto logp = LogPolicyRow(pi_ref_, theta[x], x);
    for (size_t y = 0; y < weight_[x].size(); ++y) {
      if (weight_[x][y] > 0.0) v -= weight_[x][y] * logp[y];
    }
  }
  return v;
}

Table SftLoss::Gradient(const Table& theta) const {
  Table g = ZerosLike(weight_.size(), weight_.front().size());
  for (size_t x = 0; x < weight_.size(); ++x) {
    double wx = 0.0;
    for (double w : weight_[x]) wx += w;
    if (wx == 0.0) continue;
    const auto logp = LogPolicyRow(pi_ref_, theta[x], x);
    for (size_t y = 0; y < weight_[x].size(); ++y) {
      if (pi_ref_.prob(x, y) == 0.0) continue;
      g[x][y] = wx * std::exp(logp[y]) - weight_[x][y];
    }
  }
  return g;
}

PreferenceDataset BuildPreferences(const EditDataset& data, uint64_t seed) {
  RngStream rng(seed, "preferences");
  PreferenceDataset prefs;
  prefs.seed = seed;
  prefs.records.reserve(data.size());
  for (const auto& r : data.records) {
    PreferenceRecord p;
    p.x = r.x;
    p.z = rng.Sign();
    if (p.z == 1) {
      p.y_tilde = r.y;
      p.y_tilde_prime = r.y_edit;
    } else {
      p.y_tilde = r.y_edit;
      p.y_tilde_prime = r.y;
    }
    prefs.records.push_back(p);
  }
  return prefs;
}

PreferenceLoss::PreferenceLoss(const PreferenceDataset& prefs,
                               size_t num_contexts, size_t num_responses,
                               double beta)
    : num_contexts_(num_contexts), num_responses_(num_responses), beta_(beta) {
  if (!(beta > 0.0)) throw ParameterError("DPO: beta must be > 0");
  if (prefs.records.empty()) throw ParameterError("DPO: empty dataset");
  const double inv_n = 1.0 / static_cast<double>(prefs.size());
  // z = +1 models y~' over y~; z = -1 models y~ over y~'.
  std::map<std::tuple<size_t, size_t, size_t>, double> counts;
  for (const auto& r : prefs.records) {
    const size_t winner = r.z == 1 ? r.y_tilde_prime : r.y_tilde;
    const size_t loser = r.z == 1 ? r.y_tilde : r.y_tilde_prime;
    if (r.x >= num_contexts || winner >= num_responses ||
        loser >= num_responses) {
      throw ParameterError("DPO: record index out of range");
    }
    if (winner == loser) {
      tie_weight_ += inv_n;
    } else {
      counts[{r.x, winner, loser}] += inv_n;
    }
  }
  for (const auto& [key, w] : counts) {
    groups_.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key), w});
  }
}

double PreferenceLoss::Value(const Table& theta) const {
  double v = tie_weight_ * std::log(2.0);
  for (const auto& g : groups_) {
    const double d = beta_ * (theta[g.x][g.winner] - theta[g.x][g.loser]);
    v -= g.weight * LogSigmoid(d);
  }
  return v;
}

Table PreferenceLoss::Gradient(const Table& theta) const {
  Table grad = ZerosLike(num_contexts_, num_responses_);
  for (const auto& g : groups_) {
    const double d = beta_ * (theta[g.x][g.winner] - theta[g.x][g.loser]);
    const double s = g.weight * beta_ * Sigmoid(-d);
    grad[g.x][g.winner] -= s;
    grad[g.x][g.loser] += s;
  }
  return grad;
}

CombinedLoss::CombinedLoss(PreferenceLoss pref, SftLoss sft, double lambda)
    : pref_(std::move(pref)), sft_(std::move(sft)), lambda_(lambda) {
  if (!(lambda >= 0.0)) throw ParameterError("early ensemble: lambda < 0");
}

double CombinedLoss::Value(const Table& theta) const {
  if (lambda_ == 0.0) return pref_.Value(theta);
  return pref_.Value(theta) + lambda_ * sft_.Value(theta);
}

Table CombinedLoss::Gradient(const Table& theta) const {
  Table g = pref_.Gradient(theta);
  if (lambda_ == 0.0) return g;
  const Table s = sft_.Gradient(theta);
  for (size_t x = 0; x < g.size(); ++x) {
    for (size_t y = 0; y < g[x].size(); ++y) g[x][y] += lambda_ * s[x][y];
  }
  return g;
}

OptimizerSettings DefaultSftSettings() {
  OptimizerSettings s;
  s.step_size = 1.0 / SftLoss::Curvature();
  return s;
}

OptimizerSettings DefaultDpoSettings(double beta) {
  return DefaultEarlyEnsembleSettings(beta, 0.0);
}

OptimizerSettings DefaultEarlyEnsembleSettings(double beta, double lambda) {
  OptimizerSettings s;
  s.step_size = 1.0 / (0.5 * beta * beta + lambda * SftLoss::Curvature());
  return s;
}

Policy TabularMle(const EditDataset& data, const Policy& fallback) {
  const size_t nx = fallback.num_contexts();
  const size_t ny = fallback.num_responses();
  Table counts = ZerosLike(nx, ny);
  for (const auto& r : data.records) counts.at(r.x).at(r.y_edit) += 1.0;
  std::vector<Distribution> rows;
  for (size_t x = 0; x < nx; ++x) {
    double total = 0.0;
    for (double c : counts[x]) total += c;
    if (total == 0.0) {
      rows.push_back(fallback.row(x));
    } else {
      rows.push_back(Distribution::Normalized(counts[x]));
    }
  }
  return Policy(std::move(rows));
}

FitResult FitSft(const EditDataset& data, const Policy& pi_ref,
                 const ClassParams& cls, const OptimizerSettings& opt) {
  return ProjectedDescent(SftLoss(data, pi_ref), pi_ref, cls, opt);
}

FitResult FitDpo(const PreferenceDataset& prefs, const Policy& pi_ref,
                 double beta, const ClassParams& cls,
                 const OptimizerSettings& opt) {
  return ProjectedDescent(
      PreferenceLoss(prefs, pi_ref.num_contexts(), pi_ref.num_responses(),
                     beta),
      pi_ref, cls, opt);
}

FitResult FitEarlyEnsemble(const EditDataset& data,
                           const PreferenceDataset& prefs,
                           const Policy& pi_ref, double beta, double lambda,
                           const ClassParams& cls,
                           const OptimizerSettings& opt) {
  CombinedLoss loss(PreferenceLoss(prefs, pi_ref.num_contexts(),
                                   pi_ref.num_responses(), beta),
                    SftLoss(data, pi_ref), lambda);
  return ProjectedDescent(loss, pi_ref, cls, opt);
}

CostModelClass DefaultCostClass(const Table& true_cost, double c_max,
                                size_t num_perturbed, double scale,
                                uint64_t seed) {
  CostModelClass fclass;
  fclass.members.push_back(true_cost);
  RngStream rng(seed, "cost_class");
  for (size_t k = 0; k < num_perturbed; ++k) {
    Table t = true_cost;
    for (auto& row : t) {
      for (double& v : row) {
        v = std::clamp(v + scale * (2.0 * rng.NextDouble() - 1.0), 0.0, c_max);
      }
    }
    fclass.members.push_back(std::move(t));
  }
  for (double level : {0.0, 0.5 * c_max, c_max}) {
    Table t = true_cost;
    for (auto& row : t) std::fill(row.begin(), row.end(), level);
    fclass.members.push_back(std::move(t));
  }
  return fclass;
}

double ConfidenceSettings::Radius(size_t class_size) const {
  return b * c_max * c_max *
         std::log(static_cast<double>(class_size) / delta);
}

CostFit FitCost(const EditDataset& data, const CostModelClass& fclass,
                const ConfidenceSettings& conf) {
  if (fclass.members.empty()) throw ParameterError("cost class is empty");
  if (!(conf.delta > 0.0 && conf.delta < 1.0) || !(conf.b > 0.0)) {
    throw ParameterError("confidence settings: need b > 0, delta in (0,1)");
  }
  const Table& shape = fclass.members.front();
  Table count = ZerosLike(shape.size(), shape.front().size());
  Table sum = count;
  double sum_sq = 0.0;
  for (const auto& r : data.records) {
    count.at(r.x).at(r.y) += 1.0;
    sum[r.x][r.y] += r.cost;
    sum_sq += r.cost * r.cost;
  }
  CostFit fit;
  double best = std::numeric_limits<double>::infinity();
  for (size_t k = 0; k < fclass.size(); ++k) {
    const Table& f = fclass.members[k];
    double sse = sum_sq;
    for (size_t x = 0; x < f.size(); ++x) {
      for (size_t y = 0; y < f[x].size(); ++y) {
        if (count[x][y] == 0.0) continue;
        sse += count[x][y] * f[x][y] * f[x][y] - 2.0 * f[x][y] * sum[x][y];
      }
    }
    fit.sse.push_back(sse);
    if (sse < best) {
      best = sse;
      fit.f_hat = k;
    }
  }
  fit.radius = conf.Radius(fclass.size());
  const Table& f_hat = fclass.members[fit.f_hat];
  for (size_t k = 0; k < fclass.size(); ++k) {
    const Table& f = fclass.members[k];
    double dist = 0.0;
    for (size_t x = 0; x < f.size(); ++x) {
      for (size_t y = 0; y < f[x].size(); ++y) {
        const double d = f[x][y] - f_hat[x][y];
        dist += count[x][y] * d * d;
      }
    }
    if (dist <= fit.radius) fit.confidence_ids.push_back(k);
  }
  return fit;
}

Table PessimisticCost(const CostModelClass& fclass, const CostFit& fit) {
  if (fit.confidence_ids.empty()) {
    throw InvariantViolation("empty confidence set; f_hat must be a member");
  }
  Table f_bar = fclass.members.at(fit.confidence_ids.front());
  for (size_t k : fit.confidence_ids) {
    const Table& f = fclass.members.at(k);
    for (size_t x = 0; x < f_bar.size(); ++x) {
      for (size_t y = 0; y < f_bar[x].size(); ++y) {
        f_bar[x][y] = std::max(f_bar[x][y], f[x][y]);
      }
    }
  }
  return f_bar;
}

PessimisticResult FitPessimisticRl(const EditDataset& data,
                                   const CostModelClass& fclass,
                                   const Distribution& rho,
                                   const Policy& pi_ref, double beta,
                                   const ConfidenceSettings& conf) {
  PessimisticResult out;
  out.fit = FitCost(data, fclass, conf);
  out.f_bar = PessimisticCost(fclass, out.fit);
  out.policy = GibbsPolicy(rho, pi_ref, out.f_bar, beta).pi_star;
  return out;
}

}  // namespace editlab
