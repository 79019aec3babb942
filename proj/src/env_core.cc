#include "editlab/env_core.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>
#include <utility>

#include "editlab/error.h"

namespace editlab {

FiniteSpace::FiniteSpace(std::vector<SpaceItem> items)
    : items_(std::move(items)) {
  if (items_.empty()) throw ParameterError("space must be nonempty");
  std::set<std::string> seen;
  for (const auto& item : items_) {
    if (!seen.insert(item.id).second) {
      throw ParameterError("duplicate space identifier '" + item.id + "'");
    }
  }
}

FiniteSpace FiniteSpace::Named(const std::string& prefix, size_t n) {
  std::vector<SpaceItem> items;
  items.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    items.push_back({prefix + std::to_string(i), std::nullopt});
  }
  return FiniteSpace(std::move(items));
}

std::optional<size_t> FiniteSpace::IndexOf(const std::string& id) const {
  for (size_t i = 0; i < items_.size(); ++i) {
    if (items_[i].id == id) return i;
  }
  return std::nullopt;
}

Distribution::Distribution(std::vector<double> probs)
    : probs_(std::move(probs)) {
  if (probs_.empty()) throw ParameterError("distribution must be nonempty");
  double total = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw ParameterError("distribution entries must be finite and >= 0");
    }
    total += p;
  }
  if (std::abs(total - 1.0) > kProbTolerance) {
    throw ParameterError("distribution sums to " + std::to_string(total));
  }
}

Distribution Distribution::Normalized(std::vector<double> weights) {
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw ParameterError("weights must be finite and >= 0");
    }
    total += w;
  }
  if (!(total > 0.0)) throw ParameterError("weights have zero mass");
  for (double& w : weights) w /= total;
  return Distribution(std::move(weights));
}

Distribution Distribution::Uniform(size_t n) {
  return Distribution(std::vector<double>(n, 1.0 / static_cast<double>(n)));
}

Distribution Distribution::PointMass(size_t n, size_t index) {
  std::vector<double> p(n, 0.0);
  p.at(index) = 1.0;
  return Distribution(std::move(p));
}

Policy::Policy(std::vector<Distribution> rows) : rows_(std::move(rows)) {
  if (rows_.empty()) throw ParameterError("policy needs at least one context");
  for (const auto& r : rows_) {
    if (r.size() != rows_.front().size()) {
      throw ParameterError("policy rows have different lengths");
    }
  }
}

Policy::Policy(const Table& table) {
  std::vector<Distribution> rows;
  rows.reserve(table.size());
  for (const auto& r : table) rows.emplace_back(r);
  *this = Policy(std::move(rows));
}

Policy Policy::Uniform(size_t num_contexts, size_t num_responses) {
  return Policy(std::vector<Distribution>(
      num_contexts, Distribution::Uniform(num_responses)));
}

Policy Policy::PointMass(size_t num_contexts, size_t num_responses,
                         size_t response) {
  return Policy(std::vector<Distribution>(
      num_contexts, Distribution::PointMass(num_responses, response)));
}

Table Policy::ToTable() const {
  Table t;
  t.reserve(rows_.size());
  for (const auto& r : rows_) t.push_back(r.vec());
  return t;
}

UserEditModel::UserEditModel(Rows table, std::vector<double> gamma_floor,
                             std::vector<size_t> optimal_response)
    : table_(std::move(table)),
      gamma_floor_(std::move(gamma_floor)),
      optimal_response_(std::move(optimal_response)) {
  if (table_.empty()) throw ParameterError("user model needs contexts");
  const size_t n = table_.front().size();
  if (gamma_floor_.size() != table_.size() ||
      optimal_response_.size() != table_.size()) {
    throw ParameterError("user model: per-context arrays have wrong length");
  }
  for (size_t x = 0; x < table_.size(); ++x) {
    if (table_[x].size() != n) {
      throw ParameterError("user model: ragged response dimension");
    }
    if (optimal_response_[x] >= n) {
      throw ParameterError("user model: optimal response out of range");
    }
    const double floor = gamma_floor_[x];
    if (!(floor >= 0.0 && floor <= 1.0)) {
      throw ParameterError("user model: gamma floor outside [0, 1]");
    }
    for (size_t y = 0; y < n; ++y) {
      if (table_[x][y].size() != n) {
        throw ParameterError("user model: row length mismatch");
      }
      if (table_[x][y][optimal_response_[x]] < floor - 1e-12) {
        throw ParameterError("user model: gamma floor not certified");
      }
    }
  }
}

UserEditModel UserEditModel::Certify(Rows table) {
  std::vector<double> floors;
  std::vector<size_t> best;
  for (const auto& rows : table) {
    double best_floor = -1.0;
    size_t best_index = 0;
    for (size_t cand = 0; cand < rows.size(); ++cand) {
      double m = 1.0;
      for (const auto& row : rows) m = std::min(m, row[cand]);
      if (m > best_floor) {
        best_floor = m;
        best_index = cand;
      }
    }
    floors.push_back(std::max(best_floor, 0.0));
    best.push_back(best_index);
  }
  return UserEditModel(std::move(table), std::move(floors), std::move(best));
}

UserEditModel UserEditModel::Identity(size_t num_contexts,
                                      size_t num_responses) {
  Rows table(num_contexts);
  for (auto& rows : table) {
    for (size_t y = 0; y < num_responses; ++y) {
      rows.push_back(Distribution::PointMass(num_responses, y));
    }
  }
  return Certify(std::move(table));
}

const char* MetricKindName(MetricKind kind) {
  switch (kind) {
    case MetricKind::kIndicator:
      return "indicator";
    case MetricKind::kWeightedIndicator:
      return "weighted_indicator";
    case MetricKind::kLevenshteinRaw:
      return "levenshtein_raw";
    case MetricKind::kLevenshteinNormalized:
      return "levenshtein_normalized";
  }
  return "unknown";
}

std::optional<MetricKind> ParseMetricKind(const std::string& name) {
  for (MetricKind k :
       {MetricKind::kIndicator, MetricKind::kWeightedIndicator,
        MetricKind::kLevenshteinRaw, MetricKind::kLevenshteinNormalized}) {
    if (name == MetricKindName(k)) return k;
  }
  return std::nullopt;
}

EditMetric EditMetric::Indicator(double delta) {
  if (!(delta > 0.0)) throw ParameterError("indicator delta must be > 0");
  EditMetric m;
  m.kind = MetricKind::kIndicator;
  m.delta = delta;
  m.c_max = delta;
  return m;
}

EditMetric EditMetric::WeightedIndicator(Table weights) {
  EditMetric m;
  m.kind = MetricKind::kWeightedIndicator;
  double c_max = 0.0;
  for (const auto& row : weights) {
    for (double w : row) {
      if (!(w >= 0.0) || !std::isfinite(w)) {
        throw ParameterError("edit weights must be finite and >= 0");
      }
      c_max = std::max(c_max, w);
    }
  }
  if (!(c_max > 0.0)) throw ParameterError("edit weights are all zero");
  m.weights = std::move(weights);
  m.c_max = c_max;
  return m;
}

EditMetric EditMetric::LevenshteinRaw(double c_max) {
  if (!(c_max > 0.0)) throw ParameterError("c_max must be > 0");
  EditMetric m;
  m.kind = MetricKind::kLevenshteinRaw;
  m.c_max = c_max;
  return m;
}

EditMetric EditMetric::LevenshteinNormalized(double c_max) {
  if (!(c_max > 0.0)) throw ParameterError("c_max must be > 0");
  EditMetric m;
  m.kind = MetricKind::kLevenshteinNormalized;
  m.c_max = c_max;
  return m;
}

size_t Levenshtein(std::span<const std::string> a,
                   std::span<const std::string> b) {
  std::vector<size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), size_t{0});
  for (size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (size_t j = 1; j <= b.size(); ++j) {
      const size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double EditCost(const EditMetric& metric, const ResponseSpace& responses,
                size_t x, size_t y, size_t y_edit) {
  if (y == y_edit) return 0.0;
  switch (metric.kind) {
    case MetricKind::kIndicator:
      return metric.delta;
    case MetricKind::kWeightedIndicator:
      return metric.weights.at(x).at(y);
    case MetricKind::kLevenshteinRaw:
    case MetricKind::kLevenshteinNormalized: {
      const auto& a = responses[y].tokens;
      const auto& b = responses[y_edit].tokens;
      if (!a || !b) {
        throw ConfigError("levenshtein metric needs token payloads on '" +
                          responses[y].id + "' and '" +
                          responses[y_edit].id + "'");
      }
      double d = static_cast<double>(Levenshtein(*a, *b));
      if (metric.kind == MetricKind::kLevenshteinNormalized) {
        d /= static_cast<double>(std::max<size_t>(1, a->size()));
      }
      return std::clamp(d, 0.0, metric.c_max);
    }
  }
  throw InvariantViolation("unhandled metric kind");
}

Environment::Environment(ContextSpace contexts, ResponseSpace responses,
                         Distribution rho, Policy pi_ref, UserEditModel user,
                         EditMetric metric, double beta)
    : contexts_(std::move(contexts)),
      responses_(std::move(responses)),
      rho_(std::move(rho)),
      pi_ref_(std::move(pi_ref)),
      user_(std::move(user)),
      metric_(std::move(metric)),
      beta_(beta) {
  const size_t nx = contexts_.size();
  const size_t ny = responses_.size();
  if (rho_.size() != nx) throw ParameterError("rho has wrong length");
  if (pi_ref_.num_contexts() != nx || pi_ref_.num_responses() != ny) {
    throw ParameterError("pi_ref shape does not match the spaces");
  }
  if (user_.num_contexts() != nx || user_.num_responses() != ny) {
    throw ParameterError("user model shape does not match the spaces");
  }
  if (metric_.kind == MetricKind::kWeightedIndicator) {
    if (metric_.weights.size() != nx) {
      throw ParameterError("edit weights have wrong context count");
    }
    for (const auto& row : metric_.weights) {
      if (row.size() != ny) {
        throw ParameterError("edit weights have wrong response count");
      }
    }
  }
  if (!(beta_ > 0.0) || !std::isfinite(beta_)) {
    throw ParameterError("beta must be finite and > 0");
  }
  edit_costs_.assign(nx, Table(ny, std::vector<double>(ny, 0.0)));
  expected_cost_.assign(nx, std::vector<double>(ny, 0.0));
  for (size_t x = 0; x < nx; ++x) {
    for (size_t y = 0; y < ny; ++y) {
      double c = 0.0;
      for (size_t y2 = 0; y2 < ny; ++y2) {
        const double d = EditCost(metric_, responses_, x, y, y2);
        edit_costs_[x][y][y2] = d;
        c += user_.prob(x, y, y2) * d;
      }
      expected_cost_[x][y] = std::clamp(c, 0.0, metric_.c_max);
    }
  }
}

Environment Environment::WithUser(UserEditModel user, double beta) const {
  return Environment(contexts_, responses_, rho_, pi_ref_, std::move(user),
                     metric_, beta);
}

double ExpectedCost(const Environment& env, size_t x, size_t y) {
  return env.cost(x, y);
}

Policy ComposeUser(const UserEditModel& user, const Policy& pi) {
  if (user.num_contexts() != pi.num_contexts() ||
      user.num_responses() != pi.num_responses()) {
    throw ParameterError("ComposeUser: shape mismatch");
  }
  const size_t ny = pi.num_responses();
  std::vector<Distribution> rows;
  rows.reserve(pi.num_contexts());
  for (size_t x = 0; x < pi.num_contexts(); ++x) {
    std::vector<double> out(ny, 0.0);
    for (size_t y = 0; y < ny; ++y) {
      const double w = pi.prob(x, y);
      if (w == 0.0) continue;
      const auto& q = user.row(x, y);
      for (size_t y2 = 0; y2 < ny; ++y2) out[y2] += w * q[y2];
    }
    rows.push_back(Distribution::Normalized(std::move(out)));
  }
  return Policy(std::move(rows));
}

double TvDistance(std::span<const double> p, std::span<const double> r) {
  if (p.size() != r.size()) throw ParameterError("TvDistance: length mismatch");
  double s = 0.0;
  for (size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - r[i]);
  return std::min(1.0, 0.5 * s);
}

double TvDistance(const Distribution& p, const Distribution& r) {
  return TvDistance(p.probs(), r.probs());
}

double ExpectedTv(const Distribution& rho, const Policy& a, const Policy& b) {
  if (a.num_contexts() != rho.size() || b.num_contexts() != rho.size()) {
    throw ParameterError("ExpectedTv: shape mismatch");
  }
  double d = 0.0;
  for (size_t x = 0; x < rho.size(); ++x) {
    if (rho[x] == 0.0) continue;
    d += rho[x] * TvDistance(a.row(x), b.row(x));
  }
  return d;
}

double ExpectedTv(const Environment& env, const Policy& a, const Policy& b) {
  return ExpectedTv(env.rho(), a, b);
}

EditDataset SampleLog(const Environment& env, const Policy& behavior,
                      size_t n, RngStream& rng) {
  EditDataset data;
  data.records.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    EditRecord r;
    r.x = rng.Categorical(env.rho().probs());
    r.y = rng.Categorical(behavior.row(r.x).probs());
    r.y_edit = rng.Categorical(env.user().row(r.x, r.y).probs());
    r.cost = env.edit_cost(r.x, r.y, r.y_edit);
    data.records.push_back(r);
  }
  return data;
}

EditDataset SampleLog(const Environment& env, size_t n, uint64_t seed) {
  if (n == 0) throw ParameterError("SampleLog: n must be >= 1");
  RngStream rng(seed, "offline_log");
  EditDataset data = SampleLog(env, env.pi_ref(), n, rng);
  data.seed = seed;
  return data;
}

}  // namespace editlab
