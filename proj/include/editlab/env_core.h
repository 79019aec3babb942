#ifndef EDITLAB_ENV_CORE_H_
#define EDITLAB_ENV_CORE_H_

// Finite context/response spaces, probability tables, edit metrics and the
// exact-enumeration primitives used by every other module.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "editlab/rng.h"

namespace editlab {

inline constexpr double kProbTolerance = 1e-9;

using Tokens = std::vector<std::string>;
using Table = std::vector<std::vector<double>>;

struct SpaceItem {
  std::string id;
  std::optional<Tokens> tokens;
};

// Ordered, nonempty list of uniquely named items.
class FiniteSpace {
 public:
  FiniteSpace() = default;
  explicit FiniteSpace(std::vector<SpaceItem> items);
  // Items named <prefix>0 .. <prefix>(n-1), no token payloads.
  static FiniteSpace Named(const std::string& prefix, size_t n);

  size_t size() const { return items_.size(); }
  const SpaceItem& operator[](size_t i) const { return items_.at(i); }
  const std::vector<SpaceItem>& items() const { return items_; }
  std::optional<size_t> IndexOf(const std::string& id) const;

 private:
  std::vector<SpaceItem> items_;
};

class ContextSpace : public FiniteSpace {
 public:
  using FiniteSpace::FiniteSpace;
  ContextSpace(FiniteSpace s) : FiniteSpace(std::move(s)) {}
};

class ResponseSpace : public FiniteSpace {
 public:
  using FiniteSpace::FiniteSpace;
  ResponseSpace(FiniteSpace s) : FiniteSpace(std::move(s)) {}
};

// Probability vector over a finite space. Entries are nonnegative and sum
// to one within kProbTolerance.
class Distribution {
 public:
  Distribution() = default;
  explicit Distribution(std::vector<double> probs);

  // Divides by the sum; throws if the mass is not positive.
  static Distribution Normalized(std::vector<double> weights);
  static Distribution Uniform(size_t n);
  static Distribution PointMass(size_t n, size_t index);

  size_t size() const { return probs_.size(); }
  double operator[](size_t i) const { return probs_[i]; }
  std::span<const double> probs() const { return probs_; }
  const std::vector<double>& vec() const { return probs_; }

  friend bool operator==(const Distribution&, const Distribution&) = default;

 private:
  std::vector<double> probs_;
};

// Conditional distribution over responses for every context.
class Policy {
 public:
  Policy() = default;
  explicit Policy(std::vector<Distribution> rows);
  explicit Policy(const Table& table);

  static Policy Uniform(size_t num_contexts, size_t num_responses);
  // Every context puts all mass on `response`.
  static Policy PointMass(size_t num_contexts, size_t num_responses,
                          size_t response);

  size_t num_contexts() const { return rows_.size(); }
  size_t num_responses() const {
    return rows_.empty() ? 0 : rows_.front().size();
  }
  const Distribution& row(size_t x) const { return rows_.at(x); }
  double prob(size_t x, size_t y) const { return rows_[x][y]; }
  const std::vector<Distribution>& rows() const { return rows_; }
  Table ToTable() const;

  friend bool operator==(const Policy&, const Policy&) = default;

 private:
  std::vector<Distribution> rows_;
};

// q(y' | x, y), plus the certified per-context floor on the probability of
// editing into the designated optimal response.
class UserEditModel {
 public:
  using Rows = std::vector<std::vector<Distribution>>;

  UserEditModel() = default;
  // Checks table[x][y][optimal_response[x]] >= gamma_floor[x] for every y.
  UserEditModel(Rows table, std::vector<double> gamma_floor,
                std::vector<size_t> optimal_response);

  // Picks, per context, the response maximizing min_y q(y*|x,y) and uses
  // that minimum as the floor (may be zero).
  static UserEditModel Certify(Rows table);
  // q(y'|x,y) = [y' = y].
  static UserEditModel Identity(size_t num_contexts, size_t num_responses);

  size_t num_contexts() const { return table_.size(); }
  size_t num_responses() const {
    return table_.empty() ? 0 : table_.front().size();
  }
  const Distribution& row(size_t x, size_t y) const { return table_[x][y]; }
  double prob(size_t x, size_t y, size_t y_edit) const {
    return table_[x][y][y_edit];
  }
  const Rows& table() const { return table_; }
  double gamma_floor(size_t x) const { return gamma_floor_.at(x); }
  const std::vector<double>& gamma_floors() const { return gamma_floor_; }
  size_t optimal_response(size_t x) const { return optimal_response_.at(x); }
  const std::vector<size_t>& optimal_responses() const {
    return optimal_response_;
  }

 private:
  Rows table_;
  std::vector<double> gamma_floor_;
  std::vector<size_t> optimal_response_;
};

enum class MetricKind {
  kIndicator,          // delta * [y != y']
  kWeightedIndicator,  // weight(x, y) * [y != y']
  kLevenshteinRaw,     // min(levenshtein, c_max)
  kLevenshteinNormalized,  // min(levenshtein / max(1, |y|), c_max)
};

const char* MetricKindName(MetricKind kind);
std::optional<MetricKind> ParseMetricKind(const std::string& name);

struct EditMetric {
  MetricKind kind = MetricKind::kIndicator;
  double c_max = 1.0;
  double delta = 1.0;  // kIndicator only
  Table weights;       // kWeightedIndicator only, [context][response]

  static EditMetric Indicator(double delta);
  static EditMetric WeightedIndicator(Table weights);
  static EditMetric LevenshteinRaw(double c_max);
  static EditMetric LevenshteinNormalized(double c_max);
};

// Token-level edit distance with unit insert/delete/substitute costs.
size_t Levenshtein(std::span<const std::string> a,
                   std::span<const std::string> b);

// Delta_edit(y, y_edit) in context x. Throws ConfigError when a Levenshtein
// metric meets a response without tokens.
double EditCost(const EditMetric& metric, const ResponseSpace& responses,
                size_t x, size_t y, size_t y_edit);

// Immutable bundle of rho, pi_ref, q, Delta_edit and beta over fixed
// spaces. Edit costs and expected costs are tabulated at construction.
class Environment {
 public:
  Environment(ContextSpace contexts, ResponseSpace responses, Distribution rho,
              Policy pi_ref, UserEditModel user, EditMetric metric,
              double beta);

  // Same spaces, rho, pi_ref and metric; new user and beta.
  Environment WithUser(UserEditModel user, double beta) const;

  const ContextSpace& contexts() const { return contexts_; }
  const ResponseSpace& responses() const { return responses_; }
  size_t num_contexts() const { return contexts_.size(); }
  size_t num_responses() const { return responses_.size(); }
  const Distribution& rho() const { return rho_; }
  const Policy& pi_ref() const { return pi_ref_; }
  const UserEditModel& user() const { return user_; }
  const EditMetric& metric() const { return metric_; }
  double beta() const { return beta_; }
  double c_max() const { return metric_.c_max; }

  double edit_cost(size_t x, size_t y, size_t y_edit) const {
    return edit_costs_[x][y][y_edit];
  }
  // c(x, y) = E_{y' ~ q(.|x,y)} Delta_edit(y, y').
  double cost(size_t x, size_t y) const { return expected_cost_[x][y]; }
  const Table& cost_table() const { return expected_cost_; }

 private:
  ContextSpace contexts_;
  ResponseSpace responses_;
  Distribution rho_;
  Policy pi_ref_;
  UserEditModel user_;
  EditMetric metric_;
  double beta_;
  std::vector<Table> edit_costs_;
  Table expected_cost_;
};

double ExpectedCost(const Environment& env, size_t x, size_t y);

// (q o pi)(y'|x) = sum_y q(y'|x,y) pi(y|x).
Policy ComposeUser(const UserEditModel& user, const Policy& pi);

double TvDistance(std::span<const double> p, std::span<const double> r);
double TvDistance(const Distribution& p, const Distribution& r);

// D(a, b) = E_{x ~ rho} TV(a(.|x), b(.|x)).
double ExpectedTv(const Distribution& rho, const Policy& a, const Policy& b);
double ExpectedTv(const Environment& env, const Policy& a, const Policy& b);

struct EditRecord {
  size_t x = 0;
  size_t y = 0;
  size_t y_edit = 0;
  double cost = 0.0;

  friend bool operator==(const EditRecord&, const EditRecord&) = default;
};

struct EditDataset {
  std::vector<EditRecord> records;
  uint64_t seed = 0;

  size_t size() const { return records.size(); }
  friend bool operator==(const EditDataset&, const EditDataset&) = default;
};

// n i.i.d. records x ~ rho, y ~ pi_ref(.|x), y' ~ q(.|x,y) from the stream
// (seed, "offline_log").
EditDataset SampleLog(const Environment& env, size_t n, uint64_t seed);
// Same, responses from `behavior`, drawing from a caller-owned stream.
EditDataset SampleLog(const Environment& env, const Policy& behavior,
                      size_t n, RngStream& rng);

}  // namespace editlab

#endif  // EDITLAB_ENV_CORE_H_
