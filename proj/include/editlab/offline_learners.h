#ifndef EDITLAB_OFFLINE_LEARNERS_H_
#define EDITLAB_OFFLINE_LEARNERS_H_

// Offline learners over a deployment log: supervised fine-tuning on the
// edits, DPO on edit-derived preferences, least-squares cost regression with
// a pessimistic KL-regularized policy, and the early (loss-level) ensemble.
//
// Trainable policies live in a clipped log-linear residual class
//
//   pi_theta(y|x) = pi_ref(y|x) exp(theta(x,y)) / sum_y' pi_ref(y'|x) exp(theta(x,y'))
//
// with theta clipped to [-v_max/(2 beta), v_max/(2 beta)], which bounds
// |log pi_theta/pi_ref| by v_max/beta.

#include <cstdint>
#include <string>
#include <vector>

#include "editlab/env_core.h"

namespace editlab {

struct ClassParams {
  double v_max = 1.0;
  double beta = 1.0;

  double clip() const { return v_max / (2.0 * beta); }
};

struct ResidualPolicyParams {
  Table theta;
  ClassParams cls;
};

Policy PolicyFromParams(const Policy& pi_ref, const Table& theta);
// True when some theta inside the clip box reproduces `target` exactly.
bool IsRealizable(const Policy& target, const Policy& pi_ref,
                  const ClassParams& cls);

struct OptimizerSettings {
  double step_size = 1.0;
  size_t max_iterations = 100000;
  double tolerance = 1e-8;

  void Check() const;
};

struct FitResult {
  Policy policy;
  Table theta;
  size_t iterations = 0;
  double final_loss = 0.0;
  bool converged = false;
};

// Negated average log-likelihood of the edited responses.
class SftLoss {
 public:
  SftLoss(const EditDataset& data, const Policy& pi_ref);

  double Value(const Table& theta) const;
  Table Gradient(const Table& theta) const;
  // Upper bound on the Hessian's largest eigenvalue.
  static double Curvature() { return 0.5; }

 private:
  Policy pi_ref_;
  Table weight_;  // count(x, y') / n
};

struct PreferenceRecord {
  size_t x = 0;
  size_t y_tilde = 0;
  size_t y_tilde_prime = 0;
  int z = 1;

  friend bool operator==(const PreferenceRecord&,
                         const PreferenceRecord&) = default;
};

struct PreferenceDataset {
  std::vector<PreferenceRecord> records;
  uint64_t seed = 0;

  size_t size() const { return records.size(); }
  friend bool operator==(const PreferenceDataset&,
                         const PreferenceDataset&) = default;
};

// z ~ Unf{+1,-1} per record from the stream (seed, "preferences"); z = +1
// keeps (y, y'), z = -1 swaps them.
PreferenceDataset BuildPreferences(const EditDataset& data, uint64_t seed);

// Negated average of log sigma(z beta [h(y~') - h(y~)]) with
// h(y) = log pi_theta(y|x)/pi_ref(y|x); the normalizer cancels so only
// theta differences enter.
class PreferenceLoss {
 public:
  PreferenceLoss(const PreferenceDataset& prefs, size_t num_contexts,
                 size_t num_responses, double beta);

  double Value(const Table& theta) const;
  Table Gradient(const Table& theta) const;
  double Curvature() const { return 0.5 * beta_ * beta_; }

 private:
  struct Group {
    size_t x, winner, loser;
    double weight;
  };
  size_t num_contexts_, num_responses_;
  double beta_;
  double tie_weight_ = 0.0;  // records whose two responses coincide
  std::vector<Group> groups_;
};

// PreferenceLoss + lambda * SftLoss.
class CombinedLoss {
 public:
  CombinedLoss(PreferenceLoss pref, SftLoss sft, double lambda);

  double Value(const Table& theta) const;
  Table Gradient(const Table& theta) const;
  double Curvature() const {
    return pref_.Curvature() + lambda_ * SftLoss::Curvature();
  }

 private:
  PreferenceLoss pref_;
  SftLoss sft_;
  double lambda_;
};

// Step size 1/L from each loss's curvature bound; other fields default.
OptimizerSettings DefaultSftSettings();
OptimizerSettings DefaultDpoSettings(double beta);
OptimizerSettings DefaultEarlyEnsembleSettings(double beta, double lambda);

// Empirical conditional frequencies of y' given x; contexts without data
// copy `fallback`.
Policy TabularMle(const EditDataset& data, const Policy& fallback);

// Projected full-batch gradient descent in the clipped class.
FitResult FitSft(const EditDataset& data, const Policy& pi_ref,
                 const ClassParams& cls, const OptimizerSettings& opt);
FitResult FitDpo(const PreferenceDataset& prefs, const Policy& pi_ref,
                 double beta, const ClassParams& cls,
                 const OptimizerSettings& opt);
FitResult FitEarlyEnsemble(const EditDataset& data,
                           const PreferenceDataset& prefs,
                           const Policy& pi_ref, double beta, double lambda,
                           const ClassParams& cls,
                           const OptimizerSettings& opt);

// Finite class of bounded cost tables; member ids are their indices.
struct CostModelClass {
  std::vector<Table> members;

  size_t size() const { return members.size(); }
};

// Member 0 is `true_cost`; then `num_perturbed` copies with independent
// U(-scale, scale) noise per entry clamped to [0, c_max]; then the constant
// tables 0, c_max/2, c_max.
CostModelClass DefaultCostClass(const Table& true_cost, double c_max,
                                size_t num_perturbed, double scale,
                                uint64_t seed);

struct ConfidenceSettings {
  double b = 1.0;
  double delta = 0.1;
  double c_max = 1.0;

  double Radius(size_t class_size) const;
};

struct CostFit {
  size_t f_hat = 0;
  double radius = 0.0;
  std::vector<size_t> confidence_ids;
  // sum_i (f(x_i,y_i) - c_i)^2 per member.
  std::vector<double> sse;
};

// Least squares over the finite class, ties to the lowest id, plus the
// confidence set {f : sum_i (f - f_hat)^2(x_i,y_i) <= b c_max^2 log(|F|/delta)}.
CostFit FitCost(const EditDataset& data, const CostModelClass& fclass,
                const ConfidenceSettings& conf);

// Pointwise max over the confidence set.
Table PessimisticCost(const CostModelClass& fclass, const CostFit& fit);

struct PessimisticResult {
  Policy policy;
  Table f_bar;
  CostFit fit;
};

// pi(y|x) proportional to pi_ref(y|x) exp(-f_bar(x,y)/beta) for every
// context.
PessimisticResult FitPessimisticRl(const EditDataset& data,
                                   const CostModelClass& fclass,
                                   const Distribution& rho,
                                   const Policy& pi_ref, double beta,
                                   const ConfidenceSettings& conf);

}  // namespace editlab

#endif  // EDITLAB_OFFLINE_LEARNERS_H_
