#ifndef EDITLAB_HARNESS_H_
#define EDITLAB_HARNESS_H_

// Experiment orchestration: build train/test environments, sample the
// offline log, fit every requested method, play the online phase and write
// run traces plus a summary. Also the invariant battery behind `verify` and
// the grid sweep.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "editlab/env_core.h"
#include "editlab/io.h"
#include "editlab/objectives.h"
#include "editlab/offline_learners.h"
#include "editlab/online_learners.h"
#include "editlab/user_models.h"

namespace editlab {

// Offline kinds: base, sft, dpo, rl, early_ensemble. Online kind:
// epoch_supervised.
struct MethodSpec {
  std::string kind;
  std::string label;                  // defaults to kind
  std::optional<double> beta;         // defaults to the train env's beta
  // Weight inside the preference sigmoid (dpo, early_ensemble). 1 is the
  // classifier whose population optimum is pi* at the environment's beta.
  double pref_beta = 1.0;
  std::optional<double> v_max;        // defaults to ExperimentConfig::v_max
  double lambda = 1.0;                // early_ensemble
  // epoch_supervised
  std::optional<double> log_pi_size;  // defaults to ln(1e4)
  double delta = 0.1;
  bool cumulative = false;

  bool IsOffline() const;
};

struct LateEnsembleSpec {
  bool enabled = true;
  std::optional<double> alpha;        // defaults to c_max
  std::vector<std::string> members;   // labels; empty = every offline fit
                                      // except base
  std::string label = "late_ensemble";
};

struct ExperimentConfig {
  Json environment;                   // resolved environment spec
  Json train_user = Json::object();   // merge patch onto environment.user
  Json test_user = Json::object();
  size_t n = 0;
  size_t horizon = 1;
  std::vector<MethodSpec> methods;
  LateEnsembleSpec late_ensemble;
  std::vector<uint64_t> seeds;
  std::filesystem::path out_dir;
  std::optional<double> v_max;        // defaults to 4 c_max
  OptimizerSettings opt;              // step size comes from each loss
  ConfidenceSettings confidence;      // c_max filled from the env
  size_t cost_class_perturbed = 8;
  double cost_class_scale = 0.2;

  void Check() const;
};

ExperimentConfig ParseExperimentConfig(const Json& j,
                                       const std::filesystem::path& base_dir);
Json ExperimentConfigToJson(const ExperimentConfig& config);

struct EnvironmentPair {
  Environment train;
  Environment test;
};

// Train/test environments of a config document. Accepts an experiment
// config or a bare environment spec (train = test).
EnvironmentPair BuildEnvironments(const ExperimentConfig& config);
EnvironmentPair LoadEnvironments(const Json& doc,
                                 const std::filesystem::path& base_dir);

struct SummaryRow {
  std::string method;
  double mean_cost = 0.0;    // mean over seeds of (1/T) sum c_t
  double std_cost = 0.0;     // sample std over seeds
  double mean_subopt = 0.0;  // mean over seeds of (1/T) sum SubOpt_t
  double max_subopt = 0.0;   // mean_cost - best mean_cost in the setting
};

// Fills max_subopt from mean_cost; exact ties share the zero.
void FillGaps(std::vector<SummaryRow>& rows);

struct SeedResult {
  uint64_t seed = 0;
  std::vector<RunRecord> runs;                   // method order
  std::map<std::string, Policy> fitted;          // offline policies
  std::map<std::string, FitResult> fit_details;  // trained ones
};

struct ExperimentResult {
  std::vector<SummaryRow> summary;
  std::vector<SeedResult> seeds;
  Json summary_doc;
};

// Runs the whole protocol. When config.out_dir is nonempty writes
// config.json, summary.json and seed_<S>/run.csv there. Throws
// ValidationError if either environment breaks the balance equation by
// more than 1e-8 (after writing a summary carrying the report).
ExperimentResult RunExperiment(const ExperimentConfig& config);

// Fits one offline method on a log drawn from `train`.
Policy FitOfflineMethod(const MethodSpec& method, const Environment& train,
                        const EditDataset& data, const ExperimentConfig& config,
                        FitResult* details = nullptr);

struct CheckResult {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool pass = false;
  std::string note;
};

struct VerifyReport {
  ValidationReport validation;
  std::vector<CheckResult> checks;

  bool AllPass() const;
  Json ToJson() const;
};

// Max over |sigmoid - mechanistic| over every triple with a defined
// preference.
double BtAgreementResidual(const Environment& env);

// Per-context grid search of the regularized objective over the simplex
// with the given number of steps per axis. Returns the minimizing policy.
Policy GridSearchOptimalPolicy(const Environment& env, size_t steps);

// Balance, steady state, contraction, gamma floor, Bradley-Terry agreement,
// closed form vs grid search, and both TV-to-suboptimality inequalities.
VerifyReport Verify(const Environment& env);

struct SweepConfig {
  Json base;                                  // experiment config document
  std::vector<std::pair<std::string, std::vector<Json>>> grid;  // dot paths
  size_t workers = 1;
  std::filesystem::path out_dir;
  std::filesystem::path base_dir;
};

SweepConfig ParseSweepConfig(const Json& j,
                             const std::filesystem::path& base_dir);

struct SweepCell {
  size_t index = 0;
  Json params;
  std::filesystem::path out_dir;
  bool ok = false;
  std::string error;
  std::vector<SummaryRow> summary;
};

// Cartesian product of the grid axes; cells run in parallel. Writes
// manifest.csv (one row per cell and seed) and sweep_summary.json.
std::vector<SweepCell> RunSweep(const SweepConfig& config);

// Sets a value at a dot-separated path ("environment.user.w",
// "methods.1.lambda"), creating objects as needed.
void SetByPath(Json& doc, const std::string& dot_path, const Json& value);

}  // namespace editlab

#endif  // EDITLAB_HARNESS_H_
