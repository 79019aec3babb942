// Command-line front end: verify, gen-data, train, evaluate, run, sweep.
//
// Exit codes: 0 success, 1 validation failure, 2 I/O failure, 3 config error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "editlab/error.h"
#include "editlab/harness.h"
#include "editlab/io.h"

namespace fs = std::filesystem;
using namespace editlab;

namespace {

constexpr int kOk = 0;
constexpr int kValidationFailure = 1;
constexpr int kIoFailure = 2;
constexpr int kConfigError = 3;

struct Common {
  std::string config;
  std::optional<uint64_t> seed;
  std::string out;
};

void AddCommon(CLI::App* cmd, Common& c, bool config_required = true) {
  auto* opt = cmd->add_option("--config", c.config, "config document (JSON)");
  if (config_required) opt->required();
  cmd->add_option("--seed", c.seed, "random seed");
  cmd->add_option("--out", c.out, "output path");
}

fs::path BaseDir(const std::string& config) {
  return fs::path(config).parent_path();
}

void Emit(const std::string& out, const std::string& text) {
  if (out.empty()) {
    std::cout << text;
  } else {
    WriteTextFile(out, text);
  }
}

int CmdVerify(const Common& c) {
  const Json doc = ReadJsonFile(c.config);
  const auto envs = LoadEnvironments(doc, BaseDir(c.config));
  const VerifyReport train = Verify(envs.train);
  Json out = {{"pass", train.AllPass()}, {"environment", train.ToJson()}};
  bool pass = train.AllPass();
  if (doc.is_object() && doc.contains("environment")) {
    const VerifyReport test = Verify(envs.test);
    out = {{"pass", train.AllPass() && test.AllPass()},
           {"train", train.ToJson()},
           {"test", test.ToJson()}};
    pass = pass && test.AllPass();
  }
  Emit(c.out, DumpJson(out));
  if (!c.out.empty()) {
    std::cout << (pass ? "verify: all checks pass\n" : "verify: FAILED\n");
  }
  return pass ? kOk : kValidationFailure;
}

int CmdGenData(const Common& c, size_t n) {
  const auto envs = LoadEnvironments(ReadJsonFile(c.config), BaseDir(c.config));
  const EditDataset data = SampleLog(envs.train, n, c.seed.value_or(0));
  Emit(c.out, SerializeDataset(data));
  return kOk;
}

int CmdTrain(const Common& c, const std::string& data_path,
             const std::string& method, std::optional<double> lambda,
             std::optional<double> v_max, std::optional<double> beta,
             std::optional<double> pref_beta) {
  const Json doc = ReadJsonFile(c.config);
  const auto envs = LoadEnvironments(doc, BaseDir(c.config));
  ExperimentConfig config;
  if (doc.contains("environment")) {
    config = ParseExperimentConfig(doc, BaseDir(c.config));
  }
  EditDataset data = ParseDataset(ReadTextFile(data_path));
  data.seed = c.seed.value_or(0);
  MethodSpec m;
  m.kind = method;
  m.label = method;
  if (!m.IsOffline()) throw ConfigError("unknown offline method '" + method + "'");
  if (lambda) m.lambda = *lambda;
  m.v_max = v_max;
  m.beta = beta;
  if (pref_beta) m.pref_beta = *pref_beta;
  for (const auto& r : data.records) {
    if (r.x >= envs.train.num_contexts() || r.y >= envs.train.num_responses() ||
        r.y_edit >= envs.train.num_responses()) {
      throw ConfigError("dataset index outside the environment's spaces");
    }
  }
  FitResult fit;
  PolicyFile file;
  file.policy = FitOfflineMethod(m, envs.train, data, config, &fit);
  file.meta = {{"method", method},
               {"n", data.size()},
               {"seed", data.seed},
               {"beta", beta.value_or(envs.train.beta())}};
  if (!fit.theta.empty()) {
    file.meta["iterations"] = fit.iterations;
    file.meta["converged"] = fit.converged;
    file.meta["final_loss"] = fit.final_loss;
  }
  Emit(c.out, SerializePolicyFile(file, envs.train));
  return kOk;
}

int CmdEvaluate(const Common& c, const std::string& policy_path,
                size_t horizon) {
  const auto envs = LoadEnvironments(ReadJsonFile(c.config), BaseDir(c.config));
  const Environment& env = envs.test;
  const PolicyFile file = ParsePolicyFile(ReadTextFile(policy_path), env);
  const auto opt = OptimalPolicy(env);
  const auto method =
      file.meta.is_object() && file.meta.contains("method")
          ? file.meta["method"].get<std::string>()
          : std::string("policy");
  const RunRecord run =
      RunFixedPolicy(env, file.policy, method, horizon, c.seed.value_or(0));
  Json report = {{"method", method},
                 {"subopt", SubOpt(env, opt, file.policy)},
                 {"subopt_unregularized", SubOptUnreg(env, opt, file.policy)},
                 {"j_beta", JBeta(env, file.policy, env.beta())},
                 {"j_beta_star", opt.j_beta_star},
                 {"tv_to_star", ExpectedTv(env, file.policy, opt.pi_star)},
                 {"T", horizon},
                 {"mean_cost", run.mean_cost()}};
  std::cout << DumpJson(report);
  if (!c.out.empty()) WriteTextFile(c.out, SerializeRunRecord(run));
  return kOk;
}

int CmdRun(const Common& c) {
  ExperimentConfig config =
      ParseExperimentConfig(ReadJsonFile(c.config), BaseDir(c.config));
  if (c.seed) config.seeds = {*c.seed};
  if (!c.out.empty()) config.out_dir = c.out;
  const ExperimentResult result = RunExperiment(config);
  std::printf("%-20s %14s %14s %14s %14s\n", "method", "mean_cost",
              "std_cost", "mean_subopt", "max_subopt");
  for (const auto& r : result.summary) {
    std::printf("%-20s %14.6g %14.6g %14.6g %14.6g\n", r.method.c_str(),
                r.mean_cost, r.std_cost, r.mean_subopt, r.max_subopt);
  }
  return kOk;
}

int CmdSweep(const Common& c, std::optional<size_t> workers) {
  SweepConfig config = ParseSweepConfig(ReadJsonFile(c.config), BaseDir(c.config));
  if (!c.out.empty()) config.out_dir = c.out;
  if (workers) config.workers = *workers;
  if (c.seed) SetByPath(config.base, "seeds", Json::array({*c.seed}));
  const auto cells = RunSweep(config);
  size_t failed = 0;
  for (const auto& cell : cells) {
    if (!cell.ok) {
      ++failed;
      std::fprintf(stderr, "cell %zu failed: %s\n", cell.index,
                   cell.error.c_str());
    }
  }
  std::printf("%zu cells, %zu failed\n", cells.size(), failed);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"editlab: learning from user edits on tabular instances"};
  app.require_subcommand(1);

  Common verify, gen, train, eval, run, sweep;
  size_t n = 1000;
  std::string data_path, method, policy_path;
  std::optional<double> lambda, v_max, beta, pref_beta;
  size_t horizon = 1000;
  std::optional<size_t> workers;

  auto* c_verify = app.add_subcommand("verify", "run the invariant battery");
  AddCommon(c_verify, verify);
  auto* c_gen = app.add_subcommand("gen-data", "sample an offline edit log");
  AddCommon(c_gen, gen);
  c_gen->add_option("--n", n, "number of records");
  auto* c_train = app.add_subcommand("train", "fit one offline method");
  AddCommon(c_train, train);
  c_train->add_option("--data", data_path, "edit log CSV")->required();
  c_train->add_option("--method", method, "base|sft|dpo|rl|early_ensemble")
      ->required();
  c_train->add_option("--lambda", lambda, "early-ensemble SFT weight");
  c_train->add_option("--v-max", v_max, "policy class bound");
  c_train->add_option("--beta", beta, "regularization strength");
  c_train->add_option("--pref-beta", pref_beta, "weight inside the DPO sigmoid");
  auto* c_eval = app.add_subcommand("evaluate", "score a policy file");
  AddCommon(c_eval, eval);
  c_eval->add_option("--policy", policy_path, "policy JSON")->required();
  c_eval->add_option("--T", horizon, "online rounds");
  auto* c_run = app.add_subcommand("run", "run an experiment config");
  AddCommon(c_run, run);
  auto* c_sweep = app.add_subcommand("sweep", "run a parameter grid");
  AddCommon(c_sweep, sweep);
  c_sweep->add_option("--workers", workers, "parallel cells");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*c_verify) return CmdVerify(verify);
    if (*c_gen) return CmdGenData(gen, n);
    if (*c_train) return CmdTrain(train, data_path, method, lambda, v_max, beta,
                                  pref_beta);
    if (*c_eval) return CmdEvaluate(eval, policy_path, horizon);
    if (*c_run) return CmdRun(run);
    if (*c_sweep) return CmdSweep(sweep, workers);
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "validation failure: %s\n", e.what());
    return kValidationFailure;
  } catch (const IoError& e) {
    std::fprintf(stderr, "I/O failure: %s\n", e.what());
    return kIoFailure;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const ParameterError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  } catch (const Json::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kConfigError;
  }
  return kOk;
}
