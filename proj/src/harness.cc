#include "editlab/harness.h"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <ctime>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "editlab/error.h"

namespace editlab {
namespace fs = std::filesystem;

namespace {

constexpr double kAbortResidual = 1e-8;
const double kDefaultLogPiSize = std::log(1e4);

const std::set<std::string>& OfflineKinds() {
  static const std::set<std::string> kinds = {"base", "sft", "dpo", "rl",
                                              "early_ensemble"};
  return kinds;
}

MethodSpec ParseMethod(const Json& j) {
  MethodSpec m;
  if (j.is_string()) {
    m.kind = j.get<std::string>();
  } else if (j.is_object()) {
    m.kind = JsonGet<std::string>(j, "kind");
    m.label = JsonGetOr<std::string>(j, "label", "");
    if (j.contains("beta")) m.beta = JsonGet<double>(j, "beta");
    if (j.contains("v_max")) m.v_max = JsonGet<double>(j, "v_max");
    m.pref_beta = JsonGetOr<double>(j, "pref_beta", m.pref_beta);
    m.lambda = JsonGetOr<double>(j, "lambda", m.lambda);
    if (j.contains("log_pi_size")) {
      m.log_pi_size = JsonGet<double>(j, "log_pi_size");
    }
    m.delta = JsonGetOr<double>(j, "delta", m.delta);
    m.cumulative = JsonGetOr<bool>(j, "cumulative", m.cumulative);
  } else {
    throw ConfigError("method entries must be names or objects");
  }
  if (!OfflineKinds().count(m.kind) && m.kind != "epoch_supervised") {
    throw ConfigError("unknown method '" + m.kind + "'");
  }
  if (m.label.empty()) m.label = m.kind;
  return m;
}

Json MethodToJson(const MethodSpec& m) {
  Json j = {{"kind", m.kind}, {"label", m.label}};
  if (m.beta) j["beta"] = *m.beta;
  if (m.v_max) j["v_max"] = *m.v_max;
  if (m.kind == "dpo" || m.kind == "early_ensemble") {
    j["pref_beta"] = m.pref_beta;
  }
  if (m.kind == "early_ensemble") j["lambda"] = m.lambda;
  if (m.kind == "epoch_supervised") {
    if (m.log_pi_size) j["log_pi_size"] = *m.log_pi_size;
    j["delta"] = m.delta;
    j["cumulative"] = m.cumulative;
  }
  return j;
}

Json ReportToJson(const ValidationReport& r) {
  return {{"balance_residual", r.balance_residual},
          {"gamma_certified", r.gamma_certified},
          {"steady_state_tv", r.steady_state_tv},
          {"contraction_margin", r.contraction_margin},
          {"contraction_slack", r.contraction_slack},
          {"probes_checked", r.probes_checked}};
}

Json DiagnosticsToJson(const Diagnostics& d) {
  return {{"v_max", d.v_max},
          {"c_bar_star", d.c_bar_star},
          {"c_pref_estimate", d.c_pref_estimate},
          {"eta_max", d.eta_max},
          {"eta_bar_max", d.eta_bar_max}};
}

Json EnvSummary(const Environment& env) {
  return {{"beta", env.beta()},
          {"c_max", env.c_max()},
          {"num_contexts", env.num_contexts()},
          {"num_responses", env.num_responses()},
          {"gamma_floor", env.user().gamma_floors()}};
}

double MinGammaFloor(const Environment& env) {
  const auto& g = env.user().gamma_floors();
  return *std::min_element(g.begin(), g.end());
}

Json RowToJson(const SummaryRow& r) {
  return {{"method", r.method},
          {"mean_cost", r.mean_cost},
          {"std_cost", r.std_cost},
          {"mean_subopt", r.mean_subopt},
          {"max_subopt", r.max_subopt}};
}

std::string Timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(
      std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string CsvQuote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

bool MethodSpec::IsOffline() const { return OfflineKinds().count(kind) > 0; }

void ExperimentConfig::Check() const {
  if (horizon < 1) throw ConfigError("T must be >= 1");
  if (methods.empty()) throw ConfigError("at least one method is required");
  if (seeds.empty()) throw ConfigError("at least one seed is required");
  std::set<std::string> labels;
  for (const auto& m : methods) {
    if (!labels.insert(m.label).second) {
      throw ConfigError("duplicate method label '" + m.label + "'");
    }
  }
  if (late_ensemble.enabled && labels.count(late_ensemble.label)) {
    throw ConfigError("late ensemble label clashes with a method label");
  }
  for (const auto& member : late_ensemble.members) {
    auto it = std::find_if(methods.begin(), methods.end(),
                           [&](const auto& m) { return m.label == member; });
    if (it == methods.end() || !it->IsOffline()) {
      throw ConfigError("late ensemble member '" + member +
                        "' is not an offline method");
    }
  }
  if (v_max && !(*v_max > 0.0)) throw ConfigError("v_max must be positive");
  try {
    opt.Check();
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }
  if (!(confidence.b > 0.0) || !(confidence.delta > 0.0 && confidence.delta < 1.0)) {
    throw ConfigError("confidence needs b > 0 and delta in (0, 1)");
  }
}

ExperimentConfig ParseExperimentConfig(const Json& doc,
                                       const fs::path& base_dir) {
  const Json j = ResolveFileRef(doc, base_dir);
  if (!j.is_object()) throw ConfigError("experiment config must be an object");
  ExperimentConfig c;
  if (!j.contains("environment")) throw ConfigError("missing key 'environment'");
  c.environment = ResolveFileRef(j.at("environment"), base_dir);
  c.train_user = JsonGetOr<Json>(j, "train_user", Json::object());
  c.test_user = JsonGetOr<Json>(j, "test_user", Json::object());
  if (j.contains("n")) {
    const auto n = JsonGet<long long>(j, "n");
    if (n < 0) throw ConfigError("n must be >= 0");
    c.n = static_cast<size_t>(n);
  }
  const auto horizon = JsonGetOr<long long>(j, "T", 1);
  if (horizon < 1) throw ConfigError("T must be >= 1");
  c.horizon = static_cast<size_t>(horizon);
  for (const auto& m : JsonGetOr<Json>(j, "methods", Json::array())) {
    c.methods.push_back(ParseMethod(m));
  }
  if (j.contains("late_ensemble")) {
    const Json& le = j.at("late_ensemble");
    if (le.is_boolean()) {
      c.late_ensemble.enabled = le.get<bool>();
    } else {
      c.late_ensemble.enabled = JsonGetOr<bool>(le, "enabled", true);
      if (le.contains("alpha")) c.late_ensemble.alpha = JsonGet<double>(le, "alpha");
      c.late_ensemble.members =
          JsonGetOr<std::vector<std::string>>(le, "members", {});
      c.late_ensemble.label =
          JsonGetOr<std::string>(le, "label", c.late_ensemble.label);
    }
  }
  if (j.contains("seeds")) {
    c.seeds = JsonGet<std::vector<uint64_t>>(j, "seeds");
  } else if (j.contains("seed")) {
    c.seeds = {JsonGet<uint64_t>(j, "seed")};
  }
  if (j.contains("out")) c.out_dir = JsonGet<std::string>(j, "out");
  if (j.contains("v_max")) c.v_max = JsonGet<double>(j, "v_max");
  const Json opt = JsonGetOr<Json>(j, "optimizer", Json::object());
  c.opt.max_iterations =
      JsonGetOr<size_t>(opt, "max_iterations", c.opt.max_iterations);
  c.opt.tolerance = JsonGetOr<double>(opt, "tolerance", c.opt.tolerance);
  const Json conf = JsonGetOr<Json>(j, "confidence", Json::object());
  c.confidence.b = JsonGetOr<double>(conf, "b", c.confidence.b);
  c.confidence.delta = JsonGetOr<double>(conf, "delta", c.confidence.delta);
  const Json cc = JsonGetOr<Json>(j, "cost_class", Json::object());
  c.cost_class_perturbed =
      JsonGetOr<size_t>(cc, "perturbed", c.cost_class_perturbed);
  c.cost_class_scale = JsonGetOr<double>(cc, "scale", c.cost_class_scale);
  c.Check();
  return c;
}

Json ExperimentConfigToJson(const ExperimentConfig& c) {
  Json methods = Json::array();
  for (const auto& m : c.methods) methods.push_back(MethodToJson(m));
  Json le = {{"enabled", c.late_ensemble.enabled},
             {"members", c.late_ensemble.members},
             {"label", c.late_ensemble.label}};
  if (c.late_ensemble.alpha) le["alpha"] = *c.late_ensemble.alpha;
  Json j = {{"environment", c.environment},
            {"train_user", c.train_user},
            {"test_user", c.test_user},
            {"n", c.n},
            {"T", c.horizon},
            {"methods", methods},
            {"late_ensemble", le},
            {"seeds", c.seeds},
            {"optimizer",
             {{"max_iterations", c.opt.max_iterations},
              {"tolerance", c.opt.tolerance}}},
            {"confidence", {{"b", c.confidence.b}, {"delta", c.confidence.delta}}},
            {"cost_class",
             {{"perturbed", c.cost_class_perturbed},
              {"scale", c.cost_class_scale}}}};
  if (c.v_max) j["v_max"] = *c.v_max;
  return j;
}

namespace {

Json WithUserPatch(const Json& env_spec, const Json& patch) {
  Json spec = env_spec;
  if (!patch.empty()) {
    if (!spec.contains("user")) spec["user"] = Json::object();
    spec["user"].merge_patch(patch);
  }
  return spec;
}

}  // namespace

EnvironmentPair BuildEnvironments(const ExperimentConfig& config) {
  return {ParseEnvironment(WithUserPatch(config.environment, config.train_user)),
          ParseEnvironment(WithUserPatch(config.environment, config.test_user))};
}

EnvironmentPair LoadEnvironments(const Json& doc, const fs::path& base_dir) {
  const Json j = ResolveFileRef(doc, base_dir);
  if (j.is_object() && j.contains("environment")) {
    const Json env = ResolveFileRef(j.at("environment"), base_dir);
    const Json train = JsonGetOr<Json>(j, "train_user", Json::object());
    const Json test = JsonGetOr<Json>(j, "test_user", Json::object());
    return {ParseEnvironment(WithUserPatch(env, train), base_dir),
            ParseEnvironment(WithUserPatch(env, test), base_dir)};
  }
  Environment env = ParseEnvironment(j, base_dir);
  return {env, env};
}

void FillGaps(std::vector<SummaryRow>& rows) {
  if (rows.empty()) return;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& r : rows) best = std::min(best, r.mean_cost);
  for (auto& r : rows) r.max_subopt = r.mean_cost - best;
}

Policy FitOfflineMethod(const MethodSpec& method, const Environment& train,
                        const EditDataset& data, const ExperimentConfig& config,
                        FitResult* details) {
  const double beta = method.beta.value_or(train.beta());
  const double v_max =
      method.v_max.value_or(config.v_max.value_or(4.0 * train.c_max()));
  const ClassParams cls{v_max, beta};
  if (method.kind == "base" || data.size() == 0) return train.pi_ref();

  auto settings = [&](OptimizerSettings s) {
    s.max_iterations = config.opt.max_iterations;
    s.tolerance = config.opt.tolerance;
    return s;
  };
  auto keep = [&](FitResult r) {
    Policy p = r.policy;
    if (details) *details = std::move(r);
    return p;
  };
  if (method.kind == "sft") {
    return keep(FitSft(data, train.pi_ref(), cls, settings(DefaultSftSettings())));
  }
  if (method.kind == "dpo") {
    const auto prefs = BuildPreferences(data, data.seed);
    return keep(FitDpo(prefs, train.pi_ref(), method.pref_beta, cls,
                       settings(DefaultDpoSettings(method.pref_beta))));
  }
  if (method.kind == "early_ensemble") {
    const auto prefs = BuildPreferences(data, data.seed);
    return keep(FitEarlyEnsemble(
        data, prefs, train.pi_ref(), method.pref_beta, method.lambda, cls,
        settings(DefaultEarlyEnsembleSettings(method.pref_beta, method.lambda))));
  }
  if (method.kind == "rl") {
    const auto fclass =
        DefaultCostClass(train.cost_table(), train.c_max(),
                         config.cost_class_perturbed, config.cost_class_scale,
                         data.seed);
    ConfidenceSettings conf = config.confidence;
    conf.c_max = train.c_max();
    return FitPessimisticRl(data, fclass, train.rho(), train.pi_ref(), beta,
                            conf)
        .policy;
  }
  throw ConfigError("'" + method.kind + "' is not an offline method");
}

ExperimentResult RunExperiment(const ExperimentConfig& config) {
  config.Check();
  const auto envs = BuildEnvironments(config);
  const Environment& train = envs.train;
  const Environment& test = envs.test;
  const ValidationReport train_report = Validate(train);
  const ValidationReport test_report = Validate(test);
  const bool write = !config.out_dir.empty();

  ExperimentResult result;
  Json& doc = result.summary_doc;
  doc["environment"] = {{"train", EnvSummary(train)}, {"test", EnvSummary(test)}};
  doc["validation"] = {{"train", ReportToJson(train_report)},
                       {"test", ReportToJson(test_report)}};
  if (write) WriteTextFile(config.out_dir / "config.json",
                           DumpJson(ExperimentConfigToJson(config)));
  if (train_report.balance_residual > kAbortResidual ||
      test_report.balance_residual > kAbortResidual) {
    doc["status"] = "validation_failed";
    if (write) WriteTextFile(config.out_dir / "summary.json", DumpJson(doc));
    throw ValidationError(
        "balance residual " +
        FormatDouble(std::max(train_report.balance_residual,
                              test_report.balance_residual)) +
        " exceeds " + FormatDouble(kAbortResidual));
  }

  const auto opt = OptimalPolicy(test);
  std::vector<std::string> labels;
  for (const auto& m : config.methods) labels.push_back(m.label);
  std::vector<std::string> members = config.late_ensemble.members;
  if (members.empty()) {
    for (const auto& m : config.methods) {
      if (m.IsOffline() && m.kind != "base") members.push_back(m.label);
    }
  }
  const bool late = config.late_ensemble.enabled && !members.empty();
  if (late) labels.push_back(config.late_ensemble.label);

  std::vector<Policy> probes = {test.pi_ref()};
  Json per_seed = Json::array();
  for (const uint64_t seed : config.seeds) {
    SeedResult sr;
    sr.seed = seed;
    const EditDataset data = config.n == 0 ? EditDataset{{}, seed}
                                           : SampleLog(train, config.n, seed);
    for (const auto& m : config.methods) {
      if (m.IsOffline()) {
        FitResult fit;
        Policy pi = FitOfflineMethod(m, train, data, config, &fit);
        if (!fit.theta.empty()) sr.fit_details[m.label] = std::move(fit);
        sr.runs.push_back(RunFixedPolicy(test, pi, m.label, config.horizon, seed));
        probes.push_back(pi);
        sr.fitted.emplace(m.label, std::move(pi));
      } else {
        EpochOptions options;
        options.cumulative = m.cumulative;
        const auto schedule = MakeEpochSchedule(
            MinGammaFloor(test), m.log_pi_size.value_or(kDefaultLogPiSize),
            m.delta, config.horizon);
        RunRecord run = RunEpochSupervised(test, schedule, options, seed);
        run.method = m.label;
        for (auto& r : run.rounds) r.method = m.label;
        sr.runs.push_back(std::move(run));
      }
    }
    if (late) {
      std::vector<Policy> arms;
      for (const auto& label : members) arms.push_back(sr.fitted.at(label));
      const double alpha = config.late_ensemble.alpha.value_or(test.c_max());
      sr.runs.push_back(RunLateEnsemble(test, arms, config.horizon, alpha, seed,
                                        config.late_ensemble.label));
    }

    Json methods = Json::object();
    std::string csv = std::string(kRunCsvHeader) + "\n";
    for (const auto& run : sr.runs) {
      csv += SerializeRunRecord(run, false);
      Json mj = {{"mean_cost", run.mean_cost()},
                 {"total_regret", run.total_regret()},
                 {"final_subopt", run.rounds.back().subopt}};
      if (!run.arm_pulls.empty()) mj["arm_pulls"] = run.arm_pulls;
      if (auto it = sr.fit_details.find(run.method); it != sr.fit_details.end()) {
        mj["fit"] = {{"iterations", it->second.iterations},
                     {"converged", it->second.converged},
                     {"final_loss", it->second.final_loss}};
      }
      if (!run.epochs.empty()) {
        Json epochs = Json::array();
        for (const auto& e : run.epochs) {
          epochs.push_back({{"epoch", e.epoch},
                            {"rounds", e.rounds},
                            {"tv_to_star", e.tv_to_star},
                            {"subopt", e.subopt},
                            {"xi", e.xi}});
        }
        mj["epochs"] = std::move(epochs);
      }
      methods[run.method] = std::move(mj);
    }
    per_seed.push_back({{"seed", seed}, {"methods", std::move(methods)}});
    if (write) {
      WriteTextFile(config.out_dir / ("seed_" + std::to_string(seed)) / "run.csv",
                    csv);
    }
    result.seeds.push_back(std::move(sr));
  }

  const double k = static_cast<double>(config.seeds.size());
  for (size_t i = 0; i < labels.size(); ++i) {
    SummaryRow row;
    row.method = labels[i];
    std::vector<double> costs;
    for (const auto& sr : result.seeds) {
      costs.push_back(sr.runs[i].mean_cost());
      row.mean_subopt += sr.runs[i].total_regret() /
                         static_cast<double>(config.horizon) / k;
    }
    row.mean_cost = std::accumulate(costs.begin(), costs.end(), 0.0) / k;
    if (costs.size() > 1) {
      double ss = 0.0;
      for (double c : costs) ss += (c - row.mean_cost) * (c - row.mean_cost);
      row.std_cost = std::sqrt(ss / (k - 1.0));
    }
    result.summary.push_back(row);
  }
  FillGaps(result.summary);

  Json table = Json::array();
  for (const auto& r : result.summary) table.push_back(RowToJson(r));
  Json realizable = Json::object();
  for (const auto& m : config.methods) {
    if (m.kind == "base" || !m.IsOffline()) continue;
    const ClassParams cls{
        m.v_max.value_or(config.v_max.value_or(4.0 * train.c_max())),
        m.beta.value_or(train.beta())};
    realizable[m.label] = IsRealizable(opt.pi_star, test.pi_ref(), cls);
  }
  doc["status"] = "ok";
  doc["summary"] = std::move(table);
  doc["per_seed"] = std::move(per_seed);
  doc["diagnostics"] = DiagnosticsToJson(ComputeDiagnostics(test, probes));
  doc["realizable"] = std::move(realizable);
  doc["j_beta_star"] = opt.j_beta_star;
  if (write) WriteTextFile(config.out_dir / "summary.json", DumpJson(doc));
  return result;
}

bool VerifyReport::AllPass() const {
  return std::all_of(checks.begin(), checks.end(),
                     [](const CheckResult& c) { return c.pass; });
}

Json VerifyReport::ToJson() const {
  Json arr = Json::array();
  for (const auto& c : checks) {
    Json j = {{"name", c.name},
              {"value", c.value},
              {"threshold", c.threshold},
              {"pass", c.pass}};
    if (!c.note.empty()) j["note"] = c.note;
    arr.push_back(std::move(j));
  }
  return {{"pass", AllPass()},
          {"validation", ReportToJson(validation)},
          {"checks", std::move(arr)}};
}

double BtAgreementResidual(const Environment& env) {
  double worst = 0.0;
  for (size_t x = 0; x < env.num_contexts(); ++x) {
    for (size_t y = 0; y < env.num_responses(); ++y) {
      for (size_t y2 = 0; y2 < env.num_responses(); ++y2) {
        if (y == y2) continue;
        try {
          const auto p = BtProbability(env, x, y, y2);
          worst = std::max(worst, std::abs(p.sigmoid - p.mechanistic));
        } catch (const UndefinedPreferenceError&) {
        }
      }
    }
  }
  return worst;
}

namespace {

// Exhaustive search over compositions of `steps` into parts, where
// term[y][k] is the contribution of putting k/steps mass on response y.
void SearchSimplex(const std::vector<std::vector<double>>& term, size_t y,
                   size_t left, double partial, std::vector<size_t>& cur,
                   double& best, std::vector<size_t>& best_at) {
  if (partial >= best) return;
  if (y + 1 == term.size()) {
    const double v = partial + term[y][left];
    if (v < best) {
      best = v;
      cur[y] = left;
      best_at = cur;
    }
    return;
  }
  for (size_t k = 0; k <= left; ++k) {
    cur[y] = k;
    SearchSimplex(term, y + 1, left - k, partial + term[y][k], cur, best,
                  best_at);
  }
}

}  // namespace

Policy GridSearchOptimalPolicy(const Environment& env, size_t steps) {
  if (steps == 0) throw ParameterError("grid search: steps >= 1");
  const size_t ny = env.num_responses();
  const double h = 1.0 / static_cast<double>(steps);
  std::vector<Distribution> rows;
  for (size_t x = 0; x < env.num_contexts(); ++x) {
    std::vector<std::vector<double>> term(ny, std::vector<double>(steps + 1));
    for (size_t y = 0; y < ny; ++y) {
      const double ref = env.pi_ref().prob(x, y);
      for (size_t k = 1; k <= steps; ++k) {
        const double p = static_cast<double>(k) * h;
        term[y][k] = ref > 0.0 ? p * (env.cost(x, y) +
                                      env.beta() * std::log(p / ref))
                               : std::numeric_limits<double>::infinity();
      }
    }
    // Shift every row to a zero minimum so partial sums only grow and the
    // search can prune; the shift is a constant and leaves the argmin alone.
    for (auto& t : term) {
      const double m = *std::min_element(t.begin(), t.end());
      for (auto& v : t) v -= m;
    }
    std::vector<size_t> cur(ny, 0), best_at(ny, 0);
    double best = std::numeric_limits<double>::infinity();
    SearchSimplex(term, 0, steps, 0.0, cur, best, best_at);
    std::vector<double> p(ny);
    for (size_t y = 0; y < ny; ++y) p[y] = static_cast<double>(best_at[y]) * h;
    rows.push_back(Distribution::Normalized(std::move(p)));
  }
  return Policy(std::move(rows));
}

VerifyReport Verify(const Environment& env) {
  VerifyReport report;
  report.validation = Validate(env);
  const auto& v = report.validation;
  auto add = [&](std::string name, double value, double threshold, bool pass,
                 std::string note = {}) {
    report.checks.push_back(
        {std::move(name), value, threshold, pass, std::move(note)});
  };
  add("balance", v.balance_residual, 1e-10, v.balance_residual < 1e-10);
  add("steady_state", v.steady_state_tv, 1e-10, v.steady_state_tv < 1e-10);
  add("contraction", v.contraction_slack, 1e-9, v.contraction_slack <= 1e-9);
  const double g = *std::min_element(v.gamma_certified.begin(),
                                     v.gamma_certified.end());
  add("gamma_floor", g, 0.0, g > 0.0);
  const double bt = BtAgreementResidual(env);
  add("bradley_terry", bt, 1e-10, bt < 1e-10);

  const auto opt = OptimalPolicy(env);
  const size_t ny = env.num_responses();
  if (ny <= 4) {
    const size_t steps = 1000;
    const Policy grid = GridSearchOptimalPolicy(env, steps);
    double worst = 0.0;
    for (size_t x = 0; x < env.num_contexts(); ++x) {
      worst = std::max(worst, TvDistance(grid.row(x), opt.pi_star.row(x)));
    }
    const double tol = 2.0 / static_cast<double>(steps);
    add("optimal_policy_grid", worst, tol, worst <= tol);
  } else {
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& pi : ContractionProbes(env)) {
      worst = std::max(worst, JBeta(env, opt.pi_star, env.beta()) -
                                  JBeta(env, pi, env.beta()));
    }
    add("optimal_policy_probes", worst, 1e-12, worst <= 1e-12,
        "too many responses for a grid; closed form compared to probes");
  }

  double unreg = -std::numeric_limits<double>::infinity();
  double reg = -std::numeric_limits<double>::infinity();
  size_t reg_checked = 0;
  for (const auto& pi : ContractionProbes(env)) {
    const double d = ExpectedTv(env, pi, opt.pi_star);
    unreg = std::max(unreg,
                     SubOptUnreg(env, opt, pi) - 2.0 * env.c_max() * d);
    const double v_max = env.beta() * MaxLogRatio(pi, env.pi_ref());
    if (std::isfinite(v_max)) {
      reg = std::max(reg, SubOpt(env, opt, pi) -
                              2.0 * (env.c_max() + v_max) * d);
      ++reg_checked;
    }
  }
  add("tv_subopt_unregularized", unreg, 1e-12, unreg <= 1e-12);
  add("tv_subopt_regularized", reg, 1e-12, reg <= 1e-12,
      std::to_string(reg_checked) + " probes with finite log-ratio");
  return report;
}

void SetByPath(Json& doc, const std::string& dot_path, const Json& value) {
  Json* node = &doc;
  std::stringstream ss(dot_path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) throw ConfigError("empty grid path");
  for (size_t i = 0; i < parts.size(); ++i) {
    const std::string& key = parts[i];
    Json* next;
    if (node->is_array()) {
      size_t idx;
      try {
        idx = std::stoul(key);
      } catch (const std::exception&) {
        throw ConfigError("grid path '" + dot_path + "': '" + key +
                          "' is not an array index");
      }
      if (idx >= node->size()) {
        throw ConfigError("grid path '" + dot_path + "': index out of range");
      }
      next = &(*node)[idx];
    } else {
      if (node->is_null()) *node = Json::object();
      if (!node->is_object()) {
        throw ConfigError("grid path '" + dot_path + "' crosses a scalar");
      }
      next = &(*node)[key];
    }
    node = next;
  }
  *node = value;
}

SweepConfig ParseSweepConfig(const Json& doc, const fs::path& base_dir) {
  const Json j = ResolveFileRef(doc, base_dir);
  SweepConfig c;
  c.base_dir = base_dir;
  if (!j.contains("base")) throw ConfigError("missing key 'base'");
  c.base = ResolveFileRef(j.at("base"), base_dir);
  if (c.base.contains("environment")) {
    c.base["environment"] = ResolveFileRef(c.base["environment"], base_dir);
  }
  const Json grid = JsonGet<Json>(j, "grid");
  if (!grid.is_object() || grid.empty()) throw ConfigError("grid must be a nonempty object");
  for (const auto& [path, values] : grid.items()) {
    if (!values.is_array() || values.empty()) {
      throw ConfigError("grid axis '" + path + "' needs a nonempty list");
    }
    c.grid.emplace_back(path, std::vector<Json>(values.begin(), values.end()));
  }
  c.workers = std::max<size_t>(1, JsonGetOr<size_t>(j, "workers", 1));
  if (j.contains("out")) c.out_dir = JsonGet<std::string>(j, "out");
  return c;
}

std::vector<SweepCell> RunSweep(const SweepConfig& config) {
  if (config.grid.empty()) throw ConfigError("grid must be nonempty");
  size_t total = 1;
  for (const auto& [path, values] : config.grid) total *= values.size();

  std::vector<SweepCell> cells(total);
  std::vector<Json> docs(total);
  for (size_t i = 0; i < total; ++i) {
    SweepCell& cell = cells[i];
    cell.index = i;
    cell.params = Json::object();
    docs[i] = config.base;
    size_t rest = i;
    // Last axis varies fastest.
    for (size_t a = config.grid.size(); a-- > 0;) {
      const auto& [path, values] = config.grid[a];
      const Json& value = values[rest % values.size()];
      rest /= values.size();
      cell.params[path] = value;
    }
    for (const auto& [path, value] : cell.params.items()) {
      SetByPath(docs[i], path, value);
    }
    char name[32];
    std::snprintf(name, sizeof(name), "cell_%04zu", i);
    cell.out_dir = config.out_dir / name;
  }

  std::vector<std::vector<uint64_t>> seeds(total);
  std::vector<std::string> stamps(total);
  std::atomic<size_t> next{0};
  auto worker = [&] {
    for (size_t i = next++; i < total; i = next++) {
      SweepCell& cell = cells[i];
      try {
        ExperimentConfig ec = ParseExperimentConfig(docs[i], config.base_dir);
        seeds[i] = ec.seeds;
        ec.out_dir = config.out_dir.empty() ? fs::path() : cell.out_dir;
        cell.summary = RunExperiment(ec).summary;
        cell.ok = true;
      } catch (const std::exception& e) {
        cell.error = e.what();
      }
      if (seeds[i].empty()) {
        seeds[i] = JsonGetOr<std::vector<uint64_t>>(docs[i], "seeds", {});
      }
      stamps[i] = Timestamp();
    }
  };
  const size_t n_workers = std::min(config.workers, total);
  std::vector<std::thread> threads;
  for (size_t w = 1; w < n_workers; ++w) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();

  if (!config.out_dir.empty()) {
    std::string manifest = "cell,seed,status,out_dir,params,error,timestamp\n";
    for (size_t i = 0; i < total; ++i) {
      const auto& cell = cells[i];
      std::vector<std::string> seed_strs;
      for (auto s : seeds[i]) seed_strs.push_back(std::to_string(s));
      if (seed_strs.empty()) seed_strs.push_back("");
      for (const auto& s : seed_strs) {
        manifest += std::to_string(i) + "," + s + "," +
                    (cell.ok ? "ok" : "failed") + "," +
                    CsvQuote(cell.out_dir.string()) + "," +
                    CsvQuote(cell.params.dump()) + "," + CsvQuote(cell.error) +
                    "," + stamps[i] + "\n";
      }
    }
    WriteTextFile(config.out_dir / "manifest.csv", manifest);

    Json cell_docs = Json::array();
    std::map<std::string, double> max_gap;
    for (const auto& cell : cells) {
      Json rows = Json::array();
      for (const auto& r : cell.summary) {
        rows.push_back(RowToJson(r));
        auto [it, fresh] = max_gap.emplace(r.method, r.max_subopt);
        if (!fresh) it->second = std::max(it->second, r.max_subopt);
      }
      Json cj = {{"cell", cell.index},
                 {"params", cell.params},
                 {"status", cell.ok ? "ok" : "failed"},
                 {"out_dir", cell.out_dir.string()},
                 {"summary", std::move(rows)}};
      if (!cell.ok) cj["error"] = cell.error;
      cell_docs.push_back(std::move(cj));
    }
    Json sj = {{"cells", std::move(cell_docs)}, {"max_gap", max_gap}};
    WriteTextFile(config.out_dir / "sweep_summary.json", DumpJson(sj));
  }
  return cells;
}

}  // namespace editlab
