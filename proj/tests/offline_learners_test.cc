#include "editlab/offline_learners.h"

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "editlab/error.h"
#include "editlab/objectives.h"
#include "editlab/user_models.h"
#include "oracles.h"

namespace editlab {
namespace {

Environment Env(double w = 0.0, size_t nx = 2) {
  EnvironmentSkeleton s{FiniteSpace::Named("x", nx), FiniteSpace::Named("y", 3),
                        Distribution::Uniform(nx), Policy::Uniform(nx, 3)};
  Table cost;
  for (size_t x = 0; x < nx; ++x) {
    cost.push_back({0.8 - 0.1 * x, 0.2 + 0.05 * x, 0.5});
  }
  return BuildGibbsEnvironment(s, cost, 0.25, w);
}

Table RandomTheta(RngStream& rng, size_t nx, size_t ny, double scale) {
  Table t(nx, std::vector<double>(ny));
  for (auto& row : t) {
    for (double& v : row) v = scale * (2 * rng.NextDouble() - 1);
  }
  return t;
}

void ExpectGradientMatches(const Table& analytic, const Table& numeric) {
  for (size_t i = 0; i < analytic.size(); ++i) {
    for (size_t j = 0; j < analytic[i].size(); ++j) {
      EXPECT_NEAR(analytic[i][j], numeric[i][j], 1e-6);
    }
  }
}

TEST(PolicyFromParamsTest, ZeroIsReferenceAndRatiosBounded) {
  const Policy ref(Table{{0.5, 0.3, 0.2, 0.0}});
  EXPECT_EQ(PolicyFromParams(ref, {{0, 0, 0, 0}}).row(0).vec(),
            ref.row(0).vec());
  const ClassParams cls{1.0, 0.5};
  RngStream rng(1, "theta");
  for (int i = 0; i < 50; ++i) {
    Table theta = RandomTheta(rng, 1, 4, cls.clip());
    const Policy p = PolicyFromParams(ref, theta);
    EXPECT_EQ(p.prob(0, 3), 0.0);
    EXPECT_LE(MaxLogRatio(p, ref), cls.v_max / cls.beta + 1e-9);
  }
}

TEST(IsRealizableTest, RangeRule) {
  const Policy ref(Table{{0.5, 0.5}});
  const Policy target(Table{{0.8, 0.2}});
  const double range = std::log(0.8 / 0.2);
  EXPECT_TRUE(IsRealizable(target, ref, {range * 1.01, 1.0}));
  EXPECT_FALSE(IsRealizable(target, ref, {range * 0.99, 1.0}));
  EXPECT_FALSE(IsRealizable(Policy(Table{{1.0, 0.0}}), ref, {100.0, 1.0}));
}

TEST(SftLossTest, GradientMatchesFiniteDifferences) {
  const Environment env = Env();
  const auto data = SampleLog(env, 300, 5);
  const SftLoss loss(data, env.pi_ref());
  RngStream rng(2, "points");
  for (int i = 0; i < 20; ++i) {
    const Table theta = RandomTheta(rng, 2, 3, 3.0);
    ExpectGradientMatches(
        loss.Gradient(theta),
        oracle::FiniteDifference([&](const Table& t) { return loss.Value(t); }, theta));
  }
}

TEST(PreferenceLossTest, GradientMatchesFiniteDifferences) {
  const Environment env = Env(0.5);
  const auto prefs = BuildPreferences(SampleLog(env, 400, 6), 6);
  for (double beta : {1.0, 0.25, 3.0}) {
    const PreferenceLoss loss(prefs, 2, 3, beta);
    RngStream rng(3, "points");
    for (int i = 0; i < 20; ++i) {
      const Table theta = RandomTheta(rng, 2, 3, 3.0);
      ExpectGradientMatches(
          loss.Gradient(theta),
          oracle::FiniteDifference([&](const Table& t) { return loss.Value(t); },
                                   theta));
    }
  }
}

TEST(CombinedLossTest, GradientMatchesFiniteDifferences) {
  const Environment env = Env(0.3);
  const auto data = SampleLog(env, 400, 7);
  const auto prefs = BuildPreferences(data, 7);
  const CombinedLoss loss(PreferenceLoss(prefs, 2, 3, 1.0),
                          SftLoss(data, env.pi_ref()), 0.7);
  RngStream rng(4, "points");
  for (int i = 0; i < 20; ++i) {
    const Table theta = RandomTheta(rng, 2, 3, 3.0);
    ExpectGradientMatches(
        loss.Gradient(theta),
        oracle::FiniteDifference([&](const Table& t) { return loss.Value(t); }, theta));
  }
}

TEST(PreferenceLossTest, ValueAtZeroIsLog2) {
  const Environment env = Env();
  const auto prefs = BuildPreferences(SampleLog(env, 100, 8), 8);
  const PreferenceLoss loss(prefs, 2, 3, 0.7);
  EXPECT_NEAR(loss.Value({{0, 0, 0}, {0, 0, 0}}), std::log(2.0), 1e-15);
}

TEST(PreferenceLossTest, SwapIsEquivalentToPlainPairs) {
  // With z = -1 the pair is swapped, so every record still says the edited
  // response wins over the original one.
  const Environment env = Env(0.2);
  const auto data = SampleLog(env, 200, 9);
  const auto prefs = BuildPreferences(data, 9);
  PreferenceDataset plain;
  for (const auto& r : data.records) plain.records.push_back({r.x, r.y, r.y_edit, 1});
  const PreferenceLoss a(prefs, 2, 3, 1.3), b(plain, 2, 3, 1.3);
  RngStream rng(5, "points");
  for (int i = 0; i < 5; ++i) {
    const Table theta = RandomTheta(rng, 2, 3, 2.0);
    EXPECT_NEAR(a.Value(theta), b.Value(theta), 1e-14);
  }
}

TEST(BuildPreferencesTest, SignsAndDeterminism) {
  const Environment env = Env();
  const auto data = SampleLog(env, 2000, 10);
  const auto prefs = BuildPreferences(data, 10);
  EXPECT_EQ(prefs, BuildPreferences(data, 10));
  int plus = 0;
  for (size_t i = 0; i < data.size(); ++i) {
    const auto& p = prefs.records[i];
    const auto& r = data.records[i];
    if (p.z == 1) {
      ++plus;
      EXPECT_EQ(p.y_tilde, r.y);
      EXPECT_EQ(p.y_tilde_prime, r.y_edit);
    } else {
      EXPECT_EQ(p.z, -1);
      EXPECT_EQ(p.y_tilde, r.y_edit);
      EXPECT_EQ(p.y_tilde_prime, r.y);
    }
  }
  EXPECT_NEAR(plus / 2000.0, 0.5, 5 * 0.5 / std::sqrt(2000.0));
}

TEST(FitSftTest, ReachesTabularMleWhenRealizable) {
  const Environment env = Env(0.5);
  const auto data = SampleLog(env, 5000, 11);
  const ClassParams cls{10.0, env.beta()};
  const auto fit = FitSft(data, env.pi_ref(), cls, DefaultSftSettings());
  EXPECT_TRUE(fit.converged);
  const Policy mle = TabularMle(data, env.pi_ref());
  EXPECT_LT(ExpectedTv(env, fit.policy, mle), 1e-6);
  EXPECT_EQ(fit.theta, FitSft(data, env.pi_ref(), cls, DefaultSftSettings()).theta);
}

TEST(FitSftTest, ClipCertifiesDensityRatio) {
  const Environment env = Env();
  const auto data = SampleLog(env, 200, 12);
  const ClassParams cls{0.05, env.beta()};
  const auto fit = FitSft(data, env.pi_ref(), cls, DefaultSftSettings());
  EXPECT_LE(MaxLogRatio(fit.policy, env.pi_ref()), cls.v_max / cls.beta + 1e-9);
  for (const auto& row : fit.theta) {
    for (double v : row) EXPECT_LE(std::abs(v), cls.clip() + 1e-15);
  }
}

TEST(FitSftTest, ConsistencyOverSampleSize) {
  const Environment env = Env(0.6);
  const Policy target = ComposeUser(env.user(), env.pi_ref());
  const ClassParams cls{10.0, env.beta()};
  double prev = 1.0;
  for (size_t n : {100u, 1000u, 10000u, 100000u}) {
    const auto fit = FitSft(SampleLog(env, n, 13), env.pi_ref(), cls,
                            DefaultSftSettings());
    const double tv = ExpectedTv(env, fit.policy, target);
    EXPECT_LE(tv, prev + 0.01) << n;
    prev = tv;
  }
  EXPECT_LT(prev, 0.02);
}

TEST(FitDpoTest, PopulationRecoversOptimum) {
  for (double w : {0.0, 0.7}) {
    const Environment env = Env(w);
    const auto opt = OptimalPolicy(env);
    const auto prefs = BuildPreferences(SampleLog(env, 100000, 14), 14);
    const ClassParams cls{4.0, env.beta()};
    const auto fit = FitDpo(prefs, env.pi_ref(), 1.0, cls, DefaultDpoSettings(1.0));
    EXPECT_LT(ExpectedTv(env, fit.policy, opt.pi_star), 0.05) << w;
  }
}

TEST(FitEarlyEnsembleTest, LambdaZeroIsDpoBitForBit) {
  const Environment env = Env(0.4);
  const auto data = SampleLog(env, 1000, 15);
  const auto prefs = BuildPreferences(data, 15);
  const ClassParams cls{2.0, env.beta()};
  const auto dpo = FitDpo(prefs, env.pi_ref(), 1.0, cls, DefaultDpoSettings(1.0));
  const auto ens = FitEarlyEnsemble(data, prefs, env.pi_ref(), 1.0, 0.0, cls,
                                    DefaultEarlyEnsembleSettings(1.0, 0.0));
  EXPECT_EQ(dpo.theta, ens.theta);
  EXPECT_EQ(dpo.iterations, ens.iterations);
  EXPECT_EQ(dpo.final_loss, ens.final_loss);
}

TEST(FitEarlyEnsembleTest, LargeLambdaApproachesSft) {
  const Environment env = Env(0.4);
  const auto data = SampleLog(env, 3000, 16);
  const auto prefs = BuildPreferences(data, 16);
  const ClassParams cls{10.0, env.beta()};
  const auto sft = FitSft(data, env.pi_ref(), cls, DefaultSftSettings());
  const auto ens = FitEarlyEnsemble(data, prefs, env.pi_ref(), 1.0, 1000.0, cls,
                                    DefaultEarlyEnsembleSettings(1.0, 1000.0));
  EXPECT_LT(ExpectedTv(env, sft.policy, ens.policy), 5e-3);
}

TEST(OptimizerSettingsTest, RejectsNonPositive) {
  EXPECT_THROW((OptimizerSettings{0.0, 10, 1e-8}).Check(), ParameterError);
  EXPECT_THROW((OptimizerSettings{1.0, 0, 1e-8}).Check(), ParameterError);
  EXPECT_THROW((OptimizerSettings{1.0, 10, 0.0}).Check(), ParameterError);
  EXPECT_NEAR(DefaultSftSettings().step_size, 2.0, 0);
  EXPECT_NEAR(DefaultDpoSettings(0.5).step_size, 8.0, 1e-12);
  EXPECT_NEAR(DefaultEarlyEnsembleSettings(1.0, 1.0).step_size, 1.0, 1e-12);
}

TEST(TabularMleTest, FrequenciesAndFallback) {
  EditDataset d;
  d.records = {{0, 0, 1, 1.0}, {0, 1, 1, 0.0}, {0, 2, 2, 0.0}, {0, 0, 0, 0.0}};
  const Policy fb = Policy::Uniform(2, 3);
  const Policy p = TabularMle(d, fb);
  EXPECT_EQ(p.row(0).vec(), (std::vector<double>{0.25, 0.5, 0.25}));
  EXPECT_EQ(p.row(1), fb.row(1));
}

TEST(FitSftTest, RejectsEditsOffSupportAndEmptyData) {
  EditDataset d;
  d.records = {{0, 0, 1, 1.0}};
  const Policy ref(Table{{1.0, 0.0}});
  EXPECT_THROW(SftLoss(d, ref), ParameterError);
  EXPECT_THROW(SftLoss(EditDataset{}, ref), ParameterError);
}

TEST(FitCostTest, LeastSquaresAndConfidenceSet) {
  EditDataset d;
  d.records = {{0, 0, 1, 1.0}, {0, 0, 0, 0.0}, {0, 1, 0, 0.5}};
  CostModelClass f;
  f.members = {{{0.5, 0.5}}, {{0.5, 0.5}}, {{0.0, 0.0}}, {{1.0, 1.0}}};
  ConfidenceSettings conf{1.0, 0.5, 1.0};
  const auto fit = FitCost(d, f, conf);
  // SSE: 0.5, 0.5, 1.25, 1.25 -> first of the tied minimizers.
  EXPECT_EQ(fit.f_hat, 0u);
  EXPECT_NEAR(fit.sse[0], 0.5, 1e-15);
  EXPECT_NEAR(fit.sse[2], 1.25, 1e-15);
  EXPECT_NEAR(fit.radius, std::log(4 / 0.5), 1e-15);
  // Distance of the constants to f_hat: 3 * 0.25 = 0.75 <= radius.
  EXPECT_EQ(fit.confidence_ids, (std::vector<size_t>{0, 1, 2, 3}));
  const Table bar = PessimisticCost(f, fit);
  EXPECT_EQ(bar, (Table{{1.0, 1.0}}));
}

TEST(FitCostTest, PessimismUpperBoundsTruthWhenCovered) {
  const Environment env = Env(0.0, 3);
  const auto f = DefaultCostClass(env.cost_table(), env.c_max(), 10, 0.3, 21);
  EXPECT_EQ(f.size(), 14u);
  EXPECT_EQ(f.members[0], env.cost_table());
  ConfidenceSettings conf{1.0, 0.1, env.c_max()};
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    const auto data = SampleLog(env, 50, seed);
    const auto fit = FitCost(data, f, conf);
    const bool covered = std::find(fit.confidence_ids.begin(),
                                   fit.confidence_ids.end(),
                                   0u) != fit.confidence_ids.end();
    if (!covered) continue;
    const Table bar = PessimisticCost(f, fit);
    for (size_t x = 0; x < 3; ++x) {
      for (size_t y = 0; y < 3; ++y) EXPECT_GE(bar[x][y], env.cost(x, y));
    }
  }
}

TEST(FitPessimisticRlTest, GibbsOfPessimisticCost) {
  const Environment env = Env();
  const auto f = DefaultCostClass(env.cost_table(), env.c_max(), 4, 0.2, 3);
  const auto data = SampleLog(env, 500, 22);
  const auto res = FitPessimisticRl(data, f, env.rho(), env.pi_ref(), env.beta(),
                                    {1.0, 0.1, env.c_max()});
  const auto expected = GibbsPolicy(env.rho(), env.pi_ref(), res.f_bar, env.beta());
  EXPECT_EQ(res.policy, expected.pi_star);
  EXPECT_THROW(PessimisticCost(f, CostFit{}), InvariantViolation);
}

}  // namespace
}  // namespace editlab
