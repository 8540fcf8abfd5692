// Copyright 2026 The rnet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include "rnet/rnet.hpp"
#include "../support/test_support.hpp"

using namespace rnet;
using rnet::testing::random_tensor;
using rnet::testing::ToyRoutingMdp;

namespace {

/// One-step trace decided by agent 0.
Trace single_step(std::size_t action, double r_final, double r1 = 0.0) {
  Trace t;
  t.states = {RoutingState{Tensor({1}), 0, 1}};
  t.actions = {action};
  t.rewards = {r1};
  t.r_final = r_final;
  t.agents = {0};
  t.input = Tensor({1});
  return t;
}

Policy pg_table(std::vector<std::size_t> widths) { return TabularPolicy(PolicyMode::policy_gradient, widths); }

std::vector<double> row_of(const Policy& p, std::size_t d) {
  auto r = std::get<TabularPolicy>(p).row(d);
  return {r.begin(), r.end()};
}

bool is_distribution(std::span<const double> r) {
  double s = 0.0;
  for (double v : r) {
    if (v < 0.0 || v > 1.0) return false;
    s += v;
  }
  return std::abs(s - 1.0) < 1e-12;
}

MtlSample sample(const Tensor& x, std::size_t task, std::size_t label) {
  return {std::make_shared<const Tensor>(x), task, label};
}

}  // namespace

// ---------------------------------------------------------------------------
// rewards and returns
// ---------------------------------------------------------------------------

TEST(Rewards, FinalRewardSignAndZeroRho) {
  Rng rng(1);
  BlockRegistry reg(fc_stack(2, 3, 2, 2), rng);
  FixedRouter router({0, 1, 0});
  auto [y, trace] = route_forward(Tensor::vector({0.3, -0.2}), 0, router, reg);
  BlockUsageHistory history;
  const std::size_t predicted = argmax(y.data());
  compute_rewards(trace, predicted, RewardConfig{}, history, reg);
  EXPECT_EQ(trace.r_final, 1.0);
  EXPECT_EQ(trace.rewards, (std::vector<double>{0.0, 0.0, 0.0}));
  compute_rewards(trace, 1 - predicted, RewardConfig{}, history, reg);
  EXPECT_EQ(trace.r_final, -1.0);
}

TEST(Rewards, CollaborationRewardIsRhoTimesStatistic) {
  Rng rng(2);
  BlockRegistry reg(fc_stack(2, 3, 2, 2), rng);
  FixedRouter router({1, 0, 0});
  auto [y, trace] = route_forward(Tensor::vector({0.3, -0.2}), 0, router, reg);
  BlockUsageHistory history;
  history.set(reg.legal_actions(0)[1], CollabKind::avg_probability, 0.5);
  RewardConfig cfg;
  cfg.rho = 0.3;
  compute_rewards(trace, 0, cfg, history, reg);
  EXPECT_DOUBLE_EQ(trace.rewards[0], 0.15);
  EXPECT_EQ(trace.rewards[1], 0.0);  // statistic read before this step is recorded
}

TEST(Rewards, NegativeLossFinalReward) {
  Rng rng(3);
  BlockRegistry reg(fc_stack(2, 3, 2, 2), rng);
  FixedRouter router({0, 0, 0});
  auto [y, trace] = route_forward(Tensor::vector({0.3, -0.2}), 0, router, reg);
  BlockUsageHistory history;
  RewardConfig cfg;
  cfg.final_kind = FinalRewardKind::negative_loss;
  compute_rewards(trace, 1, cfg, history, reg);
  EXPECT_DOUBLE_EQ(trace.r_final, std::log(y[1]));
}

TEST(Rewards, ConfigValidation) {
  EXPECT_THROW((RewardConfig{1.5}.validate()), ConfigError);
  RewardConfig g;
  g.gamma = -0.1;
  EXPECT_THROW(g.validate(), ConfigError);
}

TEST(UsageHistory, TracksPassSeparatelyAndDecays) {
  BlockUsageHistory h(0.5);
  const std::vector<Action> legal = {{Action::Kind::block, 0, 0}, Action::pass()};
  const std::vector<double> dist = {0.25, 0.75};
  h.record(legal, dist, 1);
  EXPECT_DOUBLE_EQ(h.statistic(legal[1], CollabKind::avg_probability), 0.375);
  EXPECT_DOUBLE_EQ(h.statistic(legal[1], CollabKind::avg_times_chosen), 0.5);
  EXPECT_DOUBLE_EQ(h.statistic(legal[0], CollabKind::avg_times_chosen), 0.0);
  h.record(legal, dist, 0);
  EXPECT_DOUBLE_EQ(h.statistic(legal[0], CollabKind::avg_times_chosen), 0.5);
  EXPECT_THROW(BlockUsageHistory(1.0), ConfigError);
}

TEST(Returns, MatchDirectSummation) {
  Rng rng(4);
  for (int rep = 0; rep < 1000; ++rep) {
    Trace t;
    const std::size_t n = 1 + uniform_index(rng, 6);
    for (std::size_t i = 0; i < n; ++i) t.rewards.push_back(2.0 * uniform01(rng) - 1.0);
    t.r_final = uniform01(rng) < 0.5 ? 1.0 : -1.0;
    const double gamma = uniform01(rng);
    const auto got = compute_returns(t, gamma);
    for (std::size_t i = 0; i < n; ++i) {
      double direct = t.r_final;
      for (std::size_t j = i; j < n; ++j) direct += std::pow(gamma, double(j - i)) * t.rewards[j];
      EXPECT_NEAR(got[i], direct, 1e-12);
    }
  }
}

// ---------------------------------------------------------------------------
// simplex projection
// ---------------------------------------------------------------------------

TEST(SimplexProjection, Examples) {
  const std::vector<double> valid = {0.2, 0.3, 0.5};
  EXPECT_EQ(simplex_projection(valid), valid);
  const auto p = simplex_projection(std::vector<double>{-0.2, 0.5, 0.9});
  EXPECT_EQ(p[0], 0.0);
  EXPECT_NEAR(p[1], 5.0 / 14.0, 1e-15);
  EXPECT_NEAR(p[2], 9.0 / 14.0, 1e-15);
  EXPECT_EQ(simplex_projection(std::vector<double>{2.0, 2.0}), (std::vector<double>{0.5, 0.5}));
}

TEST(SimplexProjection, NoPositiveMassFallsBackToUniform) {
  const std::uint64_t before = projection_fallback_count();
  EXPECT_EQ(simplex_projection(std::vector<double>{-1.0, 0.0, -2.0, 0.0}), (std::vector<double>(4, 0.25)));
  EXPECT_EQ(projection_fallback_count(), before + 1);
  EXPECT_THROW(simplex_projection(std::span<const double>{}), ContractError);
}

TEST(SimplexProjection, FuzzedOutputsAreDistributions) {
  Rng rng(5);
  for (int rep = 0; rep < 100000; ++rep) {
    std::vector<double> raw(1 + uniform_index(rng, 8));
    for (auto& v : raw) v = 3.0 * uniform01(rng) - 1.0;
    const auto p = simplex_projection(raw);
    ASSERT_TRUE(is_distribution(p));
  }
}

// ---------------------------------------------------------------------------
// WPL
// ---------------------------------------------------------------------------

TEST(Wpl, HandEvaluatedSingleStep) {
  Policy p = pg_table({2});
  WplState state;
  wpl_update(single_step(0, 1.0), p, 0, state, WplConfig{0.1, 1.0, WplVariant::standard});
  const auto r = row_of(p, 0);
  EXPECT_NEAR(r[0], 0.545 / 1.045, 1e-12);
  EXPECT_NEAR(r[1], 0.5 / 1.045, 1e-12);
  EXPECT_NEAR(r[0], 0.5215311004784689, 1e-12);
  EXPECT_NEAR(state.average(0, 0, 0, 2), 0.1, 1e-15);
}

TEST(Wpl, SwappedVariantScalesPositiveByPi) {
  Policy p = pg_table({2});
  WplState state;
  wpl_update(single_step(0, 1.0), p, 0, state, WplConfig{0.1, 1.0, WplVariant::swapped});
  // uniform row: pi = 1 - pi = 0.5, so the first step agrees with the default
  EXPECT_NEAR(row_of(p, 0)[0], 0.545 / 1.045, 1e-12);
  // away from uniform the variants differ
  Policy a = pg_table({2}), b = pg_table({2});
  std::get<TabularPolicy>(a).row(0)[0] = 0.8;
  std::get<TabularPolicy>(a).row(0)[1] = 0.2;
  std::get<TabularPolicy>(b).row(0)[0] = 0.8;
  std::get<TabularPolicy>(b).row(0)[1] = 0.2;
  WplState sa, sb;
  wpl_update(single_step(0, 1.0), a, 0, sa, WplConfig{0.1, 1.0, WplVariant::standard});
  wpl_update(single_step(0, 1.0), b, 0, sb, WplConfig{0.1, 1.0, WplVariant::swapped});
  EXPECT_NEAR(row_of(a, 0)[0], (0.8 + 0.1 * 0.9 * 0.2) / (1.0 + 0.1 * 0.9 * 0.2), 1e-12);
  EXPECT_NEAR(row_of(b, 0)[0], (0.8 + 0.1 * 0.9 * 0.8) / (1.0 + 0.1 * 0.9 * 0.8), 1e-12);
}

TEST(Wpl, ZeroLearningRateOrZeroDifferenceChangesNothing) {
  Rng rng(6);
  for (int rep = 0; rep < 100; ++rep) {
    Policy p = pg_table({3});
    auto row = std::get<TabularPolicy>(p).row(0);
    row[0] = 0.2;
    row[1] = 0.5;
    row[2] = 0.3;
    WplState state;
    wpl_update(single_step(uniform_index(rng, 3), 2.0 * uniform01(rng) - 1.0), p, 0, state, WplConfig{0.0});
    EXPECT_EQ(row_of(p, 0), (std::vector<double>{0.2, 0.5, 0.3}));
  }
  Policy p = pg_table({2});
  WplState state;
  // return 0 with a zero average: difference is zero
  wpl_update(single_step(1, 0.0), p, 0, state, WplConfig{0.3});
  EXPECT_EQ(row_of(p, 0), (std::vector<double>{0.5, 0.5}));
}

TEST(Wpl, PositiveDifferenceAtCertaintyIsDamped) {
  Policy p = pg_table({2});
  auto row = std::get<TabularPolicy>(p).row(0);
  row[0] = 1.0;
  row[1] = 0.0;
  WplState state;
  wpl_update(single_step(0, 1.0), p, 0, state, WplConfig{0.2});
  EXPECT_EQ(row_of(p, 0), (std::vector<double>{1.0, 0.0}));
}

TEST(Wpl, PerDepthBaselineSharesTheAverageAcrossActions) {
  Policy p = pg_table({2});
  WplState state;
  WplConfig cfg{0.1};
  cfg.baseline = WplBaseline::per_depth;
  wpl_update(single_step(0, 1.0), p, 0, state, cfg);
  wpl_update(single_step(1, 1.0), p, 0, state, cfg);
  // second update sees the shared average 0.1 -> 0.19
  EXPECT_NEAR(state.average(0, 0, 0, 1), 0.19, 1e-15);
}

TEST(Wpl, SkipsStepsOfOtherAgentsAndRejectsNonTabular) {
  Policy p = pg_table({2});
  WplState state;
  Trace t = single_step(0, 1.0);
  t.agents = {3};
  wpl_update(t, p, 0, state, WplConfig{0.5});
  EXPECT_EQ(row_of(p, 0), (std::vector<double>{0.5, 0.5}));
  Policy q = TabularPolicy(PolicyMode::q_values, std::vector<std::size_t>{2});
  EXPECT_THROW(wpl_update(t, q, 0, state, WplConfig{}), ContractError);
  Policy approx = init_policy(PolicyKind::approx_pg, PolicyDims{{2}, {1}, 1, 4}, 1);
  EXPECT_THROW(wpl_update(t, approx, 0, state, WplConfig{}), ContractError);
}

TEST(TabularPg, RowsStayDistributionsUnderFuzzedUpdates) {
  Rng rng(7);
  Policy wpl = pg_table({4, 4, 4}), rf = pg_table({4, 4, 4});
  WplState state;
  WplConfig wcfg{0.3};
  ReinforceConfig rcfg;
  rcfg.lambda_pi = 0.05;
  for (int rep = 0; rep < 100000; ++rep) {
    Trace t;
    for (std::size_t d = 0; d < 3; ++d) {
      t.states.push_back(RoutingState{Tensor({1}), 0, d + 1});
      t.actions.push_back(uniform_index(rng, 4));
      t.rewards.push_back(uniform01(rng) - 0.5);
      t.agents.push_back(0);
    }
    t.r_final = uniform01(rng) < 0.5 ? 1.0 : -1.0;
    wcfg.variant = rep % 2 ? WplVariant::swapped : WplVariant::standard;
    wpl_update(t, wpl, 0, state, wcfg);
    reinforce_update(t, rf, 0, rcfg);
    for (std::size_t d = 0; d < 3; ++d) {
      ASSERT_TRUE(is_distribution(row_of(wpl, d)));
      ASSERT_TRUE(is_distribution(row_of(rf, d)));
    }
  }
}

TEST(Wpl, MatchingPenniesDampsTowardEquilibrium) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto game = rnet::testing::MatchingPennies::play(seed, 50000, WplConfig{0.01});
    for (int k = 0; k < 2; ++k) {
      EXPECT_LT(game.amplitude(k, 40000, 50000), game.amplitude(k, 0, 10000)) << "seed " << seed << " agent " << k;
      EXPECT_NEAR(game.mean_heads(k, 40000, 50000), 0.5, 0.15) << "seed " << seed << " agent " << k;
    }
  }
}

TEST(Wpl, SwappedVariantSticksToTheBoundaryInMatchingPennies) {
  const auto game = rnet::testing::MatchingPennies::play(1, 20000, WplConfig{0.01, 1.0, WplVariant::swapped});
  EXPECT_GT(game.amplitude(1, 10000, 20000), 0.45);
}

// ---------------------------------------------------------------------------
// REINFORCE
// ---------------------------------------------------------------------------

TEST(Reinforce, ZeroReturnChangesNothing) {
  Policy tab = pg_table({3});
  reinforce_update(single_step(1, 0.0), tab, 0, ReinforceConfig{});
  EXPECT_EQ(row_of(tab, 0), std::vector<double>(3, 1.0 / 3.0));
  Policy approx = init_policy(PolicyKind::approx_pg, PolicyDims{{3}, {1}, 1, 8}, 3);
  std::vector<Tensor> before;
  for (Parameter* p : std::get<ApproxPolicy>(approx).parameters()) before.push_back(p->value);
  reinforce_update(single_step(1, 0.0), approx, 0, ReinforceConfig{});
  auto after = std::get<ApproxPolicy>(approx).parameters();
  for (std::size_t i = 0; i < after.size(); ++i) EXPECT_EQ(after[i]->value, before[i]);
}

TEST(Reinforce, PositiveReturnRaisesChosenProbability) {
  Policy tab = pg_table({3});
  reinforce_update(single_step(2, 1.0), tab, 0, ReinforceConfig{});
  EXPECT_GT(row_of(tab, 0)[2], 1.0 / 3.0);
  Policy approx = init_policy(PolicyKind::approx_pg, PolicyDims{{3}, {1}, 1, 8}, 3);
  const auto& ap = std::get<ApproxPolicy>(approx);
  const double before = ap.evaluate(0, Tensor({1}), 0)[2];
  reinforce_update(single_step(2, 1.0), approx, 0, ReinforceConfig{});
  EXPECT_GT(ap.evaluate(0, Tensor({1}), 0)[2], before);
}

TEST(Reinforce, TwoArmedBanditConverges) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    Policy tab = pg_table({2});
    Policy approx = init_policy(PolicyKind::approx_pg, PolicyDims{{2}, {1}, 1, 16}, seed);
    ReinforceConfig cfg;
    cfg.learning_rate = 0.05;
    for (int i = 0; i < 2000; ++i) {
      const std::size_t a = policy_detail::sample_from(row_of(tab, 0), rng);
      reinforce_update(single_step(a, a == 1 ? 1.0 : -1.0), tab, 0, cfg);
      const auto probs = std::get<ApproxPolicy>(approx).evaluate(0, Tensor({1}), 0);
      const std::size_t b = policy_detail::sample_from(probs, rng);
      reinforce_update(single_step(b, b == 1 ? 1.0 : -1.0), approx, 0, cfg);
    }
    EXPECT_GT(row_of(tab, 0)[1], 0.95) << "seed " << seed;
    EXPECT_GT(std::get<ApproxPolicy>(approx).evaluate(0, Tensor({1}), 0)[1], 0.95) << "seed " << seed;
  }
}

TEST(Reinforce, OptionalBaselineTracksReturns) {
  ReinforceConfig cfg;
  cfg.baseline = true;
  cfg.baseline_decay = 0.5;
  ReturnBaseline b;
  Policy tab = pg_table({2});
  reinforce_update(single_step(0, 1.0), tab, 0, cfg, &b);
  EXPECT_DOUBLE_EQ(b.value, 0.5);
  // return equal to the baseline: no change
  Policy flat = pg_table({2});
  ReturnBaseline fixed{1.0};
  cfg.baseline_decay = 0.99;
  reinforce_update(single_step(0, 1.0), flat, 0, cfg, &fixed);
  EXPECT_EQ(row_of(flat, 0), (std::vector<double>{0.5, 0.5}));
}

// ---------------------------------------------------------------------------
// Q-learning
// ---------------------------------------------------------------------------

TEST(QTabular, TerminalStepWithFullStep) {
  Policy q = TabularPolicy(PolicyMode::q_values, std::vector<std::size_t>{2});
  q_tabular_update(single_step(1, 1.0), q, 0, QConfig{1.0, 0.01, 0.0});
  EXPECT_EQ(row_of(q, 0), (std::vector<double>{0.0, 1.0}));
}

TEST(QTabular, ZeroRewardsKeepTableZero) {
  Rng rng(8);
  Policy q = TabularPolicy(PolicyMode::q_values, std::vector<std::size_t>{3, 3});
  ToyRoutingMdp mdp;
  mdp.r1 = {0.0, 0.0};
  mdp.r2 = {0.0, 0.0};
  mdp.final_reward = {0.0, 0.0};
  for (int i = 0; i < 1000; ++i) q_tabular_update(mdp.episode(uniform_index(rng, 2), uniform_index(rng, 2), Tensor({1}), Tensor({1})), q, 0, QConfig{});
  for (std::size_t d = 0; d < 2; ++d) EXPECT_EQ(row_of(q, d), std::vector<double>(3, 0.0));
}

TEST(QTabular, MatchesValueIteration) {
  ToyRoutingMdp mdp;
  const auto oracle = mdp.value_iteration();
  Rng rng(9);
  Policy q = TabularPolicy(PolicyMode::q_values, std::vector<std::size_t>{2, 2});
  for (int i = 0; i < 10000; ++i) {
    q_tabular_update(mdp.episode(uniform_index(rng, 2), uniform_index(rng, 2), Tensor({1}), Tensor({1})), q, 0,
                     QConfig{0.1, 0.01, mdp.gamma});
  }
  for (std::size_t d = 0; d < 2; ++d) {
    const auto r = row_of(q, d);
    for (std::size_t a = 0; a < 2; ++a) EXPECT_NEAR(r[a], oracle[d][a], 1e-3);
    EXPECT_EQ(argmax(r), argmax(std::vector<double>(oracle[d].begin(), oracle[d].end())));
  }
}

TEST(QTabular, RejectsPolicyGradientTables) {
  Policy p = pg_table({2});
  EXPECT_THROW(q_tabular_update(single_step(0, 1.0), p, 0, QConfig{}), ContractError);
}

TEST(QApprox, ZeroTdErrorLeavesParametersUnchanged) {
  Policy q = init_policy(PolicyKind::approx_q, PolicyDims{{2}, {1}, 1, 8}, 4);
  auto& ap = std::get<ApproxPolicy>(q);
  const double current = ap.evaluate(0, Tensor({1}), 0)[1];
  std::vector<Tensor> before;
  for (Parameter* p : ap.parameters()) before.push_back(p->value);
  q_approx_update(single_step(1, current), q, 0, QConfig{});
  for (std::size_t i = 0; i < before.size(); ++i) EXPECT_EQ(ap.parameters()[i]->value, before[i]);
}

TEST(QApprox, MovesMonotonicallyTowardFixedTarget) {
  Policy q = init_policy(PolicyKind::approx_q, PolicyDims{{2}, {1}, 1, 8}, 5);
  auto& ap = std::get<ApproxPolicy>(q);
  double prev = std::abs(ap.evaluate(0, Tensor({1}), 0)[0] - 2.0);
  for (int i = 0; i < 200; ++i) {
    q_approx_update(single_step(0, 2.0), q, 0, QConfig{0.1, 0.01, 1.0});
    const double gap = std::abs(ap.evaluate(0, Tensor({1}), 0)[0] - 2.0);
    EXPECT_LE(gap, prev + 1e-15);
    prev = gap;
  }
  EXPECT_LT(prev, 0.1);
}

TEST(QApprox, GreedyPolicyMatchesValueIteration) {
  ToyRoutingMdp mdp;
  const auto oracle = mdp.value_iteration();
  Policy q = init_policy(PolicyKind::approx_q, PolicyDims{{2, 2}, {2, 2}, 1, 16}, 6);
  auto& ap = std::get<ApproxPolicy>(q);
  Rng rng(10);
  const Tensor v1 = Tensor::vector({1.0, 0.0}), v2 = Tensor::vector({0.0, 1.0});
  for (int i = 0; i < 10000; ++i) {
    q_approx_update(mdp.episode(uniform_index(rng, 2), uniform_index(rng, 2), v1, v2), q, 0,
                    QConfig{0.1, 0.02, mdp.gamma});
  }
  EXPECT_EQ(argmax(ap.evaluate(0, v1, 0)), argmax(std::vector<double>(oracle[0].begin(), oracle[0].end())));
  EXPECT_EQ(argmax(ap.evaluate(1, v2, 0)), argmax(std::vector<double>(oracle[1].begin(), oracle[1].end())));
  EXPECT_NEAR(ap.evaluate(1, v2, 0)[0], oracle[1][0], 0.05);
}

// ---------------------------------------------------------------------------
// joint training step
// ---------------------------------------------------------------------------

namespace {

RoutedModelConfig small_routed(std::size_t k, RlAlgorithm rl, PolicyKind kind) {
  RoutedModelConfig c;
  c.input_dim = 4;
  c.num_tasks = 3;
  c.registry = fc_stack(4, 5, 2, k);
  c.rl = rl;
  c.policy_kind = kind;
  return c;
}

}  // namespace

TEST(TrainStep, OffRouteBlocksUntouched) {
  RoutedModel model(small_routed(3, RlAlgorithm::wpl, PolicyKind::tabular_pg), 1);
  Rng rng(11);
  for (int step = 0; step < 300; ++step) {
    std::vector<Tensor> before;
    for (Parameter* p : model.parameters()) before.push_back(p->value);
    const auto s = sample(random_tensor({4}, rng), step % 3, step % 2);
    const auto m = model.train_sample(s, TrainContext{});
    std::set<std::pair<std::size_t, std::size_t>> on_route;
    for (std::size_t d = 0; d < 3; ++d) {
      const auto& a = model.registry().legal_actions(d)[m.actions[d]];
      on_route.insert({a.layer, a.index});
    }
    for (std::size_t l = 0; l < 3; ++l) {
      for (std::size_t i = 0; i < 3; ++i) {
        if (on_route.count({l, i})) continue;
        for (Parameter* p : model.registry().block(l, i).parameters()) {
          ASSERT_FALSE(p->touched);
          for (double g : p->grad.data()) ASSERT_EQ(g, 0.0);
        }
      }
    }
    auto params = model.parameters();
    sgd_step(params, SgdConfig{0.1}, 0);
    for (std::size_t l = 0, j = 0; l < 3; ++l) {
      for (std::size_t i = 0; i < 3; ++i, j += 2) {
        if (on_route.count({l, i})) continue;
        ASSERT_EQ(params[j]->value, before[j]);
        ASSERT_EQ(params[j + 1]->value, before[j + 1]);
      }
    }
  }
}

TEST(TrainStep, SingleBlockRoutingLeavesRouterFixed) {
  for (auto [rl, kind] : {std::pair{RlAlgorithm::wpl, PolicyKind::tabular_pg},
                          std::pair{RlAlgorithm::reinforce, PolicyKind::tabular_pg},
                          std::pair{RlAlgorithm::q_tabular, PolicyKind::tabular_q}}) {
    RoutedModel model(small_routed(1, rl, kind), 2);
    Rng rng(12);
    for (int step = 0; step < 100; ++step) {
      const auto m = train_step(model, sample(random_tensor({4}, rng), step % 3, step % 2), SgdConfig{}, TrainContext{});
      EXPECT_EQ(m.actions, (std::vector<std::size_t>{0, 0, 0}));
    }
    if (kind == PolicyKind::tabular_pg) {
      for (const auto& agent : model.agents().agents) {
        for (std::size_t d = 0; d < 3; ++d) EXPECT_EQ(row_of(agent, d), (std::vector<double>{1.0}));
      }
    }
  }
}

TEST(TrainStep, FrozenBlocksRouterSolvesBandit) {
  // classifier block 1 always predicts the label, block 0 never does
  for (auto [rl, baseline] : {std::pair{RlAlgorithm::reinforce, WplBaseline::per_action},
                              std::pair{RlAlgorithm::wpl, WplBaseline::per_depth}}) {
    auto cfg = small_routed(2, rl, PolicyKind::tabular_pg);
    cfg.wpl.baseline = baseline;
    cfg.wpl.lambda_pi = 0.1;
    RoutedModel model(cfg, 3);
    for (std::size_t i = 0; i < 2; ++i) {
      model.registry().block(2, i).weight->value.fill(0.0);
      model.registry().block(2, i).bias->value = i == 1 ? Tensor::vector({0.0, 10.0}) : Tensor::vector({10.0, 0.0});
    }
    Rng rng(13);
    for (int step = 0; step < 2000; ++step) {
      model.train_sample(sample(random_tensor({4}, rng), 0, 1), TrainContext{});
      for (Parameter* p : model.parameters()) p->zero_grad();
    }
    EXPECT_GT(row_of(model.agents().agents[0], 2)[1], 0.95);
  }
}

TEST(TrainStep, EpsilonScheduleAndMetrics) {
  auto cfg = small_routed(2, RlAlgorithm::q_tabular, PolicyKind::tabular_q);
  RoutedModel model(cfg, 4);
  EXPECT_DOUBLE_EQ(model.epsilon(0.0), 1.0);
  EXPECT_DOUBLE_EQ(model.epsilon(0.125), 0.525);
  EXPECT_DOUBLE_EQ(model.epsilon(0.25), 0.05);
  EXPECT_DOUBLE_EQ(model.epsilon(0.9), 0.05);
  const auto m = model.train_sample(sample(Tensor::vector({1, 2, 3, 4}), 1, 0), TrainContext{0, 0.5});
  EXPECT_EQ(m.task, 1u);
  EXPECT_EQ(m.actions.size(), 3u);
  EXPECT_EQ(m.r_final, m.correct ? 1.0 : -1.0);
  EXPECT_GT(m.loss, 0.0);
  ASSERT_TRUE(model.last_trace().has_value());
}

TEST(TrainStep, EveryAlgorithmRunsOnEveryAgentMode) {
  struct Case {
    AgentMode mode;
    RlAlgorithm rl;
    PolicyKind kind;
  };
  const Case cases[] = {{AgentMode::per_task, RlAlgorithm::wpl, PolicyKind::tabular_pg},
                        {AgentMode::per_task, RlAlgorithm::reinforce, PolicyKind::approx_pg},
                        {AgentMode::per_task, RlAlgorithm::q_tabular, PolicyKind::tabular_q},
                        {AgentMode::per_task, RlAlgorithm::q_approx, PolicyKind::approx_q},
                        {AgentMode::single, RlAlgorithm::reinforce, PolicyKind::approx_pg},
                        {AgentMode::single, RlAlgorithm::q_approx, PolicyKind::approx_q},
                        {AgentMode::dispatched, RlAlgorithm::reinforce, PolicyKind::approx_pg},
                        {AgentMode::dispatched, RlAlgorithm::q_approx, PolicyKind::approx_q}};
  for (const auto& c : cases) {
    auto cfg = small_routed(2, c.rl, c.kind);
    cfg.agent_mode = c.mode;
    cfg.approx_hidden = 8;
    RoutedModel model(cfg, 5);
    Rng rng(14);
    for (int step = 0; step < 50; ++step) {
      const auto m = train_step(model, sample(random_tensor({4}, rng), step % 3, step % 2), SgdConfig{}, TrainContext{});
      ASSERT_TRUE(std::isfinite(m.loss));
      if (c.mode == AgentMode::dispatched) {
        ASSERT_TRUE(model.last_trace()->dispatch.has_value());
      }
    }
    EXPECT_EQ(model.predict(Tensor::vector({1, 0, 0, 0}), 2).size(), 2u);
  }
}
