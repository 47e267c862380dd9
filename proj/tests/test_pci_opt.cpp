#include <gtest/gtest.h>

#include <cstring>
#include <random>

#include "furnace/pci_opt.hpp"
#include "test_util.hpp"

using namespace furnace;
namespace tu = furnace::testutil;

namespace {

// Small scenario used across tests: width 4 with pci in column 0 and
// temperature in column 3, horizon 3, history of 6 steps.
struct Scenario {
  MallModel mall{8, 4, 3};
  MOptimModel moptim{9, 4, 3};
  OptimProblem problem;

  explicit Scenario(unsigned seed) {
    mall.init(seed);
    moptim.init(seed + 1);
    std::mt19937_64 rng(seed + 2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Tensor h(Shape{6, 4});
    for (auto& v : h.data()) v = u(rng);
    problem.history = h;
    problem.target_scaled = 0.5;
    problem.pci_col = 0;
    problem.temp_col = 3;
  }
};

}  // namespace

TEST(Stack, HistoryRowsPreservedAndFuturePciZeroed) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor history(Shape{24, 27});
  for (auto& v : history.data()) v = u(rng);
  Tensor future(Shape{5, 27});
  for (auto& v : future.data()) v = u(rng);

  const auto stacked = stack_with_zeroed_pci(history, future, 25);
  ASSERT_EQ(stacked.shape(), (Shape{29, 27}));
  for (std::size_t r = 0; r < 24; ++r)
    for (std::size_t c = 0; c < 27; ++c)
      EXPECT_EQ(stacked.at(r, c), history.at(r, c));
  for (std::size_t r = 0; r < 5; ++r) {
    EXPECT_EQ(stacked.at(24 + r, 25), 0.0);
    for (std::size_t c = 0; c < 27; ++c) {
      if (c == 25) continue;
      EXPECT_EQ(stacked.at(24 + r, c), future.at(r, c));  // bit-exact
    }
  }
  EXPECT_THROW(stack_with_zeroed_pci(history, Tensor(Shape{5, 3}, 0.0), 1),
               std::invalid_argument);
}

TEST(BaselinePredict, ShapeAndDeterminism) {
  Scenario s(3);
  const auto a = baseline_predict(s.mall, s.problem.history);
  const auto b = baseline_predict(s.mall, s.problem.history);
  ASSERT_EQ(a.shape(), (Shape{3, 4}));
  EXPECT_EQ(0, std::memcmp(a.data().data(), b.data().data(),
                           a.numel() * sizeof(double)));
}

TEST(ProposePolicy, ZeroWeightsGiveBiasPolicy) {
  Scenario s(5);
  s.moptim.params().zero_entry("w");
  const auto& eb = s.moptim.params().entry("b");
  for (std::size_t i = 0; i < eb.size; ++i)
    s.moptim.params().values()[eb.offset + i] = 0.25 * static_cast<double>(i + 1);
  const auto future = baseline_predict(s.mall, s.problem.history);
  const auto stacked = stack_with_zeroed_pci(s.problem.history, future, 0);
  auto leaves = s.moptim.params().make_leaves();
  auto policy = s.moptim.forward(ad::constant(stacked), leaves);
  ASSERT_EQ(policy->value.numel(), 3u);
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_DOUBLE_EQ(policy->value.at(i), 0.25 * static_cast<double>(i + 1));
}

TEST(SimulatePolicy, MatchesPlainRolloutWhenPolicyEqualsPredictedPci) {
  Scenario s(7);
  const auto future = baseline_predict(s.mall, s.problem.history);

  // Policy set to the model's own predicted PCI: the simulated window equals
  // the plain two-step rollout window, so the temperatures must match it.
  std::vector<double> policy(3);
  for (std::size_t h = 0; h < 3; ++h) policy[h] = future.at(h, 0);
  const auto temps =
      simulate_policy(s.mall, s.problem.history, future, policy, 0, 3);
  ASSERT_EQ(temps.size(), 3u);

  Tensor rollout_window(Shape{6, 4});
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c)
      rollout_window.at(r, c) = s.problem.history.at(3 + r, c);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 4; ++c) rollout_window.at(3 + r, c) = future.at(r, c);
  const auto second = s.mall.predict_window(rollout_window);
  for (std::size_t h = 0; h < 3; ++h)
    EXPECT_NEAR(temps[h], second.at(h, 3), 1e-12);
}

TEST(SimulatePolicy, PolicyChangesPropagateToTemperatures) {
  Scenario s(9);
  const auto future = baseline_predict(s.mall, s.problem.history);
  const std::vector<double> base(3, 0.2);
  const std::vector<double> moved(3, 0.9);
  const auto t0 = simulate_policy(s.mall, s.problem.history, future, base, 0, 3);
  const auto t1 = simulate_policy(s.mall, s.problem.history, future, moved, 0, 3);
  double diff = 0.0;
  for (std::size_t h = 0; h < 3; ++h) diff += std::abs(t0[h] - t1[h]);
  EXPECT_GT(diff, 1e-9);  // the random forecaster has nonzero PCI sensitivity
}

TEST(CompositeLoss, ZeroExactlyAtTargetWithPolicyInBox) {
  OptimProblem p;
  p.target_scaled = 0.5;
  std::vector<double> temps(5, 0.5);
  std::vector<double> policy{0.0, 0.25, 0.5, 0.75, 1.0};
  EXPECT_DOUBLE_EQ(composite_loss(temps, policy, p), 0.0);

  temps[2] = 0.6;
  EXPECT_NEAR(composite_loss(temps, policy, p), 0.1, 1e-12);
  temps[2] = 0.5;
  policy[0] = 1.2;  // 0.2 above the box with lambda 1
  EXPECT_NEAR(composite_loss(temps, policy, p), 0.2, 1e-12);
  p.lambda = 3.0;
  EXPECT_NEAR(composite_loss(temps, policy, p), 0.6, 1e-12);
  policy[0] = -0.4;
  EXPECT_NEAR(composite_loss(temps, policy, p), 1.2, 1e-12);
}

TEST(CompositeLoss, GradientThroughFullLoopMatchesFiniteDifferences) {
  Scenario s(11);
  const auto future = baseline_predict(s.mall, s.problem.history);
  const auto stacked = stack_with_zeroed_pci(s.problem.history, future, 0);
  const Tensor target(Shape{3}, std::vector<double>(3, s.problem.target_scaled));

  auto eval = [&](std::vector<ad::NodePtr>* leaves_out) {
    auto leaves = s.moptim.params().make_leaves();
    auto policy = s.moptim.forward(ad::constant(stacked), leaves);
    auto temps = furnace::detail::simulate_policy_node(s.mall, stacked, policy, 6, 0, 3);
    auto loss = ad::add(ad::l1_loss(temps, ad::constant(target)),
                        ad::scale(ad::interval_penalty(policy, 0.0, 1.0), 1.0));
    if (leaves_out) {
      ad::backward(loss);
      *leaves_out = leaves;
    }
    return loss->value.at(0);
  };

  std::vector<ad::NodePtr> leaves;
  eval(&leaves);
  const auto analytic = s.moptim.params().collect_grads(leaves);
  bool any_nonzero = false;
  for (double g : analytic) any_nonzero = any_nonzero || g != 0.0;
  EXPECT_TRUE(any_nonzero);  // differentiable path from weights to loss

  const auto numeric = tu::finite_difference(s.moptim.params().values(),
                                             [&] { return eval(nullptr); }, 1e-6);
  EXPECT_LT(tu::max_grad_rel_err(analytic, numeric, 1e-4), 1e-5);
}

TEST(Optimize, ZeroIterationsReturnInitialPolicy) {
  Scenario s(13);
  const auto before = s.moptim.params().values();
  OptimizeConfig cfg;
  cfg.iterations = 0;
  const auto result = optimize(s.mall, s.moptim, s.problem, cfg);
  EXPECT_EQ(result.best.iteration, 0);
  EXPECT_EQ(result.trace.size(), 1u);
  EXPECT_EQ(s.moptim.params().values(), before);  // no update applied
}

TEST(Optimize, BestLossMonotoneInIterationBudget) {
  double prev = std::numeric_limits<double>::infinity();
  for (int iters : {0, 5, 25, 100}) {
    Scenario s(15);  // identical fresh scenario each run
    OptimizeConfig cfg;
    cfg.iterations = iters;
    const auto result = optimize(s.mall, s.moptim, s.problem, cfg);
    EXPECT_LE(result.best.loss, prev + 1e-15) << "iterations " << iters;
    EXPECT_LE(result.best.loss, result.trace.front().loss);  // never worse than initial
    prev = result.best.loss;
  }
}

TEST(Optimize, ForecasterParamsBitIdenticalAfterRun) {
  Scenario s(17);
  const auto before = s.mall.params().values();
  OptimizeConfig cfg;
  cfg.iterations = 50;
  optimize(s.mall, s.moptim, s.problem, cfg);
  const auto& after = s.mall.params().values();
  ASSERT_EQ(before.size(), after.size());
  EXPECT_EQ(0, std::memcmp(before.data(), after.data(), before.size() * sizeof(double)));
}

TEST(Optimize, TraceCsvShape) {
  Scenario s(19);
  OptimizeConfig cfg;
  cfg.iterations = 3;
  const auto result = optimize(s.mall, s.moptim, s.problem, cfg);
  const auto csv = optimize_trace_to_csv(result);
  EXPECT_EQ(csv.substr(0, 14), "iteration,loss");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);  // header + 4 evals
}

TEST(ClosedLoop, UncontrolledRunReproducesPlantSchedule) {
  PlantConfig pcfg;
  pcfg.n_channels = 8;
  pcfg.seed = 23;
  pcfg.noise_std = 0.5;

  // Reference run: the raw plant on its own schedule.
  SyntheticPlant reference(pcfg);
  std::vector<double> ref_t;
  const int warmup = (24 + 3) * 10 + pcfg.pci_delay_minutes;
  const int control = 300;
  for (int m = 0; m < warmup + control; ++m) {
    const auto row = reference.step();
    if (m >= warmup)
      ref_t.push_back((row.taps[0] + row.taps[1] + row.taps[2] + row.taps[3]) / 4.0);
  }

  // Closed loop with a small untrained forecaster: the uncontrolled trace
  // must match the reference exactly (same seed, same draw order).
  const auto frame = generate_plant(pcfg, 600);
  PreprocessConfig prep;
  const auto pp = preprocess(frame, prep);
  std::vector<std::string> feature_order;
  for (const auto& n : frame.channel_names) feature_order.push_back(n);
  feature_order.push_back(kTemperatureColumn);

  MallModel mall(8, feature_order.size(), 3);
  mall.init(29);
  ClosedLoopConfig cfg;
  cfg.control_minutes = control;
  cfg.iterations_first = 3;
  cfg.iterations_warm = 2;
  cfg.replan_every_steps = 3;
  const auto result = closed_loop_eval(pcfg, mall, pp.stats, feature_order, prep, cfg);

  ASSERT_EQ(result.uncontrolled.size(), ref_t.size());
  for (std::size_t i = 0; i < ref_t.size(); ++i)
    EXPECT_DOUBLE_EQ(result.uncontrolled[i].realized_t, ref_t[i]);

  // Logging contract: both PCI traces present, controlled applies plans.
  ASSERT_EQ(result.controlled.size(), result.uncontrolled.size());
  bool pci_differs = false;
  for (std::size_t i = 0; i < result.controlled.size(); ++i)
    pci_differs = pci_differs || result.controlled[i].pci_applied !=
                                     result.uncontrolled[i].pci_applied;
  EXPECT_TRUE(pci_differs);

  const auto csv = closed_loop_to_csv(result);
  EXPECT_EQ(csv.substr(0, 48), "run,timestamp,pci_applied,realized_t,predicted_t");
  EXPECT_NE(csv.find("controlled,"), std::string::npos);
  EXPECT_NE(csv.find("uncontrolled,"), std::string::npos);

  // Stats are populated and consistent.
  EXPECT_GT(result.uncontrolled_stats.max_abs_dev,
            result.uncontrolled_stats.mean_abs_dev - 1e-12);
  EXPECT_GE(result.controlled_stats.pct_in_band, 0.0);
  EXPECT_LE(result.controlled_stats.pct_in_band, 100.0);
}
