#include <gtest/gtest.h>

#include <cstring>
#include <random>

#include "furnace/adam.hpp"
#include "furnace/autodiff.hpp"
#include "furnace/params.hpp"
#include "furnace/tensor.hpp"
#include "test_util.hpp"

using namespace furnace;
namespace tu = furnace::testutil;

TEST(Tensor, ShapeAndData) {
  Tensor t(Shape{2, 3}, 1.5);
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_DOUBLE_EQ(t.at(1, 2), 1.5);
  EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<double>{1.0}), std::invalid_argument);
  EXPECT_THROW(Tensor::scalar(1.0).rows(), std::invalid_argument);
}

TEST(Matmul, IdentityTimesAIsA) {
  auto a = ad::constant(Tensor::matrix(3, 2, {1, 2, 3, 4, 5, 6}));
  auto id = ad::constant(Tensor::identity(3));
  auto c = ad::matmul(id, a);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_DOUBLE_EQ(c->value.at(i), a->value.at(i));
}

TEST(Matmul, HandComputedProduct) {
  auto a = ad::constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  auto b = ad::constant(Tensor::matrix(2, 1, {1, 1}));
  auto c = ad::matmul(a, b);
  EXPECT_DOUBLE_EQ(c->value.at(0), 3.0);
  EXPECT_DOUBLE_EQ(c->value.at(1), 7.0);
}

TEST(Matmul, ZerosAnnihilate) {
  auto a = ad::constant(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  auto z = ad::constant(Tensor::zeros(Shape{2, 2}));
  auto c = ad::matmul(z, a);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(c->value.at(i), 0.0);
}

TEST(Matmul, ShapeMismatchThrows) {
  auto a = ad::constant(Tensor::zeros(Shape{2, 3}));
  auto b = ad::constant(Tensor::zeros(Shape{2, 3}));
  EXPECT_THROW(ad::matmul(a, b), std::invalid_argument);
}

TEST(Elementwise, SigmoidTanhAtZero) {
  auto x = ad::constant(Tensor::vec({0.0}));
  EXPECT_DOUBLE_EQ(ad::sigmoid(x)->value.at(0), 0.5);
  EXPECT_DOUBLE_EQ(ad::tanh(x)->value.at(0), 0.0);
}

TEST(Elementwise, SigmoidDerivativeAtZero) {
  auto x = ad::variable(Tensor::vec({0.0}));
  auto y = ad::sigmoid(x);
  ad::backward(y);
  EXPECT_DOUBLE_EQ(x->adjoint.at(0), 0.25);
}

TEST(Elementwise, ShapeMismatchThrows) {
  auto a = ad::constant(Tensor::vec({1.0, 2.0}));
  auto b = ad::constant(Tensor::vec({1.0}));
  EXPECT_THROW(ad::add(a, b), std::invalid_argument);
  EXPECT_THROW(ad::mul(a, b), std::invalid_argument);
  EXPECT_THROW(ad::sub(a, b), std::invalid_argument);
}

TEST(Losses, L2Examples) {
  auto same = ad::constant(Tensor::vec({1.0, 2.0}));
  EXPECT_DOUBLE_EQ(ad::l2_loss(same, same)->value.at(0), 0.0);

  auto pred = ad::constant(Tensor::vec({1.0, 1.0}));
  auto target = ad::constant(Tensor::vec({0.0, 0.0}));
  EXPECT_DOUBLE_EQ(ad::l2_loss(pred, target)->value.at(0), 1.0);
}

TEST(Losses, L2GradientMeanConvention) {
  auto pred = ad::variable(Tensor::vec({1.0}));
  auto target = ad::constant(Tensor::vec({0.0}));
  auto loss = ad::l2_loss(pred, target);
  ad::backward(loss);
  EXPECT_DOUBLE_EQ(pred->adjoint.at(0), 2.0);
}

TEST(Losses, L1Examples) {
  auto same = ad::constant(Tensor::vec({1.0, 2.0}));
  EXPECT_DOUBLE_EQ(ad::l1_loss(same, same)->value.at(0), 0.0);

  auto pred = ad::constant(Tensor::vec({2.0, -1.0}));
  auto target = ad::constant(Tensor::vec({0.0, 0.0}));
  EXPECT_DOUBLE_EQ(ad::l1_loss(pred, target)->value.at(0), 3.0);
}

TEST(Losses, L1SubgradientAtZeroIsZero) {
  auto pred = ad::variable(Tensor::vec({1.0, 5.0, -2.0}));
  auto target = ad::constant(Tensor::vec({1.0, 0.0, 0.0}));
  auto loss = ad::l1_loss(pred, target);
  ad::backward(loss);
  EXPECT_DOUBLE_EQ(pred->adjoint.at(0), 0.0);
  EXPECT_DOUBLE_EQ(pred->adjoint.at(1), 1.0);
  EXPECT_DOUBLE_EQ(pred->adjoint.at(2), -1.0);
}

TEST(Losses, NonFiniteOperandThrows) {
  auto bad = ad::constant(Tensor::vec({std::nan("")}));
  auto ok = ad::constant(Tensor::vec({0.0}));
  EXPECT_THROW(ad::l2_loss(bad, ok), std::domain_error);
  EXPECT_THROW(ad::l1_loss(ok, bad), std::domain_error);
}

TEST(Backward, IdentityFunction) {
  auto x = ad::variable(Tensor::scalar(4.2));
  ad::backward(x);
  EXPECT_DOUBLE_EQ(x->adjoint.at(0), 1.0);
}

TEST(Backward, SquareAtThree) {
  auto x = ad::variable(Tensor::scalar(3.0));
  auto y = ad::mul(x, x);
  ad::backward(y);
  EXPECT_DOUBLE_EQ(x->adjoint.at(0), 6.0);
}

TEST(Backward, NonScalarRootThrows) {
  auto x = ad::variable(Tensor::vec({1.0, 2.0}));
  EXPECT_THROW(ad::backward(x), std::invalid_argument);
}

TEST(Backward, GatherScatterRoutesAdjoints) {
  auto x = ad::variable(Tensor::vec({1.0, 2.0, 3.0}));
  auto picked = ad::gather(x, {2, 0});
  auto loss = ad::l1_loss(picked, ad::constant(Tensor::vec({0.0, 0.0})));
  ad::backward(loss);
  EXPECT_DOUBLE_EQ(x->adjoint.at(0), 1.0);
  EXPECT_DOUBLE_EQ(x->adjoint.at(1), 0.0);
  EXPECT_DOUBLE_EQ(x->adjoint.at(2), 1.0);

  Tensor base(Shape{2, 2}, 7.0);
  auto v = ad::variable(Tensor::vec({10.0, 20.0}));
  auto assembled = ad::scatter_into(base, v, {1, 3});
  EXPECT_DOUBLE_EQ(assembled->value.at(0), 7.0);
  EXPECT_DOUBLE_EQ(assembled->value.at(1), 10.0);
  EXPECT_DOUBLE_EQ(assembled->value.at(3), 20.0);
  auto loss2 = ad::l1_loss(ad::reshape(assembled, Shape{4}),
                           ad::constant(Tensor::vec({0.0, 0.0, 0.0, 0.0})));
  ad::backward(loss2);
  EXPECT_DOUBLE_EQ(v->adjoint.at(0), 1.0);
  EXPECT_DOUBLE_EQ(v->adjoint.at(1), 1.0);
}

TEST(Backward, IntervalPenalty) {
  auto x = ad::variable(Tensor::vec({-0.5, 0.3, 1.2}));
  auto pen = ad::interval_penalty(x, 0.0, 1.0);
  EXPECT_NEAR(pen->value.at(0), 0.7, 1e-15);
  ad::backward(pen);
  EXPECT_DOUBLE_EQ(x->adjoint.at(0), -1.0);
  EXPECT_DOUBLE_EQ(x->adjoint.at(1), 0.0);
  EXPECT_DOUBLE_EQ(x->adjoint.at(2), 1.0);
}

namespace {

// Two dense layers with tanh/sigmoid nonlinearities ending in an L2 loss.
double two_layer_loss(ParamStore& store, const Tensor& x, const Tensor& target,
                      std::vector<ad::NodePtr>* leaves_out = nullptr) {
  auto leaves = store.make_leaves();
  auto h = ad::tanh(ad::add_row_bias(ad::matmul(ad::constant(x), leaves[0]), leaves[1]));
  auto s = ad::sigmoid(ad::add_row_bias(ad::matmul(h, leaves[2]), leaves[3]));
  auto loss = ad::l2_loss(s, ad::constant(target));
  if (leaves_out) {
    ad::backward(loss);
    *leaves_out = leaves;
  }
  return loss->value.at(0);
}

}  // namespace

TEST(Backward, TwoLayerNetMatchesFiniteDifferences) {
  for (unsigned seed = 0; seed < 25; ++seed) {
    std::mt19937_64 rng(seed);
    ParamStore store;
    store.add("w1", Shape{4, 6});
    store.add("b1", Shape{6});
    store.add("w2", Shape{6, 3});
    store.add("b2", Shape{3});
    for (std::size_t i = 0; i < store.count(); ++i) store.init_uniform(i, -1.0, 1.0, rng);

    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Tensor x(Shape{2, 4});
    for (auto& v : x.data()) v = dist(rng);
    Tensor target(Shape{2, 3});
    for (auto& v : target.data()) v = dist(rng);

    std::vector<ad::NodePtr> leaves;
    two_layer_loss(store, x, target, &leaves);
    auto analytic = store.collect_grads(leaves);
    auto numeric = tu::finite_difference(
        store.values(), [&] { return two_layer_loss(store, x, target); });
    EXPECT_LT(tu::max_grad_rel_err(analytic, numeric), 1e-4) << "seed " << seed;
  }
}

TEST(Backward, DeterministicBitwise) {
  std::mt19937_64 rng(99);
  ParamStore store;
  store.add("w1", Shape{4, 6});
  store.add("b1", Shape{6});
  store.add("w2", Shape{6, 3});
  store.add("b2", Shape{3});
  for (std::size_t i = 0; i < store.count(); ++i) store.init_uniform(i, -1.0, 1.0, rng);
  Tensor x(Shape{3, 4}, 0.37);
  Tensor target(Shape{3, 3}, 0.11);

  std::vector<ad::NodePtr> leaves_a, leaves_b;
  two_layer_loss(store, x, target, &leaves_a);
  two_layer_loss(store, x, target, &leaves_b);
  auto ga = store.collect_grads(leaves_a);
  auto gb = store.collect_grads(leaves_b);
  ASSERT_EQ(ga.size(), gb.size());
  EXPECT_EQ(0, std::memcmp(ga.data(), gb.data(), ga.size() * sizeof(double)));
}

TEST(Backward, NoNanForLargeInputs) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> dist(-50.0, 50.0);
  Tensor x(Shape{4, 4});
  for (auto& v : x.data()) v = dist(rng);
  auto xv = ad::variable(x);
  auto y = ad::mul(ad::sigmoid(xv), ad::tanh(xv));
  auto z = ad::matmul(y, ad::constant(x));
  auto loss = ad::l2_loss(z, ad::constant(Tensor(Shape{4, 4}, 1.0)));
  EXPECT_TRUE(loss->value.all_finite());
  ad::backward(loss);
  EXPECT_TRUE(xv->adjoint.all_finite());
}

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  std::vector<double> params{1.0, -2.0, 3.0};
  std::vector<double> grads{0.0, 0.0, 0.0};
  AdamState state(3);
  adam_step(params, grads, state);
  EXPECT_DOUBLE_EQ(params[0], 1.0);
  EXPECT_DOUBLE_EQ(params[1], -2.0);
  EXPECT_DOUBLE_EQ(params[2], 3.0);
  EXPECT_EQ(state.step_count, 1);
}

TEST(Adam, FirstStepMagnitudeIsLearningRate) {
  std::vector<double> params{0.0, 0.0};
  std::vector<double> grads{0.5, -3.0};
  AdamState state(2);
  adam_step(params, grads, state);
  // After bias correction the first update is lr * g / (|g| + eps') ~ lr * sign(g).
  EXPECT_NEAR(params[0], -state.cfg.lr, 1e-6);
  EXPECT_NEAR(params[1], state.cfg.lr, 1e-6);
}

TEST(Adam, DecreasesConvexQuadratic) {
  std::vector<double> params{5.0};
  AdamState state(1, AdamConfig{0.1, 0.9, 0.999, 1e-8});
  auto loss = [&] { return params[0] * params[0]; };
  const double initial = loss();
  for (int i = 0; i < 2; ++i) {
    std::vector<double> grads{2.0 * params[0]};
    adam_step(params, grads, state);
  }
  EXPECT_LT(loss(), initial);
}

TEST(Adam, SizeMismatchThrows) {
  std::vector<double> params{1.0};
  std::vector<double> grads{1.0, 2.0};
  AdamState state(1);
  EXPECT_THROW(adam_step(params, grads, state), std::invalid_argument);
}
