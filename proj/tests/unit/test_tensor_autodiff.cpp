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

#include <sstream>

#include "rnet/rnet.hpp"
#include "../support/test_support.hpp"

using namespace rnet;
using rnet::testing::dot_loss;
using rnet::testing::gradient_check;
using rnet::testing::random_tensor;

TEST(Tensor, RejectsMalformedShapesAndValues) {
  EXPECT_THROW(Tensor({2, 0}), DimensionError);
  EXPECT_THROW(Tensor({2, 2}, {1.0, 2.0, 3.0}), DimensionError);
  EXPECT_THROW(Tensor::vector({1.0, std::nan("")}), ContractError);
  EXPECT_THROW(Tensor::vector({INFINITY}), ContractError);
  Tensor t({2, 3});
  EXPECT_EQ(t.size(), 6u);
  EXPECT_EQ(t.rank(), 2u);
}

TEST(Tensor, ArgmaxBreaksTiesTowardLowestIndex) {
  const std::vector<double> v = {0.3, 0.7, 0.7};
  EXPECT_EQ(argmax(v), 1u);
  EXPECT_THROW(argmax(std::span<const double>{}), ContractError);
}

TEST(Linear, IdentityWeights) {
  Tape tape;
  Var y = ad::linear(tape.constant(Tensor::vector({3.0, -1.0})), tape.constant(Tensor::identity(2)),
                     tape.constant(Tensor({2})));
  EXPECT_EQ(y.value().values(), (std::vector<double>{3.0, -1.0}));
}

TEST(Linear, ZeroWeightsGiveBias) {
  Tape tape;
  Var y = ad::linear(tape.constant(Tensor::vector({0.4, 9.0})), tape.constant(Tensor({2, 2})),
                     tape.constant(Tensor::vector({5.0, 5.0})));
  EXPECT_EQ(y.value().values(), (std::vector<double>{5.0, 5.0}));
}

TEST(Linear, MatchesDenseMatvecOracle) {
  Rng rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    Tensor w = random_tensor({4, 3}, rng), b = random_tensor({4}, rng), x = random_tensor({3}, rng);
    Tape tape;
    Var y = ad::linear(tape.constant(x), tape.constant(w), tape.constant(b));
    const auto oracle = rnet::testing::matvec(w, b, x.data());
    EXPECT_LE(rnet::testing::max_abs_diff(y.value().data(), oracle), 1e-12);
  }
}

TEST(Linear, ShapeMismatchNamesBothShapes) {
  Tape tape;
  try {
    ad::linear(tape.constant(Tensor({3})), tape.constant(Tensor({4, 2})), tape.constant(Tensor({4})));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[4x2]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[3]"), std::string::npos) << msg;
  }
}

TEST(Linear, IsExactlyAffine) {
  Rng rng(11);
  for (int rep = 0; rep < 100; ++rep) {
    Tensor w = random_tensor({5, 4}, rng), b = random_tensor({5}, rng);
    Tensor x = random_tensor({4}, rng), z = random_tensor({4}, rng);
    const double alpha = 2.0 * uniform01(rng) - 1.0, beta = 2.0 * uniform01(rng) - 1.0;
    Tensor mix({4});
    for (std::size_t i = 0; i < 4; ++i) mix[i] = alpha * x[i] + beta * z[i];
    auto f = [&](const Tensor& in) {
      Tape tape;
      return ad::linear(tape.constant(in), tape.constant(w), tape.constant(b)).value();
    };
    const Tensor fm = f(mix), fx = f(x), fz = f(z);
    for (std::size_t r = 0; r < 5; ++r) {
      EXPECT_NEAR(fm[r], alpha * fx[r] + beta * fz[r] - (alpha + beta - 1.0) * b[r], 1e-10);
    }
  }
}

TEST(Backward, SumOfIdentityMapGivesInputPattern) {
  Parameter w(Tensor::identity(2), 0), b(Tensor({2}), 1);
  const Tensor x = Tensor::vector({2.0, -3.0});
  Tape tape;
  tape.backward(ad::sum(ad::linear(tape.constant(x), tape.param(w), tape.param(b))));
  // d sum(Wx) / dW_rc = x_c for every row r
  EXPECT_EQ(w.grad.values(), (std::vector<double>{2.0, -3.0, 2.0, -3.0}));
  EXPECT_EQ(b.grad.values(), (std::vector<double>{1.0, 1.0}));
}

TEST(Backward, ReluIsTransparentOnPositivePreactivations) {
  // all weights and inputs positive, so every pre-activation is positive
  Rng rng(3);
  Tensor w1v({3, 2}), w2v({2, 3});
  for (auto& v : w1v.data()) v = 0.1 + uniform01(rng);
  for (auto& v : w2v.data()) v = 0.1 + uniform01(rng);
  Parameter w1(w1v, 0), b1(Tensor({3}), 1), w2(w2v, 2), b2(Tensor({2}), 3);
  const Tensor x = Tensor::vector({0.5, 1.5});
  Tape tape;
  Var h = ad::relu(ad::linear(tape.constant(x), tape.param(w1), tape.param(b1)));
  Var y = ad::relu(ad::linear(h, tape.param(w2), tape.param(b2)));
  tape.backward(ad::sum(y));
  // dL/dh = W2^T 1, dL/dW1 = (W2^T 1) x^T
  for (std::size_t r = 0; r < 3; ++r) {
    const double up = w2v.at(0, r) + w2v.at(1, r);
    for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(w1.grad.at(r, c), up * x[c], 1e-14);
  }
}

TEST(Backward, ThreeLayerNetworkMatchesFiniteDifferences) {
  Rng rng(21);
  for (int rep = 0; rep < 10; ++rep) {
    ParameterStore store;
    std::vector<Parameter*> ps;
    const std::size_t dims[4] = {5, 6, 4, 3};
    for (int l = 0; l < 3; ++l) {
      ps.push_back(&store.create(random_tensor({dims[l + 1], dims[l]}, rng)));
      ps.push_back(&store.create(random_tensor({dims[l + 1]}, rng, 0.5)));
    }
    const Tensor x = random_tensor({5}, rng);
    auto loss = [&](Tape& t) {
      Var v = t.constant(x);
      v = ad::relu(ad::linear(v, t.param(*ps[0]), t.param(*ps[1])));
      v = ad::relu(ad::linear(v, t.param(*ps[2]), t.param(*ps[3])));
      return ad::nll(ad::softmax(ad::linear(v, t.param(*ps[4]), t.param(*ps[5]))), rep % 3);
    };
    EXPECT_LT(gradient_check(loss, ps), 1e-4);
  }
}

TEST(Backward, RejectsNonScalarLoss) {
  Tape tape;
  Parameter p(Tensor::vector({1.0, 2.0}), 0);
  EXPECT_THROW(tape.backward(tape.param(p)), ContractError);
}

TEST(Backward, DisconnectedParameterKeepsZeroGradient) {
  Parameter used(Tensor::vector({1.0, 2.0}), 0), unused(Tensor::vector({3.0, 4.0}), 1);
  Tape tape;
  tape.param(unused);
  tape.backward(ad::sum(ad::square(tape.param(used))));
  EXPECT_EQ(unused.grad.values(), (std::vector<double>{0.0, 0.0}));
  EXPECT_FALSE(unused.touched);
  EXPECT_EQ(used.grad.values(), (std::vector<double>{2.0, 4.0}));
}

// Every differentiable op, 100 seeded instances each.
class OpGradient : public ::testing::TestWithParam<int> {};

TEST_P(OpGradient, MatchesFiniteDifferences) {
  Rng rng(1000 + GetParam());
  const std::size_t n = 2 + GetParam() % 5;
  Parameter a(random_tensor({n}, rng), 0), b(random_tensor({n}, rng), 1);
  Parameter m(random_tensor({3, n}, rng), 2), w(random_tensor({3}, rng), 3);
  const Tensor probe = random_tensor({n}, rng);
  const Tensor probe_cat = random_tensor({2 * n}, rng);
  const std::size_t label = GetParam() % n;
  std::vector<std::pair<const char*, std::function<Var(Tape&)>>> cases = {
      {"relu", [&](Tape& t) { return dot_loss(t, ad::relu(t.param(a)), probe); }},
      {"add", [&](Tape& t) { return dot_loss(t, ad::add(t.param(a), t.param(b)), probe); }},
      {"sub", [&](Tape& t) { return dot_loss(t, ad::sub(t.param(a), t.param(b)), probe); }},
      {"scale", [&](Tape& t) { return dot_loss(t, ad::scale(t.param(a), -1.7), probe); }},
      {"square", [&](Tape& t) { return dot_loss(t, ad::square(t.param(a)), probe); }},
      {"sum", [&](Tape& t) { return ad::sum(t.param(a)); }},
      {"pick", [&](Tape& t) { return ad::pick(t.param(a), label); }},
      {"row", [&](Tape& t) { return dot_loss(t, ad::row(t.param(m), 1), probe); }},
      {"concat", [&](Tape& t) { return dot_loss(t, ad::concat(t.param(a), t.param(b)), probe_cat); }},
      {"weighted_sum",
       [&](Tape& t) {
         std::vector<Var> ins = {t.param(a), t.param(b), ad::scale(t.param(a), 0.5)};
         return dot_loss(t, ad::weighted_sum(ins, t.param(w)), probe);
       }},
      {"softmax", [&](Tape& t) { return dot_loss(t, ad::softmax(t.param(a)), probe); }},
      {"log_softmax", [&](Tape& t) { return dot_loss(t, ad::log_softmax(t.param(a)), probe); }},
      {"nll", [&](Tape& t) { return ad::nll(ad::softmax(t.param(a)), label); }},
  };
  for (auto& [name, fn] : cases) {
    EXPECT_LT(gradient_check(fn, {&a, &b, &m, &w}), 1e-4) << name;
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, OpGradient, ::testing::Range(0, 100));

TEST(Sgd, StepArithmetic) {
  Parameter p(Tensor::vector({1.0}), 0);
  p.grad[0] = 0.5;
  p.touched = true;
  std::vector<Parameter*> ps = {&p};
  sgd_step(ps, SgdConfig{0.01, 20, 10.0}, 0);
  EXPECT_DOUBLE_EQ(p.value[0], 0.995);
  EXPECT_EQ(p.grad[0], 0.0);
}

TEST(Sgd, AnnealingSchedule) {
  SgdConfig c{0.01, 20, 10.0};
  EXPECT_DOUBLE_EQ(c.effective_lr(19), 0.01);
  EXPECT_DOUBLE_EQ(c.effective_lr(20), 0.001);
  EXPECT_NEAR(c.effective_lr(40), 0.0001, 1e-18);
}

TEST(Sgd, ZeroGradientIsIdentity) {
  Rng rng(5);
  Parameter p(random_tensor({3, 3}, rng), 0);
  const Tensor before = p.value;
  p.touched = true;
  std::vector<Parameter*> ps = {&p};
  sgd_step(ps, SgdConfig{}, 3);
  EXPECT_EQ(p.value, before);
}

TEST(Sgd, ConfigValidation) {
  EXPECT_THROW((SgdConfig{0.0, 20, 10.0}.validate()), ConfigError);
  EXPECT_THROW((SgdConfig{0.1, 0, 10.0}.validate()), ConfigError);
  EXPECT_THROW((SgdConfig{0.1, 20, 0.5}.validate()), ConfigError);
  EXPECT_NO_THROW((SgdConfig{0.1, 20, 1.0}.validate()));
}

TEST(OpCounter, LinearCountsMultiplyAddsAsTwo) {
  Tape tape;
  OpCounter::reset();
  ad::linear(tape.constant(Tensor({3})), tape.constant(Tensor({4, 3})), tape.constant(Tensor({4})));
  EXPECT_EQ(OpCounter::value(), 2u * 4 * 3 + 4);
}

TEST(Checkpoint, RoundTripsEntries) {
  Rng rng(9);
  std::vector<checkpoint::Entry> entries = {{3, random_tensor({2, 5}, rng)}, {7, random_tensor({4}, rng)}};
  std::stringstream ss;
  checkpoint::write(ss, entries);
  const auto back = checkpoint::read(ss);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].id, 3u);
  EXPECT_EQ(back[0].value, entries[0].value);
  EXPECT_EQ(back[1].value, entries[1].value);
}

TEST(Checkpoint, LayoutMatchesDocumentedFraming) {
  std::vector<checkpoint::Entry> entries = {{1, Tensor::vector({1.5, -2.0})}};
  std::stringstream ss;
  checkpoint::write(ss, entries);
  const std::string bytes = ss.str();
  // magic 4 + version 4 + id 8 + rank 4 + dims 8 + data 16
  ASSERT_EQ(bytes.size(), 4u + 4 + 8 + 4 + 8 + 16);
  EXPECT_EQ(bytes.substr(0, 4), "RNTN");
  double first = 0.0;
  std::memcpy(&first, bytes.data() + 28, 8);
  EXPECT_EQ(first, 1.5);
}

TEST(Checkpoint, ReportsCorruptionWithOffsets) {
  std::stringstream bad("XXXX");
  EXPECT_THROW(checkpoint::read(bad), FormatError);
  std::vector<checkpoint::Entry> entries = {{1, Tensor::vector({1.0, 2.0, 3.0})}};
  std::stringstream ss;
  checkpoint::write(ss, entries);
  std::string bytes = ss.str();
  std::stringstream cut(bytes.substr(0, bytes.size() - 5));
  try {
    checkpoint::read(cut);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("offset"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, RestoreRejectsShapeMismatchAndUnknownIds) {
  Tensor target({2});
  std::map<std::uint64_t, Tensor*> targets = {{0, &target}};
  std::vector<checkpoint::Entry> wrong_shape = {{0, Tensor::vector({1.0, 2.0, 3.0})}};
  EXPECT_ANY_THROW(checkpoint::restore(wrong_shape, targets));
  std::vector<checkpoint::Entry> ok = {{0, Tensor::vector({4.0, 5.0})}};
  checkpoint::restore(ok, targets);
  EXPECT_EQ(target.values(), (std::vector<double>{4.0, 5.0}));
}
