#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "cosdpo/control.hpp"
#include "cosdpo/error.hpp"
#include "cosdpo/eval.hpp"
#include "helpers.hpp"

using namespace cosdpo;

namespace {

struct Fixture {
  std::shared_ptr<const ScoreModel> base;
  ScoreModel wmodel;
  ScoreModel tmodel;
  RankingGroup group;
};

Fixture make(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ModelConfig bc;
  bc.d = 3;
  bc.hidden_dims = {5};
  bc.seed = seed;
  auto base = std::make_shared<const ScoreModel>(init_params(bc, ModelKind::Base));
  ModelConfig wc = bc;
  wc.m = 2;
  wc.condition_weight = true;
  wc.seed = seed + 1;
  ModelConfig tc = wc;
  tc.condition_temperature = true;
  return Fixture{base, init_params(wc, ModelKind::Augmentation, base),
                 init_params(tc, ModelKind::Augmentation, base),
                 cosdpo::testing::random_group(rng, 6, 3, 2)};
}

}  // namespace

TEST(ApplyScale, UnitScaleIsIdentityAndRejectsNonPositive) {
  const double s0[2] = {1.0, 2.0};
  const double s[2] = {5.0, -1.0};
  EXPECT_EQ(apply_scale(s0, s, 1.0), (std::vector<double>{5.0, -1.0}));
  EXPECT_THROW(apply_scale(s0, s, 0.0), DomainError);
  EXPECT_THROW(apply_scale(s0, s, -2.0), DomainError);
}

TEST(ScaleTemperature, UnitScaleLeavesModelScores) {
  auto f = make(1);
  const SimplexPoint w({0.3, 0.7});
  EXPECT_EQ(scale_temperature(*f.base, f.wmodel, 1.0, f.group, w),
            forward(f.wmodel, f.group, Condition{w, std::nullopt}));
}

TEST(ScaleTemperature, HugeScaleRecoversBase) {
  auto f = make(2);
  const SimplexPoint w({0.3, 0.7});
  const auto s = scale_temperature(*f.base, f.wmodel, 1e9, f.group, w);
  const auto s0 = forward(*f.base, f.group);
  for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(s[i], s0[i], 1e-6);
  EXPECT_EQ(rank_by_scores(s), rank_by_scores(s0));
}

TEST(ScaleTemperature, LossIdentity) {
  auto f = make(3);
  const SimplexPoint w({0.6, 0.4});
  const auto s = forward(f.wmodel, f.group, Condition{w, std::nullopt});
  const auto s0 = forward(*f.base, f.group);
  const NormalizedLabels z{{0.1, 0.2, 0.3, 0.1, 0.2, 0.1}};
  for (double c : {0.25, 2.0, 9.0}) {
    const auto moved = scale_temperature(*f.base, f.wmodel, c, f.group, w);
    EXPECT_NEAR(lipo_loss(moved, s0, z, c * 0.8), lipo_loss(s, s0, z, 0.8), 1e-9);
  }
}

TEST(ScaleTemperature, Composition) {
  auto f = make(4);
  const SimplexPoint w({0.5, 0.5});
  const auto s0 = forward(*f.base, f.group);
  const auto once = scale_temperature(*f.base, f.wmodel, 2.0, f.group, w);
  const auto twice = apply_scale(s0, once, 3.0);
  const auto direct = scale_temperature(*f.base, f.wmodel, 6.0, f.group, w);
  for (std::size_t i = 0; i < direct.size(); ++i) EXPECT_NEAR(twice[i], direct[i], 1e-9);
}

TEST(ScaleTemperature, NeedsWeightConditionedModel) {
  auto f = make(5);
  EXPECT_THROW(scale_temperature(*f.base, *f.base, 2.0, f.group, SimplexPoint({0.5, 0.5})),
               DomainError);
}

TEST(TemperatureQuery, ScalarHandExample) {
  // s0 = 1 and net = 3 for every item: hidden relu unit fed by a bias only
  ModelConfig bc;
  bc.d = 1;
  bc.hidden_dims = {1};
  auto base = std::make_shared<const ScoreModel>(ScoreModel(bc, ModelKind::Base, {0.0, 1.0, 1.0, 0.0}));
  ModelConfig tc = bc;
  tc.m = 2;
  tc.condition_weight = tc.condition_temperature = true;
  ScoreModel net(tc, ModelKind::Scratch, {0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 3.0, 0.0});
  RankingGroup g("g", 1, {0.0, 5.0}, {0, 0}, {{0, 0}, {0, 0}});
  const auto s = temperature_query(*base, net, g, SimplexPoint({0.5, 0.5}), TemperatureVector({2.0, 2.0}));
  EXPECT_DOUBLE_EQ(s[0], 1.5);
  EXPECT_DOUBLE_EQ(s[1], 1.5);
}

TEST(TemperatureQuery, UnitMagnitudeIsRawNetwork) {
  auto f = make(6);
  const SimplexPoint w({0.2, 0.8});
  const TemperatureVector beta({0.25, 0.75});
  EXPECT_EQ(temperature_query(*f.base, f.tmodel, f.group, w, beta),
            forward(f.tmodel, f.group, Condition{w, SimplexPoint({0.25, 0.75})}));
}

TEST(TemperatureQuery, DoublingIsTheScaleTwoMap) {
  auto f = make(7);
  const SimplexPoint w({0.45, 0.55});
  const TemperatureVector beta({0.7, 1.1});
  const auto s0 = forward(*f.base, f.group);
  const auto a = apply_scale(s0, temperature_query(*f.base, f.tmodel, f.group, w, beta), 2.0);
  const auto b = temperature_query(*f.base, f.tmodel, f.group, w, beta.scaled(2.0));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(TemperatureQuery, TapeMatchesPlain) {
  auto f = make(8);
  const SimplexPoint w({0.45, 0.55});
  const TemperatureVector beta({0.7, 1.1});
  const MoftDataset ds({f.group}, {LabelMode::Dense, LabelMode::Dense});
  const PreparedData data(ds, f.base.get());
  Tape t;
  Var p = t.constant(std::vector<double>(f.tmodel.params().begin(), f.tmodel.params().end()));
  const auto& v = t.value(temperature_query(t, p, f.tmodel, data[0], w, beta));
  const auto plain = temperature_query(*f.base, f.tmodel, f.group, w, beta);
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(v[i], plain[i], 1e-12);
}

TEST(TemperatureQuery, GradientIsScaledNetworkGradient) {
  auto f = make(9);
  const SimplexPoint w({0.45, 0.55});
  const TemperatureVector beta({0.9, 1.6});
  const MoftDataset ds({f.group}, {LabelMode::Dense, LabelMode::Dense});
  const PreparedData data(ds, f.base.get());
  const std::vector<double> proj{1, -2, 0.5, 3, -1, 0.25};
  const auto g_eq = loss_and_grad(f.tmodel, [&](Tape& t, Var p) {
    return dot(t, temperature_query(t, p, f.tmodel, data[0], w, beta), proj);
  });
  const auto g_net = loss_and_grad(f.tmodel, [&](Tape& t, Var p) {
    return dot(t, forward(t, p, f.tmodel, f.group, Condition{w, beta.normalized()}), proj);
  });
  for (std::size_t i = 0; i < g_eq.grad.size(); ++i)
    EXPECT_NEAR(g_eq.grad[i], g_net.grad[i] / beta.magnitude(), 1e-12);
}

TEST(ControlledScorer, IsLazyScaleMap) {
  auto f = make(10);
  const SimplexPoint w({0.1, 0.9});
  ControlledScorer scorer(*f.base, f.wmodel, 4.0);
  EXPECT_EQ(scorer.scale(), 4.0);
  EXPECT_EQ(scorer(f.group, Condition{w, std::nullopt}),
            scale_temperature(*f.base, f.wmodel, 4.0, f.group, w));
  EXPECT_THROW(ControlledScorer(*f.base, f.wmodel, 0.0), DomainError);
}

TEST(ControlledScorer, RankingSettlesOnBaseAsScaleGrows) {
  auto f = make(11);
  const SimplexPoint w({0.5, 0.5});
  const auto base_rank = rank_by_scores(forward(*f.base, f.group));
  bool settled = false;
  for (double c = 1.0; c <= 1e6; c *= 1.5) {
    const auto r = rank_by_scores(scale_temperature(*f.base, f.wmodel, c, f.group, w));
    if (settled) EXPECT_EQ(r, base_rank) << "c=" << c;
    settled = settled || r == base_rank;
  }
  EXPECT_TRUE(settled);
}
