#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "cosdpo/control.hpp"
#include "cosdpo/error.hpp"
#include "cosdpo/loss.hpp"
#include "cosdpo/train.hpp"
#include "helpers.hpp"
#include "json.hpp"

using namespace cosdpo;

namespace {

struct Problem {
  MoftDataset data;
  std::shared_ptr<const ScoreModel> base;
};

Problem make_problem(std::size_t m, std::uint64_t seed = 7, double conflict = 0.8) {
  std::mt19937_64 rng(seed);
  auto data = m >= 2 ? synth_conflicting(40, 6, 6, m, conflict, seed)
                     : cosdpo::testing::random_dataset(rng, 40, 6, 6, m);
  ModelConfig bc;
  bc.d = 6;
  bc.hidden_dims = {8};
  bc.seed = seed;
  TrainConfig pt;
  pt.steps = 100;
  pt.batch_groups = 8;
  pt.lr = 5e-3;
  pt.seed = seed;
  auto base = std::make_shared<const ScoreModel>(pretrain_base(data, bc, pt));
  return {std::move(data), base};
}

ModelConfig head(std::size_t m, bool cw, bool ct, std::uint64_t seed = 3) {
  ModelConfig c;
  c.d = 6;
  c.m = m;
  c.hidden_dims = {8};
  c.condition_weight = cw;
  c.condition_temperature = ct;
  c.seed = seed;
  return c;
}

TrainConfig quick(std::size_t steps = 60, std::uint64_t seed = 5) {
  TrainConfig t;
  t.steps = steps;
  t.batch_groups = 8;
  t.lr = 5e-3;
  t.seed = seed;
  return t;
}

bool same_params(const ScoreModel& a, const ScoreModel& b) {
  return std::equal(a.params().begin(), a.params().end(), b.params().begin(), b.params().end());
}

}  // namespace

TEST(Dirichlet, EmpiricalMeanMatchesNormalizedConcentration) {
  for (const std::vector<double>& alpha :
       {std::vector<double>{0.5, 0.5}, {0.2, 0.2}, {0.5, 1.0}, {1, 1, 1}, {3, 1, 0.5}}) {
    Rng rng(42);
    std::vector<double> mean(alpha.size(), 0.0);
    const int n = 50000;
    for (int i = 0; i < n; ++i) {
      const auto w = sample_dirichlet(alpha, rng);
      double s = 0.0;
      for (std::size_t j = 0; j < w.size(); ++j) {
        EXPECT_GE(w[j], 0.0);
        mean[j] += w[j] / n;
        s += w[j];
      }
      ASSERT_NEAR(s, 1.0, 1e-12);
    }
    double total = 0.0;
    for (double a : alpha) total += a;
    for (std::size_t j = 0; j < alpha.size(); ++j) EXPECT_NEAR(mean[j], alpha[j] / total, 0.01);
  }
}

TEST(Dirichlet, TinyConcentrationStaysFinite) {
  Rng rng(1);
  const double alpha[2] = {1e-3, 1e-3};
  for (int i = 0; i < 1000; ++i) {
    const auto w = sample_dirichlet(alpha, rng);
    EXPECT_TRUE(std::isfinite(w[0]) && std::isfinite(w[1]));
    EXPECT_NEAR(w[0] + w[1], 1.0, 1e-12);
  }
}

TEST(Dirichlet, SingleObjectiveAndInvalidInput) {
  Rng rng(1);
  const double one[1] = {0.7};
  EXPECT_EQ(sample_dirichlet(one, rng).vector(), std::vector<double>{1.0});
  const double bad[2] = {1.0, 0.0};
  EXPECT_THROW(sample_dirichlet(bad, rng), DomainError);
  const double neg[2] = {1.0, -2.0};
  EXPECT_THROW(sample_dirichlet(neg, rng), DomainError);
}

TEST(Temperature, DefaultSupportAndMean) {
  Rng rng(3);
  const BetaRange range;
  std::vector<double> mean(2, 0.0);
  const int n = 50000;
  for (int i = 0; i < n; ++i) {
    const auto b = sample_temperature(range, 2, rng);
    for (std::size_t j = 0; j < 2; ++j) {
      EXPECT_GE(b[j], 0.67);
      EXPECT_LE(b[j], 1.5);
      mean[j] += b[j] / n;
    }
  }
  for (double v : mean) EXPECT_NEAR(v, (0.67 + 1.5) / 2, 0.01);
}

TEST(Temperature, PointMass) {
  Rng rng(3);
  for (int i = 0; i < 10; ++i)
    EXPECT_EQ(sample_temperature(BetaRange{1.0, 1.0}, 3, rng).vector(), (std::vector<double>{1, 1, 1}));
}

TEST(Optimizer, ZeroLearningRateIsNoOp) {
  for (auto kind : {OptimizerKind::Sgd, OptimizerKind::Adam}) {
    OptimizerConfig oc;
    oc.kind = kind;
    Optimizer opt(oc, 0.0, 3);
    std::vector<double> p{1.0, -2.0, 3.5};
    const auto before = p;
    const std::vector<double> g{0.3, -7.0, 1e3};
    for (int i = 0; i < 5; ++i) opt.step(p, g);
    EXPECT_EQ(p, before);
  }
}

TEST(Optimizer, FirstAdamStepMovesByLearningRate) {
  Optimizer opt(OptimizerConfig{}, 0.1, 2);
  std::vector<double> p{0.0, 0.0};
  const std::vector<double> g{5.0, -0.01};
  opt.step(p, g);
  EXPECT_NEAR(p[0], -0.1, 1e-6);
  EXPECT_NEAR(p[1], 0.1, 1e-4);
}

TEST(Optimizer, SgdStep) {
  OptimizerConfig oc;
  oc.kind = OptimizerKind::Sgd;
  Optimizer opt(oc, 0.5, 2);
  std::vector<double> p{1.0, 1.0};
  const std::vector<double> g{2.0, -4.0};
  opt.step(p, g);
  EXPECT_EQ(p, (std::vector<double>{0.0, 3.0}));
}

TEST(TrainConfig, Validation) {
  auto bad = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(2), DomainError);
  };
  bad([](TrainConfig& c) { c.steps = 0; });
  bad([](TrainConfig& c) { c.lr = 0.0; });
  bad([](TrainConfig& c) { c.lambda = -0.1; });
  bad([](TrainConfig& c) { c.alpha = {1.0, 0.0}; });
  bad([](TrainConfig& c) { c.alpha = {1.0}; });
  bad([](TrainConfig& c) { c.beta = {1.0, 1.0, 1.0}; });
  bad([](TrainConfig& c) { c.beta_dist = {0.0, 1.0}; });
  bad([](TrainConfig& c) { c.beta_dist = {2.0, 1.0}; });
  EXPECT_NO_THROW(TrainConfig{}.validate(2));
}

TEST(StepLog, OneJsonObjectPerLine) {
  StepRecord r;
  r.step = 3;
  r.w = {0.25, 0.75};
  r.beta = {1.0, 1.0};
  r.loss_vector = {0.5, 0.7};
  r.scalarized = 0.65;
  std::ostringstream out;
  write_step_jsonl(out, r);
  const std::string line = out.str();
  ASSERT_EQ(line.back(), '\n');
  EXPECT_EQ(std::count(line.begin(), line.end(), '\n'), 1);
  const auto j = nlohmann::json::parse(line);
  EXPECT_EQ(j.at("step"), 3);
  EXPECT_EQ(j.at("w")[1], 0.75);
  EXPECT_FALSE(j.contains("model"));
  EXPECT_TRUE(j.contains("penalty"));
}

TEST(WeightCos, DeterministicAndLogsEveryStep) {
  auto p = make_problem(2);
  auto cfg = quick(30);
  std::vector<StepRecord> log;
  cfg.observer = [&](const StepRecord& r) { log.push_back(r); };
  const auto init = init_params(head(2, true, false), ModelKind::Augmentation, p.base);
  const auto a = train_weight_cos(*p.base, init, p.data, cfg);
  cfg.observer = nullptr;
  const auto b = train_weight_cos(*p.base, init, p.data, cfg);
  EXPECT_TRUE(same_params(a, b));
  EXPECT_FALSE(same_params(a, init));
  ASSERT_EQ(log.size(), 30u);
  for (std::size_t i = 0; i < log.size(); ++i) {
    EXPECT_EQ(log[i].step, i);
    EXPECT_NEAR(log[i].w[0] + log[i].w[1], 1.0, 1e-12);
    EXPECT_EQ(log[i].beta, (std::vector<double>{1.0, 1.0}));
  }
}

TEST(WeightCos, ReducesValidationScalarizedLoss) {
  auto p = make_problem(2);
  auto [train, valid, test] = split(p.data, SplitFractions{0.6, 0.2, 0.2}, 1);
  const auto init = init_params(head(2, true, false), ModelKind::Augmentation, p.base);
  const auto trained = train_weight_cos(*p.base, init, train, quick(300));
  const SimplexPoint w({0.5, 0.5});
  const Condition c{w, std::nullopt};
  const TemperatureVector beta({1.0, 1.0});
  const double before = scalarized_loss(loss_vector(init, *p.base, valid, c, beta), w);
  const double after = scalarized_loss(loss_vector(trained, *p.base, valid, c, beta), w);
  EXPECT_LT(after, before);
}

TEST(WeightCos, SingleObjectiveSamplesTheVertex) {
  auto p = make_problem(1);
  auto cfg = quick(200);
  std::vector<StepRecord> log;
  cfg.observer = [&](const StepRecord& r) { log.push_back(r); };
  const auto init = init_params(head(1, true, false), ModelKind::Augmentation, p.base);
  const auto trained = train_weight_cos(*p.base, init, p.data, cfg);
  for (const auto& r : log) EXPECT_EQ(r.w, std::vector<double>{1.0});
  const Condition c{SimplexPoint({1.0}), std::nullopt};
  const TemperatureVector beta({1.0});
  EXPECT_LT(loss_vector(trained, *p.base, p.data, c, beta).values[0],
            loss_vector(init, *p.base, p.data, c, beta).values[0]);
}

TEST(WeightCos, PenaltyChangesTheObjective) {
  auto p = make_problem(2);
  auto cfg = quick(20);
  cfg.lambda = 0.5;
  std::vector<StepRecord> log;
  cfg.observer = [&](const StepRecord& r) { log.push_back(r); };
  train_weight_cos(*p.base, init_params(head(2, true, false), ModelKind::Augmentation, p.base), p.data, cfg);
  for (const auto& r : log) {
    EXPECT_GT(r.penalty, 0.0);
    EXPECT_NEAR(r.total, r.scalarized + 0.5 * r.penalty, 1e-12);
  }
}

TEST(WeightCos, RequiresWeightOnlyConditioning) {
  auto p = make_problem(2);
  EXPECT_THROW(train_weight_cos(*p.base, init_params(head(2, false, false), ModelKind::Augmentation, p.base),
                                p.data, quick(2)),
               DomainError);
  EXPECT_THROW(train_weight_cos(*p.base, init_params(head(2, true, true), ModelKind::Augmentation, p.base),
                                p.data, quick(2)),
               DomainError);
}

TEST(WeightCos, DivergenceAbortsWithStep) {
  auto p = make_problem(2);
  auto cfg = quick(20);
  cfg.lr = 1e300;
  cfg.clip_norm = 0.0;
  try {
    train_weight_cos(*p.base, init_params(head(2, true, false), ModelKind::Augmentation, p.base), p.data, cfg);
    FAIL() << "expected TrainingAborted";
  } catch (const TrainingAborted& e) {
    EXPECT_GE(e.step(), 1u);
    EXPECT_FALSE(e.primitive().empty());
  }
}

TEST(TemperatureCos, DeterministicAndSamplesBeta) {
  auto p = make_problem(2);
  auto cfg = quick(30);
  std::vector<StepRecord> log;
  cfg.observer = [&](const StepRecord& r) { log.push_back(r); };
  const auto init = init_params(head(2, true, true), ModelKind::Augmentation, p.base);
  const auto a = train_temperature_cos(*p.base, init, p.data, cfg);
  cfg.observer = nullptr;
  const auto b = train_temperature_cos(*p.base, init, p.data, cfg);
  EXPECT_TRUE(same_params(a, b));
  for (const auto& r : log)
    for (double v : r.beta) {
      EXPECT_GE(v, 0.67);
      EXPECT_LE(v, 1.5);
    }
}

TEST(TemperatureCos, PointMassIsRawNetworkAtNormalizedTemperature) {
  // at beta' = (1,1) the output is s0 + (net - s0)/2: the raw network is scored at beta = (0.5,0.5)
  auto p = make_problem(2);
  auto cfg = quick(1);
  cfg.beta_dist = {1.0, 1.0};
  StepRecord t_rec;
  cfg.observer = [&](const StepRecord& r) { t_rec = r; };
  const auto init = init_params(head(2, true, true), ModelKind::Augmentation, p.base);
  train_temperature_cos(*p.base, init, p.data, cfg);
  const TemperatureVector beta({1.0, 1.0});
  const SimplexPoint w(t_rec.w);
  const PreparedData data(p.data, p.base.get());
  double expect[2] = {0, 0};
  std::size_t count[2] = {0, 0};
  for (std::size_t k = 0; k < data.size(); ++k) {
    const auto s = temperature_query(*p.base, init, *data[k].group, w, beta);
    for (std::size_t j = 0; j < 2; ++j) {
      if (!data[k].zbar[j]) continue;
      expect[j] += lipo_loss(s, data[k].base_scores, *data[k].zbar[j], 1.0);
      ++count[j];
    }
  }
  const auto direct = loss_vector(init, *p.base, p.data, Condition{w, SimplexPoint({0.5, 0.5})},
                                  TemperatureVector({0.5, 0.5}));
  for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(expect[j] / count[j], direct.values[j], 1e-12);
}

TEST(DpoLs, DeterministicAndDecreasing) {
  auto p = make_problem(2);
  const auto init = init_params(head(2, false, false), ModelKind::Augmentation, p.base);
  const SimplexPoint w({0.3, 0.7});
  const auto a = train_dpo_ls(*p.base, init, p.data, w, quick(200));
  const auto b = train_dpo_ls(*p.base, init, p.data, w, quick(200));
  EXPECT_TRUE(same_params(a, b));
  const TemperatureVector beta({1.0, 1.0});
  EXPECT_LT(scalarized_loss(loss_vector(a, *p.base, p.data, {}, beta), w),
            scalarized_loss(loss_vector(init, *p.base, p.data, {}, beta), w));
}

TEST(DpoLs, RejectsConditionedModel) {
  auto p = make_problem(2);
  EXPECT_THROW(train_dpo_ls(*p.base, init_params(head(2, true, false), ModelKind::Augmentation, p.base),
                            p.data, SimplexPoint({0.5, 0.5}), quick(2)),
               DomainError);
}

TEST(DpoSoup, UnitModelsAndSoupAtVertices) {
  auto p = make_problem(2);
  const auto init = init_params(head(2, false, false), ModelKind::Augmentation, p.base);
  const auto units = train_dpo_soup(*p.base, init, p.data, quick(30));
  ASSERT_EQ(units.size(), 2u);
  EXPECT_EQ(units[0].config(), units[1].config());
  EXPECT_FALSE(same_params(units[0], units[1]));
  EXPECT_TRUE(same_params(average_params(units, SimplexPoint::unit(2, 1)), units[1]));
  const auto again = train_dpo_soup(*p.base, init, p.data, quick(30));
  EXPECT_TRUE(same_params(units[0], again[0]));
  EXPECT_TRUE(same_params(units[1], again[1]));
}

TEST(MoDpo, PivotAndClamp) {
  const double w[3] = {0.2, 0.0, 0.8};
  EXPECT_EQ(mo_dpo_pivot(w), 2u);
  EXPECT_EQ(mo_dpo_clamped(w), (std::vector<double>{0.2, kMoDpoWeightFloor, 0.8}));
  const double tie[2] = {0.5, 0.5};
  EXPECT_EQ(mo_dpo_pivot(tie), 0u);
}

TEST(MoDpo, RewardHandArithmetic) {
  // w=(0.5,0.5), pivot 0: r = 2 * [(s - s0) - 0.5 (s_e2 - s0)]
  const double s[2] = {3.0, 1.0};
  const double s0[2] = {1.0, 1.0};
  const std::vector<std::vector<double>> units{{9.0, 9.0}, {2.0, 5.0}};
  const double w[2] = {0.5, 0.5};
  const auto r = mo_dpo_reward(s, s0, units, w, 0);
  EXPECT_DOUBLE_EQ(r[0], 2.0 * (2.0 - 0.5 * 1.0));
  EXPECT_DOUBLE_EQ(r[1], 2.0 * (0.0 - 0.5 * 4.0));
}

TEST(MoDpo, RewardDegenerateCases) {
  const double s[3] = {1.0, -2.0, 0.5};
  const double s0[3] = {0.5, 0.5, 0.5};
  const double one[1] = {1.0};
  const std::vector<std::vector<double>> u1{{7, 7, 7}};
  EXPECT_EQ(mo_dpo_reward(s, s0, u1, one, 0), (std::vector<double>{0.5, -2.5, 0.0}));
  const std::vector<std::vector<double>> u2{{0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}};
  const double w[2] = {0.3, 0.7};
  for (double v : mo_dpo_reward(s0, s0, u2, w, 1)) EXPECT_EQ(v, 0.0);
  const double tiny[2] = {1e-5, 1.0 - 1e-5};
  EXPECT_THROW(mo_dpo_reward(s, s0, u2, tiny, 0), NumericalError);
}

TEST(MoDpo, DeterministicAndDecreasing) {
  auto p = make_problem(2);
  const auto init = init_params(head(2, false, false), ModelKind::Augmentation, p.base);
  const auto units = train_dpo_soup(*p.base, init, p.data, quick(40));
  const SimplexPoint w({0.6, 0.4});
  std::vector<double> losses;
  auto cfg = quick(200);
  cfg.observer = [&](const StepRecord& r) { losses.push_back(r.total); };
  const auto a = train_mo_dpo(*p.base, init, p.data, w, units, cfg);
  cfg.observer = nullptr;
  const auto b = train_mo_dpo(*p.base, init, p.data, w, units, cfg);
  EXPECT_TRUE(same_params(a, b));
  double head_mean = 0, tail_mean = 0;
  for (std::size_t i = 0; i < 20; ++i) {
    head_mean += losses[i] / 20;
    tail_mean += losses[losses.size() - 1 - i] / 20;
  }
  EXPECT_LT(tail_mean, head_mean);
}

TEST(MoDpo, SingleObjectiveCoincidesWithLinearScalarization) {
  auto p = make_problem(1);
  const auto init = init_params(head(1, false, false), ModelKind::Augmentation, p.base);
  const auto units = train_dpo_soup(*p.base, init, p.data, quick(10));
  const auto mo = train_mo_dpo(*p.base, init, p.data, SimplexPoint({1.0}), units, quick(40));
  const auto ls = train_dpo_ls(*p.base, init, p.data, SimplexPoint({1.0}), quick(40));
  for (std::size_t i = 0; i < mo.param_count(); ++i) EXPECT_NEAR(mo.params()[i], ls.params()[i], 1e-12);
}

TEST(Pretrain, ImprovesMainListNetLoss) {
  auto data = synth_conflicting(40, 6, 6, 2, 0.5, 3);
  ModelConfig bc;
  bc.d = 6;
  bc.hidden_dims = {8};
  auto loss_of = [&](const ScoreModel& m) {
    const PreparedData prep(data, nullptr);
    double total = 0.0;
    for (std::size_t k = 0; k < prep.size(); ++k)
      total += listnet_loss(forward(m, *prep[k].group), prep[k].main_zbar);
    return total / prep.size();
  };
  auto cfg = quick(1);
  cfg.lr = 1e-12;
  const double start = loss_of(pretrain_base(data, bc, cfg));
  const double end = loss_of(pretrain_base(data, bc, quick(300)));
  EXPECT_LT(end, start);
}
