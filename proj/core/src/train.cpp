#include "cosdpo/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

#include "cosdpo/control.hpp"
#include "cosdpo/error.hpp"
#include "cosdpo/loss.hpp"
#include "json.hpp"

namespace cosdpo {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::Adam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(const std::string& text) {
  if (text == "adam") return OptimizerKind::Adam;
  if (text == "sgd") return OptimizerKind::Sgd;
  throw DomainError("unknown optimizer '" + text + "'");
}

// ---------------------------------------------------------------------------
// Optimizer

Optimizer::Optimizer(const OptimizerConfig& config, double lr, std::size_t param_count)
    : config_(config), lr_(lr) {
  if (!(lr >= 0.0)) throw DomainError("learning rate must be nonnegative");
  if (config_.kind == OptimizerKind::Adam) {
    m_.assign(param_count, 0.0);
    v_.assign(param_count, 0.0);
  }
}

void Optimizer::step(std::span<double> params, std::span<const double> grad) {
  if (params.size() != grad.size()) throw DomainError("optimizer: gradient length mismatch");
  if (lr_ == 0.0) return;
  if (config_.kind == OptimizerKind::Sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr_ * grad[i];
    return;
  }
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
    v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
    const double mhat = m_[i] / c1;
    const double vhat = v_[i] / c2;
    params[i] -= lr_ * mhat / (std::sqrt(vhat) + config_.eps);
  }
}

// ---------------------------------------------------------------------------
// Config

void TrainConfig::validate(std::size_t m) const {
  if (steps < 1) throw DomainError("train: steps must be >= 1");
  if (batch_groups < 1) throw DomainError("train: batch_groups must be >= 1");
  if (!(lr > 0.0)) throw DomainError("train: learning rate must be positive");
  if (!(lambda >= 0.0)) throw DomainError("train: lambda must be nonnegative");
  if (penalty_sign != 1.0 && penalty_sign != -1.0)
    throw DomainError("train: penalty_sign must be +1 or -1");
  if (!alpha.empty()) {
    if (alpha.size() != m) throw DomainError("train: alpha must have m entries");
    for (double a : alpha)
      if (!(a > 0.0)) throw DomainError("train: alpha entries must be positive");
  }
  if (!beta.empty() && beta.size() != m) throw DomainError("train: beta must have m entries");
  if (!(beta_dist.lo > 0.0 && beta_dist.lo <= beta_dist.hi))
    throw DomainError("train: beta distribution needs 0 < lo <= hi");
}

std::vector<double> TrainConfig::alpha_or_default(std::size_t m) const {
  return alpha.empty() ? std::vector<double>(m, 1.0) : alpha;
}

TemperatureVector TrainConfig::beta_or_default(std::size_t m) const {
  return TemperatureVector(beta.empty() ? std::vector<double>(m, 1.0) : beta);
}

void write_step_jsonl(std::ostream& out, const StepRecord& r) {
  nlohmann::ordered_json j;
  if (!r.model.empty()) j["model"] = r.model;
  j["step"] = r.step;
  j["w"] = r.w;
  j["beta"] = r.beta;
  j["loss_vector"] = r.loss_vector;
  j["scalarized"] = r.scalarized;
  j["penalty"] = r.penalty;
  j["total"] = r.total;
  out << j.dump() << '\n';
}

// ---------------------------------------------------------------------------
// Samplers

SimplexPoint sample_dirichlet(std::span<const double> alpha, Rng& rng) {
  if (alpha.empty()) throw DomainError("dirichlet: empty concentration");
  for (double a : alpha)
    if (!(a > 0.0) || !std::isfinite(a))
      throw DomainError("dirichlet: concentration entries must be positive");
  if (alpha.size() == 1) return SimplexPoint({1.0});

  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<double> log_g(alpha.size());
  for (std::size_t j = 0; j < alpha.size(); ++j) {
    const double a = alpha[j];
    if (a >= 1.0) {
      std::gamma_distribution<double> gamma(a, 1.0);
      double g = gamma(rng);
      while (!(g > 0.0)) g = gamma(rng);
      log_g[j] = std::log(g);
    } else {
      // Gamma(a) = Gamma(a + 1) * U^(1/a)
      std::gamma_distribution<double> gamma(a + 1.0, 1.0);
      double g = gamma(rng);
      while (!(g > 0.0)) g = gamma(rng);
      const double u = 1.0 - uni(rng);  // (0, 1]
      log_g[j] = std::log(g) + std::log(u) / a;
    }
  }
  const double mx = *std::max_element(log_g.begin(), log_g.end());
  std::vector<double> w(alpha.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    w[j] = std::exp(log_g[j] - mx);
    sum += w[j];
  }
  for (double& x : w) x /= sum;
  return SimplexPoint(std::move(w));
}

TemperatureVector sample_temperature(const BetaRange& range, std::size_t m, Rng& rng) {
  if (!(range.lo > 0.0 && range.lo <= range.hi))
    throw DomainError("temperature range needs 0 < lo <= hi");
  if (m == 0) throw DomainError("temperature dimension must be positive");
  std::vector<double> beta(m);
  if (range.lo == range.hi) {
    std::fill(beta.begin(), beta.end(), range.lo);
  } else {
    std::uniform_real_distribution<double> uni(range.lo, range.hi);
    for (double& b : beta) b = uni(rng);
  }
  return TemperatureVector(std::move(beta));
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

struct StepGraph {
  Var total;
  Var loss_vector;
  Var scalarized;
  Var penalty;
  bool has_penalty = false;
};

struct StepSample {
  std::vector<std::size_t> batch;
  std::vector<double> w;
  std::vector<double> beta;
};

using GraphBuilder = std::function<StepGraph(Tape&, Var params, StepSample&, Rng&)>;

std::vector<std::size_t> sample_batch(std::size_t n_groups, std::size_t batch, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, n_groups - 1);
  std::vector<std::size_t> out(batch);
  for (auto& k : out) k = pick(rng);
  return out;
}

void clip(std::vector<double>& grad, double max_norm) {
  if (max_norm <= 0.0) return;
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (double& g : grad) g *= s;
  }
}

/// Each step: the builder draws its own w/beta, then the loop draws the mini-batch and
/// takes one optimizer step.
ScoreModel run_loop(ScoreModel model, std::size_t n_groups, const TrainConfig& config,
                    const GraphBuilder& build) {
  Rng rng(config.seed);
  Optimizer opt(config.optimizer, config.lr, model.param_count());
  for (std::size_t step = 0; step < config.steps; ++step) {
    StepSample sample;
    Tape tape;
    Var params = tape.variable(std::vector<double>(model.params().begin(), model.params().end()));
    StepGraph graph;
    try {
      graph = build(tape, params, sample, rng);
      // builder fills sample.batch via rng before constructing the graph
      tape.backward(graph.total);
    } catch (const TrainingAborted&) {
      throw;
    } catch (const NumericalError& e) {
      throw TrainingAborted(step, e.primitive(), e.what());
    }
    std::vector<double> grad = tape.grad(params);
    clip(grad, config.clip_norm);
    opt.step(model.mutable_params(), grad);
    if (config.observer) {
      StepRecord rec;
      rec.step = step;
      rec.w = sample.w;
      rec.beta = sample.beta;
      rec.loss_vector = tape.value(graph.loss_vector);
      rec.scalarized = tape.scalar(graph.scalarized);
      rec.penalty = graph.has_penalty ? tape.scalar(graph.penalty) : 0.0;
      rec.total = tape.scalar(graph.total);
      config.observer(rec);
    }
  }
  (void)n_groups;
  return model;
}

/// Scalarized loss plus the optional cosine penalty on top of a loss-vector node.
StepGraph scalarize(Tape& tape, Var lv, const SimplexPoint& w, const TrainConfig& config) {
  StepGraph g;
  g.loss_vector = lv;
  g.scalarized = scalarized_loss(tape, lv, w);
  g.total = g.scalarized;
  if (config.lambda > 0.0) {
    g.penalty = cosine_penalty(tape, lv, w);
    g.has_penalty = true;
    const Var parts[2] = {g.scalarized, g.penalty};
    const double coeffs[2] = {1.0, config.penalty_sign * config.lambda};
    g.total = weighted_sum(tape, parts, coeffs);
  }
  return g;
}

void require_base(const ScoreModel& base, const ScoreModel& init, const MoftDataset& dataset) {
  if (base.config().condition_weight || base.config().condition_temperature)
    throw DomainError("base model must be unconditioned");
  if (base.config().d != dataset.dim() || init.config().d != dataset.dim())
    throw DomainError("model input dimension does not match the dataset");
  if (init.kind() == ModelKind::Augmentation && init.base().get() != &base &&
      fingerprint(*init.base()) != fingerprint(base))
    throw DomainError("augmentation model references a different base");
}

}  // namespace

ScoreModel pretrain_base(const MoftDataset& dataset, const ModelConfig& config,
                         const TrainConfig& train) {
  ModelConfig cfg = config;
  cfg.condition_weight = cfg.condition_temperature = false;
  cfg.d = dataset.dim();
  train.validate(dataset.objectives());
  const PreparedData data(dataset, nullptr);
  ScoreModel init = init_params(cfg, ModelKind::Base);
  const ScoreModel shape_model = init;
  const ScoreModel* shape = &shape_model;
  return run_loop(std::move(init), data.size(), train,
                  [&](Tape& tape, Var params, StepSample& sample, Rng& rng) {
                    sample.batch = sample_batch(data.size(), train.batch_groups, rng);
                    std::vector<Var> terms;
                    for (std::size_t k : sample.batch) {
                      Var s = forward(tape, params, *shape, *data[k].group);
                      terms.push_back(listnet_loss(tape, s, data[k].main_zbar));
                    }
                    const std::vector<double> c(terms.size(),
                                                1.0 / static_cast<double>(terms.size()));
                    StepGraph g;
                    g.total = weighted_sum(tape, terms, c);
                    g.scalarized = g.total;
                    g.loss_vector = stack(tape, std::span<const Var>(&g.total, 1));
                    return g;
                  });
}

ScoreModel train_weight_cos(const ScoreModel& base, ScoreModel init, const MoftDataset& dataset,
                            const TrainConfig& config) {
  const std::size_t m = dataset.objectives();
  config.validate(m);
  require_base(base, init, dataset);
  if (!init.config().condition_weight || init.config().condition_temperature ||
      init.config().m != m)
    throw DomainError("weight-COS model must be conditioned on w only, with m = objectives");
  const PreparedData data(dataset, &base);
  const std::vector<double> alpha = config.alpha_or_default(m);
  const TemperatureVector beta = config.beta_or_default(m);
  const ScoreModel shape = init;
  return run_loop(std::move(init), data.size(), config,
                  [&](Tape& tape, Var params, StepSample& sample, Rng& rng) {
                    const SimplexPoint w = sample_dirichlet(alpha, rng);
                    sample.w = w.vector();
                    sample.beta = beta.vector();
                    sample.batch = sample_batch(data.size(), config.batch_groups, rng);
                    const Condition cond{w, std::nullopt};
                    GroupScorer scorer = [&](Tape& t, const PreparedGroup& pg) {
                      return forward(t, params, shape, *pg.group, cond, pg.base_scores);
                    };
                    Var lv = loss_vector(tape, scorer, data, sample.batch, beta);
                    return scalarize(tape, lv, w, config);
                  });
}

ScoreModel train_temperature_cos(const ScoreModel& base, ScoreModel init,
                                 const MoftDataset& dataset, const TrainConfig& config) {
  const std::size_t m = dataset.objectives();
  config.validate(m);
  require_base(base, init, dataset);
  if (!init.config().condition_weight || !init.config().condition_temperature ||
      init.config().m != m)
    throw DomainError("temperature-COS model must be conditioned on w and beta");
  const PreparedData data(dataset, &base);
  const std::vector<double> alpha = config.alpha_or_default(m);
  const ScoreModel shape = init;
  return run_loop(std::move(init), data.size(), config,
                  [&](Tape& tape, Var params, StepSample& sample, Rng& rng) {
                    const SimplexPoint w = sample_dirichlet(alpha, rng);
                    const TemperatureVector beta = sample_temperature(config.beta_dist, m, rng);
                    sample.w = w.vector();
                    sample.beta = beta.vector();
                    sample.batch = sample_batch(data.size(), config.batch_groups, rng);
                    GroupScorer scorer = [&](Tape& t, const PreparedGroup& pg) {
                      return temperature_query(t, params, shape, pg, w, beta);
                    };
                    Var lv = loss_vector(tape, scorer, data, sample.batch, beta);
                    return scalarize(tape, lv, w, config);
                  });
}

ScoreModel train_dpo_ls(const ScoreModel& base, ScoreModel init, const MoftDataset& dataset,
                        const SimplexPoint& w, const TrainConfig& config) {
  const std::size_t m = dataset.objectives();
  config.validate(m);
  require_base(base, init, dataset);
  if (init.config().condition_weight || init.config().condition_temperature)
    throw DomainError("DPO-LS model must be unconditioned");
  if (w.size() != m) throw DomainError("DPO-LS weight has wrong dimension");
  const PreparedData data(dataset, &base);
  const TemperatureVector beta = config.beta_or_default(m);
  const ScoreModel shape = init;
  TrainConfig fixed = config;
  fixed.lambda = 0.0;
  return run_loop(std::move(init), data.size(), fixed,
                  [&](Tape& tape, Var params, StepSample& sample, Rng& rng) {
                    sample.w = w.vector();
                    sample.beta = beta.vector();
                    sample.batch = sample_batch(data.size(), config.batch_groups, rng);
                    GroupScorer scorer = [&](Tape& t, const PreparedGroup& pg) {
                      return forward(t, params, shape, *pg.group, {}, pg.base_scores);
                    };
                    Var lv = loss_vector(tape, scorer, data, sample.batch, beta);
                    return scalarize(tape, lv, w, fixed);
                  });
}

std::vector<ScoreModel> train_dpo_soup(const ScoreModel& base, const ScoreModel& init,
                                       const MoftDataset& dataset, const TrainConfig& config) {
  const std::size_t m = dataset.objectives();
  std::vector<ScoreModel> units;
  units.reserve(m);
  for (std::size_t j = 0; j < m; ++j) {
    TrainConfig unit = config;
    unit.seed = config.seed + j;
    units.push_back(train_dpo_ls(base, init, dataset, SimplexPoint::unit(m, j), unit));
  }
  return units;
}

std::size_t mo_dpo_pivot(std::span<const double> w) {
  if (w.empty()) throw DomainError("MO-DPO: empty weight vector");
  return static_cast<std::size_t>(std::max_element(w.begin(), w.end()) - w.begin());
}

std::vector<double> mo_dpo_clamped(std::span<const double> w) {
  std::vector<double> out(w.begin(), w.end());
  for (double& x : out) x = std::max(x, kMoDpoWeightFloor);
  return out;
}

std::vector<double> mo_dpo_reward(std::span<const double> scores,
                                  std::span<const double> base_scores,
                                  std::span<const std::vector<double>> unit_scores,
                                  std::span<const double> w, std::size_t pivot) {
  const std::size_t m = w.size();
  if (pivot >= m) throw DomainError("MO-DPO: pivot out of range");
  if (unit_scores.size() != m) throw DomainError("MO-DPO: need one unit model per objective");
  if (w[pivot] < kMoDpoWeightFloor)
    throw NumericalError("mo_dpo_reward", "pivot weight below the stability floor");
  const std::size_t n = scores.size();
  if (base_scores.size() != n) throw DomainError("MO-DPO: score length mismatch");
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) {
    double corr = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      if (j == pivot) continue;
      if (unit_scores[j].size() != n) throw DomainError("MO-DPO: score length mismatch");
      corr += w[j] * (unit_scores[j][i] - base_scores[i]);
    }
    r[i] = ((scores[i] - base_scores[i]) - corr) / w[pivot];
  }
  return r;
}

ScoreModel train_mo_dpo(const ScoreModel& base, ScoreModel init, const MoftDataset& dataset,
                        const SimplexPoint& w, std::span<const ScoreModel> unit_models,
                        const TrainConfig& config) {
  const std::size_t m = dataset.objectives();
  config.validate(m);
  require_base(base, init, dataset);
  if (init.config().condition_weight || init.config().condition_temperature)
    throw DomainError("MO-DPO model must be unconditioned");
  if (w.size() != m || unit_models.size() != m)
    throw DomainError("MO-DPO needs an m-dimensional weight and m unit models");
  const PreparedData data(dataset, &base);
  const TemperatureVector beta = config.beta_or_default(m);
  const std::vector<double> wc = mo_dpo_clamped(w.values());
  const std::size_t pivot = mo_dpo_pivot(wc);

  // Constant part of the margin: sum_{j != pivot} w_j (s_{e_j} - s0) / w_pivot.
  std::vector<std::vector<double>> offset(data.size());
  for (std::size_t k = 0; k < data.size(); ++k) {
    const PreparedGroup& pg = data[k];
    std::vector<std::vector<double>> units;
    for (const auto& um : unit_models) units.push_back(forward(um, *pg.group));
    const std::vector<double> zero_margin =
        mo_dpo_reward(pg.base_scores, pg.base_scores, units, wc, pivot);
    offset[k] = zero_margin;  // equals -correction / w_pivot
  }

  const ScoreModel shape = init;
  const double scale = beta[pivot] / wc[pivot];
  return run_loop(std::move(init), data.size(), config,
                  [&](Tape& tape, Var params, StepSample& sample, Rng& rng) {
                    sample.w = w.vector();
                    sample.beta = beta.vector();
                    sample.batch = sample_batch(data.size(), config.batch_groups, rng);
                    std::vector<Var> terms;
                    for (std::size_t k : sample.batch) {
                      const PreparedGroup& pg = data[k];
                      if (!pg.zbar[pivot]) continue;
                      Var s = forward(tape, params, shape, *pg.group, {}, pg.base_scores);
                      // beta_i * r = (beta_i / w_i)(s - s0) + beta_i * offset
                      Var margin = axpby(tape, scale, s, -scale, tape.constant(pg.base_scores));
                      std::vector<double> off = offset[k];
                      for (double& v : off) v *= beta[pivot];
                      margin = add(tape, margin, tape.constant(std::move(off)));
                      terms.push_back(listnet_loss(tape, margin, *pg.zbar[pivot]));
                    }
                    StepGraph g;
                    if (terms.empty()) {
                      g.total = tape.constant({0.0});
                    } else {
                      const std::vector<double> c(terms.size(),
                                                  1.0 / static_cast<double>(terms.size()));
                      g.total = weighted_sum(tape, terms, c);
                    }
                    g.scalarized = g.total;
                    g.loss_vector = stack(tape, std::span<const Var>(&g.total, 1));
                    return g;
                  });
}

}  // namespace cosdpo
