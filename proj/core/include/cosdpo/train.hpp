#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "cosdpo/data.hpp"
#include "cosdpo/model.hpp"
#include "cosdpo/types.hpp"

namespace cosdpo {

using Rng = std::mt19937_64;

enum class OptimizerKind { Sgd, Adam };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& text);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Plain SGD or Adam with bias correction over a flat parameter vector.
class Optimizer {
 public:
  Optimizer(const OptimizerConfig& config, double lr, std::size_t param_count);
  void step(std::span<double> params, std::span<const double> grad);

 private:
  OptimizerConfig config_;
  double lr_;
  std::size_t t_ = 0;
  std::vector<double> m_, v_;
};

/// Rectangular support [lo, hi]^m of the temperature distribution.
struct BetaRange {
  double lo = 0.67;
  double hi = 1.5;
};

/// One line of the training log.
struct StepRecord {
  std::string model;  // which model of a multi-model method; omitted from the log when empty
  std::size_t step = 0;
  std::vector<double> w;
  std::vector<double> beta;
  std::vector<double> loss_vector;
  double scalarized = 0.0;
  double penalty = 0.0;
  double total = 0.0;
};

using StepObserver = std::function<void(const StepRecord&)>;

/// Writes a record as one JSON object followed by a newline.
void write_step_jsonl(std::ostream& out, const StepRecord& record);

struct TrainConfig {
  std::size_t steps = 2000;
  std::size_t batch_groups = 16;
  double lr = 1e-3;
  OptimizerConfig optimizer;
  double lambda = 0.0;             // penalization coefficient
  double penalty_sign = 1.0;       // +1 adds +lambda*G (literal form); -1 flips it
  std::vector<double> alpha;       // Dirichlet concentration; empty -> all ones
  std::vector<double> beta;        // fixed temperatures; empty -> all ones
  BetaRange beta_dist;             // temperature distribution for Temperature-COS
  double clip_norm = 10.0;         // global gradient-norm clip; <= 0 disables
  std::uint64_t seed = 0;
  StepObserver observer;

  /// Validates and fills defaults for an m-objective problem.
  void validate(std::size_t m) const;
  std::vector<double> alpha_or_default(std::size_t m) const;
  TemperatureVector beta_or_default(std::size_t m) const;
};

/// Normalized independent Gamma(alpha_j, 1) draws, computed in log space so that small
/// concentrations do not underflow.
SimplexPoint sample_dirichlet(std::span<const double> alpha, Rng& rng);

/// Coordinatewise uniform draw in [lo, hi]^m.
TemperatureVector sample_temperature(const BetaRange& range, std::size_t m, Rng& rng);

/// Trains a base score model on the main labels with the ListNet loss.
ScoreModel pretrain_base(const MoftDataset& dataset, const ModelConfig& config,
                         const TrainConfig& train);

/// Weight-conditioned training of a single model: per step w' ~ Dir(alpha), a group mini-batch, and
/// one optimizer step on w'^T L + lambda * G_w'. `init` must be weight-conditioned only.
ScoreModel train_weight_cos(const ScoreModel& base, ScoreModel init, const MoftDataset& dataset,
                            const TrainConfig& config);

/// Temperature-conditioned variant: additionally beta' ~ U[lo,hi]^m, and the model is
/// queried through the |beta|_1 output reparametrization.
ScoreModel train_temperature_cos(const ScoreModel& base, ScoreModel init,
                                 const MoftDataset& dataset, const TrainConfig& config);

/// Linear-scalarization baseline for one fixed w; `init` must be unconditioned.
ScoreModel train_dpo_ls(const ScoreModel& base, ScoreModel init, const MoftDataset& dataset,
                        const SimplexPoint& w, const TrainConfig& config);

/// m unit-weight models e_1..e_m, all started from `init`; combine with average_params.
std::vector<ScoreModel> train_dpo_soup(const ScoreModel& base, const ScoreModel& init,
                                       const MoftDataset& dataset, const TrainConfig& config);

/// Weights are clamped to >= this before building the MO-DPO margin.
inline constexpr double kMoDpoWeightFloor = 1e-3;

/// Clamps every weight to kMoDpoWeightFloor and returns the arg-max pivot index.
std::size_t mo_dpo_pivot(std::span<const double> w);
std::vector<double> mo_dpo_clamped(std::span<const double> w);

/// r = (1/w_i) [ (s - s0) - sum_{i' != i} w_{i'} (s_{e_i'} - s0) ] per item.
std::vector<double> mo_dpo_reward(std::span<const double> scores,
                                  std::span<const double> base_scores,
                                  std::span<const std::vector<double>> unit_scores,
                                  std::span<const double> w, std::size_t pivot);

/// Per-weight MO-DPO training against frozen unit models from train_dpo_soup.
ScoreModel train_mo_dpo(const ScoreModel& base, ScoreModel init, const MoftDataset& dataset,
                        const SimplexPoint& w, std::span<const ScoreModel> unit_models,
                        const TrainConfig& config);

}  // namespace cosdpo
