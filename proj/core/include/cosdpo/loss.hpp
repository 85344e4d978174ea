#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "cosdpo/autodiff.hpp"
#include "cosdpo/data.hpp"
#include "cosdpo/model.hpp"
#include "cosdpo/types.hpp"

namespace cosdpo {

/// Per-objective LiPO losses (L_1, ..., L_m).
struct LossVector {
  std::vector<double> values;
};

/// -sum_i zbar_i log softmax(scores)_i
double listnet_loss(std::span<const double> scores, const NormalizedLabels& zbar);

/// ListNet applied to beta * (scores - base_scores).
double lipo_loss(std::span<const double> scores, std::span<const double> base_scores,
                 const NormalizedLabels& zbar, double beta);

/// w^T L
double scalarized_loss(const LossVector& loss, const SimplexPoint& w);

struct PenaltyValue {
  double value = 0.0;
  bool degenerate = false;  // loss vector had zero norm; value forced to 0
};

/// G_w = w^T L / (|w| |L|).
PenaltyValue cosine_penalty(const LossVector& loss, const SimplexPoint& w);

// Differentiable counterparts.
Var listnet_loss(Tape& tape, Var scores, const NormalizedLabels& zbar);
Var lipo_loss(Tape& tape, Var scores, Var base_scores, const NormalizedLabels& zbar, double beta);
Var scalarized_loss(Tape& tape, Var loss, const SimplexPoint& w);
Var cosine_penalty(Tape& tape, Var loss, const SimplexPoint& w);

/// Per-group quantities that stay fixed through fine-tuning: frozen base scores and the
/// normalized labels of every objective.
struct PreparedGroup {
  const RankingGroup* group = nullptr;
  std::vector<double> base_scores;                       // empty when prepared without base
  std::vector<std::optional<NormalizedLabels>> zbar;     // per objective; nullopt = skipped
  NormalizedLabels main_zbar;                            // softmax of the main labels
};

class PreparedData {
 public:
  /// `base` may be null (pretraining); `dataset` must outlive this object.
  PreparedData(const MoftDataset& dataset, const ScoreModel* base);

  std::size_t size() const noexcept { return groups_.size(); }
  std::size_t objectives() const noexcept { return m_; }
  const PreparedGroup& operator[](std::size_t k) const { return groups_[k]; }

 private:
  std::vector<PreparedGroup> groups_;
  std::size_t m_ = 0;
};

/// Produces the fine-tuned model's scores for one group on the tape.
using GroupScorer = std::function<Var(Tape&, const PreparedGroup&)>;

/// Entry j = mean over the batch of lipo_loss(scores, s0, zbar^j, beta_j), skipping groups
/// whose objective-j distribution is undefined (an objective with no valid group yields 0).
Var loss_vector(Tape& tape, const GroupScorer& scorer, const PreparedData& data,
                std::span<const std::size_t> batch, const TemperatureVector& beta);

/// Loss vector of `model` queried at `condition` over every group of `dataset`.
LossVector loss_vector(const ScoreModel& model, const ScoreModel& base, const MoftDataset& dataset,
                       const Condition& condition, const TemperatureVector& beta);

}  // namespace cosdpo
