#pragma once

#include <span>
#include <vector>

#include "cosdpo/autodiff.hpp"
#include "cosdpo/loss.hpp"
#include "cosdpo/model.hpp"
#include "cosdpo/types.hpp"

namespace cosdpo {

/// (1 - 1/c) s0 + (1/c) s. Any c > 0; c < 1 sharpens toward the fine-tuned model.
std::vector<double> apply_scale(std::span<const double> base_scores,
                                std::span<const double> scores, double c);

/// Scores of a weight-conditioned model moved from temperature beta to c * beta.
std::vector<double> scale_temperature(const ScoreModel& base, const ScoreModel& model, double c,
                                      const RankingGroup& group, const SimplexPoint& w);

/// Temperature-conditioned query: the network sees beta / |beta|_1 and its output is mapped
/// with c = |beta|_1.
std::vector<double> temperature_query(const ScoreModel& base, const ScoreModel& t_model,
                                      const RankingGroup& group, const SimplexPoint& w,
                                      const TemperatureVector& beta);

/// Differentiable temperature query; the frozen base enters through pg.base_scores.
Var temperature_query(Tape& tape, Var params, const ScoreModel& t_model, const PreparedGroup& pg,
                      const SimplexPoint& w, const TemperatureVector& beta);

/// Lazily applies the output map of scale_temperature; both models are evaluated per call.
class ControlledScorer {
 public:
  ControlledScorer(const ScoreModel& base, const ScoreModel& inner, double scale);

  double scale() const noexcept { return scale_; }
  std::vector<double> operator()(const RankingGroup& group, const Condition& condition) const;

 private:
  const ScoreModel* base_;
  const ScoreModel* inner_;
  double scale_;
};

}  // namespace cosdpo
