#include "cosdpo/control.hpp"

#include <cmath>

#include "cosdpo/error.hpp"

namespace cosdpo {

namespace {

void check_scale(double c) {
  if (!(c > 0.0) || !std::isfinite(c)) throw DomainError("scale c must be a positive finite real");
}

}  // namespace

std::vector<double> apply_scale(std::span<const double> base_scores,
                                std::span<const double> scores, double c) {
  check_scale(c);
  if (base_scores.size() != scores.size()) throw DomainError("apply_scale: length mismatch");
  const double inv = 1.0 / c;
  std::vector<double> out(scores.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = (1.0 - inv) * base_scores[i] + inv * scores[i];
  return out;
}

std::vector<double> scale_temperature(const ScoreModel& base, const ScoreModel& model, double c,
                                      const RankingGroup& group, const SimplexPoint& w) {
  check_scale(c);
  if (!model.config().condition_weight)
    throw DomainError("scale_temperature: model must be weight-conditioned");
  return apply_scale(forward(base, group), forward(model, group, Condition{w, std::nullopt}), c);
}

std::vector<double> temperature_query(const ScoreModel& base, const ScoreModel& t_model,
                                      const RankingGroup& group, const SimplexPoint& w,
                                      const TemperatureVector& beta) {
  if (!t_model.config().condition_temperature)
    throw DomainError("temperature_query: model must be temperature-conditioned");
  const auto net = forward(t_model, group, Condition{w, beta.normalized()});
  return apply_scale(forward(base, group), net, beta.magnitude());
}

Var temperature_query(Tape& tape, Var params, const ScoreModel& t_model, const PreparedGroup& pg,
                      const SimplexPoint& w, const TemperatureVector& beta) {
  if (!t_model.config().condition_temperature)
    throw DomainError("temperature_query: model must be temperature-conditioned");
  if (pg.base_scores.empty()) throw DomainError("temperature_query: data prepared without base");
  Var net = forward(tape, params, t_model, *pg.group, Condition{w, beta.normalized()},
                    pg.base_scores);
  const double inv = 1.0 / beta.magnitude();
  return axpby(tape, 1.0 - inv, tape.constant(pg.base_scores), inv, net);
}

ControlledScorer::ControlledScorer(const ScoreModel& base, const ScoreModel& inner, double scale)
    : base_(&base), inner_(&inner), scale_(scale) {
  check_scale(scale);
}

std::vector<double> ControlledScorer::operator()(const RankingGroup& group,
                                                 const Condition& condition) const {
  return apply_scale(forward(*base_, group), forward(*inner_, group, condition), scale_);
}

}  // namespace cosdpo
