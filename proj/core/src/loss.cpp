#include "cosdpo/loss.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cosdpo/error.hpp"

namespace cosdpo {

namespace {

double log_sum_exp(std::span<const double> x) {
  const double mx = *std::max_element(x.begin(), x.end());
  double sum = 0.0;
  for (double v : x) sum += std::exp(v - mx);
  return mx + std::log(sum);
}

void check_lengths(std::size_t scores, std::size_t zbar) {
  if (scores != zbar) throw DomainError("loss: scores and labels differ in length");
  if (scores < 2) throw DomainError("loss: a group needs at least 2 items");
}

}  // namespace

double listnet_loss(std::span<const double> scores, const NormalizedLabels& zbar) {
  check_lengths(scores.size(), zbar.zbar.size());
  const double lse = log_sum_exp(scores);
  double loss = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (zbar.zbar[i] != 0.0) loss -= zbar.zbar[i] * (scores[i] - lse);
  }
  return loss;
}

double lipo_loss(std::span<const double> scores, std::span<const double> base_scores,
                 const NormalizedLabels& zbar, double beta) {
  if (!(beta > 0.0)) throw DomainError("lipo_loss: temperature must be positive");
  if (scores.size() != base_scores.size())
    throw DomainError("lipo_loss: scores and base scores differ in length");
  std::vector<double> margin(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) margin[i] = beta * (scores[i] - base_scores[i]);
  return listnet_loss(margin, zbar);
}

double scalarized_loss(const LossVector& loss, const SimplexPoint& w) {
  if (loss.values.size() != w.size()) throw DomainError("scalarized_loss: dimension mismatch");
  double s = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) s += w[j] * loss.values[j];
  return s;
}

PenaltyValue cosine_penalty(const LossVector& loss, const SimplexPoint& w) {
  if (loss.values.size() != w.size()) throw DomainError("cosine_penalty: dimension mismatch");
  double wl = 0.0, ww = 0.0, ll = 0.0;
  for (std::size_t j = 0; j < w.size(); ++j) {
    wl += w[j] * loss.values[j];
    ww += w[j] * w[j];
    ll += loss.values[j] * loss.values[j];
  }
  if (ll == 0.0) return {0.0, true};
  return {wl / (std::sqrt(ww) * std::sqrt(ll)), false};
}

Var listnet_loss(Tape& tape, Var scores, const NormalizedLabels& zbar) {
  check_lengths(tape.value(scores).size(), zbar.zbar.size());
  std::vector<double> neg(zbar.zbar.size());
  for (std::size_t i = 0; i < neg.size(); ++i) neg[i] = -zbar.zbar[i];
  return dot(tape, log_softmax(tape, scores), neg);
}

Var lipo_loss(Tape& tape, Var scores, Var base_scores, const NormalizedLabels& zbar, double beta) {
  if (!(beta > 0.0)) throw DomainError("lipo_loss: temperature must be positive");
  return listnet_loss(tape, axpby(tape, beta, scores, -beta, base_scores), zbar);
}

Var scalarized_loss(Tape& tape, Var loss, const SimplexPoint& w) {
  if (tape.value(loss).size() != w.size()) throw DomainError("scalarized_loss: dimension mismatch");
  return dot(tape, loss, w.values());
}

Var cosine_penalty(Tape& tape, Var loss, const SimplexPoint& w) {
  if (tape.value(loss).size() != w.size()) throw DomainError("cosine_penalty: dimension mismatch");
  return cosine_similarity(tape, loss, w.values());
}

PreparedData::PreparedData(const MoftDataset& dataset, const ScoreModel* base)
    : m_(dataset.objectives()) {
  groups_.reserve(dataset.size());
  for (const auto& g : dataset.groups()) {
    PreparedGroup pg;
    pg.group = &g;
    if (base) pg.base_scores = forward(*base, g);
    for (std::size_t j = 0; j < m_; ++j)
      pg.zbar.push_back(normalize_labels(g.labels(j), dataset.label_modes()[j]));
    pg.main_zbar = *normalize_labels(g.main_labels(), LabelMode::Dense);
    groups_.push_back(std::move(pg));
  }
}

Var loss_vector(Tape& tape, const GroupScorer& scorer, const PreparedData& data,
                std::span<const std::size_t> batch, const TemperatureVector& beta) {
  const std::size_t m = data.objectives();
  if (beta.size() != m) throw DomainError("loss_vector: temperature dimension mismatch");
  std::vector<std::vector<Var>> terms(m);
  for (std::size_t k : batch) {
    const PreparedGroup& pg = data[k];
    if (pg.base_scores.empty()) throw DomainError("loss_vector: data prepared without a base");
    Var scores = scorer(tape, pg);
    Var s0 = tape.constant(pg.base_scores);
    for (std::size_t j = 0; j < m; ++j) {
      if (!pg.zbar[j]) continue;
      terms[j].push_back(lipo_loss(tape, scores, s0, *pg.zbar[j], beta[j]));
    }
  }
  std::vector<Var> entries;
  entries.reserve(m);
  for (std::size_t j = 0; j < m; ++j) {
    if (terms[j].empty()) {
      entries.push_back(tape.constant({0.0}));
      continue;
    }
    const std::vector<double> coeffs(terms[j].size(), 1.0 / static_cast<double>(terms[j].size()));
    entries.push_back(weighted_sum(tape, terms[j], coeffs));
  }
  return stack(tape, entries);
}

LossVector loss_vector(const ScoreModel& model, const ScoreModel& base, const MoftDataset& dataset,
                       const Condition& condition, const TemperatureVector& beta) {
  const PreparedData data(dataset, &base);
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  Tape tape;
  Var params = tape.constant(std::vector<double>(model.params().begin(), model.params().end()));
  GroupScorer scorer = [&](Tape& t, const PreparedGroup& pg) {
    return forward(t, params, model, *pg.group, condition);
  };
  return {tape.value(loss_vector(tape, scorer, data, all, beta))};
}

}  // namespace cosdpo
