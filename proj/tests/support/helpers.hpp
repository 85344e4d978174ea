#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "cosdpo/autodiff.hpp"
#include "cosdpo/data.hpp"
#include "cosdpo/model.hpp"

namespace cosdpo::testing {

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double lo = -1.0,
                                         double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

inline std::vector<double> random_distribution(std::mt19937_64& rng, std::size_t n) {
  auto v = random_vector(rng, n, 0.01, 1.0);
  double s = 0.0;
  for (double x : v) s += x;
  for (auto& x : v) x /= s;
  return v;
}

inline RankingGroup random_group(std::mt19937_64& rng, std::size_t n, std::size_t d,
                                 std::size_t m, const std::string& id = "g") {
  std::vector<std::vector<double>> labels;
  for (std::size_t j = 0; j < m; ++j) labels.push_back(random_vector(rng, n, 0.0, 3.0));
  return RankingGroup(id, d, random_vector(rng, n * d), random_vector(rng, n, 0.0, 3.0), labels);
}

inline MoftDataset random_dataset(std::mt19937_64& rng, std::size_t groups, std::size_t n,
                                  std::size_t d, std::size_t m) {
  std::vector<RankingGroup> gs;
  for (std::size_t k = 0; k < groups; ++k)
    gs.push_back(random_group(rng, n, d, m, "g" + std::to_string(k)));
  return MoftDataset(std::move(gs), std::vector<LabelMode>(m, LabelMode::Dense));
}

/// Central-difference gradient of f at x.
inline std::vector<double> finite_difference(const std::function<double(std::span<const double>)>& f,
                                             std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(x);
    x[i] = orig - h;
    const double fm = f(x);
    x[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Relative error 1e-4, or absolute 1e-7 near zero.
inline bool grad_close(double analytic, double numeric, double rel = 1e-4, double abs = 1e-7) {
  const double diff = std::abs(analytic - numeric);
  if (diff <= abs) return true;
  return diff <= rel * std::max(std::abs(analytic), std::abs(numeric));
}

/// Evaluates a tape closure at constant parameters and returns the scalar value.
inline double closure_value(const std::function<Var(Tape&, Var)>& closure,
                            std::span<const double> params) {
  Tape tape;
  Var p = tape.constant(std::vector<double>(params.begin(), params.end()));
  return tape.scalar(closure(tape, p));
}

}  // namespace cosdpo::testing
