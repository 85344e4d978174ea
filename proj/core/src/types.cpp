#include "cosdpo/types.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "cosdpo/error.hpp"

namespace cosdpo {

SimplexPoint::SimplexPoint(std::vector<double> w) : w_(std::move(w)) {
  if (w_.empty()) throw DomainError("simplex point must have at least one coordinate");
  double sum = 0.0;
  for (double v : w_) {
    if (!std::isfinite(v) || v < 0.0)
      throw DomainError("simplex point entries must be finite and nonnegative");
    sum += v;
  }
  if (std::abs(sum - 1.0) > kTolerance)
    throw DomainError("simplex point must sum to 1 (got " + std::to_string(sum) + ")");
}

SimplexPoint SimplexPoint::unit(std::size_t m, std::size_t j) {
  if (j >= m) throw DomainError("unit vector index out of range");
  std::vector<double> w(m, 0.0);
  w[j] = 1.0;
  return SimplexPoint(std::move(w));
}

SimplexPoint SimplexPoint::uniform(std::size_t m) {
  if (m == 0) throw DomainError("simplex dimension must be positive");
  return SimplexPoint(std::vector<double>(m, 1.0 / static_cast<double>(m)));
}

TemperatureVector::TemperatureVector(std::vector<double> beta) : beta_(std::move(beta)) {
  if (beta_.empty()) throw DomainError("temperature vector must be nonempty");
  for (double b : beta_) {
    if (!std::isfinite(b) || b <= 0.0)
      throw DomainError("temperatures must be finite and strictly positive");
  }
}

double TemperatureVector::magnitude() const noexcept {
  return std::accumulate(beta_.begin(), beta_.end(), 0.0);
}

SimplexPoint TemperatureVector::normalized() const {
  const double norm = magnitude();
  std::vector<double> out(beta_.size());
  for (std::size_t i = 0; i < beta_.size(); ++i) out[i] = beta_[i] / norm;
  return SimplexPoint(std::move(out));
}

TemperatureVector TemperatureVector::scaled(double c) const {
  if (!(c > 0.0)) throw DomainError("temperature scale must be positive");
  std::vector<double> out(beta_);
  for (double& b : out) b *= c;
  return TemperatureVector(std::move(out));
}

}  // namespace cosdpo
