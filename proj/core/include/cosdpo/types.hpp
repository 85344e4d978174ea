#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace cosdpo {

/// A weight vector on the probability simplex: nonnegative entries summing to one.
class SimplexPoint {
 public:
  static constexpr double kTolerance = 1e-9;

  explicit SimplexPoint(std::vector<double> w);

  static SimplexPoint unit(std::size_t m, std::size_t j);
  static SimplexPoint uniform(std::size_t m);

  std::size_t size() const noexcept { return w_.size(); }
  double operator[](std::size_t i) const { return w_[i]; }
  std::span<const double> values() const noexcept { return w_; }
  const std::vector<double>& vector() const noexcept { return w_; }

  friend bool operator==(const SimplexPoint&, const SimplexPoint&) = default;

 private:
  std::vector<double> w_;
};

/// Per-objective temperatures beta, all strictly positive.
class TemperatureVector {
 public:
  explicit TemperatureVector(std::vector<double> beta);

  std::size_t size() const noexcept { return beta_.size(); }
  double operator[](std::size_t i) const { return beta_[i]; }
  std::span<const double> values() const noexcept { return beta_; }
  const std::vector<double>& vector() const noexcept { return beta_; }

  /// ||beta||_1
  double magnitude() const noexcept;
  /// beta / ||beta||_1
  SimplexPoint normalized() const;
  TemperatureVector scaled(double c) const;

  friend bool operator==(const TemperatureVector&, const TemperatureVector&) = default;

 private:
  std::vector<double> beta_;
};

}  // namespace cosdpo
