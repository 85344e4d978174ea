#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cosdpo/data.hpp"
#include "cosdpo/model.hpp"
#include "cosdpo/types.hpp"

namespace cosdpo {

/// Indices by descending score; ties keep ascending index order.
std::vector<std::size_t> rank_by_scores(std::span<const double> scores);

struct NdcgResult {
  double value = 0.0;
  bool all_zero = false;  // ideal DCG was 0; value set to 1
};

/// Linear-gain NDCG@k. k is truncated to the group size.
NdcgResult ndcg_at_k_flagged(std::span<const double> scores, std::span<const double> labels,
                             std::size_t k);
double ndcg_at_k(std::span<const double> scores, std::span<const double> labels, std::size_t k);

enum class Direction { Maximize, Minimize };

std::string to_string(Direction d);
Direction parse_direction(const std::string& text);

struct ReferencePoint {
  std::vector<double> r;
  Direction direction = Direction::Maximize;
};

/// Nondominated subset in input order; exact duplicates keep their first occurrence.
std::vector<std::vector<double>> pareto_filter(const std::vector<std::vector<double>>& points,
                                               Direction direction);

inline constexpr std::size_t kMaxHypervolumeDim = 8;

/// Measure of the union of boxes spanned by `ref` and each point on the dominating side.
double hypervolume(const std::vector<std::vector<double>>& points, const ReferencePoint& ref);

/// m = 2: (t, 1 - t) for t = 0, 1/(count-1), ..., 1. m > 2: all lattice points with
/// coordinates in multiples of 1/(count-1), in lexicographic order.
std::vector<SimplexPoint> weight_grid(std::size_t m, std::size_t count);

struct FrontPoint {
  std::vector<double> w;
  std::vector<double> scale_or_beta;  // {c} for a scale, the full vector for a temperature
  std::vector<double> aux_metrics;
  double main_metric = 0.0;

  bool operator==(const FrontPoint&) const = default;
};

/// Scores of one group at one grid index.
using FrontScorer =
    std::function<std::vector<double>(std::size_t grid_index, const RankingGroup& group)>;

struct ProfileOptions {
  std::size_t k = 10;
  std::size_t threads = 1;
};

/// Mean NDCG@k of every auxiliary objective and the main labels over all groups, per grid
/// point. `scale_or_beta` is copied into each FrontPoint.
std::vector<FrontPoint> profile_front(const MoftDataset& dataset,
                                      std::span<const SimplexPoint> grid,
                                      const FrontScorer& scorer,
                                      std::vector<double> scale_or_beta,
                                      const ProfileOptions& options = {});

/// Post-training control of a conditioned model.
struct FrontControl {
  std::optional<double> scale;                 // weight-conditioned models
  std::optional<TemperatureVector> beta;       // temperature-conditioned models
};

/// Queries one conditioned model at every grid point, through the optional control.
FrontScorer conditioned_scorer(const ScoreModel& base, const ScoreModel& model,
                               std::span<const SimplexPoint> grid, const FrontControl& control);

/// Grid point g is scored by models[g]. Models are scored as-is.
FrontScorer per_point_scorer(std::span<const ScoreModel> models);

/// Value recorded in FrontPoint::scale_or_beta for a control.
std::vector<double> control_tag(const FrontControl& control);

/// Aux-metric vectors of a front, for hypervolume.
std::vector<std::vector<double>> aux_points(std::span<const FrontPoint> front);

// Front files. CSV header: w_1..w_m,scale,aux_1..aux_m,main. A temperature vector is written
// into the scale column joined by ';'.
void write_front_csv(std::ostream& out, std::span<const FrontPoint> front);
std::vector<FrontPoint> read_front_csv(std::istream& in);
void write_front_json(std::ostream& out, std::span<const FrontPoint> front);
std::vector<FrontPoint> read_front_json(std::istream& in);

}  // namespace cosdpo
