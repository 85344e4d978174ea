#pragma once

// Method dispatch shared by the command-line tool and the acceptance suite.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cosdpo/data.hpp"
#include "cosdpo/eval.hpp"
#include "cosdpo/model.hpp"
#include "cosdpo/train.hpp"

namespace cosdpo::experiment {

enum class Method { WeightCos, TemperatureCos, DpoLs, DpoSoup, MoDpo };

std::string to_string(Method m);
Method parse_method(const std::string& text);

/// Total: `steps` is shared by every model a method trains. PerModel: each model gets `steps`.
enum class Budget { Total, PerModel };

std::string to_string(Budget b);
Budget parse_budget(const std::string& text);

struct MethodSpec {
  Method method = Method::WeightCos;
  std::vector<std::size_t> hidden_dims{64};
  Activation activation = Activation::Relu;
  ModelKind kind = ModelKind::Augmentation;  // Scratch or Augmentation
  TrainConfig train;
  Budget budget = Budget::Total;
  std::size_t grid_count = 11;
};

/// Names used for per-model log tags and checkpoint files: grid_00.., unit_01..
std::string grid_model_name(std::size_t g);
std::string unit_model_name(std::size_t j);

/// Steps each trained model receives under the budget rule.
std::size_t steps_per_model(const MethodSpec& spec, std::size_t m);

struct MethodResult {
  Method method = Method::WeightCos;
  std::vector<ScoreModel> models;  // one conditioned model, or one per grid point
  std::vector<ScoreModel> units;   // Soup and MO-DPO unit models e_1..e_m
};

/// Trains every model the method needs on `train` against the frozen base.
MethodResult train_method(const std::shared_ptr<const ScoreModel>& base, const MoftDataset& train,
                          const MethodSpec& spec);

/// Front over weight_grid(m, spec.grid_count). `control` applies only to conditioned methods.
std::vector<FrontPoint> profile_method(const ScoreModel& base, const MethodResult& result,
                                       const MoftDataset& test, std::size_t grid_count,
                                       const FrontControl& control, const ProfileOptions& options);

/// Hypervolume of the aux-metric columns after Pareto filtering.
double front_hypervolume(const std::vector<FrontPoint>& front, const ReferencePoint& ref);

/// FNV-1a over a byte string.
std::uint64_t fnv1a(const std::string& bytes);
std::string hex64(std::uint64_t v);

}  // namespace cosdpo::experiment
