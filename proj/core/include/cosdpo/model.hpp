#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cosdpo/autodiff.hpp"
#include "cosdpo/data.hpp"
#include "cosdpo/types.hpp"

namespace cosdpo {

enum class Activation { Relu, Tanh };

std::string to_string(Activation a);
Activation parse_activation(const std::string& text);

/// Per-item MLP score network. Conditioning vectors are concatenated to the item features.
struct ModelConfig {
  std::size_t d = 0;                 // item feature width
  std::size_t m = 0;                 // conditioning width (objective count)
  std::vector<std::size_t> hidden_dims{64};
  bool condition_weight = false;
  bool condition_temperature = false;
  Activation activation = Activation::Relu;
  std::uint64_t seed = 0;

  /// d + m per enabled condition.
  std::size_t input_width() const;
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Address of one weight matrix or bias vector inside the flat parameter vector.
struct ParamSlice {
  enum class Slot { Weight, Bias };
  std::size_t layer = 0;
  Slot slot = Slot::Weight;
  std::size_t offset = 0;
  std::size_t rows = 0;  // output width
  std::size_t cols = 0;  // input width (1 for biases)
  std::size_t size() const { return rows * cols; }
};

struct ParamAddress {
  std::size_t layer;
  ParamSlice::Slot slot;
  std::size_t index;  // row-major index inside the slice
};

/// Layout table of the flat parameter vector: layer by layer, weight matrix then bias.
class ParamLayout {
 public:
  explicit ParamLayout(const ModelConfig& config);

  const std::vector<ParamSlice>& slices() const noexcept { return slices_; }
  const ParamSlice& weight(std::size_t layer) const { return slices_.at(2 * layer); }
  const ParamSlice& bias(std::size_t layer) const { return slices_.at(2 * layer + 1); }
  std::size_t layers() const noexcept { return slices_.size() / 2; }
  std::size_t total() const noexcept { return total_; }
  ParamAddress locate(std::size_t flat_index) const;

 private:
  std::vector<ParamSlice> slices_;
  std::size_t total_ = 0;
};

/// Base: the frozen score model s0. Scratch: an independent network. Augmentation: evaluates
/// as s0(y) + delta(y, ...) where only the delta network's parameters are stored here.
enum class ModelKind { Base, Scratch, Augmentation };

std::string to_string(ModelKind kind);
ModelKind parse_model_kind(const std::string& text);

class ScoreModel {
 public:
  ScoreModel(ModelConfig config, ModelKind kind, std::vector<double> params,
             std::shared_ptr<const ScoreModel> base = nullptr);

  const ModelConfig& config() const noexcept { return config_; }
  ModelKind kind() const noexcept { return kind_; }
  const ParamLayout& layout() const noexcept { return layout_; }
  std::size_t param_count() const noexcept { return params_.size(); }
  std::span<const double> params() const noexcept { return params_; }
  std::span<double> mutable_params() noexcept { return params_; }
  /// Frozen base referenced by an augmentation model; null otherwise.
  const std::shared_ptr<const ScoreModel>& base() const noexcept { return base_; }

 private:
  ModelConfig config_;
  ModelKind kind_;
  ParamLayout layout_;
  std::vector<double> params_;
  std::shared_ptr<const ScoreModel> base_;
};

/// Conditioning inputs. Each must be present iff the model's config enables it.
struct Condition {
  std::optional<SimplexPoint> weight;
  std::optional<SimplexPoint> temperature;
};

/// Glorot-uniform weights, zero biases; deterministic in config.seed.
ScoreModel init_params(const ModelConfig& config, ModelKind kind = ModelKind::Scratch,
                       std::shared_ptr<const ScoreModel> base = nullptr);

/// Scores of every item in the group.
std::vector<double> forward(const ScoreModel& model, const RankingGroup& group,
                            const Condition& condition = {});

/// Differentiable forward where `params` holds the model's parameter values on the tape.
/// For augmentation models, precomputed `base_scores` skip re-evaluating the frozen base.
Var forward(Tape& tape, Var params, const ScoreModel& model, const RankingGroup& group,
            const Condition& condition = {}, std::span<const double> base_scores = {});

struct LossGrad {
  double value = 0.0;
  std::vector<double> grad;
};

using LossClosure = std::function<Var(Tape&, Var params)>;

/// Evaluates `closure` on a fresh tape seeded with the model's parameters and returns the
/// loss with d(loss)/d(params).
LossGrad loss_and_grad(const ScoreModel& model, const LossClosure& closure);
/// Same, with explicit parameter values (used by finite differences and optimizers).
LossGrad loss_and_grad(std::span<const double> params, const LossClosure& closure);

/// Parameter-space convex combination sum_j w_j params_j (DPO Soup).
ScoreModel average_params(std::span<const ScoreModel> models, const SimplexPoint& w);

/// FNV-1a over config and parameters; identifies the base an augmentation model belongs to.
std::uint64_t fingerprint(const ScoreModel& model);

// Checkpoint: magic "CSDPMODL", u32 version, kind, config, base fingerprint, u64 param
// count, raw float64 parameters. Little-endian.
void write_model(std::ostream& out, const ScoreModel& model);
ScoreModel read_model(std::istream& in, std::shared_ptr<const ScoreModel> base = nullptr);
void save_model(const std::string& path, const ScoreModel& model);
ScoreModel load_model(const std::string& path, std::shared_ptr<const ScoreModel> base = nullptr);

}  // namespace cosdpo
