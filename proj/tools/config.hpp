#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cosdpo/data.hpp"
#include "cosdpo/eval.hpp"
#include "experiment.hpp"
#include "json.hpp"

namespace cosdpo::experiment {

struct SynthSpec {
  std::size_t groups = 200;
  std::size_t group_size = 8;
  std::size_t dim = 16;
  std::size_t objectives = 2;
  double conflict = 0.8;
  std::optional<std::uint64_t> seed;  // defaults to the experiment seed
  std::vector<LabelMode> label_modes;
};

struct LetorSpec {
  std::string path;
  std::string preset;  // "" or "mslr-web10k"
  LetorOptions options;
};

struct DatasetSpec {
  std::optional<std::string> cache;
  std::optional<SynthSpec> synth;
  std::optional<LetorSpec> letor;
  bool scale_features = false;
};

struct EvalSpec {
  std::size_t grid = 11;
  std::size_t k = 10;
  std::vector<double> reference;  // empty -> zeros
  Direction direction = Direction::Maximize;
};

struct ExperimentConfig {
  std::optional<std::uint64_t> seed;
  DatasetSpec dataset;
  SplitFractions split;
  MethodSpec method;
  std::size_t pretrain_steps = 2000;
  double pretrain_lr = 1e-3;
  EvalSpec eval;
  std::string output;
};

/// Parses a config document. Unknown keys are rejected.
ExperimentConfig parse_config(const nlohmann::ordered_json& doc);
ExperimentConfig load_config(const std::string& path);

/// Fully resolved config, suitable for writing next to a run.
nlohmann::ordered_json to_json(const ExperimentConfig& config);

/// Materializes the dataset (synthesized, parsed, or loaded from cache).
MoftDataset build_dataset(const ExperimentConfig& config);

/// Train/valid/test split seeded by the experiment seed.
std::tuple<MoftDataset, MoftDataset, MoftDataset> split_dataset(const ExperimentConfig& config,
                                                                const MoftDataset& dataset);

}  // namespace cosdpo::experiment
