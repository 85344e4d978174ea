#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

namespace cosdpo {

/// How raw labels of one objective are turned into a target distribution.
enum class LabelMode { Dense, Sparse };

std::string to_string(LabelMode mode);
LabelMode parse_label_mode(const std::string& text);

/// Items of one context (query) with their features and per-objective labels.
class RankingGroup {
 public:
  /// `features` is row-major n x d. `main_labels` holds the base objective, `labels` the
  /// m auxiliary objectives; every label vector must have length n, and n >= 2.
  RankingGroup(std::string id, std::size_t d, std::vector<double> features,
               std::vector<double> main_labels, std::vector<std::vector<double>> labels);

  const std::string& id() const noexcept { return id_; }
  std::size_t size() const noexcept { return n_; }
  std::size_t dim() const noexcept { return d_; }
  std::size_t objectives() const noexcept { return labels_.size(); }

  std::span<const double> features() const noexcept { return features_; }
  std::span<const double> item(std::size_t i) const { return {features_.data() + i * d_, d_}; }
  std::span<const double> main_labels() const noexcept { return main_labels_; }
  std::span<const double> labels(std::size_t j) const { return labels_.at(j); }

  /// Returns a copy with items reordered so that item i of the result is item perm[i] here.
  RankingGroup permuted(std::span<const std::size_t> perm) const;

  friend bool operator==(const RankingGroup&, const RankingGroup&) = default;

 private:
  friend void minmax_scale_features(class MoftDataset&);

  std::string id_;
  std::size_t n_ = 0;
  std::size_t d_ = 0;
  std::vector<double> features_;
  std::vector<double> main_labels_;
  std::vector<std::vector<double>> labels_;
};

/// Immutable collection of ranking groups sharing feature width d and objective count m.
class MoftDataset {
 public:
  MoftDataset(std::vector<RankingGroup> groups, std::vector<LabelMode> label_modes);

  std::size_t size() const noexcept { return groups_.size(); }
  std::size_t dim() const noexcept { return d_; }
  std::size_t objectives() const noexcept { return label_modes_.size(); }
  const std::vector<RankingGroup>& groups() const noexcept { return groups_; }
  const RankingGroup& operator[](std::size_t k) const { return groups_[k]; }
  const std::vector<LabelMode>& label_modes() const noexcept { return label_modes_; }

  friend bool operator==(const MoftDataset&, const MoftDataset&) = default;

 private:
  friend void minmax_scale_features(MoftDataset&);

  std::vector<RankingGroup> groups_;
  std::vector<LabelMode> label_modes_;
  std::size_t d_ = 0;
};

/// Normalized target distribution z-bar for one group and one objective.
struct NormalizedLabels {
  std::vector<double> zbar;
};

/// Dense -> softmax(z); sparse -> z / |z|_1. An all-zero sparse vector has no distribution
/// and yields nullopt: the group contributes nothing to that objective's loss.
std::optional<NormalizedLabels> normalize_labels(std::span<const double> z, LabelMode mode);

/// Column of a LETOR line that becomes an objective.
struct ObjectiveSource {
  enum class Kind { Relevance, Feature };
  Kind kind = Kind::Relevance;
  std::size_t feature_index = 0;  // 1-based LETOR index when kind == Feature

  /// "label" / "relevance", or "f:<index>" / "feature:<index>".
  static ObjectiveSource parse(const std::string& text);
  std::string to_string() const;
};

struct LetorOptions {
  std::size_t feature_count = 0;
  std::vector<ObjectiveSource> aux;
  ObjectiveSource main;  // defaults to the relevance label
  std::vector<LabelMode> label_modes;  // empty -> all Dense
  /// Largest accepted feature index. 0 means max(feature_count, largest aux feature index).
  std::size_t max_feature_index = 0;
  /// Empty input is an error instead of a warning.
  bool strict = false;
};

struct LetorParseResult {
  std::optional<MoftDataset> dataset;  // empty when no group survived
  std::size_t dropped_groups = 0;      // groups with fewer than 2 items
  std::vector<std::string> warnings;
};

/// Parses `<label> qid:<id> <fid>:<val> ... [# comment]` lines. Items sharing a qid form one
/// group, in input-line order; groups appear in order of first occurrence.
LetorParseResult parse_letor(std::istream& in, const LetorOptions& options);

/// The MSLR-WEB10K convention: the first 131 features as the item vector, the relevance
/// label as the main objective and features 132-136 as auxiliary objectives I-V.
LetorOptions mslr_web10k_options();

/// Deterministic dataset with m objectives whose induced rankings decorrelate as
/// `conflict` goes from 0 to 1. Requires d >= m + 1.
MoftDataset synth_conflicting(std::size_t n_groups, std::size_t group_size, std::size_t d,
                              std::size_t m, double conflict, std::uint64_t seed,
                              std::vector<LabelMode> label_modes = {});

struct SplitFractions {
  double train = 0.6;
  double valid = 0.2;
  double test = 0.2;
};

struct SplitSizes {
  std::size_t train, valid, test;
};

/// floor(N * f) groups for validation and test, everything else to train.
SplitSizes split_sizes(std::size_t n, const SplitFractions& fractions);

/// Seeded group-level partition into (train, valid, test).
std::tuple<MoftDataset, MoftDataset, MoftDataset> split(const MoftDataset& dataset,
                                                        const SplitFractions& fractions,
                                                        std::uint64_t seed);

/// Per-feature min-max scaling to [0, 1] computed over the whole dataset.
void minmax_scale_features(MoftDataset& dataset);

// Binary cache: magic "CSDPDATA", u32 version, u64 m, d, N, m label-mode bytes, then per
// group: u64 id length, id bytes, u64 n, n*d features, n main labels, m*n labels.
// All numbers little-endian; reals are IEEE-754 float64.
void write_dataset(std::ostream& out, const MoftDataset& dataset);
MoftDataset read_dataset(std::istream& in);
void save_dataset(const std::string& path, const MoftDataset& dataset);
MoftDataset load_dataset(const std::string& path);

}  // namespace cosdpo
