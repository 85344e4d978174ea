#include "cosdpo/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <unordered_map>

#include "cosdpo/error.hpp"

namespace cosdpo {

static_assert(std::endian::native == std::endian::little,
              "dataset cache assumes a little-endian host");

std::string to_string(LabelMode mode) { return mode == LabelMode::Dense ? "dense" : "sparse"; }

LabelMode parse_label_mode(const std::string& text) {
  if (text == "dense") return LabelMode::Dense;
  if (text == "sparse") return LabelMode::Sparse;
  throw DomainError("unknown label mode '" + text + "' (expected dense|sparse)");
}

// ---------------------------------------------------------------------------
// RankingGroup / MoftDataset

RankingGroup::RankingGroup(std::string id, std::size_t d, std::vector<double> features,
                           std::vector<double> main_labels,
                           std::vector<std::vector<double>> labels)
    : id_(std::move(id)),
      d_(d),
      features_(std::move(features)),
      main_labels_(std::move(main_labels)),
      labels_(std::move(labels)) {
  if (d_ == 0) throw DomainError("group " + id_ + ": feature dimension must be positive");
  if (features_.size() % d_ != 0)
    throw DomainError("group " + id_ + ": feature matrix is not n x d");
  n_ = features_.size() / d_;
  if (n_ < 2) throw DomainError("group " + id_ + ": needs at least 2 items");
  if (main_labels_.size() != n_)
    throw DomainError("group " + id_ + ": main label vector has wrong length");
  for (const auto& z : labels_) {
    if (z.size() != n_) throw DomainError("group " + id_ + ": label vector has wrong length");
  }
}

RankingGroup RankingGroup::permuted(std::span<const std::size_t> perm) const {
  if (perm.size() != n_) throw DomainError("permutation length mismatch");
  std::vector<double> f(features_.size()), main(n_);
  std::vector<std::vector<double>> z(labels_.size(), std::vector<double>(n_));
  for (std::size_t i = 0; i < n_; ++i) {
    const std::size_t src = perm[i];
    if (src >= n_) throw DomainError("permutation index out of range");
    std::copy_n(features_.begin() + static_cast<std::ptrdiff_t>(src * d_), d_,
                f.begin() + static_cast<std::ptrdiff_t>(i * d_));
    main[i] = main_labels_[src];
    for (std::size_t j = 0; j < labels_.size(); ++j) z[j][i] = labels_[j][src];
  }
  return RankingGroup(id_, d_, std::move(f), std::move(main), std::move(z));
}

MoftDataset::MoftDataset(std::vector<RankingGroup> groups, std::vector<LabelMode> label_modes)
    : groups_(std::move(groups)), label_modes_(std::move(label_modes)) {
  if (groups_.empty()) throw DomainError("dataset must contain at least one group");
  if (label_modes_.empty()) throw DomainError("dataset must have at least one objective");
  d_ = groups_.front().dim();
  for (const auto& g : groups_) {
    if (g.dim() != d_) throw DomainError("group " + g.id() + ": inconsistent feature dimension");
    if (g.objectives() != label_modes_.size())
      throw DomainError("group " + g.id() + ": inconsistent objective count");
  }
}

// ---------------------------------------------------------------------------
// Labels

std::optional<NormalizedLabels> normalize_labels(std::span<const double> z, LabelMode mode) {
  if (z.empty()) throw DomainError("normalize_labels: empty label vector");
  for (double v : z) {
    if (!std::isfinite(v)) throw DomainError("normalize_labels: non-finite label");
  }
  NormalizedLabels out;
  out.zbar.resize(z.size());
  if (mode == LabelMode::Dense) {
    const double mx = *std::max_element(z.begin(), z.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
      out.zbar[i] = std::exp(z[i] - mx);
      sum += out.zbar[i];
    }
    for (double& v : out.zbar) v /= sum;
    return out;
  }
  double l1 = 0.0;
  for (double v : z) {
    if (v < 0.0) throw DomainError("normalize_labels: sparse mode requires nonnegative labels");
    l1 += v;
  }
  if (l1 == 0.0) return std::nullopt;
  for (std::size_t i = 0; i < z.size(); ++i) out.zbar[i] = z[i] / l1;
  return out;
}

// ---------------------------------------------------------------------------
// LETOR parsing

ObjectiveSource ObjectiveSource::parse(const std::string& text) {
  if (text == "label" || text == "relevance") return {};
  for (const char* prefix : {"f:", "feature:"}) {
    const std::size_t len = std::strlen(prefix);
    if (text.rfind(prefix, 0) == 0) {
      const std::string num = text.substr(len);
      std::size_t pos = 0;
      unsigned long idx = 0;
      try {
        idx = std::stoul(num, &pos);
      } catch (const std::exception&) {
        pos = 0;
      }
      if (pos == 0 || pos != num.size() || idx == 0)
        throw DomainError("invalid feature objective '" + text + "'");
      return {Kind::Feature, idx};
    }
  }
  throw DomainError("unknown objective source '" + text + "' (expected label or f:<index>)");
}

std::string ObjectiveSource::to_string() const {
  return kind == Kind::Relevance ? "label" : "f:" + std::to_string(feature_index);
}

LetorOptions mslr_web10k_options() {
  LetorOptions opt;
  opt.feature_count = 131;
  for (std::size_t f = 132; f <= 136; ++f)
    opt.aux.push_back({ObjectiveSource::Kind::Feature, f});
  // Click count, click count, dwell time: sparse; quality scores: dense.
  opt.label_modes = {LabelMode::Sparse, LabelMode::Sparse, LabelMode::Sparse, LabelMode::Dense,
                     LabelMode::Dense};
  opt.max_feature_index = 136;
  return opt;
}

namespace {

double parse_real(const std::string& token, std::size_t line, const char* what) {
  const char* begin = token.c_str();
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0' || errno == ERANGE || !std::isfinite(v))
    throw ParseError(std::string("malformed ") + what + " '" + token + "'", line);
  return v;
}

struct PendingGroup {
  std::string id;
  std::vector<std::vector<double>> rows;  // full feature rows, 1-based index -> [idx-1]
  std::vector<double> relevance;
};

double pick(const ObjectiveSource& src, const std::vector<double>& row, double relevance) {
  return src.kind == ObjectiveSource::Kind::Relevance ? relevance : row[src.feature_index - 1];
}

}  // namespace

LetorParseResult parse_letor(std::istream& in, const LetorOptions& options) {
  if (options.feature_count == 0) throw DomainError("feature_count must be positive");
  if (options.aux.empty()) throw DomainError("at least one auxiliary objective is required");
  if (!options.label_modes.empty() && options.label_modes.size() != options.aux.size())
    throw DomainError("label_modes must match the number of auxiliary objectives");

  std::size_t max_index = options.max_feature_index;
  if (max_index == 0) {
    max_index = options.feature_count;
    for (const auto& src : options.aux)
      if (src.kind == ObjectiveSource::Kind::Feature)
        max_index = std::max(max_index, src.feature_index);
    if (options.main.kind == ObjectiveSource::Kind::Feature)
      max_index = std::max(max_index, options.main.feature_index);
  }
  if (max_index < options.feature_count)
    throw DomainError("max_feature_index is smaller than feature_count");
  for (const auto& src : options.aux)
    if (src.kind == ObjectiveSource::Kind::Feature && src.feature_index > max_index)
      throw DomainError("objective feature index exceeds the declared feature count");

  std::vector<PendingGroup> pending;
  std::unordered_map<std::string, std::size_t> index_of;

  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    std::istringstream tokens(raw);
    std::string token;
    if (!(tokens >> token)) continue;  // blank or comment-only line

    const double relevance = parse_real(token, line_no, "label");
    if (!(tokens >> token) || token.rfind("qid:", 0) != 0)
      throw ParseError("missing qid", line_no);
    std::string qid = token.substr(4);
    if (qid.empty()) throw ParseError("empty qid", line_no);

    std::vector<double> row(max_index, 0.0);
    std::size_t last_index = 0;
    while (tokens >> token) {
      const auto colon = token.find(':');
      if (colon == std::string::npos || colon == 0)
        throw ParseError("malformed feature '" + token + "'", line_no);
      const std::string idx_text = token.substr(0, colon);
      if (!std::all_of(idx_text.begin(), idx_text.end(), [](char c) { return c >= '0' && c <= '9'; }))
        throw ParseError("malformed feature index '" + idx_text + "'", line_no);
      std::size_t idx = 0;
      try {
        idx = std::stoul(idx_text);
      } catch (const std::exception&) {
        throw ParseError("malformed feature index '" + idx_text + "'", line_no);
      }
      if (idx == 0) throw ParseError("feature indices are 1-based", line_no);
      if (idx > max_index)
        throw ParseError("feature index " + std::to_string(idx) + " exceeds declared count " +
                             std::to_string(max_index),
                         line_no);
      if (idx <= last_index) throw ParseError("feature indices must be increasing", line_no);
      last_index = idx;
      row[idx - 1] = parse_real(token.substr(colon + 1), line_no, "feature value");
    }

    auto [it, inserted] = index_of.try_emplace(qid, pending.size());
    if (inserted) pending.push_back(PendingGroup{qid, {}, {}});
    PendingGroup& group = pending[it->second];
    group.rows.push_back(std::move(row));
    group.relevance.push_back(relevance);
  }

  LetorParseResult result;
  std::vector<RankingGroup> groups;
  const std::size_t d = options.feature_count;
  for (auto& pg : pending) {
    const std::size_t n = pg.rows.size();
    if (n < 2) {
      ++result.dropped_groups;
      continue;
    }
    std::vector<double> features;
    features.reserve(n * d);
    std::vector<double> main(n);
    std::vector<std::vector<double>> labels(options.aux.size(), std::vector<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
      features.insert(features.end(), pg.rows[i].begin(),
                      pg.rows[i].begin() + static_cast<std::ptrdiff_t>(d));
      main[i] = pick(options.main, pg.rows[i], pg.relevance[i]);
      for (std::size_t j = 0; j < options.aux.size(); ++j)
        labels[j][i] = pick(options.aux[j], pg.rows[i], pg.relevance[i]);
    }
    groups.emplace_back(pg.id, d, std::move(features), std::move(main), std::move(labels));
  }
  if (result.dropped_groups > 0)
    result.warnings.push_back("dropped " + std::to_string(result.dropped_groups) +
                              " group(s) with fewer than 2 items");
  if (groups.empty()) {
    if (options.strict) throw ParseError("input contains no usable ranking group");
    result.warnings.push_back("input contains no usable ranking group");
    return result;
  }
  std::vector<LabelMode> modes = options.label_modes;
  if (modes.empty()) modes.assign(options.aux.size(), LabelMode::Dense);
  result.dataset.emplace(std::move(groups), std::move(modes));
  return result;
}

// ---------------------------------------------------------------------------
// Synthetic data

MoftDataset synth_conflicting(std::size_t n_groups, std::size_t group_size, std::size_t d,
                              std::size_t m, double conflict, std::uint64_t seed,
                              std::vector<LabelMode> label_modes) {
  if (n_groups < 1) throw DomainError("synth: n_groups must be >= 1");
  if (group_size < 2) throw DomainError("synth: group_size must be >= 2");
  if (m < 2) throw DomainError("synth: m must be >= 2");
  if (d < m + 1) throw DomainError("synth: d must be >= m + 1");
  if (!(conflict >= 0.0 && conflict <= 1.0)) throw DomainError("synth: conflict must be in [0,1]");
  if (label_modes.empty()) label_modes.assign(m, LabelMode::Dense);
  if (label_modes.size() != m) throw DomainError("synth: label_modes must have m entries");

  constexpr double kNoise = 0.1;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  // Orthonormal directions u (shared / main), e_1..e_m (objective-specific) by Gram-Schmidt.
  std::vector<std::vector<double>> basis;
  while (basis.size() < m + 1) {
    std::vector<double> v(d);
    for (double& x : v) x = normal(rng);
    for (const auto& b : basis) {
      const double proj = std::inner_product(v.begin(), v.end(), b.begin(), 0.0);
      for (std::size_t i = 0; i < d; ++i) v[i] -= proj * b[i];
    }
    const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
    if (norm < 1e-6) continue;
    for (double& x : v) x /= norm;
    basis.push_back(std::move(v));
  }
  const std::vector<double>& shared = basis[0];
  // Unit-norm scorers: sqrt(1-c) u + sqrt(c) e_j, pairwise correlation 1 - c.
  std::vector<std::vector<double>> scorers(m, std::vector<double>(d));
  const double a = std::sqrt(1.0 - conflict), b = std::sqrt(conflict);
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t i = 0; i < d; ++i) scorers[j][i] = a * shared[i] + b * basis[j + 1][i];

  // Labels must be nonnegative for NDCG gains and L1 normalization; softplus keeps the order.
  auto softplus = [](double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); };

  std::vector<RankingGroup> groups;
  groups.reserve(n_groups);
  for (std::size_t k = 0; k < n_groups; ++k) {
    std::vector<double> features(group_size * d);
    for (double& x : features) x = normal(rng);
    std::vector<double> main(group_size);
    std::vector<std::vector<double>> labels(m, std::vector<double>(group_size));
    for (std::size_t i = 0; i < group_size; ++i) {
      const double* y = features.data() + i * d;
      main[i] = softplus(std::inner_product(y, y + d, shared.begin(), 0.0) + kNoise * normal(rng));
      for (std::size_t j = 0; j < m; ++j)
        labels[j][i] =
            softplus(std::inner_product(y, y + d, scorers[j].begin(), 0.0) + kNoise * normal(rng));
    }
    groups.emplace_back("synth-" + std::to_string(k), d, std::move(features), std::move(main),
                        std::move(labels));
  }
  return MoftDataset(std::move(groups), std::move(label_modes));
}

// ---------------------------------------------------------------------------
// Split

SplitSizes split_sizes(std::size_t n, const SplitFractions& f) {
  if (!(f.train > 0.0 && f.valid > 0.0 && f.test > 0.0))
    throw DomainError("split fractions must be positive");
  if (std::abs(f.train + f.valid + f.test - 1.0) > 1e-9)
    throw DomainError("split fractions must sum to 1");
  const auto nd = static_cast<double>(n);
  const auto valid = static_cast<std::size_t>(std::floor(nd * f.valid));
  const auto test = static_cast<std::size_t>(std::floor(nd * f.test));
  return {n - valid - test, valid, test};
}

std::tuple<MoftDataset, MoftDataset, MoftDataset> split(const MoftDataset& dataset,
                                                        const SplitFractions& fractions,
                                                        std::uint64_t seed) {
  const SplitSizes sizes = split_sizes(dataset.size(), fractions);
  if (sizes.train == 0 || sizes.valid == 0 || sizes.test == 0)
    throw DomainError("split would leave an empty partition");
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit draw so the permutation does not depend on std::shuffle.
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  auto take = [&](std::size_t begin, std::size_t count) {
    std::vector<RankingGroup> groups;
    groups.reserve(count);
    for (std::size_t i = begin; i < begin + count; ++i) groups.push_back(dataset[order[i]]);
    return MoftDataset(std::move(groups), dataset.label_modes());
  };
  return {take(0, sizes.train), take(sizes.train, sizes.valid),
          take(sizes.train + sizes.valid, sizes.test)};
}

void minmax_scale_features(MoftDataset& dataset) {
  const std::size_t d = dataset.d_;
  std::vector<double> lo(d, std::numeric_limits<double>::infinity());
  std::vector<double> hi(d, -std::numeric_limits<double>::infinity());
  for (const auto& g : dataset.groups_)
    for (std::size_t i = 0; i < g.size(); ++i)
      for (std::size_t c = 0; c < d; ++c) {
        lo[c] = std::min(lo[c], g.features_[i * d + c]);
        hi[c] = std::max(hi[c], g.features_[i * d + c]);
      }
  for (auto& g : dataset.groups_)
    for (std::size_t i = 0; i < g.size(); ++i)
      for (std::size_t c = 0; c < d; ++c) {
        const double range = hi[c] - lo[c];
        double& x = g.features_[i * d + c];
        x = range > 0.0 ? (x - lo[c]) / range : 0.0;
      }
}

// ---------------------------------------------------------------------------
// Binary cache

namespace {

constexpr char kDatasetMagic[8] = {'C', 'S', 'D', 'P', 'D', 'A', 'T', 'A'};
constexpr std::uint32_t kDatasetVersion = 1;

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

void put_reals(std::ostream& out, std::span<const double> values) {
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T)))
    throw ParseError("dataset cache truncated");
  return value;
}

std::vector<double> get_reals(std::istream& in, std::size_t count) {
  std::vector<double> values(count);
  if (!in.read(reinterpret_cast<char*>(values.data()),
               static_cast<std::streamsize>(count * sizeof(double))))
    throw ParseError("dataset cache truncated");
  return values;
}

}  // namespace

void write_dataset(std::ostream& out, const MoftDataset& dataset) {
  out.write(kDatasetMagic, sizeof(kDatasetMagic));
  put<std::uint32_t>(out, kDatasetVersion);
  put<std::uint64_t>(out, dataset.objectives());
  put<std::uint64_t>(out, dataset.dim());
  put<std::uint64_t>(out, dataset.size());
  for (LabelMode mode : dataset.label_modes())
    put<std::uint8_t>(out, mode == LabelMode::Dense ? 0 : 1);
  for (const auto& g : dataset.groups()) {
    put<std::uint64_t>(out, g.id().size());
    out.write(g.id().data(), static_cast<std::streamsize>(g.id().size()));
    put<std::uint64_t>(out, g.size());
    put_reals(out, g.features());
    put_reals(out, g.main_labels());
    for (std::size_t j = 0; j < g.objectives(); ++j) put_reals(out, g.labels(j));
  }
  if (!out) throw std::runtime_error("failed writing dataset cache");
}

MoftDataset read_dataset(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kDatasetMagic, sizeof(magic)) != 0)
    throw ParseError("not a dataset cache (bad magic)");
  const auto version = get<std::uint32_t>(in);
  if (version != kDatasetVersion)
    throw ParseError("unsupported dataset cache version " + std::to_string(version));
  const auto m = get<std::uint64_t>(in);
  const auto d = get<std::uint64_t>(in);
  const auto n_groups = get<std::uint64_t>(in);
  constexpr std::uint64_t kSane = std::uint64_t{1} << 32;
  if (m == 0 || d == 0 || n_groups == 0 || m > kSane || d > kSane || n_groups > kSane)
    throw ParseError("dataset cache header out of range");
  std::vector<LabelMode> modes;
  for (std::uint64_t j = 0; j < m; ++j) {
    const auto tag = get<std::uint8_t>(in);
    if (tag > 1) throw ParseError("bad label mode tag in dataset cache");
    modes.push_back(tag == 0 ? LabelMode::Dense : LabelMode::Sparse);
  }
  std::vector<RankingGroup> groups;
  groups.reserve(n_groups);
  for (std::uint64_t k = 0; k < n_groups; ++k) {
    const auto id_len = get<std::uint64_t>(in);
    if (id_len > kSane) throw ParseError("dataset cache group id too long");
    std::string id(id_len, '\0');
    if (!in.read(id.data(), static_cast<std::streamsize>(id_len)))
      throw ParseError("dataset cache truncated");
    const auto n = get<std::uint64_t>(in);
    if (n > kSane) throw ParseError("dataset cache group too large");
    auto features = get_reals(in, n * d);
    auto main = get_reals(in, n);
    std::vector<std::vector<double>> labels;
    for (std::uint64_t j = 0; j < m; ++j) labels.push_back(get_reals(in, n));
    groups.emplace_back(std::move(id), d, std::move(features), std::move(main), std::move(labels));
  }
  return MoftDataset(std::move(groups), std::move(modes));
}

void save_dataset(const std::string& path, const MoftDataset& dataset) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_dataset(out, dataset);
}

MoftDataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_dataset(in);
}

}  // namespace cosdpo
