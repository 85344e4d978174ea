#include "experiment.hpp"

#include <algorithm>

#include "cosdpo/error.hpp"

namespace cosdpo::experiment {

std::string to_string(Method m) {
  switch (m) {
    case Method::WeightCos: return "weight-cos";
    case Method::TemperatureCos: return "temperature-cos";
    case Method::DpoLs: return "dpo-ls";
    case Method::DpoSoup: return "dpo-soup";
    case Method::MoDpo: return "mo-dpo";
  }
  return "?";
}

Method parse_method(const std::string& text) {
  for (Method m : {Method::WeightCos, Method::TemperatureCos, Method::DpoLs, Method::DpoSoup,
                   Method::MoDpo})
    if (text == to_string(m)) return m;
  throw DomainError("unknown method '" + text + "'");
}

std::string to_string(Budget b) { return b == Budget::Total ? "total" : "per-model"; }

Budget parse_budget(const std::string& text) {
  if (text == "total") return Budget::Total;
  if (text == "per-model") return Budget::PerModel;
  throw DomainError("unknown budget rule '" + text + "'");
}

std::size_t steps_per_model(const MethodSpec& spec, std::size_t m) {
  const std::size_t s = spec.train.steps;
  if (spec.budget == Budget::PerModel) return s;
  std::size_t models = 1;
  switch (spec.method) {
    case Method::WeightCos:
    case Method::TemperatureCos: models = 1; break;
    case Method::DpoLs: models = spec.grid_count; break;
    case Method::DpoSoup: models = m; break;
    case Method::MoDpo: models = m + spec.grid_count; break;
  }
  return std::max<std::size_t>(1, s / models);
}

namespace {

TrainConfig tagged(TrainConfig c, const std::string& tag) {
  if (c.observer) {
    c.observer = [inner = c.observer, tag](const StepRecord& r) {
      StepRecord copy = r;
      copy.model = tag;
      inner(copy);
    };
  }
  return c;
}

std::string index_tag(const char* prefix, std::size_t i) {
  std::string n = std::to_string(i);
  if (n.size() < 2) n.insert(0, 2 - n.size(), '0');
  return prefix + n;
}

}  // namespace

std::string grid_model_name(std::size_t g) { return index_tag("grid_", g); }
std::string unit_model_name(std::size_t j) { return index_tag("unit_", j + 1); }

namespace {

ScoreModel make_init(const std::shared_ptr<const ScoreModel>& base, const MethodSpec& spec,
                     std::size_t d, std::size_t m, bool cond_w, bool cond_beta,
                     std::uint64_t seed) {
  ModelConfig cfg;
  cfg.d = d;
  cfg.m = m;
  cfg.hidden_dims = spec.hidden_dims;
  cfg.activation = spec.activation;
  cfg.condition_weight = cond_w;
  cfg.condition_temperature = cond_beta;
  cfg.seed = seed;
  if (spec.kind == ModelKind::Augmentation) return init_params(cfg, ModelKind::Augmentation, base);
  if (spec.kind == ModelKind::Scratch) return init_params(cfg, ModelKind::Scratch);
  throw DomainError("fine-tuned models must be scratch or augmentation");
}

}  // namespace

MethodResult train_method(const std::shared_ptr<const ScoreModel>& base, const MoftDataset& train,
                          const MethodSpec& spec) {
  if (!base) throw DomainError("train_method: missing base model");
  const std::size_t m = train.objectives();
  const std::size_t d = train.dim();
  TrainConfig cfg = spec.train;
  cfg.steps = steps_per_model(spec, m);
  const std::uint64_t seed = spec.train.seed;

  MethodResult out;
  out.method = spec.method;
  switch (spec.method) {
    case Method::WeightCos:
      out.models.push_back(
          train_weight_cos(*base, make_init(base, spec, d, m, true, false, seed), train, cfg));
      break;
    case Method::TemperatureCos:
      out.models.push_back(
          train_temperature_cos(*base, make_init(base, spec, d, m, true, true, seed), train, cfg));
      break;
    case Method::DpoLs: {
      const auto grid = weight_grid(m, spec.grid_count);
      for (std::size_t g = 0; g < grid.size(); ++g) {
        TrainConfig c = tagged(cfg, grid_model_name(g));
        c.seed = seed + g;
        out.models.push_back(
            train_dpo_ls(*base, make_init(base, spec, d, m, false, false, seed), train, grid[g], c));
      }
      break;
    }
    case Method::DpoSoup:
    case Method::MoDpo: {
      const ScoreModel init = make_init(base, spec, d, m, false, false, seed);
      for (std::size_t j = 0; j < m; ++j) {
        TrainConfig c = tagged(cfg, unit_model_name(j));
        c.seed = seed + j;
        out.units.push_back(train_dpo_ls(*base, init, train, SimplexPoint::unit(m, j), c));
      }
      if (spec.method == Method::DpoSoup) break;
      const auto grid = weight_grid(m, spec.grid_count);
      for (std::size_t g = 0; g < grid.size(); ++g) {
        TrainConfig c = tagged(cfg, grid_model_name(g));
        c.seed = seed + m + g;
        out.models.push_back(train_mo_dpo(*base, make_init(base, spec, d, m, false, false, seed),
                                          train, grid[g], out.units, c));
      }
      break;
    }
  }
  return out;
}

std::vector<FrontPoint> profile_method(const ScoreModel& base, const MethodResult& result,
                                       const MoftDataset& test, std::size_t grid_count,
                                       const FrontControl& control, const ProfileOptions& options) {
  const std::size_t m = test.objectives();
  const auto grid = weight_grid(m, grid_count);
  switch (result.method) {
    case Method::WeightCos:
    case Method::TemperatureCos:
      if (result.models.size() != 1) throw DomainError("expected one conditioned model");
      return profile_front(test, grid, conditioned_scorer(base, result.models[0], grid, control),
                           control_tag(control), options);
    case Method::DpoLs:
    case Method::MoDpo:
      if (control.scale || control.beta)
        throw DomainError("temperature control applies to conditioned models only");
      if (result.models.size() != grid.size())
        throw DomainError("model list does not match the grid (" +
                          std::to_string(result.models.size()) + " vs " +
                          std::to_string(grid.size()) + ")");
      return profile_front(test, grid, per_point_scorer(result.models), {1.0}, options);
    case Method::DpoSoup: {
      if (control.scale || control.beta)
        throw DomainError("temperature control applies to conditioned models only");
      if (result.units.size() != m) throw DomainError("soup needs one unit model per objective");
      std::vector<ScoreModel> soups;
      for (const auto& w : grid) soups.push_back(average_params(result.units, w));
      return profile_front(test, grid, per_point_scorer(soups), {1.0}, options);
    }
  }
  throw DomainError("unknown method");
}

double front_hypervolume(const std::vector<FrontPoint>& front, const ReferencePoint& ref) {
  return hypervolume(pareto_filter(aux_points(front), ref.direction), ref);
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

}  // namespace cosdpo::experiment
