#include "config.hpp"

#include <fstream>
#include <set>

#include "cosdpo/error.hpp"

namespace cosdpo::experiment {

using json = nlohmann::ordered_json;

namespace {

void only_keys(const json& obj, const std::string& where, std::set<std::string> allowed) {
  if (!obj.is_object()) throw DomainError(where + ": expected an object");
  for (const auto& [k, v] : obj.items())
    if (!allowed.count(k)) throw DomainError(where + ": unknown key '" + k + "'");
}

template <class T>
T get(const json& obj, const std::string& key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw DomainError(where + "." + key + ": missing or wrong type");
  }
}

template <class T>
void maybe(const json& obj, const std::string& key, const std::string& where, T& out) {
  if (obj.contains(key)) out = get<T>(obj, key, where);
}

std::vector<LabelMode> modes_from(const json& arr, const std::string& where) {
  std::vector<LabelMode> out;
  for (const auto& s : get<std::vector<std::string>>(json{{"v", arr}}, "v", where))
    out.push_back(parse_label_mode(s));
  return out;
}

std::vector<std::string> modes_to(const std::vector<LabelMode>& modes) {
  std::vector<std::string> out;
  for (auto m : modes) out.push_back(to_string(m));
  return out;
}

}  // namespace

ExperimentConfig parse_config(const json& doc) {
  only_keys(doc, "config", {"seed", "dataset", "split", "model", "train", "eval", "output"});
  ExperimentConfig c;
  if (doc.contains("seed")) c.seed = get<std::uint64_t>(doc, "seed", "config");

  if (doc.contains("dataset")) {
    const json& ds = doc["dataset"];
    only_keys(ds, "dataset", {"cache", "synth", "letor", "scale_features"});
    int sources = 0;
    if (ds.contains("cache")) {
      c.dataset.cache = get<std::string>(ds, "cache", "dataset");
      ++sources;
    }
    if (ds.contains("synth")) {
      const json& sj = ds["synth"];
      only_keys(sj, "dataset.synth",
                {"groups", "group_size", "dim", "objectives", "conflict", "seed", "label_modes"});
      SynthSpec s;
      maybe(sj, "groups", "dataset.synth", s.groups);
      maybe(sj, "group_size", "dataset.synth", s.group_size);
      maybe(sj, "dim", "dataset.synth", s.dim);
      maybe(sj, "objectives", "dataset.synth", s.objectives);
      maybe(sj, "conflict", "dataset.synth", s.conflict);
      if (sj.contains("seed")) s.seed = get<std::uint64_t>(sj, "seed", "dataset.synth");
      if (sj.contains("label_modes")) s.label_modes = modes_from(sj["label_modes"], "dataset.synth");
      c.dataset.synth = s;
      ++sources;
    }
    if (ds.contains("letor")) {
      const json& lj = ds["letor"];
      only_keys(lj, "dataset.letor",
                {"path", "preset", "feature_count", "main", "aux", "label_modes", "strict",
                 "max_feature_index"});
      LetorSpec l;
      l.path = get<std::string>(lj, "path", "dataset.letor");
      maybe(lj, "preset", "dataset.letor", l.preset);
      if (l.preset == "mslr-web10k") {
        l.options = mslr_web10k_options();
      } else if (!l.preset.empty()) {
        throw DomainError("dataset.letor.preset: unknown preset '" + l.preset + "'");
      }
      maybe(lj, "feature_count", "dataset.letor", l.options.feature_count);
      maybe(lj, "max_feature_index", "dataset.letor", l.options.max_feature_index);
      maybe(lj, "strict", "dataset.letor", l.options.strict);
      if (lj.contains("main"))
        l.options.main = ObjectiveSource::parse(get<std::string>(lj, "main", "dataset.letor"));
      if (lj.contains("aux")) {
        l.options.aux.clear();
        for (const auto& s : get<std::vector<std::string>>(lj, "aux", "dataset.letor"))
          l.options.aux.push_back(ObjectiveSource::parse(s));
      }
      if (lj.contains("label_modes")) l.options.label_modes = modes_from(lj["label_modes"], "dataset.letor");
      c.dataset.letor = l;
      ++sources;
    }
    if (sources > 1) throw DomainError("dataset: give exactly one of cache, synth, letor");
    maybe(ds, "scale_features", "dataset", c.dataset.scale_features);
  }

  if (doc.contains("split")) {
    const json& sj = doc["split"];
    only_keys(sj, "split", {"train", "valid", "test"});
    maybe(sj, "train", "split", c.split.train);
    maybe(sj, "valid", "split", c.split.valid);
    maybe(sj, "test", "split", c.split.test);
  }

  if (doc.contains("model")) {
    const json& mj = doc["model"];
    only_keys(mj, "model", {"hidden", "activation", "parametrization"});
    maybe(mj, "hidden", "model", c.method.hidden_dims);
    if (mj.contains("activation"))
      c.method.activation = parse_activation(get<std::string>(mj, "activation", "model"));
    if (mj.contains("parametrization")) {
      c.method.kind = parse_model_kind(get<std::string>(mj, "parametrization", "model"));
      if (c.method.kind == ModelKind::Base)
        throw DomainError("model.parametrization: must be scratch or augmentation");
    }
  }

  if (doc.contains("train")) {
    const json& tj = doc["train"];
    only_keys(tj, "train",
              {"method", "steps", "batch_groups", "lr", "optimizer", "lambda", "penalty_sign",
               "alpha", "beta", "beta_lo", "beta_hi", "clip_norm", "budget", "pretrain_steps",
               "pretrain_lr"});
    TrainConfig& t = c.method.train;
    if (tj.contains("method")) c.method.method = parse_method(get<std::string>(tj, "method", "train"));
    maybe(tj, "steps", "train", t.steps);
    maybe(tj, "batch_groups", "train", t.batch_groups);
    maybe(tj, "lr", "train", t.lr);
    if (tj.contains("optimizer"))
      t.optimizer.kind = parse_optimizer(get<std::string>(tj, "optimizer", "train"));
    maybe(tj, "lambda", "train", t.lambda);
    maybe(tj, "penalty_sign", "train", t.penalty_sign);
    maybe(tj, "alpha", "train", t.alpha);
    maybe(tj, "beta", "train", t.beta);
    maybe(tj, "beta_lo", "train", t.beta_dist.lo);
    maybe(tj, "beta_hi", "train", t.beta_dist.hi);
    maybe(tj, "clip_norm", "train", t.clip_norm);
    if (tj.contains("budget")) c.method.budget = parse_budget(get<std::string>(tj, "budget", "train"));
    maybe(tj, "pretrain_steps", "train", c.pretrain_steps);
    maybe(tj, "pretrain_lr", "train", c.pretrain_lr);
  }

  if (doc.contains("eval")) {
    const json& ej = doc["eval"];
    only_keys(ej, "eval", {"grid", "k", "reference", "direction"});
    maybe(ej, "grid", "eval", c.eval.grid);
    maybe(ej, "k", "eval", c.eval.k);
    maybe(ej, "reference", "eval", c.eval.reference);
    if (ej.contains("direction"))
      c.eval.direction = parse_direction(get<std::string>(ej, "direction", "eval"));
  }
  c.method.grid_count = c.eval.grid;

  maybe(doc, "output", "config", c.output);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DomainError("cannot open config '" + path + "'");
  json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw DomainError("config '" + path + "': " + e.what());
  }
  return parse_config(doc);
}

json to_json(const ExperimentConfig& c) {
  json doc;
  if (c.seed) doc["seed"] = *c.seed;
  json ds = json::object();
  if (c.dataset.cache) ds["cache"] = *c.dataset.cache;
  if (c.dataset.synth) {
    const auto& s = *c.dataset.synth;
    json sj{{"groups", s.groups},         {"group_size", s.group_size},
            {"dim", s.dim},               {"objectives", s.objectives},
            {"conflict", s.conflict}};
    if (s.seed) sj["seed"] = *s.seed;
    if (!s.label_modes.empty()) sj["label_modes"] = modes_to(s.label_modes);
    ds["synth"] = sj;
  }
  if (c.dataset.letor) {
    const auto& l = *c.dataset.letor;
    std::vector<std::string> aux;
    for (const auto& a : l.options.aux) aux.push_back(a.to_string());
    json lj{{"path", l.path},
            {"feature_count", l.options.feature_count},
            {"max_feature_index", l.options.max_feature_index},
            {"main", l.options.main.to_string()},
            {"aux", aux},
            {"label_modes", modes_to(l.options.label_modes)},
            {"strict", l.options.strict}};
    if (!l.preset.empty()) lj["preset"] = l.preset;
    ds["letor"] = lj;
  }
  ds["scale_features"] = c.dataset.scale_features;
  doc["dataset"] = ds;
  doc["split"] = {{"train", c.split.train}, {"valid", c.split.valid}, {"test", c.split.test}};
  doc["model"] = {{"hidden", c.method.hidden_dims},
                  {"activation", to_string(c.method.activation)},
                  {"parametrization", to_string(c.method.kind)}};
  const TrainConfig& t = c.method.train;
  json tj{{"method", to_string(c.method.method)},
          {"steps", t.steps},
          {"batch_groups", t.batch_groups},
          {"lr", t.lr},
          {"optimizer", to_string(t.optimizer.kind)},
          {"lambda", t.lambda},
          {"penalty_sign", t.penalty_sign},
          {"beta_lo", t.beta_dist.lo},
          {"beta_hi", t.beta_dist.hi},
          {"clip_norm", t.clip_norm},
          {"budget", to_string(c.method.budget)},
          {"pretrain_steps", c.pretrain_steps},
          {"pretrain_lr", c.pretrain_lr}};
  if (!t.alpha.empty()) tj["alpha"] = t.alpha;
  if (!t.beta.empty()) tj["beta"] = t.beta;
  doc["train"] = tj;
  doc["eval"] = {{"grid", c.eval.grid},
                 {"k", c.eval.k},
                 {"reference", c.eval.reference},
                 {"direction", to_string(c.eval.direction)}};
  doc["output"] = c.output;
  return doc;
}

MoftDataset build_dataset(const ExperimentConfig& c) {
  std::optional<MoftDataset> ds;
  if (c.dataset.cache) {
    ds = load_dataset(*c.dataset.cache);
  } else if (c.dataset.synth) {
    const auto& s = *c.dataset.synth;
    if (!s.seed && !c.seed) throw DomainError("synth dataset needs a seed");
    ds = synth_conflicting(s.groups, s.group_size, s.dim, s.objectives, s.conflict,
                           s.seed ? *s.seed : *c.seed, s.label_modes);
  } else if (c.dataset.letor) {
    std::ifstream in(c.dataset.letor->path);
    if (!in) throw DomainError("cannot open LETOR file '" + c.dataset.letor->path + "'");
    auto parsed = parse_letor(in, c.dataset.letor->options);
    if (!parsed.dataset) throw DomainError("LETOR file produced no usable groups");
    ds = std::move(*parsed.dataset);
  } else {
    throw DomainError("dataset: no source given");
  }
  if (c.dataset.scale_features) minmax_scale_features(*ds);
  return std::move(*ds);
}

std::tuple<MoftDataset, MoftDataset, MoftDataset> split_dataset(const ExperimentConfig& c,
                                                                const MoftDataset& dataset) {
  if (!c.seed) throw DomainError("seed is mandatory");
  return split(dataset, c.split, *c.seed);
}

}  // namespace cosdpo::experiment
