// cosdpo command-line tool.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "config.hpp"
#include "cosdpo/control.hpp"
#include "cosdpo/error.hpp"
#include "cosdpo/eval.hpp"
#include "cosdpo/model.hpp"
#include "cosdpo/train.hpp"
#include "experiment.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace cosdpo;
using namespace cosdpo::experiment;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

fs::path resolve_output(const std::string& path) {
  fs::path p(path);
  if (p.is_relative()) {
    if (const char* root = std::getenv("COSDPO_OUTPUT_ROOT"); root && *root) return fs::path(root) / p;
  }
  return p;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t pos = 0;
      out.push_back(std::stod(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw DomainError("not a number list: '" + text + "'");
    }
  }
  if (out.empty()) throw DomainError("empty number list");
  return out;
}

std::vector<std::string> split_names(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw DomainError("cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw DomainError("cannot write '" + p.string() + "'");
  out << text;
}

std::string timestamp_utc() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream ss;
  ss << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return ss.str();
}

void write_meta(const fs::path& dir, const std::string& command, int argc, char** argv) {
  json meta;
  meta["command"] = command;
  meta["created"] = timestamp_utc();
  std::vector<std::string> args(argv, argv + argc);
  meta["argv"] = args;
  write_text(dir / "run_meta.json", meta.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// ingest / synth

struct IngestArgs {
  std::string input, output, preset = "mslr-web10k", main = "label", aux, modes;
  std::size_t features = 0;
  bool strict = false, scale = false;
};

int cmd_ingest(const IngestArgs& a) {
  LetorOptions opt;
  if (a.preset == "mslr-web10k") {
    opt = mslr_web10k_options();
  } else if (a.preset != "none") {
    throw DomainError("unknown preset '" + a.preset + "'");
  }
  if (a.features) opt.feature_count = a.features;
  if (a.preset == "none" || a.main != "label") opt.main = ObjectiveSource::parse(a.main);
  if (!a.aux.empty()) {
    opt.aux.clear();
    for (const auto& s : split_names(a.aux)) opt.aux.push_back(ObjectiveSource::parse(s));
  }
  if (!a.modes.empty()) {
    opt.label_modes.clear();
    for (const auto& s : split_names(a.modes)) opt.label_modes.push_back(parse_label_mode(s));
  }
  opt.strict = a.strict;
  std::ifstream in(a.input);
  if (!in) throw DomainError("cannot open '" + a.input + "'");
  auto parsed = parse_letor(in, opt);
  for (const auto& w : parsed.warnings) std::cerr << "warning: " << w << '\n';
  if (!parsed.dataset) throw DomainError("no usable groups in '" + a.input + "'");
  if (a.scale) minmax_scale_features(*parsed.dataset);
  const fs::path out = resolve_output(a.output);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_dataset(out.string(), *parsed.dataset);
  json summary{{"groups", parsed.dataset->size()},
               {"dim", parsed.dataset->dim()},
               {"objectives", parsed.dataset->objectives()},
               {"dropped_groups", parsed.dropped_groups},
               {"output", out.string()}};
  std::cout << summary.dump() << '\n';
  return kExitOk;
}

struct SynthArgs {
  SynthSpec spec;
  std::uint64_t seed = 0;
  std::string modes, output;
};

int cmd_synth(const SynthArgs& a) {
  std::vector<LabelMode> modes;
  for (const auto& s : split_names(a.modes)) modes.push_back(parse_label_mode(s));
  const auto ds = synth_conflicting(a.spec.groups, a.spec.group_size, a.spec.dim,
                                    a.spec.objectives, a.spec.conflict, a.seed, modes);
  const fs::path out = resolve_output(a.output);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_dataset(out.string(), ds);
  json summary{{"groups", ds.size()}, {"dim", ds.dim()}, {"objectives", ds.objectives()},
               {"output", out.string()}};
  std::cout << summary.dump() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
  std::string config, method, output, base, dataset, budget;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps, pretrain_steps, grid;
  std::optional<double> lambda, lr;
  bool pretrain = false;
  std::size_t threads = 1;
};

ExperimentConfig resolve_train_config(const TrainArgs& a) {
  ExperimentConfig c = a.config.empty() ? ExperimentConfig{} : load_config(a.config);
  if (a.seed) c.seed = a.seed;
  if (!c.seed) throw DomainError("a seed is mandatory (config 'seed' or --seed)");
  if (!a.method.empty()) c.method.method = parse_method(a.method);
  if (a.steps) c.method.train.steps = *a.steps;
  if (a.pretrain_steps) c.pretrain_steps = *a.pretrain_steps;
  if (a.lambda) c.method.train.lambda = *a.lambda;
  if (a.lr) c.method.train.lr = *a.lr;
  if (a.grid) c.eval.grid = *a.grid;
  c.method.grid_count = c.eval.grid;
  if (!a.budget.empty()) c.method.budget = parse_budget(a.budget);
  if (!a.dataset.empty()) {
    c.dataset.cache = a.dataset;
    c.dataset.synth.reset();
    c.dataset.letor.reset();
  }
  if (!a.output.empty()) c.output = a.output;
  if (c.output.empty())
    c.output = "runs/" + to_string(c.method.method) + "-seed" + std::to_string(*c.seed);
  c.method.train.seed = *c.seed;
  return c;
}

int cmd_train(const TrainArgs& a, int argc, char** argv) {
  ExperimentConfig c = resolve_train_config(a);
  if (!a.pretrain && a.base.empty())
    throw DomainError("need --base <checkpoint> or --pretrain-base");
  if (a.pretrain && !a.base.empty()) throw DomainError("--base and --pretrain-base are exclusive");

  const MoftDataset full = build_dataset(c);
  const auto [train, valid, test] = split_dataset(c, full);
  (void)valid;
  (void)test;
  const std::size_t m = full.objectives();
  c.method.train.validate(m);

  const fs::path dir = resolve_output(c.output);
  fs::create_directories(dir);
  std::ofstream log(dir / "metrics.jsonl", std::ios::binary);
  if (!log) throw DomainError("cannot write metrics log in '" + dir.string() + "'");

  std::shared_ptr<const ScoreModel> base;
  if (a.pretrain) {
    ModelConfig mc;
    mc.d = full.dim();
    mc.m = m;
    mc.hidden_dims = c.method.hidden_dims;
    mc.activation = c.method.activation;
    mc.seed = *c.seed;
    TrainConfig pc;
    pc.steps = c.pretrain_steps;
    pc.lr = c.pretrain_lr;
    pc.batch_groups = c.method.train.batch_groups;
    pc.seed = *c.seed;
    pc.observer = [&log](const StepRecord& r) {
      StepRecord copy = r;
      copy.model = "base";
      write_step_jsonl(log, copy);
    };
    base = std::make_shared<const ScoreModel>(pretrain_base(train, mc, pc));
  } else {
    base = std::make_shared<const ScoreModel>(load_model(a.base));
    if (base->config().d != full.dim())
      throw DomainError("base checkpoint input width does not match the dataset");
  }
  save_model((dir / "base.ckpt").string(), *base);

  c.method.train.observer = [&log](const StepRecord& r) { write_step_jsonl(log, r); };
  const MethodResult result = train_method(base, train, c.method);
  log.close();

  json manifest;
  manifest["method"] = to_string(c.method.method);
  manifest["objectives"] = m;
  manifest["dim"] = full.dim();
  manifest["steps_per_model"] = steps_per_model(c.method, m);
  std::vector<std::string> model_files, unit_files;
  if (result.models.size() == 1 && (c.method.method == Method::WeightCos ||
                                    c.method.method == Method::TemperatureCos)) {
    save_model((dir / "model.ckpt").string(), result.models[0]);
    model_files.push_back("model.ckpt");
  } else {
    for (std::size_t g = 0; g < result.models.size(); ++g) {
      const std::string name = grid_model_name(g) + ".ckpt";
      save_model((dir / name).string(), result.models[g]);
      model_files.push_back(name);
    }
  }
  for (std::size_t j = 0; j < result.units.size(); ++j) {
    const std::string name = unit_model_name(j) + ".ckpt";
    save_model((dir / name).string(), result.units[j]);
    unit_files.push_back(name);
  }
  manifest["models"] = model_files;
  manifest["units"] = unit_files;
  json hashes = json::object();
  for (const auto& f : {std::string("base.ckpt"), std::string("metrics.jsonl")})
    hashes[f] = hex64(fnv1a(read_file(dir / f)));
  for (const auto& f : model_files) hashes[f] = hex64(fnv1a(read_file(dir / f)));
  for (const auto& f : unit_files) hashes[f] = hex64(fnv1a(read_file(dir / f)));
  manifest["hashes"] = hashes;

  write_text(dir / "config.json", to_json(c).dump(2) + "\n");
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
  write_meta(dir, "train", argc, argv);
  std::cout << json{{"output", dir.string()}, {"method", to_string(c.method.method)},
                    {"models", model_files.size()}, {"units", unit_files.size()}}
                   .dump()
            << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// run loading shared by front / control

struct LoadedRun {
  ExperimentConfig config;
  MoftDataset train, valid, test;
  std::shared_ptr<const ScoreModel> base;
  MethodResult result;
};

LoadedRun load_run(const fs::path& dir) {
  const ExperimentConfig c = load_config((dir / "config.json").string());
  json manifest;
  try {
    manifest = json::parse(read_file(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("manifest: ") + e.what());
  }
  const MoftDataset full = build_dataset(c);
  auto [tr, va, te] = split_dataset(c, full);
  auto base = std::make_shared<const ScoreModel>(load_model((dir / "base.ckpt").string()));
  MethodResult result;
  result.method = parse_method(manifest.at("method").get<std::string>());
  if (result.method != c.method.method) throw DomainError("manifest and config disagree on method");
  for (const auto& f : manifest.at("models"))
    result.models.push_back(load_model((dir / f.get<std::string>()).string(), base));
  for (const auto& f : manifest.at("units"))
    result.units.push_back(load_model((dir / f.get<std::string>()).string(), base));
  for (const auto& mdl : result.models)
    if (mdl.config().d != full.dim()) throw DomainError("checkpoint does not match the dataset");
  return LoadedRun{c, std::move(tr), std::move(va), std::move(te), base, std::move(result)};
}

const MoftDataset& pick_split(const LoadedRun& run, const std::string& name) {
  if (name == "test") return run.test;
  if (name == "valid") return run.valid;
  if (name == "train") return run.train;
  throw DomainError("unknown split '" + name + "'");
}

FrontControl make_control(const LoadedRun& run, std::optional<double> scale,
                          const std::string& beta_text) {
  FrontControl control;
  const Method method = run.result.method;
  if (scale) {
    if (method != Method::WeightCos) throw DomainError("--scale applies to weight-cos runs only");
    control.scale = *scale;
  }
  if (!beta_text.empty()) {
    if (method != Method::TemperatureCos)
      throw DomainError("--beta applies to temperature-cos runs only");
    control.beta = TemperatureVector(parse_list(beta_text));
  } else if (method == Method::TemperatureCos) {
    control.beta = run.config.method.train.beta_or_default(run.test.objectives());
  }
  return control;
}

// ---------------------------------------------------------------------------
// front

struct FrontArgs {
  std::string run, output, beta, split = "test";
  std::optional<std::size_t> grid, k;
  std::optional<double> scale;
  std::size_t threads = 1;
};

int cmd_front(const FrontArgs& a) {
  const fs::path dir = resolve_output(a.run);
  const LoadedRun run = load_run(dir);
  const FrontControl control = make_control(run, a.scale, a.beta);
  const std::size_t grid = a.grid.value_or(run.config.eval.grid);
  if ((run.result.method == Method::DpoLs || run.result.method == Method::MoDpo) &&
      grid != run.result.models.size())
    throw DomainError("this run was trained for a " + std::to_string(run.result.models.size()) +
                      "-point grid");
  ProfileOptions opt;
  opt.k = a.k.value_or(run.config.eval.k);
  opt.threads = a.threads;
  const auto front =
      profile_method(*run.base, run.result, pick_split(run, a.split), grid, control, opt);
  const fs::path prefix = a.output.empty() ? dir / "front" : resolve_output(a.output);
  if (prefix.has_parent_path()) fs::create_directories(prefix.parent_path());
  {
    std::ofstream csv(prefix.string() + ".csv", std::ios::binary);
    if (!csv) throw DomainError("cannot write '" + prefix.string() + ".csv'");
    write_front_csv(csv, front);
  }
  {
    std::ofstream js(prefix.string() + ".json", std::ios::binary);
    if (!js) throw DomainError("cannot write '" + prefix.string() + ".json'");
    write_front_json(js, front);
  }
  std::cout << json{{"rows", front.size()}, {"csv", prefix.string() + ".csv"},
                    {"json", prefix.string() + ".json"}}
                   .dump()
            << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// hv

struct HvArgs {
  std::string front, reference, direction = "maximize", output;
};

int cmd_hv(const HvArgs& a) {
  std::ifstream in(a.front);
  if (!in) throw DomainError("cannot open '" + a.front + "'");
  const bool is_json = fs::path(a.front).extension() == ".json";
  const auto front = is_json ? read_front_json(in) : read_front_csv(in);
  if (front.empty()) throw DomainError("front file has no rows");
  const std::size_t m = front.front().aux_metrics.size();
  ReferencePoint ref;
  ref.direction = parse_direction(a.direction);
  ref.r = a.reference.empty() ? std::vector<double>(m, 0.0) : parse_list(a.reference);
  if (ref.r.size() != m)
    throw DomainError("reference has " + std::to_string(ref.r.size()) + " entries, front has " +
                      std::to_string(m) + " objectives");
  const auto nd = pareto_filter(aux_points(front), ref.direction);
  const double hv = hypervolume(nd, ref);
  json out{{"hypervolume", hv},
           {"rows", front.size()},
           {"nondominated", nd.size()},
           {"reference", ref.r},
           {"direction", to_string(ref.direction)}};
  std::ostringstream num;
  num.precision(17);
  num << hv;
  std::cout << num.str() << '\n' << out.dump() << '\n';
  if (!a.output.empty()) write_text(resolve_output(a.output), out.dump(2) + "\n");
  return kExitOk;
}

// ---------------------------------------------------------------------------
// control

struct ControlArgs {
  std::string run, w, beta, split = "test";
  std::optional<double> scale;
  std::size_t group = 0;
};

int cmd_control(const ControlArgs& a) {
  const LoadedRun run = load_run(resolve_output(a.run));
  const Method method = run.result.method;
  if (method != Method::WeightCos && method != Method::TemperatureCos)
    throw DomainError("control needs a weight-cos or temperature-cos run");
  const FrontControl control = make_control(run, a.scale, a.beta);
  const MoftDataset& ds = pick_split(run, a.split);
  if (a.group >= ds.size())
    throw DomainError("group index out of range (split has " + std::to_string(ds.size()) + ")");
  const RankingGroup& g = ds[a.group];
  const SimplexPoint w(parse_list(a.w));
  if (w.size() != ds.objectives()) throw DomainError("--w has the wrong dimension");
  const ScoreModel& model = run.result.models.at(0);

  std::vector<double> raw, controlled;
  if (control.beta) {
    raw = forward(model, g, Condition{w, control.beta->normalized()});
    controlled = temperature_query(*run.base, model, g, w, *control.beta);
  } else {
    raw = forward(model, g, Condition{w, std::nullopt});
    controlled = control.scale ? scale_temperature(*run.base, model, *control.scale, g, w) : raw;
  }
  const auto order = rank_by_scores(controlled);
  json out{{"group", g.id()},
           {"w", w.vector()},
           {"control", control_tag(control)},
           {"base_scores", forward(*run.base, g)},
           {"model_scores", raw},
           {"controlled_scores", controlled},
           {"ranking", order}};
  std::cout << out.dump() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weight- and temperature-conditioned listwise ranking fine-tuning"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", "cosdpo 0.1.0");

  IngestArgs ia;
  auto* ingest = app.add_subcommand("ingest", "Parse a LETOR/SVMLight file into a dataset cache");
  ingest->add_option("--input", ia.input, "LETOR text file")->required();
  ingest->add_option("--output", ia.output, "Dataset cache path")->required();
  ingest->add_option("--preset", ia.preset, "Column preset: mslr-web10k or none");
  ingest->add_option("--features", ia.features, "Item feature count (0 keeps the preset)");
  ingest->add_option("--main", ia.main, "Main objective source: label or f:<index>");
  ingest->add_option("--aux", ia.aux, "Comma-separated aux sources (empty keeps the preset)");
  ingest->add_option("--modes", ia.modes, "Comma-separated label modes: dense|sparse");
  ingest->add_flag("--strict", ia.strict, "Treat recoverable input problems as errors");
  ingest->add_flag("--scale-features", ia.scale, "Min-max scale features to [0,1]");

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic conflicting-objective dataset");
  synth->add_option("--groups", sa.spec.groups, "Number of query groups");
  synth->add_option("--group-size", sa.spec.group_size, "Items per group");
  synth->add_option("--dim", sa.spec.dim, "Feature width");
  synth->add_option("--objectives", sa.spec.objectives, "Auxiliary objective count m");
  synth->add_option("--conflict", sa.spec.conflict, "Conflict level in [0,1]");
  synth->add_option("--seed", sa.seed, "Generator seed");
  synth->add_option("--modes", sa.modes, "Comma-separated label modes (empty -> dense)");
  synth->add_option("--output", sa.output, "Dataset cache path")->required();

  TrainArgs ta;
  auto* trainc = app.add_subcommand("train", "Train a method and write checkpoints and the step log");
  trainc->add_option("--config", ta.config, "Experiment config (JSON)");
  trainc->add_option("--method", ta.method,
                     "weight-cos|temperature-cos|dpo-ls|dpo-soup|mo-dpo (overrides config)");
  trainc->add_option("--seed", ta.seed, "Seed (mandatory here or in the config)");
  trainc->add_option("--steps", ta.steps, "Step budget (overrides config)");
  trainc->add_option("--pretrain-steps", ta.pretrain_steps, "Base pretraining steps");
  trainc->add_option("--lambda", ta.lambda, "Penalization coefficient");
  trainc->add_option("--lr", ta.lr, "Learning rate");
  trainc->add_option("--grid", ta.grid, "Grid size for per-point methods");
  trainc->add_option("--budget", ta.budget, "total|per-model");
  trainc->add_option("--dataset", ta.dataset, "Dataset cache (overrides config source)");
  trainc->add_option("--base", ta.base, "Base model checkpoint");
  trainc->add_flag("--pretrain-base", ta.pretrain, "Pretrain the base on the main labels");
  trainc->add_option("--output", ta.output,
                     "Run directory (relative paths resolve under COSDPO_OUTPUT_ROOT)");
  trainc->add_option("--threads", ta.threads, "Worker threads")->check(CLI::PositiveNumber);

  FrontArgs fa;
  auto* front = app.add_subcommand("front", "Profile a Pareto front from a trained run");
  front->add_option("--run", fa.run, "Run directory")->required();
  front->add_option("--grid", fa.grid, "Grid size (default from the run config)");
  front->add_option("--k", fa.k, "NDCG cutoff (default from the run config)");
  front->add_option("--scale", fa.scale, "Scale c for weight-cos runs")->check(CLI::PositiveNumber);
  front->add_option("--beta", fa.beta, "Temperature vector for temperature-cos runs");
  front->add_option("--split", fa.split, "test|valid|train");
  front->add_option("--output", fa.output, "Output prefix (default <run>/front)");
  front->add_option("--threads", fa.threads, "Worker threads")->check(CLI::PositiveNumber);

  HvArgs ha;
  auto* hv = app.add_subcommand("hv", "Hypervolume of a front file's aux-metric columns");
  hv->add_option("--front", ha.front, "Front CSV or JSON")->required();
  hv->add_option("--reference", ha.reference, "Comma-separated reference point (default zeros)");
  hv->add_option("--direction", ha.direction, "maximize|minimize");
  hv->add_option("--output", ha.output, "Also write the JSON result here");

  ControlArgs ca;
  auto* control = app.add_subcommand("control", "Query a conditioned model under post-training control");
  control->add_option("--run", ca.run, "Run directory")->required();
  control->add_option("--w", ca.w, "Comma-separated weight vector")->required();
  control->add_option("--scale", ca.scale, "Scale c (weight-cos)")->check(CLI::PositiveNumber);
  control->add_option("--beta", ca.beta, "Temperature vector (temperature-cos)");
  control->add_option("--group", ca.group, "Group index within the split");
  control->add_option("--split", ca.split, "test|valid|train");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*ingest) return cmd_ingest(ia);
    if (*synth) return cmd_synth(sa);
    if (*trainc) return cmd_train(ta, argc, argv);
    if (*front) return cmd_front(fa);
    if (*hv) return cmd_hv(ha);
    if (*control) return cmd_control(ca);
  } catch (const NumericalError& e) {
    std::cerr << "numerical error in " << e.primitive() << ": " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }
  return kExitConfig;
}
