#include "cosdpo/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>

#include "cosdpo/error.hpp"

namespace cosdpo {

std::string to_string(Activation a) { return a == Activation::Relu ? "relu" : "tanh"; }

Activation parse_activation(const std::string& text) {
  if (text == "relu") return Activation::Relu;
  if (text == "tanh") return Activation::Tanh;
  throw DomainError("unknown activation '" + text + "'");
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::Base: return "base";
    case ModelKind::Scratch: return "scratch";
    case ModelKind::Augmentation: return "augmentation";
  }
  return "?";
}

ModelKind parse_model_kind(const std::string& text) {
  if (text == "base") return ModelKind::Base;
  if (text == "scratch") return ModelKind::Scratch;
  if (text == "augmentation") return ModelKind::Augmentation;
  throw DomainError("unknown model kind '" + text + "'");
}

std::size_t ModelConfig::input_width() const {
  return d + (condition_weight ? m : 0) + (condition_temperature ? m : 0);
}

void ModelConfig::validate() const {
  if (d == 0) throw DomainError("model: input dimension must be positive");
  if (hidden_dims.empty()) throw DomainError("model: hidden_dims must be nonempty");
  for (std::size_t h : hidden_dims)
    if (h == 0) throw DomainError("model: hidden widths must be positive");
  if ((condition_weight || condition_temperature) && m == 0)
    throw DomainError("model: conditioning requires m >= 1");
}

// ---------------------------------------------------------------------------
// Layout

ParamLayout::ParamLayout(const ModelConfig& config) {
  config.validate();
  std::vector<std::size_t> widths{config.input_width()};
  widths.insert(widths.end(), config.hidden_dims.begin(), config.hidden_dims.end());
  widths.push_back(1);
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t in = widths[l], out = widths[l + 1];
    slices_.push_back({l, ParamSlice::Slot::Weight, total_, out, in});
    total_ += out * in;
    slices_.push_back({l, ParamSlice::Slot::Bias, total_, out, 1});
    total_ += out;
  }
}

ParamAddress ParamLayout::locate(std::size_t flat_index) const {
  for (const auto& s : slices_) {
    if (flat_index >= s.offset && flat_index < s.offset + s.size())
      return {s.layer, s.slot, flat_index - s.offset};
  }
  throw DomainError("parameter index out of range");
}

// ---------------------------------------------------------------------------
// ScoreModel

ScoreModel::ScoreModel(ModelConfig config, ModelKind kind, std::vector<double> params,
                       std::shared_ptr<const ScoreModel> base)
    : config_(std::move(config)), kind_(kind), layout_(config_), params_(std::move(params)),
      base_(std::move(base)) {
  if (params_.size() != layout_.total())
    throw DomainError("model: parameter vector does not match the layout");
  if (kind_ == ModelKind::Augmentation) {
    if (!base_) throw DomainError("augmentation model requires a base model");
    if (base_->kind() == ModelKind::Augmentation)
      throw DomainError("augmentation base must not itself be an augmentation model");
    if (base_->config().condition_weight || base_->config().condition_temperature)
      throw DomainError("augmentation base must be unconditioned");
    if (base_->config().d != config_.d)
      throw DomainError("augmentation base has a different feature dimension");
  } else if (base_) {
    throw DomainError("only augmentation models reference a base");
  }
  if (kind_ == ModelKind::Base && (config_.condition_weight || config_.condition_temperature))
    throw DomainError("base model must be unconditioned");
}

ScoreModel init_params(const ModelConfig& config, ModelKind kind,
                       std::shared_ptr<const ScoreModel> base) {
  const ParamLayout layout(config);
  std::vector<double> params(layout.total(), 0.0);
  std::mt19937_64 rng(config.seed);
  for (const auto& s : layout.slices()) {
    if (s.slot != ParamSlice::Slot::Weight) continue;
    const double a = std::sqrt(6.0 / static_cast<double>(s.rows + s.cols));
    std::uniform_real_distribution<double> uni(-a, a);
    for (std::size_t i = 0; i < s.size(); ++i) params[s.offset + i] = uni(rng);
  }
  return ScoreModel(config, kind, std::move(params), std::move(base));
}

// ---------------------------------------------------------------------------
// Forward / backward kernels

namespace {

void check_condition(const ModelConfig& config, const RankingGroup& group, const Condition& c) {
  if (group.dim() != config.d)
    throw DomainError("forward: group feature dimension " + std::to_string(group.dim()) +
                      " does not match model input " + std::to_string(config.d));
  if (config.condition_weight != c.weight.has_value())
    throw DomainError(config.condition_weight ? "forward: model requires a weight vector"
                                              : "forward: model is not weight-conditioned");
  if (config.condition_temperature != c.temperature.has_value())
    throw DomainError(config.condition_temperature
                          ? "forward: model requires a normalized temperature"
                          : "forward: model is not temperature-conditioned");
  if (c.weight && c.weight->size() != config.m)
    throw DomainError("forward: weight vector has wrong dimension");
  if (c.temperature && c.temperature->size() != config.m)
    throw DomainError("forward: temperature vector has wrong dimension");
}

double activate(Activation a, double z) { return a == Activation::Relu ? std::max(z, 0.0) : std::tanh(z); }

double activate_grad(Activation a, double z, double out) {
  return a == Activation::Relu ? (z > 0.0 ? 1.0 : 0.0) : 1.0 - out * out;
}

/// Per-item activations: acts[0] is the input, acts[l] the post-activation of layer l,
/// pre[l] the pre-activation (pre[0] unused).
struct ItemTrace {
  std::vector<std::vector<double>> pre;
  std::vector<std::vector<double>> acts;
};

void fill_input(std::vector<double>& x, const RankingGroup& group, std::size_t i,
                const Condition& c) {
  x.clear();
  const auto y = group.item(i);
  x.insert(x.end(), y.begin(), y.end());
  if (c.weight) x.insert(x.end(), c.weight->values().begin(), c.weight->values().end());
  if (c.temperature)
    x.insert(x.end(), c.temperature->values().begin(), c.temperature->values().end());
}

double run_item(const ParamLayout& layout, std::span<const double> params, Activation act,
                std::vector<double> input, ItemTrace* trace) {
  std::vector<double> a = std::move(input);
  if (trace) {
    trace->pre.assign(1, {});
    trace->acts.assign(1, a);
  }
  const std::size_t L = layout.layers();
  for (std::size_t l = 0; l < L; ++l) {
    const ParamSlice& W = layout.weight(l);
    const ParamSlice& b = layout.bias(l);
    std::vector<double> z(W.rows);
    for (std::size_t r = 0; r < W.rows; ++r) {
      const double* row = params.data() + W.offset + r * W.cols;
      double s = params[b.offset + r];
      for (std::size_t c = 0; c < W.cols; ++c) s += row[c] * a[c];
      z[r] = s;
    }
    std::vector<double> out(z.size());
    if (l + 1 < L) {
      for (std::size_t r = 0; r < z.size(); ++r) out[r] = activate(act, z[r]);
    } else {
      out = z;
    }
    if (trace) {
      trace->pre.push_back(std::move(z));
      trace->acts.push_back(out);
    }
    a = std::move(out);
  }
  return a[0];
}

void backprop_item(const ParamLayout& layout, std::span<const double> params, Activation act,
                   const ItemTrace& trace, double upstream, std::span<double> grad) {
  const std::size_t L = layout.layers();
  std::vector<double> delta{upstream};
  for (std::size_t l = L; l-- > 0;) {
    const ParamSlice& W = layout.weight(l);
    const ParamSlice& b = layout.bias(l);
    const std::vector<double>& input = trace.acts[l];
    for (std::size_t r = 0; r < W.rows; ++r) {
      const double dr = delta[r];
      if (dr == 0.0) continue;
      grad[b.offset + r] += dr;
      double* grow = grad.data() + W.offset + r * W.cols;
      for (std::size_t c = 0; c < W.cols; ++c) grow[c] += dr * input[c];
    }
    if (l == 0) break;
    std::vector<double> prev(W.cols, 0.0);
    for (std::size_t r = 0; r < W.rows; ++r) {
      const double dr = delta[r];
      if (dr == 0.0) continue;
      const double* row = params.data() + W.offset + r * W.cols;
      for (std::size_t c = 0; c < W.cols; ++c) prev[c] += row[c] * dr;
    }
    const auto& z = trace.pre[l];
    const auto& out = trace.acts[l];
    for (std::size_t c = 0; c < prev.size(); ++c) prev[c] *= activate_grad(act, z[c], out[c]);
    delta = std::move(prev);
  }
}

std::vector<double> network_scores(const ScoreModel& model, std::span<const double> params,
                                   const RankingGroup& group, const Condition& c) {
  std::vector<double> scores(group.size());
  std::vector<double> x;
  for (std::size_t i = 0; i < group.size(); ++i) {
    fill_input(x, group, i, c);
    scores[i] = run_item(model.layout(), params, model.config().activation, x, nullptr);
  }
  return scores;
}

}  // namespace

std::vector<double> forward(const ScoreModel& model, const RankingGroup& group,
                            const Condition& condition) {
  check_condition(model.config(), group, condition);
  std::vector<double> scores = network_scores(model, model.params(), group, condition);
  if (model.kind() == ModelKind::Augmentation) {
    const std::vector<double> s0 = forward(*model.base(), group);
    for (std::size_t i = 0; i < scores.size(); ++i) scores[i] += s0[i];
  }
  for (double s : scores)
    if (!std::isfinite(s)) throw NumericalError("forward", "non-finite score");
  return scores;
}

Var forward(Tape& tape, Var params, const ScoreModel& model, const RankingGroup& group,
            const Condition& condition, std::span<const double> base_scores) {
  check_condition(model.config(), group, condition);
  if (tape.value(params).size() != model.param_count())
    throw DomainError("forward: parameter node has wrong length");

  auto traces = std::make_shared<std::vector<ItemTrace>>(group.size());
  std::vector<double> scores(group.size());
  {
    const auto& p = tape.value(params);
    std::vector<double> x;
    for (std::size_t i = 0; i < group.size(); ++i) {
      fill_input(x, group, i, condition);
      scores[i] = run_item(model.layout(), p, model.config().activation, x, &(*traces)[i]);
    }
  }
  const ParamLayout* layout = &model.layout();
  const Activation act = model.config().activation;
  Var net = tape.record(
      "mlp", std::move(scores), tape.needs_grad(params),
      [params, traces, layout, act](Tape& t, std::span<const double> g) {
        const auto& p = t.value(params);
        std::vector<double> grad(p.size(), 0.0);
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (g[i] == 0.0) continue;
          backprop_item(*layout, p, act, (*traces)[i], g[i], grad);
        }
        t.accumulate(params, grad);
      });
  if (model.kind() != ModelKind::Augmentation) return net;
  if (!base_scores.empty() && base_scores.size() != group.size())
    throw DomainError("forward: precomputed base scores have wrong length");
  Var s0 = tape.constant(base_scores.empty()
                             ? forward(*model.base(), group)
                             : std::vector<double>(base_scores.begin(), base_scores.end()));
  return add(tape, s0, net);
}

LossGrad loss_and_grad(std::span<const double> params, const LossClosure& closure) {
  Tape tape;
  Var p = tape.variable(std::vector<double>(params.begin(), params.end()));
  Var loss = closure(tape, p);
  LossGrad out;
  out.value = tape.scalar(loss);
  tape.backward(loss);
  out.grad = tape.grad(p);
  return out;
}

LossGrad loss_and_grad(const ScoreModel& model, const LossClosure& closure) {
  return loss_and_grad(model.params(), closure);
}

ScoreModel average_params(std::span<const ScoreModel> models, const SimplexPoint& w) {
  if (models.empty()) throw DomainError("average_params: no models");
  if (models.size() != w.size())
    throw DomainError("average_params: weight dimension must equal the number of models");
  const ScoreModel& first = models.front();
  for (const auto& mdl : models) {
    if (!(mdl.config() == first.config()) || mdl.kind() != first.kind() ||
        mdl.base() != first.base())
      throw DomainError("average_params: models must share config, kind and base");
  }
  std::vector<double> params(first.param_count(), 0.0);
  for (std::size_t j = 0; j < models.size(); ++j) {
    const double wj = w[j];
    if (wj == 0.0) continue;
    const auto p = models[j].params();
    for (std::size_t i = 0; i < params.size(); ++i) params[i] += wj * p[i];
  }
  return ScoreModel(first.config(), first.kind(), std::move(params), first.base());
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char kModelMagic[8] = {'C', 'S', 'D', 'P', 'M', 'O', 'D', 'L'};
constexpr std::uint32_t kModelVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw ParseError("checkpoint truncated");
  return v;
}

struct Fnv {
  std::uint64_t h = 14695981039346656037ULL;
  void bytes(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 1099511628211ULL;
    }
  }
  template <typename T>
  void value(T v) {
    bytes(&v, sizeof(T));
  }
};

}  // namespace

std::uint64_t fingerprint(const ScoreModel& model) {
  Fnv f;
  const ModelConfig& c = model.config();
  f.value<std::uint64_t>(c.d);
  f.value<std::uint64_t>(c.m);
  for (std::size_t h : c.hidden_dims) f.value<std::uint64_t>(h);
  f.value<std::uint8_t>(c.condition_weight);
  f.value<std::uint8_t>(c.condition_temperature);
  f.value<std::uint8_t>(static_cast<std::uint8_t>(c.activation));
  f.value<std::uint8_t>(static_cast<std::uint8_t>(model.kind()));
  f.bytes(model.params().data(), model.params().size() * sizeof(double));
  return f.h;
}

void write_model(std::ostream& out, const ScoreModel& model) {
  static_assert(std::endian::native == std::endian::little);
  const ModelConfig& c = model.config();
  out.write(kModelMagic, sizeof(kModelMagic));
  put<std::uint32_t>(out, kModelVersion);
  put<std::uint8_t>(out, static_cast<std::uint8_t>(model.kind()));
  put<std::uint8_t>(out, static_cast<std::uint8_t>(c.activation));
  put<std::uint8_t>(out, c.condition_weight ? 1 : 0);
  put<std::uint8_t>(out, c.condition_temperature ? 1 : 0);
  put<std::uint64_t>(out, c.d);
  put<std::uint64_t>(out, c.m);
  put<std::uint64_t>(out, c.seed);
  put<std::uint64_t>(out, c.hidden_dims.size());
  for (std::size_t h : c.hidden_dims) put<std::uint64_t>(out, h);
  put<std::uint64_t>(out, model.base() ? fingerprint(*model.base()) : 0);
  put<std::uint64_t>(out, model.param_count());
  out.write(reinterpret_cast<const char*>(model.params().data()),
            static_cast<std::streamsize>(model.param_count() * sizeof(double)));
  if (!out) throw std::runtime_error("failed writing checkpoint");
}

ScoreModel read_model(std::istream& in, std::shared_ptr<const ScoreModel> base) {
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kModelMagic, sizeof(magic)) != 0)
    throw ParseError("not a model checkpoint (bad magic)");
  const auto version = get<std::uint32_t>(in);
  if (version != kModelVersion)
    throw ParseError("unsupported checkpoint version " + std::to_string(version));
  const auto kind_tag = get<std::uint8_t>(in);
  const auto act_tag = get<std::uint8_t>(in);
  if (kind_tag > 2 || act_tag > 1) throw ParseError("corrupt checkpoint header");
  ModelConfig c;
  c.activation = static_cast<Activation>(act_tag);
  c.condition_weight = get<std::uint8_t>(in) != 0;
  c.condition_temperature = get<std::uint8_t>(in) != 0;
  c.d = get<std::uint64_t>(in);
  c.m = get<std::uint64_t>(in);
  c.seed = get<std::uint64_t>(in);
  const auto layers = get<std::uint64_t>(in);
  if (layers > 1024) throw ParseError("corrupt checkpoint header");
  c.hidden_dims.clear();
  for (std::uint64_t l = 0; l < layers; ++l) c.hidden_dims.push_back(get<std::uint64_t>(in));
  const auto base_fp = get<std::uint64_t>(in);
  const auto count = get<std::uint64_t>(in);
  const auto kind = static_cast<ModelKind>(kind_tag);
  if (kind == ModelKind::Augmentation) {
    if (!base) throw DomainError("checkpoint is an augmentation model; a base model is required");
    if (fingerprint(*base) != base_fp)
      throw DomainError("checkpoint was trained against a different base model");
  } else {
    base = nullptr;
  }
  if (count != ParamLayout(c).total()) throw ParseError("checkpoint parameter count mismatch");
  std::vector<double> params(count);
  if (!in.read(reinterpret_cast<char*>(params.data()),
               static_cast<std::streamsize>(count * sizeof(double))))
    throw ParseError("checkpoint truncated");
  return ScoreModel(std::move(c), kind, std::move(params), std::move(base));
}

void save_model(const std::string& path, const ScoreModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  write_model(out, model);
}

ScoreModel load_model(const std::string& path, std::shared_ptr<const ScoreModel> base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return read_model(in, std::move(base));
}

}  // namespace cosdpo
