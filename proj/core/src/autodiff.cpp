#include "cosdpo/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cosdpo/error.hpp"

namespace cosdpo {

Var Tape::constant(std::vector<double> value) {
  return record("constant", std::move(value), false, nullptr);
}

Var Tape::variable(std::vector<double> value) {
  Var v = record("variable", std::move(value), false, nullptr);
  nodes_[v.id].needs_grad = true;
  nodes_[v.id].grad.assign(nodes_[v.id].value.size(), 0.0);
  return v;
}

Var Tape::record(std::string op, std::vector<double> value, bool needs_grad, Backward backward) {
  for (double x : value) {
    if (!std::isfinite(x)) throw NumericalError(op, "non-finite value");
  }
  Node node;
  node.op = std::move(op);
  node.value = std::move(value);
  node.needs_grad = needs_grad;
  if (needs_grad) {
    node.grad.assign(node.value.size(), 0.0);
    node.backward = std::move(backward);
  }
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

double Tape::scalar(Var v) const {
  const auto& val = nodes_[v.id].value;
  if (val.size() != 1) throw DomainError("node " + nodes_[v.id].op + " is not a scalar");
  return val[0];
}

void Tape::accumulate(Var v, std::span<const double> g) {
  Node& node = nodes_[v.id];
  if (!node.needs_grad) return;
  for (std::size_t i = 0; i < g.size(); ++i) node.grad[i] += g[i];
}

void Tape::backward(Var output) {
  Node& out = nodes_[output.id];
  if (out.value.size() != 1) throw DomainError("backward requires a scalar output");
  if (!out.needs_grad) return;
  out.grad[0] = 1.0;
  for (std::size_t id = output.id + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.needs_grad || !node.backward) continue;
    for (double x : node.grad) {
      if (!std::isfinite(x)) throw NumericalError(node.op, "non-finite gradient");
    }
    // Inputs always have smaller ids, so node.grad is not touched by its own closure.
    node.backward(*this, node.grad);
  }
}

namespace {

void check_same_size(const Tape& tape, Var x, Var y, const char* op) {
  if (tape.value(x).size() != tape.value(y).size())
    throw DomainError(std::string(op) + ": operand length mismatch");
}

}  // namespace

Var axpby(Tape& tape, double a, Var x, double b, Var y) {
  check_same_size(tape, x, y, "axpby");
  const auto& xv = tape.value(x);
  const auto& yv = tape.value(y);
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * xv[i] + b * yv[i];
  const bool ng = tape.needs_grad(x) || tape.needs_grad(y);
  return tape.record("axpby", std::move(out), ng,
                     [x, y, a, b](Tape& t, std::span<const double> g) {
                       std::vector<double> gx(g.size()), gy(g.size());
                       for (std::size_t i = 0; i < g.size(); ++i) {
                         gx[i] = a * g[i];
                         gy[i] = b * g[i];
                       }
                       t.accumulate(x, gx);
                       t.accumulate(y, gy);
                     });
}

Var add(Tape& tape, Var x, Var y) { return axpby(tape, 1.0, x, 1.0, y); }
Var sub(Tape& tape, Var x, Var y) { return axpby(tape, 1.0, x, -1.0, y); }

Var scale(Tape& tape, Var x, double c) {
  std::vector<double> out = tape.value(x);
  for (double& v : out) v *= c;
  return tape.record("scale", std::move(out), tape.needs_grad(x),
                     [x, c](Tape& t, std::span<const double> g) {
                       std::vector<double> gx(g.begin(), g.end());
                       for (double& v : gx) v *= c;
                       t.accumulate(x, gx);
                     });
}

Var log_softmax(Tape& tape, Var x) {
  const auto& xv = tape.value(x);
  if (xv.empty()) throw DomainError("log_softmax: empty input");
  const double mx = *std::max_element(xv.begin(), xv.end());
  double sum = 0.0;
  for (double v : xv) sum += std::exp(v - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] - lse;
  std::vector<double> probs(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) probs[i] = std::exp(out[i]);
  return tape.record("log_softmax", std::move(out), tape.needs_grad(x),
                     [x, probs = std::move(probs)](Tape& t, std::span<const double> g) {
                       const double total = std::accumulate(g.begin(), g.end(), 0.0);
                       std::vector<double> gx(g.size());
                       for (std::size_t i = 0; i < g.size(); ++i) gx[i] = g[i] - probs[i] * total;
                       t.accumulate(x, gx);
                     });
}

Var dot(Tape& tape, Var x, std::span<const double> w) {
  const auto& xv = tape.value(x);
  if (xv.size() != w.size()) throw DomainError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * xv[i];
  std::vector<double> wc(w.begin(), w.end());
  return tape.record("dot", {s}, tape.needs_grad(x),
                     [x, wc = std::move(wc)](Tape& t, std::span<const double> g) {
                       std::vector<double> gx(wc.size());
                       for (std::size_t i = 0; i < wc.size(); ++i) gx[i] = wc[i] * g[0];
                       t.accumulate(x, gx);
                     });
}

Var stack(Tape& tape, std::span<const Var> scalars) {
  std::vector<double> out;
  out.reserve(scalars.size());
  bool ng = false;
  for (Var s : scalars) {
    out.push_back(tape.scalar(s));
    ng = ng || tape.needs_grad(s);
  }
  std::vector<Var> inputs(scalars.begin(), scalars.end());
  return tape.record("stack", std::move(out), ng,
                     [inputs = std::move(inputs)](Tape& t, std::span<const double> g) {
                       for (std::size_t i = 0; i < inputs.size(); ++i) {
                         const double gi = g[i];
                         t.accumulate(inputs[i], std::span<const double>(&gi, 1));
                       }
                     });
}

Var weighted_sum(Tape& tape, std::span<const Var> scalars, std::span<const double> coeffs) {
  if (scalars.size() != coeffs.size()) throw DomainError("weighted_sum: length mismatch");
  double s = 0.0;
  bool ng = false;
  for (std::size_t i = 0; i < scalars.size(); ++i) {
    s += coeffs[i] * tape.scalar(scalars[i]);
    ng = ng || tape.needs_grad(scalars[i]);
  }
  std::vector<Var> inputs(scalars.begin(), scalars.end());
  std::vector<double> cs(coeffs.begin(), coeffs.end());
  return tape.record("weighted_sum", {s}, ng,
                     [inputs = std::move(inputs), cs = std::move(cs)](Tape& t,
                                                                      std::span<const double> g) {
                       for (std::size_t i = 0; i < inputs.size(); ++i) {
                         const double gi = cs[i] * g[0];
                         t.accumulate(inputs[i], std::span<const double>(&gi, 1));
                       }
                     });
}

Var cosine_similarity(Tape& tape, Var x, std::span<const double> w) {
  const auto& xv = tape.value(x);
  if (xv.size() != w.size()) throw DomainError("cosine_similarity: length mismatch");
  double wx = 0.0, ww = 0.0, xx = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    wx += w[i] * xv[i];
    ww += w[i] * w[i];
    xx += xv[i] * xv[i];
  }
  if (ww <= 0.0) throw DomainError("cosine_similarity: zero-norm weight vector");
  if (xx <= 0.0) return tape.record("cosine_similarity", {0.0}, false, nullptr);
  const double nw = std::sqrt(ww), nx = std::sqrt(xx);
  const double cosv = wx / (nw * nx);
  std::vector<double> wc(w.begin(), w.end());
  std::vector<double> xc(xv.begin(), xv.end());
  return tape.record(
      "cosine_similarity", {cosv}, tape.needs_grad(x),
      [x, wc = std::move(wc), xc = std::move(xc), nw, nx, cosv](Tape& t,
                                                               std::span<const double> g) {
        // d cos / dx = w/(|w||x|) - cos * x/|x|^2
        std::vector<double> gx(xc.size());
        for (std::size_t i = 0; i < xc.size(); ++i)
          gx[i] = g[0] * (wc[i] / (nw * nx) - cosv * xc[i] / (nx * nx));
        t.accumulate(x, gx);
      });
}

}  // namespace cosdpo
