#include "cosdpo/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <istream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

#include "cosdpo/control.hpp"
#include "cosdpo/error.hpp"
#include "json.hpp"

namespace cosdpo {

std::vector<std::size_t> rank_by_scores(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

namespace {

double dcg(std::span<const std::size_t> order, std::span<const double> labels, std::size_t k) {
  double out = 0.0;
  for (std::size_t i = 0; i < k; ++i)
    out += labels[order[i]] / std::log2(static_cast<double>(i) + 2.0);
  return out;
}

}  // namespace

NdcgResult ndcg_at_k_flagged(std::span<const double> scores, std::span<const double> labels,
                             std::size_t k) {
  if (scores.size() != labels.size()) throw DomainError("ndcg: length mismatch");
  if (k < 1) throw DomainError("ndcg: k must be >= 1");
  for (double z : labels) {
    if (!std::isfinite(z)) throw DomainError("ndcg: non-finite label");
    if (z < 0.0) throw DomainError("ndcg: negative label");
  }
  for (double s : scores)
    if (!std::isfinite(s)) throw DomainError("ndcg: non-finite score");
  k = std::min(k, scores.size());
  const double ideal = dcg(rank_by_scores(labels), labels, k);
  if (ideal == 0.0) return {1.0, true};
  const double v = dcg(rank_by_scores(scores), labels, k) / ideal;
  return {std::clamp(v, 0.0, 1.0), false};
}

double ndcg_at_k(std::span<const double> scores, std::span<const double> labels, std::size_t k) {
  return ndcg_at_k_flagged(scores, labels, k).value;
}

std::string to_string(Direction d) { return d == Direction::Maximize ? "maximize" : "minimize"; }

Direction parse_direction(const std::string& text) {
  if (text == "maximize" || text == "max") return Direction::Maximize;
  if (text == "minimize" || text == "min") return Direction::Minimize;
  throw DomainError("unknown direction '" + text + "'");
}

// ---------------------------------------------------------------------------
// Pareto filter

namespace {

bool dominates(const std::vector<double>& a, const std::vector<double>& b, Direction dir) {
  bool strict = false;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const double x = dir == Direction::Maximize ? a[j] : -a[j];
    const double y = dir == Direction::Maximize ? b[j] : -b[j];
    if (x < y) return false;
    if (x > y) strict = true;
  }
  return strict;
}

}  // namespace

std::vector<std::vector<double>> pareto_filter(const std::vector<std::vector<double>>& points,
                                               Direction direction) {
  if (points.empty()) return {};
  const std::size_t m = points.front().size();
  for (const auto& p : points)
    if (p.size() != m) throw DomainError("pareto_filter: inconsistent dimensions");
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < points.size(); ++i) {
    bool keep = true;
    for (std::size_t j = 0; j < points.size() && keep; ++j)
      if (j != i && dominates(points[j], points[i], direction)) keep = false;
    if (!keep) continue;
    if (std::find(out.begin(), out.end(), points[i]) != out.end()) continue;
    out.push_back(points[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Hypervolume. Points are shifted so that the reference sits at the origin and the
// dominating side is positive; boxes are then [0, q].

namespace {

double hv2(std::vector<std::vector<double>> pts) {
  std::sort(pts.begin(), pts.end(),
            [](const auto& a, const auto& b) { return a[0] > b[0]; });
  double area = 0.0, ymax = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    ymax = std::max(ymax, pts[i][1]);
    const double next = i + 1 < pts.size() ? pts[i + 1][0] : 0.0;
    area += (pts[i][0] - next) * ymax;
  }
  return area;
}

double hv_rec(const std::vector<std::vector<double>>& pts, std::size_t dim) {
  if (pts.empty()) return 0.0;
  if (dim == 1) {
    double mx = 0.0;
    for (const auto& p : pts) mx = std::max(mx, p[0]);
    return mx;
  }
  if (dim == 2) return hv2(pts);

  // slice along the last coordinate, from the top down
  std::vector<std::size_t> order(pts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return pts[a][dim - 1] > pts[b][dim - 1]; });
  double vol = 0.0;
  std::vector<std::vector<double>> active;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const auto& p = pts[order[i]];
    active.emplace_back(p.begin(), p.begin() + static_cast<std::ptrdiff_t>(dim - 1));
    const double level = p[dim - 1];
    const double next = i + 1 < order.size() ? pts[order[i + 1]][dim - 1] : 0.0;
    if (level > next) {
      auto front = pareto_filter(active, Direction::Maximize);
      vol += hv_rec(front, dim - 1) * (level - next);
      active = std::move(front);
    }
  }
  return vol;
}

}  // namespace

double hypervolume(const std::vector<std::vector<double>>& points, const ReferencePoint& ref) {
  const std::size_t m = ref.r.size();
  if (m < 1) throw DomainError("hypervolume: empty reference point");
  if (m > kMaxHypervolumeDim)
    throw DomainError("hypervolume: unsupported dimension " + std::to_string(m) + " (max " +
                      std::to_string(kMaxHypervolumeDim) + ")");
  for (double r : ref.r)
    if (!std::isfinite(r)) throw DomainError("hypervolume: non-finite reference point");
  std::vector<std::vector<double>> shifted;
  for (const auto& p : points) {
    if (p.size() != m) throw DomainError("hypervolume: point/reference dimension mismatch");
    std::vector<double> q(m);
    bool inside = true;
    for (std::size_t j = 0; j < m; ++j) {
      if (!std::isfinite(p[j])) throw DomainError("hypervolume: non-finite point");
      q[j] = ref.direction == Direction::Maximize ? p[j] - ref.r[j] : ref.r[j] - p[j];
      if (q[j] <= 0.0) inside = false;
    }
    if (inside) shifted.push_back(std::move(q));
  }
  return hv_rec(pareto_filter(shifted, Direction::Maximize), m);
}

// ---------------------------------------------------------------------------
// Grid

namespace {

void compositions(std::size_t m, std::size_t remaining, std::vector<std::size_t>& cur,
                  std::vector<std::vector<std::size_t>>& out) {
  if (cur.size() + 1 == m) {
    cur.push_back(remaining);
    out.push_back(cur);
    cur.pop_back();
    return;
  }
  for (std::size_t a = 0; a <= remaining; ++a) {
    cur.push_back(a);
    compositions(m, remaining - a, cur, out);
    cur.pop_back();
  }
}

}  // namespace

std::vector<SimplexPoint> weight_grid(std::size_t m, std::size_t count) {
  if (m < 1) throw DomainError("weight_grid: m must be >= 1");
  if (m == 1) return {SimplexPoint({1.0})};
  if (count < 2) throw DomainError("weight_grid: count must be >= 2");
  const std::size_t h = count - 1;
  std::vector<SimplexPoint> out;
  if (m == 2) {
    for (std::size_t i = 0; i <= h; ++i) {
      const double t = static_cast<double>(i) / static_cast<double>(h);
      out.emplace_back(std::vector<double>{t, 1.0 - t});
    }
    return out;
  }
  std::vector<std::vector<std::size_t>> lattice;
  std::vector<std::size_t> cur;
  compositions(m, h, cur, lattice);
  for (const auto& c : lattice) {
    std::vector<double> w(m);
    for (std::size_t j = 0; j < m; ++j) w[j] = static_cast<double>(c[j]) / static_cast<double>(h);
    out.emplace_back(std::move(w));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Profiling

std::vector<FrontPoint> profile_front(const MoftDataset& dataset,
                                      std::span<const SimplexPoint> grid,
                                      const FrontScorer& scorer,
                                      std::vector<double> scale_or_beta,
                                      const ProfileOptions& options) {
  if (grid.empty()) throw DomainError("profile_front: empty grid");
  const std::size_t m = dataset.objectives();
  for (const auto& w : grid)
    if (w.size() != m) throw DomainError("profile_front: grid dimension does not match dataset");
  if (options.k < 1) throw DomainError("profile_front: k must be >= 1");

  std::vector<FrontPoint> out(grid.size());
  auto one = [&](std::size_t g) {
    FrontPoint fp;
    fp.w = grid[g].vector();
    fp.scale_or_beta = scale_or_beta;
    fp.aux_metrics.assign(m, 0.0);
    double main = 0.0;
    for (const auto& group : dataset.groups()) {
      const std::vector<double> s = scorer(g, group);
      for (std::size_t j = 0; j < m; ++j) fp.aux_metrics[j] += ndcg_at_k(s, group.labels(j), options.k);
      main += ndcg_at_k(s, group.main_labels(), options.k);
    }
    const double n = static_cast<double>(dataset.size());
    for (double& a : fp.aux_metrics) a /= n;
    fp.main_metric = main / n;
    out[g] = std::move(fp);
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(options.threads, grid.size()));
  if (threads == 1) {
    for (std::size_t g = 0; g < grid.size(); ++g) one(g);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t g = next++; g < grid.size(); g = next++) {
        try {
          one(g);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
  return out;
}

FrontScorer conditioned_scorer(const ScoreModel& base, const ScoreModel& model,
                               std::span<const SimplexPoint> grid, const FrontControl& control) {
  const auto& cfg = model.config();
  if (!cfg.condition_weight) throw DomainError("conditioned_scorer: model is not weight-conditioned");
  if (control.scale && control.beta)
    throw DomainError("conditioned_scorer: scale and temperature are exclusive");
  if (cfg.condition_temperature && !control.beta)
    throw DomainError("temperature-conditioned model needs a temperature vector");
  if (!cfg.condition_temperature && control.beta)
    throw DomainError("temperature vector given for a weight-only model");
  if (control.beta && control.beta->size() != cfg.m)
    throw DomainError("temperature vector has wrong dimension");
  std::vector<SimplexPoint> pts(grid.begin(), grid.end());
  for (const auto& w : pts)
    if (w.size() != cfg.m) throw DomainError("grid dimension does not match the model");
  return [&base, &model, pts = std::move(pts), control](std::size_t g,
                                                        const RankingGroup& group) {
    const SimplexPoint& w = pts.at(g);
    if (control.beta) return temperature_query(base, model, group, w, *control.beta);
    if (control.scale && *control.scale != 1.0)
      return scale_temperature(base, model, *control.scale, group, w);
    return forward(model, group, Condition{w, std::nullopt});
  };
}

FrontScorer per_point_scorer(std::span<const ScoreModel> models) {
  for (const auto& mdl : models)
    if (mdl.config().condition_weight || mdl.config().condition_temperature)
      throw DomainError("per_point_scorer: models must be unconditioned");
  return [models](std::size_t g, const RankingGroup& group) {
    if (g >= models.size()) throw DomainError("per_point_scorer: grid larger than model list");
    return forward(models[g], group);
  };
}

std::vector<double> control_tag(const FrontControl& control) {
  if (control.beta) return control.beta->vector();
  return {control.scale.value_or(1.0)};
}

std::vector<std::vector<double>> aux_points(std::span<const FrontPoint> front) {
  std::vector<std::vector<double>> out;
  out.reserve(front.size());
  for (const auto& fp : front) out.push_back(fp.aux_metrics);
  return out;
}

// ---------------------------------------------------------------------------
// Front files

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double parse_real(const std::string& s, std::size_t line) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw ParseError("bad number '" + s + "'", line);
    return v;
  } catch (const ParseError&) {
    throw;
  } catch (const std::exception&) {
    throw ParseError("bad number '" + s + "'", line);
  }
}

std::vector<std::string> split_on(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

void check_front(std::span<const FrontPoint> front) {
  if (front.empty()) return;
  const std::size_t m = front.front().w.size();
  for (const auto& fp : front)
    if (fp.w.size() != m || fp.aux_metrics.size() != m || fp.scale_or_beta.empty())
      throw DomainError("front: inconsistent point dimensions");
}

}  // namespace

void write_front_csv(std::ostream& out, std::span<const FrontPoint> front) {
  check_front(front);
  const std::size_t m = front.empty() ? 0 : front.front().w.size();
  for (std::size_t j = 0; j < m; ++j) out << "w_" << j + 1 << ',';
  out << "scale";
  for (std::size_t j = 0; j < m; ++j) out << ",aux_" << j + 1;
  out << ",main\n";
  for (const auto& fp : front) {
    for (double v : fp.w) out << fmt(v) << ',';
    for (std::size_t i = 0; i < fp.scale_or_beta.size(); ++i)
      out << (i ? ";" : "") << fmt(fp.scale_or_beta[i]);
    for (double v : fp.aux_metrics) out << ',' << fmt(v);
    out << ',' << fmt(fp.main_metric) << '\n';
  }
}

std::vector<FrontPoint> read_front_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ParseError("front csv: missing header", 1);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = split_on(line, ',');
  if (header.size() < 3 || header.back() != "main")
    throw ParseError("front csv: malformed header", 1);
  if ((header.size() - 2) % 2 != 0) throw ParseError("front csv: malformed header", 1);
  const std::size_t m = (header.size() - 2) / 2;
  for (std::size_t j = 0; j < m; ++j) {
    if (header[j] != "w_" + std::to_string(j + 1) ||
        header[m + 1 + j] != "aux_" + std::to_string(j + 1))
      throw ParseError("front csv: malformed header", 1);
  }
  if (header[m] != "scale") throw ParseError("front csv: malformed header", 1);

  std::vector<FrontPoint> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cells = split_on(line, ',');
    if (cells.size() != header.size())
      throw ParseError("front csv: expected " + std::to_string(header.size()) + " columns",
                       lineno);
    FrontPoint fp;
    for (std::size_t j = 0; j < m; ++j) fp.w.push_back(parse_real(cells[j], lineno));
    for (const auto& part : split_on(cells[m], ';'))
      fp.scale_or_beta.push_back(parse_real(part, lineno));
    for (std::size_t j = 0; j < m; ++j) fp.aux_metrics.push_back(parse_real(cells[m + 1 + j], lineno));
    fp.main_metric = parse_real(cells.back(), lineno);
    out.push_back(std::move(fp));
  }
  return out;
}

void write_front_json(std::ostream& out, std::span<const FrontPoint> front) {
  check_front(front);
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& fp : front) {
    arr.push_back({{"w", fp.w},
                   {"scale_or_beta", fp.scale_or_beta},
                   {"aux_metrics", fp.aux_metrics},
                   {"main_metric", fp.main_metric}});
  }
  out << nlohmann::json{{"points", arr}}.dump(2) << '\n';
}

std::vector<FrontPoint> read_front_json(std::istream& in) {
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("front json: ") + e.what(), 0);
  }
  std::vector<FrontPoint> out;
  try {
    for (const auto& p : doc.at("points")) {
      FrontPoint fp;
      fp.w = p.at("w").get<std::vector<double>>();
      fp.scale_or_beta = p.at("scale_or_beta").get<std::vector<double>>();
      fp.aux_metrics = p.at("aux_metrics").get<std::vector<double>>();
      fp.main_metric = p.at("main_metric").get<double>();
      out.push_back(std::move(fp));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("front json: ") + e.what(), 0);
  }
  check_front(out);
  return out;
}

}  // namespace cosdpo
