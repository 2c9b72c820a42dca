#include "hayama/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "hayama/error.hpp"
#include "hayama/util.hpp"

namespace hayama::lasso {
namespace {

constexpr double kLossCap = 27.631021115928547;       // -log(1e-12)
constexpr double kLossFloor = 1.0000000000005e-12;    // -log(1 - 1e-12)

// -log(clamp(p_y)) where p_y is the predicted probability of the true label.
double sample_loss(double margin, std::uint8_t y) {
  double s = y ? -margin : margin;
  double sp = s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s));
  return std::clamp(sp, kLossFloor, kLossCap);
}

void check_labels(std::span<const std::uint8_t> labels, std::size_t rows) {
  if (labels.size() != rows) throw Error(ErrorCode::Shape, "labels/rows length mismatch");
  std::size_t pos = std::count(labels.begin(), labels.end(), 1);
  if (pos == 0 || pos == labels.size())
    throw Error(ErrorCode::SingleClass, "labels contain a single class; selection is undefined");
}

struct Workspace {
  const learn::DesignMatrix& x;
  std::span<const std::uint8_t> y;
  std::span<const ColumnRole> roles;
  double lambda;
  double ridge;
  std::vector<double> margin, resid;

  Workspace(const learn::DesignMatrix& x_, std::span<const std::uint8_t> y_, std::span<const ColumnRole> roles_,
            double lambda_, double ridge_)
      : x(x_), y(y_), roles(roles_), lambda(lambda_), ridge(ridge_), margin(x_.n_rows), resid(x_.n_rows) {}

  double smooth(std::span<const double> w, double b) {
    x.multiply(w, b, margin);
    double s = 0;
    for (std::size_t i = 0; i < x.n_rows; ++i) s += sample_loss(margin[i], y[i]);
    s /= static_cast<double>(x.n_rows);
    if (ridge > 0)
      for (std::size_t j = 0; j < w.size(); ++j)
        if (roles[j] != ColumnRole::Frozen) s += 0.5 * ridge * w[j] * w[j];
    return s;
  }

  // Smooth value plus gradient; gradient entries of frozen columns are zeroed.
  double smooth_grad(std::span<const double> w, double b, std::vector<double>& g, double& gb) {
    double s = smooth(w, b);
    const double inv_n = 1.0 / static_cast<double>(x.n_rows);
    gb = 0;
    for (std::size_t i = 0; i < x.n_rows; ++i) {
      resid[i] = (sigmoid(margin[i]) - y[i]) * inv_n;
      gb += resid[i];
    }
    g.resize(w.size());
    x.multiply_transpose(resid, g);
    for (std::size_t j = 0; j < w.size(); ++j) {
      if (roles[j] == ColumnRole::Frozen) g[j] = 0;
      else g[j] += ridge * w[j];
    }
    return s;
  }

  double penalty(std::span<const double> w) const {
    double p = 0;
    for (std::size_t j = 0; j < w.size(); ++j)
      if (roles[j] == ColumnRole::Penalized) p += std::abs(w[j]);
    return lambda * p;
  }
};

double violation(std::span<const double> w, std::span<const double> g, double gb, double lambda,
                 std::span<const ColumnRole> roles) {
  double v = std::abs(gb);
  for (std::size_t j = 0; j < w.size(); ++j) {
    switch (roles[j]) {
      case ColumnRole::Frozen:
        break;
      case ColumnRole::Free:
        v = std::max(v, std::abs(g[j]));
        break;
      case ColumnRole::Penalized:
        if (w[j] == 0) v = std::max(v, std::abs(g[j]) - lambda);
        else v = std::max(v, std::abs(g[j] + lambda * (w[j] > 0 ? 1.0 : -1.0)));
        break;
    }
  }
  return v;
}

std::vector<ColumnRole> roles_from_mask(std::span<const std::uint8_t> penalized) {
  std::vector<ColumnRole> roles(penalized.size());
  for (std::size_t j = 0; j < roles.size(); ++j) roles[j] = penalized[j] ? ColumnRole::Penalized : ColumnRole::Free;
  return roles;
}

SelectionModel to_model(const PreparedDesign& d, const SolverResult& r, double lambda) {
  SelectionModel m;
  m.mode = d.mode;
  m.lambda = lambda;
  m.intercept = r.intercept;
  for (std::size_t j = 0; j < r.weights.size(); ++j)
    if (r.weights[j] != 0) m.weights.emplace_back(static_cast<std::uint32_t>(j), r.weights[j]);
  m.penalized_mask = d.penalized_mask();
  m.column_scaling = d.scaling;
  m.objective_trace = r.trace;
  m.n_binary = d.x.n_binary;
  m.column_names = d.x.names;
  m.iterations = r.iterations;
  m.converged = r.converged;
  return m;
}

}  // namespace

std::string_view to_string(SelectionMode mode) {
  switch (mode) {
    case SelectionMode::Independent: return "independent";
    case SelectionMode::Conditional: return "conditional";
    case SelectionMode::Stacked: return "stacked";
  }
  return "?";
}

SelectionMode mode_from_string(std::string_view name) {
  if (name == "independent") return SelectionMode::Independent;
  if (name == "conditional") return SelectionMode::Conditional;
  if (name == "stacked") return SelectionMode::Stacked;
  throw Error(ErrorCode::Validation, "unknown selection mode '" + std::string(name) + "'");
}

Objective logistic_objective(std::span<const double> weights, double intercept, const learn::DesignMatrix& x,
                             std::span<const std::uint8_t> labels, double lambda,
                             std::span<const std::uint8_t> penalized, double ridge) {
  if (weights.size() != x.width() || penalized.size() != x.width() || labels.size() != x.n_rows)
    throw Error(ErrorCode::Shape, "logistic_objective: size mismatch");
  auto roles = roles_from_mask(penalized);
  Workspace ws(x, labels, roles, lambda, ridge);
  Objective o;
  o.smooth = ws.smooth_grad(weights, intercept, o.gradient, o.intercept_gradient);
  o.value = o.smooth + ws.penalty(weights);
  return o;
}

double kkt_violation(std::span<const double> weights, double intercept, const learn::DesignMatrix& x,
                     std::span<const std::uint8_t> labels, double lambda, std::span<const ColumnRole> roles,
                     double ridge) {
  Workspace ws(x, labels, roles, lambda, ridge);
  std::vector<double> g;
  double gb;
  ws.smooth_grad(weights, intercept, g, gb);
  return violation(weights, g, gb, lambda, roles);
}

SolverResult solve_logistic(const learn::DesignMatrix& x, std::span<const std::uint8_t> labels, double lambda,
                            std::span<const ColumnRole> roles, const SolverOptions& opt,
                            std::span<const double> init_weights, double init_intercept) {
  const std::size_t p = x.width();
  if (roles.size() != p || labels.size() != x.n_rows) throw Error(ErrorCode::Shape, "solve_logistic: size mismatch");
  Workspace ws(x, labels, roles, lambda, opt.ridge);

  SolverResult res;
  std::vector<double> w(p, 0.0);
  if (!init_weights.empty()) {
    if (init_weights.size() != p) throw Error(ErrorCode::Shape, "solve_logistic: warm start width mismatch");
    w.assign(init_weights.begin(), init_weights.end());
  }
  for (std::size_t j = 0; j < p; ++j)
    if (roles[j] == ColumnRole::Frozen) w[j] = 0;
  double b = init_intercept;

  auto prox = [&](const std::vector<double>& v, double step, std::vector<double>& out) {
    const double thr = step * lambda;
    for (std::size_t j = 0; j < p; ++j) {
      switch (roles[j]) {
        case ColumnRole::Frozen: out[j] = 0; break;
        case ColumnRole::Free: out[j] = v[j]; break;
        case ColumnRole::Penalized:
          out[j] = v[j] > thr ? v[j] - thr : (v[j] < -thr ? v[j] + thr : 0.0);
          break;
      }
    }
  };

  // Lipschitz estimate for the smooth gradient: 0.25 * mean squared row norm
  // (+1 for the intercept). Backtracking corrects it in either direction.
  double row_sq = 0;
  for (std::size_t i = 0; i < x.n_rows; ++i) {
    double s = 1.0 + static_cast<double>(x.binary_row(i).size());
    const double* d = x.dense_row(i);
    for (std::size_t k = 0; k < x.n_dense; ++k) s += d[k] * d[k];
    row_sq += s;
  }
  double L = 0.25 * row_sq / std::max<std::size_t>(x.n_rows, 1) + opt.ridge;

  double Fx = ws.smooth(w, b) + ws.penalty(w);
  res.trace.push_back(Fx);
  std::vector<double> yw = w, z(p), v(p), g(p), d(p);
  double yb = b, t = 1.0;
  bool at_x = true;  // momentum point coincides with the iterate

  for (int it = 0; it < opt.max_iter; ++it) {
    res.iterations = it + 1;
    double gb;
    double fy = ws.smooth_grad(yw, yb, g, gb);
    L = std::max(L * 0.9, 1e-12);
    double zb, fz;
    for (;;) {
      for (std::size_t j = 0; j < p; ++j) v[j] = yw[j] - g[j] / L;
      prox(v, 1.0 / L, z);
      zb = yb - gb / L;
      fz = ws.smooth(z, zb);
      double lin = gb * (zb - yb), sq = (zb - yb) * (zb - yb);
      for (std::size_t j = 0; j < p; ++j) {
        d[j] = z[j] - yw[j];
        lin += g[j] * d[j];
        sq += d[j] * d[j];
      }
      if (fz <= fy + lin + 0.5 * L * sq + 1e-14 * std::abs(fy)) break;
      L *= 2.0;
    }
    double Fz = fz + ws.penalty(z);
    if (Fz > Fx) {
      if (at_x) {  // a plain proximal step cannot improve: numerically stationary
        res.converged = true;
        break;
      }
      yw = w;
      yb = b;
      t = 1.0;
      at_x = true;
      continue;
    }
    double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    double beta = (t - 1.0) / t_next;
    for (std::size_t j = 0; j < p; ++j) yw[j] = z[j] + beta * (z[j] - w[j]);
    yb = zb + beta * (zb - b);
    at_x = beta == 0.0;
    double rel = (Fx - Fz) / std::max(1.0, std::abs(Fz));
    w.swap(z);
    b = zb;
    Fx = Fz;
    t = t_next;
    res.trace.push_back(Fx);
    if (rel < opt.rel_tol) {
      std::vector<double> gx;
      double gbx;
      ws.smooth_grad(w, b, gx, gbx);
      if (violation(w, gx, gbx, lambda, roles) <= opt.kkt_tol) {
        res.converged = true;
        break;
      }
    }
  }
  {
    std::vector<double> gx;
    double gbx;
    ws.smooth_grad(w, b, gx, gbx);
    res.kkt = violation(w, gx, gbx, lambda, roles);
  }
  res.weights = std::move(w);
  res.intercept = b;
  return res;
}

std::vector<std::uint8_t> PreparedDesign::penalized_mask() const {
  std::vector<std::uint8_t> m(roles.size());
  for (std::size_t j = 0; j < roles.size(); ++j) m[j] = roles[j] == ColumnRole::Penalized;
  return m;
}

PreparedDesign prepare_independent(learn::DesignMatrix binary) {
  if (binary.n_dense != 0) throw Error(ErrorCode::Shape, "prepare_independent: expected a binary-only design");
  PreparedDesign d;
  d.mode = SelectionMode::Independent;
  d.roles.assign(binary.n_binary, ColumnRole::Penalized);
  d.x = std::move(binary);
  return d;
}

PreparedDesign prepare_conditional(learn::DesignMatrix binary, std::span<const double> f0_probs, bool penalize_f0) {
  if (f0_probs.size() != binary.n_rows)
    throw Error(ErrorCode::Shape, "prepare_conditional: " + std::to_string(f0_probs.size()) +
                                      " baseline probabilities for " + std::to_string(binary.n_rows) + " rows");
  for (double p : f0_probs)
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::Validation, "prepare_conditional: probability outside [0,1]");
  PreparedDesign d = prepare_independent(std::move(binary));
  learn::DesignMatrix col;
  col.n_rows = f0_probs.size();
  col.n_dense = 1;
  col.offsets.assign(col.n_rows + 1, 0);
  col.dense.assign(f0_probs.begin(), f0_probs.end());
  col.names = {"f0"};
  auto scaling = learn::fit_scaling(col);
  if (scaling[0].scale == 0) {
    d.diagnostics.push_back("baseline probability column is constant; dropped (independent selection)");
    return d;
  }
  learn::apply_scaling(col, scaling);
  d.x = learn::with_dense(std::move(d.x), col.dense, 1, col.names);
  d.roles.push_back(penalize_f0 ? ColumnRole::Penalized : ColumnRole::Free);
  d.scaling = scaling;
  d.mode = SelectionMode::Conditional;
  return d;
}

PreparedDesign prepare_stacked(learn::DesignMatrix binary, const learn::DesignMatrix& side) {
  if (side.n_rows != binary.n_rows && side.width() != 0)
    throw Error(ErrorCode::Alignment, "prepare_stacked: side table has " + std::to_string(side.n_rows) +
                                          " rows, sub-signature matrix has " + std::to_string(binary.n_rows));
  PreparedDesign d = prepare_independent(std::move(binary));
  if (side.n_dense == 0) return d;
  auto scaling = learn::fit_scaling(side);
  std::vector<std::size_t> keep;
  for (std::size_t k = 0; k < side.n_dense; ++k) {
    if (scaling[k].scale == 0)
      d.diagnostics.push_back("side column '" + side.names[side.n_binary + k] + "' is constant; dropped");
    else
      keep.push_back(k);
  }
  std::vector<double> vals;
  vals.reserve(side.n_rows * keep.size());
  std::vector<std::string> names;
  for (auto k : keep) names.push_back(side.names[side.n_binary + k]);
  for (std::size_t r = 0; r < side.n_rows; ++r)
    for (auto k : keep) vals.push_back((side.dense[r * side.n_dense + k] - scaling[k].mean) / scaling[k].scale);
  for (auto k : keep) d.scaling.push_back(scaling[k]);
  d.x = learn::with_dense(std::move(d.x), vals, keep.size(), names);
  d.roles.resize(d.x.width(), ColumnRole::Penalized);
  d.mode = keep.empty() ? SelectionMode::Independent : SelectionMode::Stacked;
  return d;
}

std::vector<double> SelectionModel::dense_weights() const {
  std::vector<double> w(width(), 0.0);
  for (auto [j, v] : weights) w[j] = v;
  return w;
}

std::size_t SelectionModel::binary_nonzeros() const {
  return std::count_if(weights.begin(), weights.end(), [&](const auto& e) { return e.first < n_binary; });
}

SelectionModel null_model(const PreparedDesign& design, std::span<const std::uint8_t> labels,
                          const SolverOptions& options) {
  check_labels(labels, design.x.n_rows);
  double ybar = static_cast<double>(std::count(labels.begin(), labels.end(), 1)) / labels.size();
  double b0 = std::log(ybar / (1.0 - ybar));
  std::vector<ColumnRole> roles = design.roles;
  bool any_free = false;
  for (auto& r : roles) {
    if (r == ColumnRole::Penalized) r = ColumnRole::Frozen;
    any_free |= r == ColumnRole::Free;
  }
  SolverResult res;
  if (any_free) {
    res = solve_logistic(design.x, labels, 0.0, roles, options, {}, b0);
  } else {
    res.weights.assign(design.x.width(), 0.0);
    res.intercept = b0;
    Workspace ws(design.x, labels, roles, 0.0, 0.0);
    res.trace.push_back(ws.smooth(res.weights, b0));
    res.converged = true;
  }
  return to_model(design, res, std::numeric_limits<double>::infinity());
}

double lambda_max(const PreparedDesign& design, std::span<const std::uint8_t> labels, const SelectionModel& null) {
  Workspace ws(design.x, labels, design.roles, 0.0, 0.0);
  std::vector<double> g;
  double gb;
  ws.smooth_grad(null.dense_weights(), null.intercept, g, gb);
  double m = 0;
  for (std::size_t j = 0; j < g.size(); ++j)
    if (design.roles[j] == ColumnRole::Penalized) m = std::max(m, std::abs(g[j]));
  return m;
}

namespace {

SelectionModel fit_from_null(const PreparedDesign& design, std::span<const std::uint8_t> labels, double lambda,
                             const SolverOptions& options, const SelectionModel& null, double lmax,
                             const SelectionModel* warm) {
  if (lambda >= lmax) {
    SelectionModel m = null;
    m.lambda = lambda;
    return m;
  }
  const SelectionModel& start = warm ? *warm : null;
  if (start.width() != design.x.width()) throw Error(ErrorCode::Shape, "fit_lasso: warm start width mismatch");
  auto res = solve_logistic(design.x, labels, lambda, design.roles, options, start.dense_weights(), start.intercept);
  return to_model(design, res, lambda);
}

}  // namespace

SelectionModel fit_lasso(const PreparedDesign& design, std::span<const std::uint8_t> labels, double lambda,
                         const SolverOptions& options, const SelectionModel* warm) {
  if (!(lambda >= 0)) throw Error(ErrorCode::Validation, "fit_lasso: lambda must be >= 0");
  auto null = null_model(design, labels, options);
  double lmax = lambda_max(design, labels, null);
  return fit_from_null(design, labels, lambda, options, null, lmax, warm);
}

LambdaPath lambda_path(const PreparedDesign& design, std::span<const std::uint8_t> labels,
                       std::span<const std::size_t> target_counts, const SolverOptions& options,
                       std::size_t grid_size, double floor_ratio) {
  if (!std::is_sorted(target_counts.begin(), target_counts.end()))
    throw Error(ErrorCode::Validation, "lambda_path: target counts must be ascending");
  if (grid_size < 2) throw Error(ErrorCode::Validation, "lambda_path: grid needs at least 2 points");
  auto null = null_model(design, labels, options);
  double lmax = lambda_max(design, labels, null);
  LambdaPath path;
  if (lmax == 0) {  // nothing to select: every grid point is the null model
    path.lambdas.assign(grid_size, 0.0);
    path.models.assign(grid_size, null);
  } else {
    for (std::size_t k = 0; k < grid_size; ++k)
      path.lambdas.push_back(lmax * std::pow(floor_ratio, static_cast<double>(k) / (grid_size - 1)));
    const SelectionModel* prev = nullptr;
    for (std::size_t k = 0; k < grid_size; ++k) {
      path.models.push_back(fit_from_null(design, labels, path.lambdas[k], options, null, lmax, prev));
      prev = &path.models.back();
    }
  }
  for (const auto& m : path.models) path.nonzeros.push_back(m.binary_nonzeros());
  for (auto target : target_counts) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < grid_size; ++k) {
      auto dist = [&](std::size_t i) {
        return path.nonzeros[i] > target ? path.nonzeros[i] - target : target - path.nonzeros[i];
      };
      if (dist(k) < dist(best)) best = k;
    }
    path.picks.push_back(best);
  }
  return path;
}

SelectedFeatureSet select_top_k(const SelectionModel& model, std::size_t k) {
  if (k == 0) throw Error(ErrorCode::Validation, "select_top_k: k must be >= 1");
  std::vector<std::pair<std::uint32_t, double>> bin;
  for (const auto& e : model.weights)
    if (e.first < model.n_binary && e.second != 0) bin.push_back(e);
  std::sort(bin.begin(), bin.end(), [](const auto& a, const auto& b) {
    double x = std::abs(a.second), y = std::abs(b.second);
    return x > y || (x == y && a.first < b.first);
  });
  SelectedFeatureSet s;
  s.k = k;
  s.lambda_used = model.lambda;
  s.short_count = bin.size() < k;
  for (std::size_t i = 0; i < std::min(k, bin.size()); ++i) {
    s.columns.push_back(bin[i].first);
    s.feature_ids.push_back(bin[i].first < model.column_names.size() ? model.column_names[bin[i].first] : "");
  }
  return s;
}

std::string model_to_json(const SelectionModel& m, const SelectedFeatureSet* selected) {
  using nlohmann::json;
  json weights = json::array();
  for (auto [j, v] : m.weights) weights.push_back({j, v});
  json scaling = json::array();
  for (const auto& s : m.column_scaling) scaling.push_back({s.mean, s.scale});
  json j = {{"format", "hayama-linear"},
            {"version", 1},
            {"mode", to_string(m.mode)},
            {"lambda", std::isfinite(m.lambda) ? json(m.lambda) : json(nullptr)},
            {"intercept", m.intercept},
            {"weights", weights},
            {"penalized", m.penalized_mask},
            {"column_scaling", scaling},
            {"n_binary", m.n_binary},
            {"column_names", m.column_names},
            {"iterations", m.iterations},
            {"converged", m.converged},
            {"final_objective", m.objective_trace.empty() ? json(nullptr) : json(m.objective_trace.back())}};
  if (selected) {
    j["k"] = selected->k;
    j["feature_ids"] = selected->feature_ids;
    j["short_count"] = selected->short_count;
  } else {
    auto all = select_top_k(m, std::max<std::size_t>(1, m.binary_nonzeros()));
    j["feature_ids"] = all.feature_ids;
  }
  return j.dump(1) + "\n";
}

SelectionModel model_from_json(std::string_view text) {
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object() || j.value("format", "") != "hayama-linear")
    throw Error(ErrorCode::BadFormat, "not a hayama-linear model");
  if (j.value("version", 0) != 1) throw Error(ErrorCode::VersionMismatch, "unsupported linear model version");
  try {
    SelectionModel m;
    m.mode = mode_from_string(j.at("mode").get<std::string>());
    m.lambda = j.at("lambda").is_null() ? std::numeric_limits<double>::infinity() : j.at("lambda").get<double>();
    m.intercept = j.at("intercept").get<double>();
    for (const auto& e : j.at("weights")) m.weights.emplace_back(e.at(0).get<std::uint32_t>(), e.at(1).get<double>());
    m.penalized_mask = j.at("penalized").get<std::vector<std::uint8_t>>();
    for (const auto& s : j.at("column_scaling")) m.column_scaling.push_back({s.at(0).get<double>(), s.at(1).get<double>()});
    m.n_binary = j.at("n_binary").get<std::size_t>();
    m.column_names = j.at("column_names").get<std::vector<std::string>>();
    m.iterations = j.value("iterations", 0);
    m.converged = j.value("converged", true);
    if (j.contains("final_objective") && !j["final_objective"].is_null())
      m.objective_trace.push_back(j["final_objective"].get<double>());
    for (const auto& [c, v] : m.weights)
      if (c >= m.column_names.size()) throw Error(ErrorCode::Integrity, "linear model: weight column out of range");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadFormat, std::string("linear model: ") + e.what());
  }
}

}  // namespace hayama::lasso
