#include "hayama/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hayama/error.hpp"
#include "hayama/scanner.hpp"

namespace hayama::metrics {
namespace {

std::vector<std::size_t> all_rows(const scan::OccurrenceMatrix& m, std::span<const std::size_t> rows) {
  if (!rows.empty()) return {rows.begin(), rows.end()};
  std::vector<std::size_t> r(m.n_rows);
  std::iota(r.begin(), r.end(), 0);
  return r;
}

const std::vector<std::uint8_t>& require_labels(const scan::OccurrenceMatrix& m) {
  if (!m.labels) throw Error(ErrorCode::Validation, "matrix carries no labels");
  return *m.labels;
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// Centered copy and its sum of squares.
double center(std::vector<double>& v) {
  double mean = 0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0;
  for (double& x : v) {
    x -= mean;
    ss += x * x;
  }
  return ss;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

FeatureStats per_feature_stats(const scan::OccurrenceMatrix& m, std::span<const std::size_t> rows) {
  const auto& labels = require_labels(m);
  FeatureStats s;
  s.features.resize(m.n_cols);
  s.ids = m.col_ids;
  for (auto r : all_rows(m, rows)) {
    ++s.n;
    bool mal = labels[r] == 1;
    s.n_malware += mal;
    for (auto c : m.row(r)) {
      auto& f = s.features[c];
      ++f.fires_total;
      ++(mal ? f.fires_malware : f.fires_benign);
    }
  }
  const double n = static_cast<double>(s.n);
  const std::size_t n_benign = s.n - s.n_malware;
  for (auto& f : s.features) {
    double tp = static_cast<double>(f.fires_malware);
    double tn = static_cast<double>(n_benign - f.fires_benign);
    f.accuracy = s.n ? (tp + tn) / n : 0.0;
    f.precision_undefined = f.fires_total == 0;
    f.precision = f.fires_total ? tp / static_cast<double>(f.fires_total) : 0.0;
    f.recall = s.n_malware ? tp / static_cast<double>(s.n_malware) : 0.0;
  }
  return s;
}

std::string_view to_string(Metric metric) {
  switch (metric) {
    case Metric::Accuracy: return "accuracy";
    case Metric::Precision: return "precision";
    case Metric::Recall: return "recall";
  }
  return "?";
}

Metric metric_from_string(std::string_view name) {
  if (name == "accuracy") return Metric::Accuracy;
  if (name == "precision") return Metric::Precision;
  if (name == "recall") return Metric::Recall;
  throw Error(ErrorCode::Validation, "unknown metric '" + std::string(name) + "'");
}

std::vector<std::uint32_t> topk_by_metric(const FeatureStats& stats, Metric metric, std::size_t k) {
  auto value = [&](std::uint32_t i) {
    const auto& f = stats.features[i];
    return metric == Metric::Accuracy ? f.accuracy : metric == Metric::Precision ? f.precision : f.recall;
  };
  std::vector<std::uint32_t> idx(stats.features.size());
  std::iota(idx.begin(), idx.end(), 0u);
  std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return value(a) > value(b); });
  if (idx.size() > k) idx.resize(k);
  return idx;
}

std::string stats_to_csv(const FeatureStats& stats, std::span<const std::uint32_t> order) {
  std::string out = "index,id,fires_total,fires_malware,fires_benign,accuracy,precision,recall,precision_undefined\n";
  const std::size_t rows = order.empty() ? stats.features.size() : order.size();
  for (std::size_t pos = 0; pos < rows; ++pos) {
    const std::size_t i = order.empty() ? pos : order[pos];
    const auto& f = stats.features[i];
    out += std::to_string(i) + "," + (i < stats.ids.size() ? stats.ids[i] : "") + "," +
           std::to_string(f.fires_total) + "," + std::to_string(f.fires_malware) + "," +
           std::to_string(f.fires_benign) + "," + fmt(f.accuracy) + "," + fmt(f.precision) + "," +
           fmt(f.recall) + "," + (f.precision_undefined ? "1" : "0") + "\n";
  }
  return out;
}

RocResult roc_and_partial_auc(std::span<const double> scores, std::span<const std::uint8_t> labels, double fpr_cap) {
  if (scores.size() != labels.size()) throw Error(ErrorCode::Shape, "roc: scores/labels length mismatch");
  if (!(fpr_cap > 0 && fpr_cap <= 1)) throw Error(ErrorCode::Validation, "roc: fpr cap must be in (0, 1]");
  std::size_t pos = std::count(labels.begin(), labels.end(), 1);
  std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) throw Error(ErrorCode::SingleClass, "roc: both classes are required");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });

  RocResult res;
  res.fpr_cap = fpr_cap;
  res.curve.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    double s = scores[order[i]];
    for (; i < order.size() && scores[order[i]] == s; ++i) ++(labels[order[i]] ? tp : fp);
    res.curve.push_back({s, static_cast<double>(fp) / neg, static_cast<double>(tp) / pos});
  }
  for (std::size_t i = 1; i < res.curve.size(); ++i) {
    const auto &a = res.curve[i - 1], &b = res.curve[i];
    res.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) / 2;
  }
  res.partial_auc = normalized_partial_auc(res.curve, fpr_cap);
  return res;
}

double normalized_partial_auc(const std::vector<RocPoint>& curve, double cap) {
  double area = 0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    double x0 = curve[i - 1].fpr, y0 = curve[i - 1].tpr, x1 = curve[i].fpr, y1 = curve[i].tpr;
    if (x0 >= cap) break;
    if (x1 > cap) {
      y1 = y0 + (y1 - y0) * (cap - x0) / (x1 - x0);
      x1 = cap;
    }
    area += (x1 - x0) * (y0 + y1) / 2;
  }
  return area / cap;
}

double tpr_at(const std::vector<RocPoint>& curve, double fpr) {
  double best = 0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const auto &a = curve[i - 1], &b = curve[i];
    if (b.fpr <= fpr) best = b.tpr;
    else if (a.fpr <= fpr) return a.tpr + (b.tpr - a.tpr) * (fpr - a.fpr) / (b.fpr - a.fpr);
  }
  return best;
}

std::vector<EcdfPoint> occurrence_ecdf(const scan::OccurrenceMatrix& m, std::uint8_t label,
                                       std::span<const std::size_t> rows, std::span<const std::uint32_t> columns) {
  const auto& labels = require_labels(m);
  std::vector<std::uint64_t> counts(m.n_cols, 0);
  for (auto r : all_rows(m, rows))
    if (labels[r] == label)
      for (auto c : m.row(r)) ++counts[c];
  std::vector<std::uint64_t> picked;
  if (columns.empty()) picked = counts;
  else
    for (auto c : columns) picked.push_back(counts.at(c));
  std::sort(picked.begin(), picked.end());
  std::vector<EcdfPoint> out;
  const double total = static_cast<double>(picked.size());
  for (std::size_t i = 0; i < picked.size(); ++i)
    if (i + 1 == picked.size() || picked[i + 1] != picked[i])
      out.push_back({picked[i], static_cast<double>(i + 1) / total});
  return out;
}

CorrelationMatrix correlation_matrix(const std::vector<std::vector<double>>& a,
                                     const std::vector<std::vector<double>>& b,
                                     const std::vector<std::string>& names) {
  std::vector<std::vector<double>> cols(a);
  cols.insert(cols.end(), b.begin(), b.end());
  CorrelationMatrix c;
  c.size = cols.size();
  c.names = names;
  c.values.assign(c.size * c.size, 0.0);
  c.constant.assign(c.size, 0);
  if (c.size == 0) return c;
  const std::size_t n = cols[0].size();
  for (const auto& col : cols) {
    if (col.size() != n) throw Error(ErrorCode::Shape, "correlation: columns differ in length");
    for (double v : col)
      if (!std::isfinite(v)) throw Error(ErrorCode::Validation, "correlation: non-finite value");
  }
  std::vector<double> ss(c.size);
  for (std::size_t i = 0; i < c.size; ++i) {
    ss[i] = n ? center(cols[i]) : 0.0;
    c.constant[i] = !(ss[i] > 0);
  }
  for (std::size_t i = 0; i < c.size; ++i) {
    if (c.constant[i]) continue;
    c.values[i * c.size + i] = 1.0;
    for (std::size_t j = i + 1; j < c.size; ++j) {
      if (c.constant[j]) continue;
      double r = std::clamp(dot(cols[i], cols[j]) / std::sqrt(ss[i] * ss[j]), -1.0, 1.0);
      c.values[i * c.size + j] = c.values[j * c.size + i] = r;
    }
  }
  return c;
}

std::string correlation_to_csv(const CorrelationMatrix& c) {
  auto name = [&](std::size_t i) { return i < c.names.size() ? c.names[i] : "c" + std::to_string(i); };
  std::string out = "feature";
  for (std::size_t j = 0; j < c.size; ++j) out += "," + name(j);
  out += "\n";
  for (std::size_t i = 0; i < c.size; ++i) {
    out += name(i);
    for (std::size_t j = 0; j < c.size; ++j) out += "," + fmt(c.at(i, j));
    out += "\n";
  }
  return out;
}

double pls_max_correlation(const std::vector<std::vector<double>>& yara_columns,
                           const std::vector<std::vector<double>>& side_columns) {
  auto prepare = [](const std::vector<std::vector<double>>& block, std::size_t& n, const char* what) {
    std::vector<std::vector<double>> kept;
    for (auto col : block) {
      if (n == 0) n = col.size();
      if (col.size() != n) throw Error(ErrorCode::Shape, std::string("pls: ragged ") + what + " block");
      if (center(col) > 0) kept.push_back(std::move(col));
    }
    if (kept.empty()) throw Error(ErrorCode::Validation, std::string("pls: ") + what + " block has no varying column");
    return kept;
  };
  std::size_t n = 0;
  auto X = prepare(yara_columns, n, "yara");
  auto Y = prepare(side_columns, n, "side");
  if (n < 2) throw Error(ErrorCode::Validation, "pls: at least 2 samples are required");
  if (Y[0].size() != X[0].size()) throw Error(ErrorCode::Shape, "pls: blocks differ in row count");

  auto combine = [&](const std::vector<std::vector<double>>& B, const std::vector<double>& coef) {
    std::vector<double> out(n, 0.0);
    for (std::size_t j = 0; j < B.size(); ++j)
      for (std::size_t i = 0; i < n; ++i) out[i] += B[j][i] * coef[j];
    return out;
  };
  auto project = [&](const std::vector<std::vector<double>>& B, const std::vector<double>& v) {
    std::vector<double> out(B.size());
    for (std::size_t j = 0; j < B.size(); ++j) out[j] = dot(B[j], v);
    double norm = std::sqrt(dot(out, out));
    if (norm > 0)
      for (double& x : out) x /= norm;
    return out;
  };

  std::size_t start = 0;
  for (std::size_t j = 1; j < Y.size(); ++j)
    if (dot(Y[j], Y[j]) > dot(Y[start], Y[start])) start = j;
  std::vector<double> u = Y[start], w(X.size(), 0.0), t;
  for (int it = 0; it < 500; ++it) {
    auto w_next = project(X, u);
    t = combine(X, w_next);
    auto c = project(Y, t);
    u = combine(Y, c);
    double change = 0;
    for (std::size_t j = 0; j < w.size(); ++j) change += (w_next[j] - w[j]) * (w_next[j] - w[j]);
    w = std::move(w_next);
    if (std::sqrt(change) < 1e-10) break;
  }
  double tt = dot(t, t), uu = dot(u, u);
  if (!(tt > 0) || !(uu > 0)) return 0.0;
  // Scores are linear combinations of centered columns, so they are centered.
  return std::min(1.0, std::abs(dot(t, u)) / std::sqrt(tt * uu));
}

std::string EvalReport::to_json() const {
  nlohmann::json j = {{"split", split},
                      {"n", n},
                      {"accuracy", accuracy},
                      {"auc", auc},
                      {"partial_auc", partial_auc},
                      {"fpr_cap", fpr_cap},
                      {"threshold_rule", "p >= 0.5 is malware"},
                      {"confusion", {{"tp", confusion.tp}, {"fp", confusion.fp}, {"tn", confusion.tn}, {"fn", confusion.fn}}},
                      {"curve_points", curve.size()}};
  return j.dump(1) + "\n";
}

std::string EvalReport::curve_csv() const {
  std::string out = "fpr,tpr\n";
  for (const auto& p : curve) out += fmt(p.fpr) + "," + fmt(p.tpr) + "\n";
  return out;
}

EvalReport evaluate_scores(std::string split, std::span<const double> probs, std::span<const std::uint8_t> labels,
                           double fpr_cap) {
  auto roc = roc_and_partial_auc(probs, labels, fpr_cap);
  EvalReport r;
  r.split = std::move(split);
  r.n = probs.size();
  r.fpr_cap = fpr_cap;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    bool pred = probs[i] >= 0.5;
    if (labels[i]) ++(pred ? r.confusion.tp : r.confusion.fn);
    else ++(pred ? r.confusion.fp : r.confusion.tn);
  }
  r.accuracy = static_cast<double>(r.confusion.tp + r.confusion.tn) / static_cast<double>(r.n);
  r.auc = roc.auc;
  r.partial_auc = roc.partial_auc;
  r.curve = std::move(roc.curve);
  return r;
}

}  // namespace hayama::metrics
