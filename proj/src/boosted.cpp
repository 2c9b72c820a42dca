#include "hayama/boosted.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "hayama/error.hpp"
#include "hayama/lasso.hpp"
#include "hayama/util.hpp"

namespace hayama::boost {
namespace {

void check_binary_labels(std::span<const std::uint8_t> labels, std::size_t rows) {
  if (labels.size() != rows) throw Error(ErrorCode::Shape, "labels/rows length mismatch");
  std::size_t pos = std::count(labels.begin(), labels.end(), 1);
  if (pos == 0 || pos == labels.size()) throw Error(ErrorCode::SingleClass, "labels contain a single class");
}

double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

struct NodeStats {
  double g = 0, h = 0;
  std::size_t n = 0;
};

struct Split {
  int feature = -1;
  int cut = -1;  // dense: cut index; binary: unused
  double threshold = 0;
  double gain = 0;
};

class TreeGrower {
 public:
  TreeGrower(const learn::DesignMatrix& x, const std::vector<std::vector<double>>& cuts,
             const std::vector<std::vector<std::uint8_t>>& bins, const TrainConfig& cfg,
             const std::vector<double>& g, const std::vector<double>& h, const std::vector<std::uint8_t>& allowed)
      : x_(x), cuts_(cuts), bins_(bins), cfg_(cfg), g_(g), h_(h), allowed_(allowed),
        bg_(x.n_binary, 0.0), bh_(x.n_binary, 0.0), bn_(x.n_binary, 0) {}

  Tree grow(std::vector<std::uint32_t> rows, std::vector<double>& gain, std::vector<std::uint32_t>& count) {
    Tree tree;
    build(tree, rows, 0, gain, count);
    return tree;
  }

 private:
  double score(double G, double H) const { return G * G / (H + cfg_.l2_leaf); }

  bool feasible(const NodeStats& l, const NodeStats& r) const {
    return l.n > 0 && r.n > 0 && l.h >= cfg_.min_child_hessian && r.h >= cfg_.min_child_hessian;
  }

  void consider(Split& best, bool& found, int feature, int cut, double threshold, const NodeStats& l,
                const NodeStats& tot) const {
    NodeStats r{tot.g - l.g, tot.h - l.h, tot.n - l.n};
    if (!feasible(l, r)) return;
    double gain = 0.5 * (score(l.g, l.h) + score(r.g, r.h) - score(tot.g, tot.h));
    if (!found || gain > best.gain) {
      best = {feature, cut, threshold, gain};
      found = true;
    }
  }

  bool find_split(const std::vector<std::uint32_t>& rows, const NodeStats& tot, Split& best) {
    bool found = false;
    // Binary columns: sparse counts of the rows where the column fires; the
    // zero side (left) is the complement.
    touched_.clear();
    for (auto r : rows)
      for (auto c : x_.binary_row(r)) {
        if (bn_[c] == 0) touched_.push_back(c);
        bg_[c] += g_[r];
        bh_[c] += h_[r];
        ++bn_[c];
      }
    std::sort(touched_.begin(), touched_.end());
    for (auto c : touched_) {
      if (allowed_[c]) {
        NodeStats left{tot.g - bg_[c], tot.h - bh_[c], tot.n - bn_[c]};
        consider(best, found, static_cast<int>(c), -1, 0.5, left, tot);
      }
      bg_[c] = bh_[c] = 0;
      bn_[c] = 0;
    }
    for (std::size_t k = 0; k < x_.n_dense; ++k) {
      const std::size_t col = x_.n_binary + k;
      if (!allowed_[col] || cuts_[k].empty()) continue;
      const auto& b = bins_[k];
      hist_.assign(cuts_[k].size() + 1, NodeStats{});
      for (auto r : rows) {
        auto& s = hist_[b[r]];
        s.g += g_[r];
        s.h += h_[r];
        ++s.n;
      }
      NodeStats left;
      for (std::size_t cut = 0; cut < cuts_[k].size(); ++cut) {
        left.g += hist_[cut].g;
        left.h += hist_[cut].h;
        left.n += hist_[cut].n;
        consider(best, found, static_cast<int>(col), static_cast<int>(cut), cuts_[k][cut], left, tot);
      }
    }
    return found;
  }

  bool goes_left(std::uint32_t r, const Split& s) const {
    if (static_cast<std::size_t>(s.feature) < x_.n_binary) {
      auto row = x_.binary_row(r);
      return !std::binary_search(row.begin(), row.end(), static_cast<std::uint32_t>(s.feature));
    }
    return bins_[s.feature - x_.n_binary][r] <= s.cut;
  }

  std::int32_t build(Tree& tree, std::vector<std::uint32_t>& rows, int depth, std::vector<double>& gain,
                     std::vector<std::uint32_t>& count) {
    NodeStats tot;
    for (auto r : rows) {
      tot.g += g_[r];
      tot.h += h_[r];
    }
    tot.n = rows.size();
    auto id = static_cast<std::int32_t>(tree.size());
    tree.emplace_back();
    Split best;
    if (depth < cfg_.max_depth && find_split(rows, tot, best) && best.gain >= cfg_.min_split_gain - 1e-12) {
      std::vector<std::uint32_t> left, right;
      for (auto r : rows) (goes_left(r, best) ? left : right).push_back(r);
      rows.clear();
      rows.shrink_to_fit();
      gain[best.feature] += std::max(best.gain, 0.0);
      ++count[best.feature];
      auto l = build(tree, left, depth + 1, gain, count);
      auto r = build(tree, right, depth + 1, gain, count);
      tree[id].feature = best.feature;
      tree[id].threshold = best.threshold;
      tree[id].left = l;
      tree[id].right = r;
    } else {
      tree[id].leaf_value = -tot.g / (tot.h + cfg_.l2_leaf);
    }
    return id;
  }

  const learn::DesignMatrix& x_;
  const std::vector<std::vector<double>>& cuts_;
  const std::vector<std::vector<std::uint8_t>>& bins_;
  const TrainConfig& cfg_;
  const std::vector<double>& g_;
  const std::vector<double>& h_;
  const std::vector<std::uint8_t>& allowed_;
  std::vector<double> bg_, bh_;
  std::vector<std::size_t> bn_;
  std::vector<std::uint32_t> touched_;
  std::vector<NodeStats> hist_;
};

double tree_value(const Tree& tree, const learn::DesignMatrix& x, std::size_t row) {
  std::size_t node = 0;
  while (!tree[node].is_leaf()) {
    const auto& t = tree[node];
    node = x.value(row, static_cast<std::size_t>(t.feature)) < t.threshold ? t.left : t.right;
  }
  return tree[node].leaf_value;
}

nlohmann::json config_json(const TrainConfig& c) {
  return {{"n_trees", c.n_trees},
          {"max_depth", c.max_depth},
          {"learning_rate", c.learning_rate},
          {"min_child_hessian", c.min_child_hessian},
          {"l2_leaf", c.l2_leaf},
          {"n_bins", c.n_bins},
          {"min_split_gain", c.min_split_gain},
          {"row_subsample", c.row_subsample},
          {"col_subsample", c.col_subsample},
          {"seed", c.seed}};
}

TrainConfig config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.n_trees = j.at("n_trees");
  c.max_depth = j.at("max_depth");
  c.learning_rate = j.at("learning_rate");
  c.min_child_hessian = j.at("min_child_hessian");
  c.l2_leaf = j.at("l2_leaf");
  c.n_bins = j.at("n_bins");
  c.min_split_gain = j.value("min_split_gain", 0.0);
  c.row_subsample = j.value("row_subsample", 1.0);
  c.col_subsample = j.value("col_subsample", 1.0);
  c.seed = j.value("seed", std::uint64_t{0});
  return c;
}

nlohmann::json feature_space(const std::vector<std::string>& names, std::size_t n_binary) {
  return {{"yara_ids", std::vector<std::string>(names.begin(), names.begin() + n_binary)},
          {"side_names", std::vector<std::string>(names.begin() + n_binary, names.end())}};
}

void read_feature_space(const nlohmann::json& j, std::vector<std::string>& names, std::size_t& n_binary,
                        std::size_t& n_dense) {
  names = j.at("yara_ids").get<std::vector<std::string>>();
  n_binary = names.size();
  auto side = j.at("side_names").get<std::vector<std::string>>();
  n_dense = side.size();
  names.insert(names.end(), side.begin(), side.end());
}

void check_layout(std::size_t n_binary, std::size_t n_dense, const learn::DesignMatrix& x) {
  if (x.n_binary != n_binary || x.n_dense != n_dense)
    throw Error(ErrorCode::Shape, "model expects " + std::to_string(n_binary) + " binary + " +
                                      std::to_string(n_dense) + " dense columns, input has " +
                                      std::to_string(x.n_binary) + " + " + std::to_string(x.n_dense));
}

}  // namespace

void TrainConfig::validate() const {
  if (n_trees < 0 || max_depth < 0 || !(learning_rate > 0) || !(min_child_hessian >= 0) || !(l2_leaf >= 0) ||
      n_bins < 2 || n_bins > 256 || !(row_subsample > 0 && row_subsample <= 1) ||
      !(col_subsample > 0 && col_subsample <= 1))
    throw Error(ErrorCode::Validation, "invalid boosting configuration");
}

double BoostedEnsemble::margin(const learn::DesignMatrix& x, std::size_t row) const {
  double m = base_margin;
  for (const auto& t : trees) m += learning_rate * tree_value(t, x, row);
  return m;
}

std::vector<double> quantile_cuts(std::vector<double> values, int n_bins) {
  std::sort(values.begin(), values.end());
  std::vector<double> distinct = values;
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  auto midpoint = [](double a, double b) {
    double m = a + (b - a) / 2;
    return m > a ? m : b;
  };
  std::vector<double> cuts;
  if (distinct.size() <= static_cast<std::size_t>(n_bins)) {
    for (std::size_t i = 1; i < distinct.size(); ++i) cuts.push_back(midpoint(distinct[i - 1], distinct[i]));
    return cuts;
  }
  const std::size_t n = values.size();
  for (int q = 1; q < n_bins; ++q) {
    std::size_t idx = static_cast<std::size_t>(q) * n / static_cast<std::size_t>(n_bins);
    auto hi = std::upper_bound(values.begin(), values.end(), values[idx - (idx > 0 ? 1 : 0)]);
    if (hi == values.end()) break;
    double c = midpoint(*(hi - 1), *hi);
    if (cuts.empty() || c > cuts.back()) cuts.push_back(c);
  }
  return cuts;
}

double log_loss(std::span<const double> probs, std::span<const std::uint8_t> labels) {
  double s = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    double p = std::clamp(probs[i], 1e-12, 1.0 - 1e-12);
    s -= labels[i] ? std::log(p) : std::log(1.0 - p);
  }
  return probs.empty() ? 0.0 : s / static_cast<double>(probs.size());
}

BoostedEnsemble fit_gbdt(const learn::DesignMatrix& x, std::span<const std::uint8_t> labels,
                         const TrainConfig& config) {
  config.validate();
  x.validate();
  check_binary_labels(labels, x.n_rows);
  for (double v : x.dense)
    if (!std::isfinite(v)) throw Error(ErrorCode::Validation, "fit_gbdt: non-finite feature value (impute upstream)");

  const std::size_t n = x.n_rows, width = x.width();
  BoostedEnsemble model;
  model.config = config;
  model.learning_rate = config.learning_rate;
  double ybar = static_cast<double>(std::count(labels.begin(), labels.end(), 1)) / static_cast<double>(n);
  model.base_margin = std::log(ybar / (1.0 - ybar));
  model.feature_gain.assign(width, 0.0);
  model.split_count.assign(width, 0);
  model.n_binary = x.n_binary;
  model.n_dense = x.n_dense;
  model.feature_names = x.names;

  std::vector<std::vector<double>> cuts(x.n_dense);
  std::vector<std::vector<std::uint8_t>> bins(x.n_dense, std::vector<std::uint8_t>(n));
  for (std::size_t k = 0; k < x.n_dense; ++k) {
    std::vector<double> col(n);
    for (std::size_t r = 0; r < n; ++r) col[r] = x.dense[r * x.n_dense + k];
    cuts[k] = quantile_cuts(col, config.n_bins);
    for (std::size_t r = 0; r < n; ++r)
      bins[k][r] = static_cast<std::uint8_t>(std::upper_bound(cuts[k].begin(), cuts[k].end(), col[r]) - cuts[k].begin());
  }

  std::vector<double> margin(n, model.base_margin), prob(n), g(n), h(n);
  std::mt19937_64 rng(config.seed);
  std::vector<std::uint8_t> allowed(width, 1);
  for (int round = 0; round < config.n_trees; ++round) {
    for (std::size_t i = 0; i < n; ++i) {
      double p = sigmoid(margin[i]);
      g[i] = p - labels[i];
      h[i] = p * (1.0 - p);
    }
    std::vector<std::uint32_t> rows;
    rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
      if (config.row_subsample >= 1.0 || uniform01(rng) < config.row_subsample) rows.push_back(static_cast<std::uint32_t>(i));
    if (config.col_subsample < 1.0)
      for (auto& a : allowed) a = uniform01(rng) < config.col_subsample;
    TreeGrower grower(x, cuts, bins, config, g, h, allowed);
    model.trees.push_back(grower.grow(std::move(rows), model.feature_gain, model.split_count));
    const Tree& tree = model.trees.back();
    for (std::size_t i = 0; i < n; ++i) {
      margin[i] += model.learning_rate * tree_value(tree, x, i);
      prob[i] = sigmoid(margin[i]);
    }
    model.train_logloss.push_back(log_loss(prob, labels));
  }
  return model;
}

std::vector<double> predict_proba(const BoostedEnsemble& model, const learn::DesignMatrix& x) {
  check_layout(model.n_binary, model.n_dense, x);
  std::vector<double> out(x.n_rows);
  for (std::size_t r = 0; r < x.n_rows; ++r) out[r] = sigmoid(model.margin(x, r));
  return out;
}

std::vector<std::pair<std::size_t, double>> gain_importance(const BoostedEnsemble& model) {
  std::vector<std::pair<std::size_t, double>> out;
  for (std::size_t c = 0; c < model.split_count.size(); ++c)
    if (model.split_count[c] > 0) out.emplace_back(c, model.feature_gain[c]);
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    return a.second > b.second || (a.second == b.second && a.first < b.first);
  });
  return out;
}

std::string ensemble_to_json(const BoostedEnsemble& m) {
  using nlohmann::json;
  json trees = json::array();
  for (const auto& t : m.trees) {
    json nodes = json::array();
    for (const auto& node : t) {
      if (node.is_leaf()) nodes.push_back({{"leaf", node.leaf_value}});
      else nodes.push_back({{"f", node.feature}, {"t", node.threshold}, {"l", node.left}, {"r", node.right}});
    }
    trees.push_back(std::move(nodes));
  }
  json j = {{"format", "hayama-gbdt"},
            {"version", 1},
            {"base_margin", m.base_margin},
            {"learning_rate", m.learning_rate},
            {"config", config_json(m.config)},
            {"trees", trees},
            {"feature_gain", m.feature_gain},
            {"split_count", m.split_count},
            {"train_logloss", m.train_logloss},
            {"feature_space", feature_space(m.feature_names, m.n_binary)}};
  return j.dump() + "\n";
}

BoostedEnsemble ensemble_from_json(std::string_view text) {
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object() || j.value("format", "") != "hayama-gbdt")
    throw Error(ErrorCode::BadFormat, "not a hayama-gbdt model");
  if (j.value("version", 0) != 1) throw Error(ErrorCode::VersionMismatch, "unsupported gbdt model version");
  try {
    BoostedEnsemble m;
    m.base_margin = j.at("base_margin");
    m.learning_rate = j.at("learning_rate");
    m.config = config_from_json(j.at("config"));
    read_feature_space(j.at("feature_space"), m.feature_names, m.n_binary, m.n_dense);
    const auto width = static_cast<std::int64_t>(m.feature_names.size());
    for (const auto& t : j.at("trees")) {
      Tree tree;
      for (const auto& node : t) {
        TreeNode n;
        if (node.contains("leaf")) {
          n.leaf_value = node.at("leaf");
        } else {
          n.feature = node.at("f");
          n.threshold = node.at("t");
          n.left = node.at("l");
          n.right = node.at("r");
        }
        tree.push_back(n);
      }
      for (const auto& n : tree)
        if (!n.is_leaf() && (n.feature >= width || n.left <= 0 || n.right <= 0 ||
                             n.left >= static_cast<std::int32_t>(tree.size()) ||
                             n.right >= static_cast<std::int32_t>(tree.size())))
          throw Error(ErrorCode::Integrity, "gbdt model: node references out of range");
      if (tree.empty()) throw Error(ErrorCode::Integrity, "gbdt model: empty tree");
      m.trees.push_back(std::move(tree));
    }
    m.feature_gain = j.value("feature_gain", std::vector<double>(width, 0.0));
    m.split_count = j.value("split_count", std::vector<std::uint32_t>(width, 0));
    m.train_logloss = j.value("train_logloss", std::vector<double>{});
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadFormat, std::string("gbdt model: ") + e.what());
  }
}

LinearModel fit_linear_unpenalized(const learn::DesignMatrix& x, std::span<const std::uint8_t> labels) {
  x.validate();
  check_binary_labels(labels, x.n_rows);
  LinearModel m;
  m.n_binary = x.n_binary;
  m.n_dense = x.n_dense;
  m.feature_names = x.names;
  m.scaling = learn::fit_scaling(x);
  learn::DesignMatrix xs = x;
  learn::apply_scaling(xs, m.scaling);

  std::vector<std::size_t> fires(x.n_binary, 0);
  for (auto c : x.cols) ++fires[c];
  std::vector<lasso::ColumnRole> roles(x.width(), lasso::ColumnRole::Free);
  for (std::size_t c = 0; c < x.n_binary; ++c)
    if (fires[c] == 0 || fires[c] == x.n_rows) roles[c] = lasso::ColumnRole::Frozen;
  for (std::size_t k = 0; k < x.n_dense; ++k)
    if (m.scaling[k].scale == 0) roles[x.n_binary + k] = lasso::ColumnRole::Frozen;

  double ybar = static_cast<double>(std::count(labels.begin(), labels.end(), 1)) / static_cast<double>(x.n_rows);
  lasso::SolverOptions opt;
  opt.ridge = 1e-8;
  auto res = lasso::solve_logistic(xs, labels, 0.0, roles, opt, {}, std::log(ybar / (1.0 - ybar)));
  m.weights = std::move(res.weights);
  m.intercept = res.intercept;
  m.iterations = res.iterations;
  m.converged = res.converged;
  return m;
}

std::vector<double> predict_proba(const LinearModel& m, const learn::DesignMatrix& x) {
  check_layout(m.n_binary, m.n_dense, x);
  std::vector<double> out(x.n_rows);
  for (std::size_t r = 0; r < x.n_rows; ++r) {
    double s = m.intercept;
    for (auto c : x.binary_row(r)) s += m.weights[c];
    const double* d = x.dense_row(r);
    for (std::size_t k = 0; k < x.n_dense; ++k)
      if (m.scaling[k].scale > 0) s += (d[k] - m.scaling[k].mean) / m.scaling[k].scale * m.weights[m.n_binary + k];
    out[r] = sigmoid(s);
  }
  return out;
}

std::string linear_to_json(const LinearModel& m) {
  using nlohmann::json;
  json scaling = json::array();
  for (const auto& s : m.scaling) scaling.push_back({s.mean, s.scale});
  json j = {{"format", "hayama-linear-unpenalized"},
            {"version", 1},
            {"intercept", m.intercept},
            {"weights", m.weights},
            {"column_scaling", scaling},
            {"iterations", m.iterations},
            {"converged", m.converged},
            {"feature_space", feature_space(m.feature_names, m.n_binary)}};
  return j.dump() + "\n";
}

LinearModel linear_from_json(std::string_view text) {
  auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object() || j.value("format", "") != "hayama-linear-unpenalized")
    throw Error(ErrorCode::BadFormat, "not a hayama-linear-unpenalized model");
  if (j.value("version", 0) != 1) throw Error(ErrorCode::VersionMismatch, "unsupported linear model version");
  try {
    LinearModel m;
    m.intercept = j.at("intercept");
    m.weights = j.at("weights").get<std::vector<double>>();
    for (const auto& s : j.at("column_scaling")) m.scaling.push_back({s.at(0).get<double>(), s.at(1).get<double>()});
    m.iterations = j.value("iterations", 0);
    m.converged = j.value("converged", false);
    read_feature_space(j.at("feature_space"), m.feature_names, m.n_binary, m.n_dense);
    if (m.weights.size() != m.feature_names.size() || m.scaling.size() != m.n_dense)
      throw Error(ErrorCode::Integrity, "linear model: weight/feature counts disagree");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::BadFormat, std::string("linear model: ") + e.what());
  }
}

}  // namespace hayama::boost
