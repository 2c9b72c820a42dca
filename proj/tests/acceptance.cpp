// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Criteria are selected by number on the command line
// (default: all).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <span>
#include <sstream>
#include <string>

#include "hayama/boosted.hpp"
#include "hayama/error.hpp"
#include "hayama/lasso.hpp"
#include "hayama/metrics.hpp"
#include "hayama/pipeline.hpp"
#include "hayama/scanner.hpp"
#include "hayama/synth.hpp"
#include "hayama/yara.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace hayama;
using hayama::learn::DesignMatrix;
using hayama::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// ---- 1. harvest ------------------------------------------------------------

Outcome harvest_fidelity() {
  Outcome o;
  fs::path fixture = testing::fixture_dir() / "anubi";
  auto cat = yara::harvest({fixture});
  o.require(cat.size() == 20, "expected 20 sub-signatures, got " + std::to_string(cat.size()));

  const std::string quoted = "/c \"wmic product where name=\"ESET NOD32 Antivirus\" call uninstall /nointeractive \"";
  bool found = false;
  for (const auto& e : cat.entries) found = found || std::string(e.pattern.begin(), e.pattern.end()) == quoted;
  o.require(found, "escaped-quote string not decoded to raw bytes");

  Bytes raw = read_file(fixture / "crime_win_ransom_anubi.yara");
  std::string text(raw.begin(), raw.end());
  auto base = yara::build_catalog(yara::parse_rule_file("anubi.yara", text).rules);
  auto start = text.find("condition:");
  auto end = text.rfind('}');
  for (std::string c : {"true", "false", "all of them", "$av0 and not $cmd1", "filesize < 1KB and #ransom0 > 9"}) {
    std::string mutated = text.substr(0, start) + "condition:\n        " + c + "\n" + text.substr(end);
    auto m = yara::build_catalog(yara::parse_rule_file("anubi.yara", mutated).rules);
    o.require(m.entries == base.entries, "condition '" + c + "' changed the catalog");
  }
  o.detail = o.pass ? "20 sub-signatures, escaped quotes decoded, 5 condition mutations inert" : o.detail;
  return o;
}

// ---- 2. scanner --------------------------------------------------------------

Outcome scanner_oracle() {
  Outcome o;
  std::mt19937_64 rng(20240601);
  std::set<std::string> kinds_seen;
  std::size_t matches = 0;
  for (int trial = 0; trial < 1000 && o.pass; ++trial) {
    std::size_t n_patterns = 1 + rng() % 200;
    std::size_t data_len = trial % 10 == 0 ? 64 * 1024 : rng() % (64 * 1024 + 1);
    auto cat = oracle::random_catalog(rng, n_patterns, 1, 12);
    for (const auto& e : cat.entries) {
      kinds_seen.insert(std::string(yara::to_string(e.kind)));
      for (const auto& m : yara::modifier_names(e.modifiers)) kinds_seen.insert(m);
    }
    auto data = oracle::random_data(rng, data_len);
    auto a = scan::PatternAutomaton::compile(cat);
    auto got = a.scan_bytes(data);
    auto want = oracle::naive_scan(cat, data);
    matches += want.size();
    o.require(got == want, "trial " + std::to_string(trial) + ": automaton differs from naive search");
  }
  for (std::string k : {"text", "hex_wild", "nocase", "wide", "fullword"})
    o.require(kinds_seen.count(k) == 1, "random catalogs never produced " + k);

  TempDir tmp("accept-scan");
  for (int trial = 0; trial < 40 && o.pass; ++trial) {
    auto cat = oracle::random_catalog(rng, 1 + rng() % 200, 1, 16);
    auto a = scan::PatternAutomaton::compile(cat);
    std::size_t len = trial < 4 ? 5 * 1024 * 1024 + rng() % 4096 : rng() % (256 * 1024);
    auto data = oracle::random_data(rng, len);
    write_file(tmp / "f", std::span<const std::uint8_t>(data));
    auto whole = a.scan_bytes(data);
    for (std::size_t chunk : {a.max_pattern_len(), std::size_t{4096}, std::size_t{4} << 20})
      o.require(a.scan_file(tmp / "f", chunk) == whole,
                "chunk size " + std::to_string(chunk) + " differs from the unchunked scan");
  }
  if (o.pass) o.detail = "1000 trials equal naive search (" + std::to_string(matches) + " hits); 40 files x 3 chunk sizes";
  return o;
}

// ---- 3. lasso ----------------------------------------------------------------

lasso::PreparedDesign all_penalized(DesignMatrix x) {
  lasso::PreparedDesign d;
  d.roles.assign(x.width(), lasso::ColumnRole::Penalized);
  d.x = std::move(x);
  return d;
}

// Smooth-part gradient by direct summation over x.value.
std::vector<double> direct_gradient(const DesignMatrix& x, const std::vector<std::uint8_t>& y,
                                    const std::vector<double>& w, double b) {
  std::vector<double> g(x.width() + 1, 0.0);
  for (std::size_t i = 0; i < x.n_rows; ++i) {
    double m = b;
    for (std::size_t j = 0; j < x.width(); ++j) m += w[j] * x.value(i, j);
    double r = 1.0 / (1.0 + std::exp(-m)) - y[i];
    for (std::size_t j = 0; j < x.width(); ++j) g[j] += r * x.value(i, j);
    g[x.width()] += r;
  }
  for (auto& v : g) v /= static_cast<double>(x.n_rows);
  return g;
}

Outcome lasso_correctness() {
  Outcome o;
  std::mt19937_64 rng(31337);
  std::normal_distribution<double> gauss;

  double worst_fd = 0;
  for (int trial = 0; trial < 100; ++trial) {
    auto x = testing::random_design(rng, 5 + rng() % 40, rng() % 5, 1 + rng() % 3);
    std::vector<double> w(x.width());
    for (auto& v : w) v = gauss(rng);
    double b = gauss(rng);
    auto y = testing::logistic_labels(rng, x, w, b);
    std::vector<std::uint8_t> mask(x.width(), 1);
    auto obj = lasso::logistic_objective(w, b, x, y, 0.0, mask);
    auto f = [&](const std::vector<double>& ww, double bb) {
      return lasso::logistic_objective(ww, bb, x, y, 0.0, mask).smooth;
    };
    const double h = 1e-5;
    for (std::size_t j = 0; j <= w.size(); ++j) {
      auto wp = w, wm = w;
      double bp = b, bm = b;
      (j < w.size() ? wp[j] : bp) += h;
      (j < w.size() ? wm[j] : bm) -= h;
      double fd = (f(wp, bp) - f(wm, bm)) / (2 * h);
      double an = j < w.size() ? obj.gradient[j] : obj.intercept_gradient;
      double rel = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-2});
      worst_fd = std::max(worst_fd, rel);
    }
  }
  o.require(worst_fd <= 1e-6, "finite-difference relative error " + fmt("%.3g", worst_fd));

  double worst_kkt = 0;
  for (int trial = 0; trial < 30; ++trial) {
    auto x = testing::random_design(rng, 80 + rng() % 120, 12, 2, 0.25);
    std::vector<double> w(x.width());
    for (auto& v : w) v = rng() % 3 == 0 ? 2 * gauss(rng) : 0.0;
    auto y = testing::logistic_labels(rng, x, w, 0.2 * gauss(rng));
    auto d = all_penalized(x);
    double lmax = lasso::lambda_max(d, y, lasso::null_model(d, y));
    for (double frac : {0.5, 0.1, 0.01}) {
      double lambda = lmax * frac;
      auto m = lasso::fit_lasso(d, y, lambda);
      o.require(m.converged, "solver did not converge");
      auto wd = m.dense_weights();
      auto g = direct_gradient(x, y, wd, m.intercept);
      double v = std::abs(g.back());
      for (std::size_t j = 0; j < wd.size(); ++j)
        v = std::max(v, wd[j] == 0 ? std::max(0.0, std::abs(g[j]) - lambda)
                                   : std::abs(g[j] + lambda * (wd[j] > 0 ? 1 : -1)));
      worst_kkt = std::max(worst_kkt, v);
    }
  }
  o.require(worst_kkt <= 1e-4, "KKT violation " + fmt("%.3g", worst_kkt));

  for (int trial = 0; trial < 30; ++trial) {
    auto x = testing::random_design(rng, 50 + rng() % 50, 10, trial % 2 ? 2 : 0, 0.3);
    std::vector<double> w(x.width(), 0.0);
    w[0] = 1.5;
    auto y = testing::logistic_labels(rng, x, w, -0.3);
    auto d = x.n_dense ? all_penalized(x) : lasso::prepare_independent(x);
    double lmax = lasso::lambda_max(d, y, lasso::null_model(d, y));
    double ybar = static_cast<double>(std::count(y.begin(), y.end(), 1)) / static_cast<double>(y.size());
    for (double scale : {1.0, 1.01, 4.0}) {
      auto m = lasso::fit_lasso(d, y, lmax * scale);
      o.require(m.weights.empty(), "non-zero weight at lambda >= lambda_max");
      o.require(std::abs(m.intercept - std::log(ybar / (1 - ybar))) <= 1e-12, "null intercept is not logit(mean y)");
    }
  }

  double worst_grid = 0;
  for (int trial = 0; trial < 6; ++trial) {
    auto x = trial % 2 ? testing::random_design(rng, 40, 2, 0, 0.5) : testing::random_design(rng, 40, 0, 2);
    auto y = testing::logistic_labels(rng, x, {1.0, -0.7}, 0.2);
    double lambda = trial < 3 ? 0.02 : 0.05;
    auto m = lasso::fit_lasso(all_penalized(x), y, lambda);
    double ours = oracle::l1_logistic_objective(x, y, m.dense_weights(), m.intercept, lambda);
    double grid = oracle::grid_minimum_2d(x, y, lambda);
    worst_grid = std::max(worst_grid, std::abs(ours - grid));
  }
  o.require(worst_grid <= 1e-3, "d=2 objective gap " + fmt("%.3g", worst_grid));
  if (o.pass)
    o.detail = "fd rel " + fmt("%.2g", worst_fd) + ", kkt " + fmt("%.2g", worst_kkt) + ", grid gap " +
               fmt("%.2g", worst_grid) + ", null model exact above lambda_max";
  return o;
}

// ---- 4. boosted trees ------------------------------------------------------------

double train_accuracy(const boost::BoostedEnsemble& m, const DesignMatrix& x, const std::vector<std::uint8_t>& y) {
  auto p = boost::predict_proba(m, x);
  std::size_t ok = 0;
  for (std::size_t i = 0; i < p.size(); ++i) ok += (p[i] >= 0.5) == (y[i] == 1);
  return static_cast<double>(ok) / static_cast<double>(p.size());
}

Outcome gbdt_correctness() {
  Outcome o;
  std::mt19937_64 rng(4242);
  std::size_t splits = 0, fixtures = 0;
  for (int trial = 0; trial < 200 && o.pass; ++trial) {
    std::size_t n = 4 + rng() % 29, nb = rng() % 3, nd = 1 + rng() % 2;
    auto x = testing::random_design(rng, n, nb, nd, 0.4);
    if (trial % 3 == 0)
      for (auto& v : x.dense) v = std::round(v * 2) / 2;
    std::vector<double> w(x.width());
    for (auto& v : w) v = 2 * (testing::uniform01(rng) - 0.5);
    auto y = testing::logistic_labels(rng, x, w, 0.0);
    boost::TrainConfig cfg;
    cfg.n_trees = 4;
    cfg.max_depth = 1 + static_cast<int>(rng() % 3);
    cfg.n_bins = static_cast<int>(n);
    cfg.min_child_hessian = trial % 2 ? 0.0 : 0.3;
    cfg.l2_leaf = trial % 4 == 0 ? 0.0 : 1.0;
    cfg.learning_rate = 0.3;
    auto m = boost::fit_gbdt(x, y, cfg);
    auto audit = oracle::audit_ensemble(m, x, y);
    o.require(audit.failures.empty(), "fixture " + std::to_string(trial) + ": " +
                                          (audit.failures.empty() ? "" : audit.failures.front()));
    o.require(oracle::non_increasing(m.train_logloss), "train log-loss increased on fixture " + std::to_string(trial));
    splits += audit.splits_checked;
    ++fixtures;
  }
  o.require(splits > 200, "too few splits exercised");

  for (int trial = 0; trial < 10; ++trial) {
    auto x = testing::random_design(rng, 400, 20, 5, 0.1);
    std::vector<double> w(25, 0.0);
    w[0] = 2;
    w[3] = -1;
    w[21] = 1;
    auto y = testing::logistic_labels(rng, x, w, -0.5);
    boost::TrainConfig cfg;
    cfg.n_trees = 50;
    cfg.seed = static_cast<std::uint64_t>(trial);
    if (trial % 2) cfg.row_subsample = 0.7;
    auto m = boost::fit_gbdt(x, y, cfg);
    o.require(oracle::non_increasing(m.train_logloss), "train log-loss increased on a mixed fixture");
    ++fixtures;
  }

  DesignMatrix xor_x;
  std::vector<std::uint8_t> xor_y;
  xor_x.n_binary = 2;
  xor_x.names = {"a", "b"};
  for (int c = 0; c < 10; ++c)
    for (std::uint32_t a = 0; a < 2; ++a)
      for (std::uint32_t b = 0; b < 2; ++b) {
        if (a) xor_x.cols.push_back(0);
        if (b) xor_x.cols.push_back(1);
        xor_x.offsets.push_back(xor_x.cols.size());
        xor_y.push_back(static_cast<std::uint8_t>(a ^ b));
        ++xor_x.n_rows;
      }
  boost::TrainConfig d1, d2;
  d1.max_depth = 1;
  d2.max_depth = 2;
  double acc1 = train_accuracy(boost::fit_gbdt(xor_x, xor_y, d1), xor_x, xor_y);
  double acc2 = train_accuracy(boost::fit_gbdt(xor_x, xor_y, d2), xor_x, xor_y);
  o.require(acc1 <= 0.75, "XOR depth 1 accuracy " + fmt("%.3f", acc1));
  o.require(acc2 == 1.0, "XOR depth 2 accuracy " + fmt("%.3f", acc2));
  if (o.pass)
    o.detail = std::to_string(splits) + " splits match enumeration over " + std::to_string(fixtures - 10) +
               " fixtures (n <= 32); loss monotone on " + std::to_string(fixtures) + "; XOR depth1 " +
               fmt("%.2f", acc1) + " depth2 " + fmt("%.2f", acc2);
  return o;
}

// ---- 5. metrics ----------------------------------------------------------------

Outcome metrics_oracle() {
  Outcome o;
  std::mt19937_64 rng(777);
  double worst = 0;
  for (int trial = 0; trial < 500; ++trial) {
    std::size_t n = 2 + rng() % 400;
    std::vector<double> s(n);
    for (auto& v : s) v = trial % 2 ? testing::uniform01(rng) : static_cast<double>(rng() % 9) / 8.0;
    std::vector<std::uint8_t> y(n);
    for (auto& v : y) v = rng() % 2;
    y[0] = 1;
    y[1] = 0;
    auto pts = oracle::roc_by_enumeration(s, y);
    auto r = metrics::roc_and_partial_auc(s, y, 0.01);
    worst = std::max(worst, std::abs(r.auc - oracle::trapezoid_auc(pts, 1.0)));
    worst = std::max(worst, std::abs(r.partial_auc - oracle::trapezoid_auc(pts, 0.01) / 0.01));
  }
  o.require(worst <= 1e-12, "ROC deviation " + fmt("%.3g", worst));

  double worst_ecdf = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t n = 1 + rng() % 100, d = 1 + rng() % 40;
    scan::OccurrenceMatrix m;
    m.n_cols = d;
    for (std::size_t c = 0; c < d; ++c) m.col_ids.push_back("f" + std::to_string(c));
    std::vector<std::vector<std::uint32_t>> rows(n);
    std::vector<std::uint8_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::uint32_t c = 0; c < d; ++c)
        if (rng() % 3 == 0) rows[i].push_back(c);
      m.append_row(rows[i]);
      labels[i] = static_cast<std::uint8_t>(rng() % 2);
    }
    m.labels = labels;
    for (std::uint8_t cls : {0, 1}) {
      std::vector<std::uint64_t> counts(d, 0);
      for (std::size_t i = 0; i < n; ++i)
        if (labels[i] == cls)
          for (auto c : rows[i]) ++counts[c];
      auto want = oracle::ecdf_by_counting(counts);
      auto got = metrics::occurrence_ecdf(m, cls);
      o.require(got.size() == want.size(), "ECDF support size differs");
      for (std::size_t i = 0; i < std::min(got.size(), want.size()); ++i) {
        o.require(got[i].count == want[i].first, "ECDF support differs");
        worst_ecdf = std::max(worst_ecdf, std::abs(got[i].proportion - want[i].second));
      }
    }
  }
  o.require(worst_ecdf <= 1e-12, "ECDF deviation " + fmt("%.3g", worst_ecdf));

  double worst_corr = 0;
  std::normal_distribution<double> gauss;
  for (int trial = 0; trial < 50; ++trial) {
    std::size_t n = 10 + rng() % 200;
    std::vector<std::vector<double>> cols(6, std::vector<double>(n));
    for (auto& col : cols)
      for (auto& v : col) v = trial % 2 ? gauss(rng) : static_cast<double>(rng() % 2);
    for (std::size_t i = 0; i < n; ++i) cols[5][i] += 0.5 * cols[1][i];
    auto r = metrics::correlation_matrix({cols[0], cols[1], cols[2]}, {cols[3], cols[4], cols[5]});
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j < 6; ++j)
        worst_corr = std::max(worst_corr, std::abs(r.at(i, j) - oracle::pearson(cols[i], cols[j])));
  }
  o.require(worst_corr <= 1e-12, "correlation deviation " + fmt("%.3g", worst_corr));
  if (o.pass)
    o.detail = "500 ROC sets max dev " + fmt("%.2g", worst) + ", ECDF " + fmt("%.2g", worst_ecdf) + ", corr " +
               fmt("%.2g", worst_corr);
  return o;
}

// ---- 6. synthetic experiment ------------------------------------------------------

double accuracy_of(const std::vector<pipeline::CurveRow>& rows, const std::string& series, std::size_t k) {
  for (const auto& r : rows)
    if (r.series == series && r.k == k) return r.accuracy;
  throw Error(ErrorCode::Validation, "missing curve row " + series + " k=" + std::to_string(k));
}

Outcome synthetic_experiment() {
  Outcome o;
  const std::vector<std::size_t> ks{10, 50, 100};
  int pass_a = 0, pass_b = 0, pass_c = 0;
  std::ostringstream log;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    TempDir dir("accept-synth");
    synth::SyntheticSpec spec;
    spec.seed = seed;
    auto gen = synth::generate_synthetic(spec, dir / "corpus");

    pipeline::PipelineConfig cfg;
    cfg.seed = seed;
    cfg.mode = lasso::SelectionMode::Conditional;
    cfg.target_k = ks;
    pipeline::Corpus corpus;
    corpus.manifest = data::load_manifest(gen.manifest);
    corpus.matrix = scan::scan_corpus(scan::PatternAutomaton::compile(yara::harvest({gen.rules_dir})), corpus.manifest);
    corpus.side = data::load_side_features(gen.side_features, corpus.manifest);
    pipeline::bind_corpus(corpus);

    auto mode = pipeline::run_mode(corpus, cfg);
    auto cmp = pipeline::run_comparison(corpus, cfg);

    double base = accuracy_of(mode.rows, "baseline", 0);
    double comb = accuracy_of(mode.rows, "combined:gbdt", 100);
    bool a = comb > base;
    bool b = true, c = true;
    log << "    seed " << seed << ": baseline " << fmt("%.3f", base) << " combined@100 " << fmt("%.3f", comb);
    for (auto k : ks) {
      double gb = accuracy_of(cmp, "lasso:gbdt", k);
      double lin = accuracy_of(cmp, "lasso:linear", k);
      double top = accuracy_of(cmp, "top_accuracy:linear", k);
      b = b && gb > lin;
      c = c && lin > top;
      log << " | k" << k << " gbdt " << fmt("%.3f", gb) << " lasso-lin " << fmt("%.3f", lin) << " topacc-lin "
          << fmt("%.3f", top);
    }
    log << " | a=" << a << " b=" << b << " c=" << c << "\n";
    pass_a += a;
    pass_b += b;
    pass_c += c;
  }
  std::fputs(log.str().c_str(), stdout);
  o.require(pass_a >= 4, "combined beats baseline in only " + std::to_string(pass_a) + "/5 seeds");
  o.require(pass_b >= 4, "GBDT beats linear at every k in only " + std::to_string(pass_b) + "/5 seeds");
  o.require(pass_c >= 4, "Lasso beats top-accuracy at every k in only " + std::to_string(pass_c) + "/5 seeds");
  if (o.pass)
    o.detail = "(a) " + std::to_string(pass_a) + "/5, (b) " + std::to_string(pass_b) + "/5, (c) " +
               std::to_string(pass_c) + "/5 seeds";
  else
    o.detail += " [(a) " + std::to_string(pass_a) + "/5, (b) " + std::to_string(pass_b) + "/5, (c) " +
                std::to_string(pass_c) + "/5]";
  return o;
}

// ---- 7. PLS --------------------------------------------------------------------

Outcome pls_sanity() {
  Outcome o;
  std::mt19937_64 rng(99);
  std::normal_distribution<double> gauss;
  double worst_copy = 0;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::vector<double>> block(1 + trial % 5, std::vector<double>(500));
    for (auto& col : block)
      for (auto& v : col) v = rng() % 4 == 0;
    worst_copy = std::max(worst_copy, std::abs(metrics::pls_max_correlation(block, block) - 1.0));
  }
  o.require(worst_copy <= 1e-9, "copy block deviates by " + fmt("%.3g", worst_copy));

  // side = sum of 5 fair coins + N(0, s2); var(sum) = 1.25, so the population
  // correlation of the best linear combination is sqrt(1.25 / (1.25 + s2)) = 0.7.
  const double s2 = 1.25 / 0.49 - 1.25;
  double worst = 0;
  for (int seed = 0; seed < 5; ++seed) {
    std::vector<std::vector<double>> yara(5, std::vector<double>(2000));
    std::vector<double> side(2000, 0.0);
    for (std::size_t i = 0; i < 2000; ++i) {
      for (auto& col : yara) {
        col[i] = static_cast<double>(rng() % 2);
        side[i] += col[i];
      }
      side[i] += std::sqrt(s2) * gauss(rng);
    }
    worst = std::max(worst, std::abs(metrics::pls_max_correlation(yara, {side}) - 0.7));
  }
  o.require(worst <= 0.05, "analytic construction deviates by " + fmt("%.3f", worst));
  if (o.pass) o.detail = "copy block dev " + fmt("%.2g", worst_copy) + ", 0.7 construction max dev " + fmt("%.3f", worst);
  return o;
}

// ---- 8. determinism ---------------------------------------------------------------

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    Bytes b = read_file(e.path());
    out[fs::relative(e.path(), root).string()] = std::string(b.begin(), b.end());
  }
  return out;
}

Outcome determinism() {
  Outcome o;
  TempDir dir("accept-det");
  const fs::path work = dir / "run";
  const std::string cli = HAYAMA_CLI_PATH;
  const std::vector<std::string> commands = {
      "synth --out corpus --n-benign 150 --n-malware 150 --patterns 120 --file-size-min 512 --file-size-max 2048 "
      "--plant-rate-malware 0.3 --plant-rate-benign 0.05",
      "harvest --rules corpus/rules --out cat.jsonl",
      "scan --catalog cat.jsonl --manifest corpus/manifest.csv --out m.hym --chunk-size 1024 --report scan.jsonl",
      "select --matrix m.hym --manifest corpus/manifest.csv --side corpus/side.csv --mode conditional --k 5,10,20 "
      "--out sel.json",
      "select --matrix m.hym --manifest corpus/manifest.csv --side corpus/side.csv --mode stacked --k 5,10 "
      "--out sel_stacked.json",
      "train --matrix m.hym --manifest corpus/manifest.csv --side corpus/side.csv --selection sel.json --k 10 "
      "--out model.json",
      "train --matrix m.hym --manifest corpus/manifest.csv --selection sel.json --k 10 --learner linear --yara-only "
      "--out linear.json",
      "eval --matrix m.hym --manifest corpus/manifest.csv --side corpus/side.csv --model model.json --split test "
      "--out eval.json --curve roc.csv",
      "eval --matrix m.hym --manifest corpus/manifest.csv --model linear.json --out eval_linear.json",
      "analyze stats --matrix m.hym --manifest corpus/manifest.csv --top 20 --out stats.csv",
      "analyze ecdf --matrix m.hym --manifest corpus/manifest.csv --class malware --out ecdf.csv",
      "analyze corr --matrix m.hym --manifest corpus/manifest.csv --side corpus/side.csv --selection sel.json "
      "--k 10 --out corr.csv",
      "analyze pls --matrix m.hym --manifest corpus/manifest.csv --side corpus/side.csv --selection sel.json "
      "--k 10 --out pls.json",
      "--config pipeline.conf --set seed=3 pipeline",
  };
  auto run_all = [&]() {
    fs::create_directories(work);
    write_file(work / "pipeline.conf",
               std::string_view("rules_dir = corpus/rules\nmanifest = corpus/manifest.csv\n"
                                "side_features = corpus/side.csv\ntarget_k = 5, 10\nn_trees = 30\n"
                                "comparison = true\nworkdir = out\n"));
    for (const auto& c : commands) {
      std::string line = "cd '" + work.string() + "' && '" + cli + "' --seed 7 " + c + " > /dev/null 2>&1";
      int rc = std::system(line.c_str());
      o.require(rc == 0, "command failed: hayama " + c);
      if (rc != 0) return;
    }
  };
  run_all();
  auto first = snapshot(work);
  o.require(first.count("out/report_conditional.json") == 1, "pipeline report missing");
  o.require(first.count("model.json.prov.json") == 1, "provenance sidecar missing");
  fs::remove_all(work);
  run_all();
  auto second = snapshot(work);
  o.require(first.size() == second.size(), "artifact sets differ between runs");
  std::size_t differing = 0;
  std::string example;
  for (const auto& [name, bytes] : first) {
    auto it = second.find(name);
    if (it == second.end() || it->second != bytes) {
      ++differing;
      if (example.empty()) example = name;
    }
  }
  o.require(differing == 0, std::to_string(differing) + " artifacts differ, e.g. " + example);

  // Rerunning into the populated directory must be a no-op. synth is skipped:
  // it refuses an existing corpus without --force.
  if (o.pass) {
    for (const auto& c : std::span(commands).subspan(1)) {
      std::string line = "cd '" + work.string() + "' && '" + cli + "' --seed 7 " + c + " > /dev/null 2>&1";
      o.require(std::system(line.c_str()) == 0, "rerun into a populated workdir failed: hayama " + c);
    }
    o.require(snapshot(work) == second, "rerun changed existing artifacts");
  }
  if (o.pass)
    o.detail = std::to_string(first.size()) + " files from " + std::to_string(commands.size()) +
               " commands byte-identical across reruns";
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "harvest fidelity", 1, harvest_fidelity},
      {2, "scanner oracle", 60, scanner_oracle},
      {3, "lasso correctness", 120, lasso_correctness},
      {4, "GBDT correctness", 60, gbdt_correctness},
      {5, "metrics oracle", 30, metrics_oracle},
      {6, "synthetic experiment", 900, synthetic_experiment},
      {7, "PLS sanity", 60, pls_sanity},
      {8, "determinism", 300, determinism},
  };
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

  int failed = 0;
  for (const auto& c : criteria) {
    if (!wanted.empty() && !wanted.count(c.id)) continue;
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.pass && secs > c.budget_s) {
      o.pass = false;
      o.detail = "took " + fmt("%.1f", secs) + " s, budget " + fmt("%.0f", c.budget_s) + " s";
    }
    std::printf("criterion %d %-22s %s  (%.2f s) %s\n", c.id, c.name, o.pass ? "PASS" : "FAIL", secs,
                o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed ? 1 : 0;
}
