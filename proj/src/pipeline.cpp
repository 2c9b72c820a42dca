#include "hayama/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstring>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hayama/design.hpp"
#include "hayama/error.hpp"
#include "hayama/util.hpp"

namespace hayama::pipeline {
namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Learner learner) { return learner == Learner::Gbdt ? "gbdt" : "linear"; }

Learner learner_from_string(std::string_view name) {
  if (name == "gbdt") return Learner::Gbdt;
  if (name == "linear") return Learner::Linear;
  throw Error(ErrorCode::Validation, "unknown learner '" + std::string(name) + "' (gbdt|linear)");
}

// ---- config ----------------------------------------------------------------------------

namespace {

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    auto comma = s.find(',', start);
    auto item = trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  auto s = trim(text);
  auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || end != s.data() + s.size() || s.empty())
    throw Error(ErrorCode::Validation, "config: bad value for " + std::string(key) + ": '" + s + "'");
  return value;
}

bool parse_bool(std::string_view key, std::string_view text) {
  auto s = trim(text);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw Error(ErrorCode::Validation, "config: bad boolean for " + std::string(key) + ": '" + s + "'");
}

fs::path resolve(const fs::path& base, std::string_view text) {
  fs::path p{trim(text)};
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

void apply_setting_at(PipelineConfig& c, std::string_view key, std::string_view value, const fs::path& base) {
  if (key == "rules_dir") {
    c.rules_dirs.clear();
    for (const auto& item : split_list(value)) c.rules_dirs.push_back(resolve(base, item));
  } else if (key == "manifest") {
    c.manifest = resolve(base, value);
  } else if (key == "side_features") {
    c.side_features = resolve(base, value);
  } else if (key == "baseline_scores") {
    c.baseline_scores = resolve(base, value);
  } else if (key == "workdir") {
    c.workdir = resolve(base, value);
  } else if (key == "mode") {
    c.mode = lasso::mode_from_string(trim(value));
  } else if (key == "target_k") {
    c.target_k.clear();
    for (const auto& item : split_list(value)) c.target_k.push_back(parse_number<std::size_t>(key, item));
  } else if (key == "learner") {
    c.learner = learner_from_string(trim(value));
  } else if (key == "chunk_size") {
    c.chunk_size = parse_number<std::size_t>(key, value);
  } else if (key == "threads") {
    c.threads = parse_number<std::size_t>(key, value);
  } else if (key == "n_trees") {
    c.gbdt.n_trees = parse_number<int>(key, value);
  } else if (key == "max_depth") {
    c.gbdt.max_depth = parse_number<int>(key, value);
  } else if (key == "learning_rate") {
    c.gbdt.learning_rate = parse_number<double>(key, value);
  } else if (key == "min_child_hessian") {
    c.gbdt.min_child_hessian = parse_number<double>(key, value);
  } else if (key == "l2_leaf") {
    c.gbdt.l2_leaf = parse_number<double>(key, value);
  } else if (key == "n_bins") {
    c.gbdt.n_bins = parse_number<int>(key, value);
  } else if (key == "min_split_gain") {
    c.gbdt.min_split_gain = parse_number<double>(key, value);
  } else if (key == "row_subsample") {
    c.gbdt.row_subsample = parse_number<double>(key, value);
  } else if (key == "col_subsample") {
    c.gbdt.col_subsample = parse_number<double>(key, value);
  } else if (key == "baseline_folds") {
    c.baseline_folds = parse_number<std::size_t>(key, value);
  } else if (key == "penalize_baseline") {
    c.penalize_baseline = parse_bool(key, value);
  } else if (key == "fpr_cap") {
    c.fpr_cap = parse_number<double>(key, value);
  } else if (key == "comparison") {
    c.comparison = parse_bool(key, value);
  } else if (key == "seed") {
    c.seed = parse_number<std::uint64_t>(key, value);
  } else {
    throw Error(ErrorCode::Validation, "config: unknown key '" + std::string(key) + "'");
  }
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "," : "") + items[i];
  return out;
}

}  // namespace

void PipelineConfig::validate() const {
  auto fail = [](const std::string& m) { throw Error(ErrorCode::Validation, "config: " + m); };
  if (target_k.empty()) fail("target_k is empty");
  for (std::size_t i = 0; i < target_k.size(); ++i) {
    if (target_k[i] == 0) fail("target_k entries must be positive");
    if (i > 0 && target_k[i] <= target_k[i - 1]) fail("target_k must be strictly ascending");
  }
  if (mode == lasso::SelectionMode::Stacked && side_features.empty()) fail("stacked mode requires side_features");
  if (mode == lasso::SelectionMode::Conditional && side_features.empty() && baseline_scores.empty())
    fail("conditional mode requires side_features or baseline_scores");
  if (chunk_size == 0) fail("chunk_size must be positive");
  if (threads == 0) fail("threads must be positive");
  if (baseline_folds < 2) fail("baseline_folds must be at least 2");
  if (!(fpr_cap > 0 && fpr_cap <= 1)) fail("fpr_cap must lie in (0, 1]");
  gbdt.validate();
}

void apply_setting(PipelineConfig& config, std::string_view key, std::string_view value) {
  apply_setting_at(config, trim(key), value, {});
}

PipelineConfig parse_config(std::string_view text, const fs::path& base_dir, PipelineConfig config) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    auto body = trim(line);
    if (body.empty()) continue;
    auto eq = body.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::Validation, "config line " + std::to_string(line_no) + ": expected key = value");
    apply_setting_at(config, trim(std::string_view(body).substr(0, eq)), std::string_view(body).substr(eq + 1),
                     base_dir);
  }
  return config;
}

PipelineConfig load_config(const fs::path& path, PipelineConfig config) {
  auto bytes = read_file(path);
  return parse_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()),
                      path.parent_path(), std::move(config));
}

std::string config_to_text(const PipelineConfig& c) {
  std::vector<std::string> rules, ks;
  for (const auto& r : c.rules_dirs) rules.push_back(r.generic_string());
  for (auto k : c.target_k) ks.push_back(std::to_string(k));
  std::ostringstream out;
  out << "rules_dir = " << join(rules) << "\n"
      << "manifest = " << c.manifest.generic_string() << "\n"
      << "side_features = " << c.side_features.generic_string() << "\n"
      << "baseline_scores = " << c.baseline_scores.generic_string() << "\n"
      << "mode = " << lasso::to_string(c.mode) << "\n"
      << "target_k = " << join(ks) << "\n"
      << "learner = " << to_string(c.learner) << "\n"
      << "chunk_size = " << c.chunk_size << "\n"
      << "n_trees = " << c.gbdt.n_trees << "\n"
      << "max_depth = " << c.gbdt.max_depth << "\n"
      << "learning_rate = " << fmt(c.gbdt.learning_rate) << "\n"
      << "min_child_hessian = " << fmt(c.gbdt.min_child_hessian) << "\n"
      << "l2_leaf = " << fmt(c.gbdt.l2_leaf) << "\n"
      << "n_bins = " << c.gbdt.n_bins << "\n"
      << "min_split_gain = " << fmt(c.gbdt.min_split_gain) << "\n"
      << "row_subsample = " << fmt(c.gbdt.row_subsample) << "\n"
      << "col_subsample = " << fmt(c.gbdt.col_subsample) << "\n"
      << "baseline_folds = " << c.baseline_folds << "\n"
      << "penalize_baseline = " << (c.penalize_baseline ? "true" : "false") << "\n"
      << "fpr_cap = " << fmt(c.fpr_cap) << "\n"
      << "comparison = " << (c.comparison ? "true" : "false") << "\n"
      << "seed = " << c.seed << "\n";
  return out.str();
}

// ---- artifacts ---------------------------------------------------------------------------

void write_artifact(const fs::path& path, std::string_view content, bool force) {
  std::error_code ec;
  if (fs::exists(path, ec)) {
    auto existing = read_file(path);
    if (existing.size() == content.size() && std::equal(existing.begin(), existing.end(), content.begin(),
                                                        [](std::uint8_t a, char b) { return a == static_cast<std::uint8_t>(b); }))
      return;
    if (!force) throw Error(ErrorCode::Validation, path.string() + " exists with different content (use --force)");
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  write_file(path, content);
}

std::string content_digest(const fs::path& path) {
  if (!fs::is_directory(path)) return sha256_hex(read_file(path));
  std::vector<std::pair<std::string, fs::path>> files;
  for (const auto& entry : fs::recursive_directory_iterator(path))
    if (entry.is_regular_file()) files.emplace_back(fs::relative(entry.path(), path).generic_string(), entry.path());
  std::sort(files.begin(), files.end());
  std::string listing;
  for (const auto& [rel, full] : files) listing += rel + '\0' + sha256_hex(read_file(full)) + '\n';
  return sha256_hex(as_bytes(listing));
}

std::string provenance_json(std::string_view command, std::string_view settings,
                            const std::vector<std::pair<std::string, fs::path>>& inputs) {
  json in = json::object();
  for (const auto& [name, path] : inputs)
    if (!path.empty()) in[name] = {{"path", path.generic_string()}, {"sha256", content_digest(path)}};
  return json{{"command", command}, {"settings", settings}, {"inputs", in}}.dump(1);
}

WorkdirLock::WorkdirLock(const fs::path& workdir) : path_(workdir / ".hayama.lock") {
  std::error_code ec;
  fs::create_directories(workdir, ec);
  if (ec) throw Error(ErrorCode::Io, "cannot create workdir " + workdir.string() + ": " + ec.message());
  int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    if (errno == EEXIST)
      throw Error(ErrorCode::Validation, "workdir is locked by another run (" + path_.string() + ")");
    throw Error(ErrorCode::Io, "cannot create " + path_.string() + ": " + std::strerror(errno));
  }
  auto pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

WorkdirLock::~WorkdirLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

// ---- stages ----------------------------------------------------------------------------

void bind_corpus(Corpus& corpus) {
  corpus.split = data::align(corpus.matrix, corpus.manifest, corpus.side ? &*corpus.side : nullptr);
  if (corpus.split.train.size() == 0) throw Error(ErrorCode::Validation, "no train rows in the manifest");
}

void require_train_rows(const data::CorpusManifest& manifest, std::span<const std::size_t> rows) {
  for (auto r : rows)
    if (r >= manifest.size() || manifest.records[r].split != data::Split::Train)
      throw Error(ErrorCode::Integrity, "leakage guard: row " + std::to_string(r) + " is not a train row");
}

namespace {

std::vector<std::uint8_t> labels_of(const Corpus& corpus, std::span<const std::size_t> rows) {
  std::vector<std::uint8_t> y;
  y.reserve(rows.size());
  for (auto r : rows) y.push_back(corpus.manifest.records[r].label);
  return y;
}

boost::TrainConfig seeded(const boost::TrainConfig& base, std::uint64_t seed, std::uint64_t salt) {
  auto c = base;
  c.seed = seed * 0x9E3779B97F4A7C15ull + salt;
  return c;
}

learn::DesignMatrix no_columns(std::size_t n_rows) {
  learn::DesignMatrix x;
  x.n_rows = n_rows;
  x.offsets.assign(n_rows + 1, 0);
  return x;
}

const data::SideFeatureTable& side_of(const Corpus& corpus) {
  if (!corpus.side) throw Error(ErrorCode::Validation, "side features are required for this step");
  return *corpus.side;
}

}  // namespace

std::vector<double> out_of_fold_baseline(const Corpus& corpus, std::span<const std::size_t> rows,
                                         const boost::TrainConfig& config, std::size_t folds, std::uint64_t seed) {
  require_train_rows(corpus.manifest, rows);
  const auto& side = side_of(corpus);
  if (folds < 2 || folds > rows.size()) throw Error(ErrorCode::Validation, "baseline folds out of range");
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed ^ 0xF0F0F0F0ull);
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng() % i]);
  std::vector<std::size_t> fold(rows.size());
  for (std::size_t i = 0; i < order.size(); ++i) fold[order[i]] = i % folds;

  std::vector<double> out(rows.size());
  for (std::size_t f = 0; f < folds; ++f) {
    std::vector<std::size_t> fit_rows, held;
    std::vector<std::size_t> held_pos;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (fold[i] == f) {
        held.push_back(rows[i]);
        held_pos.push_back(i);
      } else {
        fit_rows.push_back(rows[i]);
      }
    }
    auto model = boost::fit_gbdt(learn::side_design(side, fit_rows), labels_of(corpus, fit_rows),
                                 seeded(config, seed, 100 + f));
    auto p = boost::predict_proba(model, learn::side_design(side, held));
    for (std::size_t i = 0; i < held.size(); ++i) out[held_pos[i]] = p[i];
  }
  return out;
}

std::string SelectionOutcome::to_json() const {
  json sel = json::array();
  for (const auto& s : sets)
    sel.push_back({{"k", s.k},
                   {"lambda", s.lambda_used},
                   {"short_count", s.short_count},
                   {"columns", s.columns},
                   {"feature_ids", s.feature_ids}});
  return json{{"format", "hayama-selection"},
              {"version", 1},
              {"mode", lasso::to_string(mode)},
              {"diagnostics", diagnostics},
              {"path", {{"lambdas", path.lambdas}, {"nonzeros", path.nonzeros}, {"picks", path.picks}}},
              {"selections", sel}}
      .dump(1);
}

SelectionOutcome select_features(const Corpus& corpus, const PipelineConfig& config) {
  const auto& rows = corpus.split.train.rows;
  require_train_rows(corpus.manifest, rows);
  const auto labels = labels_of(corpus, rows);
  auto binary = learn::binary_design(corpus.matrix, rows);

  lasso::PreparedDesign design;
  switch (config.mode) {
    case lasso::SelectionMode::Independent:
      design = lasso::prepare_independent(std::move(binary));
      break;
    case lasso::SelectionMode::Conditional: {
      std::vector<double> f0;
      if (corpus.baseline_scores) {
        for (auto r : rows) f0.push_back((*corpus.baseline_scores)[r]);
      } else {
        f0 = out_of_fold_baseline(corpus, rows, config.gbdt, config.baseline_folds, config.seed);
      }
      design = lasso::prepare_conditional(std::move(binary), f0, config.penalize_baseline);
      break;
    }
    case lasso::SelectionMode::Stacked:
      design = lasso::prepare_stacked(std::move(binary), learn::side_design(side_of(corpus), rows));
      break;
  }

  SelectionOutcome out;
  out.mode = design.mode;
  out.diagnostics = design.diagnostics;
  out.path = lasso::lambda_path(design, labels, config.target_k);
  for (std::size_t i = 0; i < config.target_k.size(); ++i)
    out.sets.push_back(lasso::select_top_k(out.path.models[out.path.picks[i]], config.target_k[i]));
  return out;
}

std::vector<std::uint32_t> select_by_metric(const Corpus& corpus, metrics::Metric metric, std::size_t k) {
  require_train_rows(corpus.manifest, corpus.split.train.rows);
  auto stats = metrics::per_feature_stats(corpus.matrix, corpus.split.train.rows);
  return metrics::topk_by_metric(stats, metric, k);
}

learn::DesignMatrix feature_design(const Corpus& corpus, std::span<const std::size_t> rows,
                                   std::span<const std::uint32_t> columns, bool with_side) {
  auto x = columns.empty() ? no_columns(rows.size()) : learn::binary_design(corpus.matrix, rows, columns);
  if (with_side) x = learn::hconcat(x, learn::side_design(side_of(corpus), rows));
  return x;
}

metrics::EvalReport fit_and_evaluate(const Corpus& corpus, std::span<const std::uint32_t> columns, bool with_side,
                                     Learner learner, const PipelineConfig& config) {
  const auto& train = corpus.split.train.rows;
  const auto& test = corpus.split.test.rows;
  if (test.empty()) throw Error(ErrorCode::Validation, "no test rows in the manifest");
  require_train_rows(corpus.manifest, train);
  auto x_train = feature_design(corpus, train, columns, with_side);
  auto x_test = feature_design(corpus, test, columns, with_side);
  auto y_train = labels_of(corpus, train);
  std::vector<double> probs;
  if (learner == Learner::Gbdt) {
    auto model = boost::fit_gbdt(x_train, y_train, seeded(config.gbdt, config.seed, 1));
    probs = boost::predict_proba(model, x_test);
  } else {
    auto model = boost::fit_linear_unpenalized(x_train, y_train);
    probs = boost::predict_proba(model, x_test);
  }
  return metrics::evaluate_scores("test", probs, labels_of(corpus, test), config.fpr_cap);
}

std::string curve_to_csv(const std::vector<CurveRow>& rows) {
  std::string out = "series,k,n_selected,accuracy,auc,partial_auc\n";
  for (const auto& r : rows)
    out += r.series + "," + std::to_string(r.k) + "," + std::to_string(r.n_selected) + "," + fmt(r.accuracy) + "," +
           fmt(r.auc) + "," + fmt(r.partial_auc) + "\n";
  return out;
}

namespace {

CurveRow row_of(std::string series, std::size_t k, std::size_t n_selected, const metrics::EvalReport& r) {
  return {std::move(series), k, n_selected, r.accuracy, r.auc, r.partial_auc};
}

}  // namespace

ModeResult run_mode(const Corpus& corpus, const PipelineConfig& config) {
  ModeResult out;
  out.selection = select_features(corpus, config);
  const std::string learner{to_string(config.learner)};
  const bool side = corpus.side.has_value();
  if (side) out.rows.push_back(row_of("baseline", 0, 0, fit_and_evaluate(corpus, {}, true, config.learner, config)));
  for (const auto& set : out.selection.sets) {
    if (side)
      out.rows.push_back(row_of("combined:" + learner, set.k, set.columns.size(),
                                fit_and_evaluate(corpus, set.columns, true, config.learner, config)));
    out.rows.push_back(row_of("yara_only:" + learner, set.k, set.columns.size(),
                              fit_and_evaluate(corpus, set.columns, false, config.learner, config)));
  }
  return out;
}

std::vector<CurveRow> run_comparison(const Corpus& corpus, const PipelineConfig& config) {
  auto independent = config;
  independent.mode = lasso::SelectionMode::Independent;
  auto selection = select_features(corpus, independent);
  std::vector<CurveRow> rows;
  for (const auto& set : selection.sets) {
    rows.push_back(row_of("lasso:gbdt", set.k, set.columns.size(),
                          fit_and_evaluate(corpus, set.columns, false, Learner::Gbdt, config)));
    rows.push_back(row_of("lasso:linear", set.k, set.columns.size(),
                          fit_and_evaluate(corpus, set.columns, false, Learner::Linear, config)));
    for (auto metric : {metrics::Metric::Accuracy, metrics::Metric::Precision, metrics::Metric::Recall}) {
      auto cols = select_by_metric(corpus, metric, set.k);
      rows.push_back(row_of("top_" + std::string(metrics::to_string(metric)) + ":linear", set.k, cols.size(),
                            fit_and_evaluate(corpus, cols, false, Learner::Linear, config)));
    }
  }
  return rows;
}

// ---- full run -----------------------------------------------------------------------------

namespace {

template <typename F>
auto stage(const char* name, F&& body) {
  try {
    return body();
  } catch (const Error& e) {
    throw Error(e.code(), std::string(name) + ": " + e.what());
  }
}

json rows_json(const std::vector<CurveRow>& rows) {
  json out = json::array();
  for (const auto& r : rows)
    out.push_back({{"series", r.series},
                   {"k", r.k},
                   {"n_selected", r.n_selected},
                   {"accuracy", r.accuracy},
                   {"auc", r.auc},
                   {"partial_auc", r.partial_auc}});
  return out;
}

std::string as_text(const Bytes& b) { return std::string(b.begin(), b.end()); }

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config, bool force) {
  config.validate();
  if (config.rules_dirs.empty()) throw Error(ErrorCode::Validation, "config: rules_dir is required");
  if (config.manifest.empty()) throw Error(ErrorCode::Validation, "config: manifest is required");
  WorkdirLock lock(config.workdir);
  PipelineResult result;
  auto emit = [&](const std::string& name, std::string_view content) {
    auto path = config.workdir / name;
    write_artifact(path, content, force);
    result.artifacts.push_back(path);
  };
  const auto settings = config_to_text(config);

  auto catalog = stage("harvest", [&] { return yara::harvest(config.rules_dirs); });
  emit("catalog.jsonl", yara::save_catalog(catalog));

  Corpus corpus;
  corpus.manifest = stage("manifest", [&] { return data::load_manifest(config.manifest); });
  corpus.matrix = stage("scan", [&] {
    auto automaton = scan::PatternAutomaton::compile(catalog);
    scan::ScanReport report;
    auto m = scan::scan_corpus(automaton, corpus.manifest, {config.chunk_size, config.threads}, &report);
    if (report.partial_failure()) {
      std::size_t failed = 0;
      for (const auto& r : report.rows) failed += r.error.has_value();
      throw Error(ErrorCode::Io, std::to_string(failed) + " file(s) failed to scan");
    }
    return m;
  });
  emit("matrix.hym", as_text(scan::encode_matrix(corpus.matrix)));
  emit(scan::sidecar_path("matrix.hym").string(), scan::encode_sidecar(corpus.matrix));

  if (!config.side_features.empty())
    corpus.side = stage("side features", [&] { return data::load_side_features(config.side_features, corpus.manifest); });
  if (!config.baseline_scores.empty()) {
    corpus.baseline_scores = stage("baseline scores", [&] {
      auto t = data::load_side_features(config.baseline_scores, corpus.manifest);
      if (t.dim != 1 || t.imputed) throw Error(ErrorCode::Validation, "expected one finite score column");
      for (double v : t.values)
        if (v < 0 || v > 1) throw Error(ErrorCode::Validation, "scores must lie in [0, 1]");
      return t.values;
    });
  }
  stage("align", [&] { bind_corpus(corpus); });

  if (corpus.side) {
    auto f0 = stage("baseline", [&] {
      const auto& rows = corpus.split.train.rows;
      require_train_rows(corpus.manifest, rows);
      return boost::fit_gbdt(learn::side_design(*corpus.side, rows), labels_of(corpus, rows),
                             seeded(config.gbdt, config.seed, 2));
    });
    emit("baseline_model.json", boost::ensemble_to_json(f0) + "\n");
  }

  const std::string mode{lasso::to_string(config.mode)};
  result.mode = stage("select/train", [&] { return run_mode(corpus, config); });
  emit("selection_" + mode + ".json", result.mode.selection.to_json() + "\n");
  emit("curve_" + mode + ".csv", curve_to_csv(result.mode.rows));

  if (config.comparison) {
    result.comparison = stage("comparison", [&] { return run_comparison(corpus, config); });
    emit("comparison.csv", curve_to_csv(result.comparison));
  }

  auto provenance = json::parse(provenance_json(
      "pipeline", settings,
      {{"rules", config.rules_dirs.size() == 1 ? config.rules_dirs[0] : fs::path{}},
       {"manifest", config.manifest},
       {"side_features", config.side_features},
       {"baseline_scores", config.baseline_scores}}));
  provenance["artifacts"] = {{"catalog.jsonl", content_digest(config.workdir / "catalog.jsonl")},
                             {"matrix.hym", content_digest(config.workdir / "matrix.hym")}};
  if (config.rules_dirs.size() > 1) {
    json rules = json::array();
    for (const auto& r : config.rules_dirs) rules.push_back({{"path", r.generic_string()}, {"sha256", content_digest(r)}});
    provenance["inputs"]["rules"] = rules;
  }
  json report = {{"format", "hayama-report"},
                 {"version", 1},
                 {"mode", mode},
                 {"effective_mode", lasso::to_string(result.mode.selection.mode)},
                 {"catalog_size", catalog.size()},
                 {"samples", corpus.manifest.size()},
                 {"train", corpus.split.train.size()},
                 {"test", corpus.split.test.size()},
                 {"diagnostics", result.mode.selection.diagnostics},
                 {"curve", rows_json(result.mode.rows)},
                 {"provenance", provenance}};
  if (config.comparison) report["comparison"] = rows_json(result.comparison);
  emit("report_" + mode + ".json", report.dump(1) + "\n");
  return result;
}

}  // namespace hayama::pipeline
