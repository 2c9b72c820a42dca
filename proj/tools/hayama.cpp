// hayama: command-line front end for harvesting, scanning, selection,
// training, evaluation, analysis and the end-to-end experiment.

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hayama/boosted.hpp"
#include "hayama/dataset.hpp"
#include "hayama/design.hpp"
#include "hayama/error.hpp"
#include "hayama/lasso.hpp"
#include "hayama/metrics.hpp"
#include "hayama/pipeline.hpp"
#include "hayama/scanner.hpp"
#include "hayama/synth.hpp"
#include "hayama/util.hpp"
#include "hayama/yara.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hayama;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 1;
constexpr int kExitPartialScan = 2;

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string workdir;
  bool force = false;
  std::optional<std::size_t> threads;
  std::string config;
  std::vector<std::string> sets;
};

// Config file, then --set overrides, then the dedicated global flags.
pipeline::PipelineConfig effective_config(const Globals& g) {
  pipeline::PipelineConfig c;
  if (!g.config.empty()) c = pipeline::load_config(g.config);
  for (const auto& kv : g.sets) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::Validation, "--set expects key=value, got '" + kv + "'");
    pipeline::apply_setting(c, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (g.seed) c.seed = *g.seed;
  if (g.threads) c.threads = *g.threads;
  if (!g.workdir.empty()) c.workdir = g.workdir;
  return c;
}

fs::path output_path(const Globals& g, const std::string& out) {
  fs::path p(out);
  if (p.is_relative() && !g.workdir.empty()) return fs::path(g.workdir) / p;
  return p;
}

std::string settings_text(const std::map<std::string, std::string>& args) {
  std::string s;
  for (const auto& [k, v] : args) s += k + " = " + v + "\n";
  return s;
}

// Writes the artifact and its `.prov.json` provenance record.
void emit(const Globals& g, const fs::path& path, std::string_view content, std::string_view command,
          const std::map<std::string, std::string>& args,
          const std::vector<std::pair<std::string, fs::path>>& inputs) {
  pipeline::write_artifact(path, content, g.force);
  pipeline::write_artifact(fs::path(path.string() + ".prov.json"),
                           pipeline::provenance_json(command, settings_text(args), inputs) + "\n", g.force);
}

std::string text_of(const fs::path& path) {
  auto b = read_file(path);
  return {b.begin(), b.end()};
}

// ---- corpus loading -----------------------------------------------------------------------

struct CorpusArgs {
  std::string matrix;
  std::string manifest;
  std::string side;
  std::string baseline_scores;
};

void add_corpus_options(CLI::App* cmd, CorpusArgs& a, bool side_allowed = true) {
  cmd->add_option("--matrix", a.matrix, "Occurrence matrix (.hym)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--manifest", a.manifest, "Manifest with labels and splits (all rows train when omitted)")
      ->check(CLI::ExistingFile);
  if (side_allowed) cmd->add_option("--side", a.side, "Side-feature table")->check(CLI::ExistingFile);
}

void load_corpus(pipeline::Corpus& c, const CorpusArgs& a) {
  c.matrix = scan::load_matrix(a.matrix);
  if (!a.manifest.empty()) {
    c.manifest = data::load_manifest(a.manifest);
  } else {
    if (!c.matrix.labels) throw Error(ErrorCode::Validation, "matrix carries no labels; pass --manifest");
    for (std::size_t r = 0; r < c.matrix.n_rows; ++r)
      c.manifest.records.push_back({c.matrix.row_ids[r], {}, (*c.matrix.labels)[r], data::Split::Train});
  }
  if (!a.side.empty()) c.side = data::load_side_features(a.side, c.manifest);
  if (!a.baseline_scores.empty()) {
    auto t = data::load_side_features(a.baseline_scores, c.manifest);
    if (t.dim != 1 || t.imputed) throw Error(ErrorCode::Validation, "baseline scores: expected one finite column");
    c.baseline_scores = t.values;
  }
  pipeline::bind_corpus(c);
}

std::vector<std::pair<std::string, fs::path>> corpus_inputs(const CorpusArgs& a) {
  return {{"matrix", a.matrix}, {"manifest", a.manifest}, {"side_features", a.side},
          {"baseline_scores", a.baseline_scores}};
}

std::vector<std::uint32_t> columns_for_ids(const scan::OccurrenceMatrix& m, const std::vector<std::string>& ids) {
  std::map<std::string, std::uint32_t> index;
  for (std::size_t c = 0; c < m.col_ids.size(); ++c) index.emplace(m.col_ids[c], static_cast<std::uint32_t>(c));
  std::vector<std::uint32_t> out;
  for (const auto& id : ids) {
    auto it = index.find(id);
    if (it == index.end()) throw Error(ErrorCode::Validation, "feature " + id + " is not a matrix column");
    out.push_back(it->second);
  }
  return out;
}

// Feature ids of the selection entry for k (the only entry when k is 0).
std::vector<std::string> selected_ids(const fs::path& path, std::size_t k) {
  auto j = json::parse(text_of(path));
  if (j.value("format", "") != "hayama-selection") throw Error(ErrorCode::Validation, path.string() + ": not a selection file");
  const auto& sel = j.at("selections");
  if (k == 0) {
    if (sel.size() != 1) throw Error(ErrorCode::Validation, "selection holds several k values; pass --k");
    return sel[0].at("feature_ids").get<std::vector<std::string>>();
  }
  for (const auto& s : sel)
    if (s.at("k").get<std::size_t>() == k) return s.at("feature_ids").get<std::vector<std::string>>();
  throw Error(ErrorCode::Validation, "selection has no entry for k = " + std::to_string(k));
}

std::vector<std::size_t> rows_of_split(const pipeline::Corpus& c, const std::string& split) {
  if (split == "train") return c.split.train.rows;
  if (split == "test") return c.split.test.rows;
  if (split == "valid") return c.split.valid.rows;
  throw Error(ErrorCode::Validation, "unknown split '" + split + "'");
}

std::vector<std::uint8_t> labels_of(const pipeline::Corpus& c, const std::vector<std::size_t>& rows) {
  std::vector<std::uint8_t> y;
  for (auto r : rows) y.push_back(c.manifest.records[r].label);
  return y;
}

// Design in a saved model's feature space: sub-signature ids by matrix
// column, side features by name.
learn::DesignMatrix model_design(const pipeline::Corpus& c, const std::vector<std::size_t>& rows,
                                 const std::vector<std::string>& names, std::size_t n_binary) {
  std::vector<std::string> ids(names.begin(), names.begin() + n_binary);
  auto cols = columns_for_ids(c.matrix, ids);
  auto x = pipeline::feature_design(c, rows, cols, false);
  const std::size_t n_dense = names.size() - n_binary;
  if (n_dense == 0) return x;
  if (!c.side) throw Error(ErrorCode::Validation, "model uses side features; pass --side");
  std::vector<std::size_t> idx;
  for (std::size_t k = n_binary; k < names.size(); ++k) {
    auto it = std::find(c.side->feature_names.begin(), c.side->feature_names.end(), names[k]);
    if (it == c.side->feature_names.end()) throw Error(ErrorCode::Validation, "side feature " + names[k] + " missing");
    idx.push_back(static_cast<std::size_t>(it - c.side->feature_names.begin()));
  }
  std::vector<double> values;
  for (auto r : rows)
    for (auto k : idx) values.push_back(c.side->at(r, k));
  return learn::with_dense(std::move(x), values, n_dense,
                           std::vector<std::string>(names.begin() + n_binary, names.end()));
}

// Side columns ranked by gain of a baseline GBDT on side features.
std::vector<std::size_t> top_side_columns(const pipeline::Corpus& c, const std::string& model_path, std::size_t m,
                                          const pipeline::PipelineConfig& cfg) {
  if (!c.side) throw Error(ErrorCode::Validation, "this analysis needs --side");
  boost::BoostedEnsemble f0;
  if (!model_path.empty()) {
    f0 = boost::ensemble_from_json(text_of(model_path));
  } else {
    const auto& rows = c.split.train.rows;
    pipeline::require_train_rows(c.manifest, rows);
    auto tc = cfg.gbdt;
    tc.seed = cfg.seed;
    f0 = boost::fit_gbdt(learn::side_design(*c.side, rows), labels_of(c, rows), tc);
  }
  std::vector<std::size_t> out;
  for (const auto& [col, gain] : boost::gain_importance(f0)) {
    if (col < f0.n_binary) continue;
    const auto& name = f0.feature_names[col];
    auto it = std::find(c.side->feature_names.begin(), c.side->feature_names.end(), name);
    if (it != c.side->feature_names.end()) out.push_back(static_cast<std::size_t>(it - c.side->feature_names.begin()));
    if (out.size() == m) break;
  }
  if (out.empty()) throw Error(ErrorCode::Validation, "baseline model has no informative side feature");
  return out;
}

std::vector<std::vector<double>> binary_columns(const pipeline::Corpus& c, const std::vector<std::size_t>& rows,
                                                const std::vector<std::uint32_t>& cols) {
  std::vector<std::vector<double>> out(cols.size(), std::vector<double>(rows.size(), 0.0));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < cols.size(); ++k) out[k][i] = c.matrix.get(rows[i], cols[k]) ? 1.0 : 0.0;
  return out;
}

std::vector<std::vector<double>> side_columns(const pipeline::Corpus& c, const std::vector<std::size_t>& rows,
                                              const std::vector<std::size_t>& cols) {
  std::vector<std::vector<double>> out(cols.size(), std::vector<double>(rows.size(), 0.0));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t k = 0; k < cols.size(); ++k) out[k][i] = c.side->at(rows[i], cols[k]);
  return out;
}

std::vector<std::size_t> parse_k_list(const std::string& text) {
  pipeline::PipelineConfig tmp;
  pipeline::apply_setting(tmp, "target_k", text);
  return tmp.target_k;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hayama: YARA sub-signature features for malware classification"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Seed for every random choice");
  app.add_option("--workdir", g.workdir, "Directory for relative outputs (pipeline: artifact directory)");
  app.add_flag("--force", g.force, "Overwrite existing artifacts whose content differs");
  app.add_option("--threads", g.threads, "Worker threads for harvest and scan")->check(CLI::PositiveNumber);
  app.add_option("--config", g.config, "Flat key = value config file")->check(CLI::ExistingFile);
  app.add_option("--set", g.sets, "Config override key=value (repeatable)");

  int status = kExitOk;
  std::function<void()> action;

  // harvest
  std::vector<std::string> rules;
  std::string out;
  auto* harvest = app.add_subcommand("harvest", "Extract sub-signatures from YARA rule files into a catalog");
  harvest->add_option("--rules", rules, "Rule files or directories")->required()->check(CLI::ExistingPath);
  harvest->add_option("--out", out, "Catalog path (JSON Lines)")->required();
  harvest->footer("Errors: exit 1 when no sub-signature survives or an output exists (without --force).");
  harvest->callback([&] {
    action = [&] {
      auto cfg = effective_config(g);
      yara::HarvestReport report;
      std::vector<fs::path> roots(rules.begin(), rules.end());
      auto catalog = yara::harvest(roots, &report, {cfg.threads});
      std::map<std::string, std::string> args{{"rules", json(rules).dump()}};
      std::vector<std::pair<std::string, fs::path>> inputs;
      for (std::size_t i = 0; i < roots.size(); ++i) inputs.emplace_back("rules[" + std::to_string(i) + "]", roots[i]);
      emit(g, output_path(g, out), yara::save_catalog(catalog), "harvest", args, inputs);
      std::cerr << report.summary() << "\n";
      std::cout << catalog.size() << " sub-signatures\n";
    };
  });

  // scan
  std::string catalog_path, manifest_path, report_path;
  std::size_t chunk_size = 0;
  bool timings = false;
  auto* scan_cmd = app.add_subcommand("scan", "Build the binary occurrence matrix of a corpus");
  scan_cmd->add_option("--catalog", catalog_path, "Catalog from harvest")->required()->check(CLI::ExistingFile);
  scan_cmd->add_option("--manifest", manifest_path, "Corpus manifest")->required()->check(CLI::ExistingFile);
  scan_cmd->add_option("--out", out, "Matrix path (.hym); ids go to a JSON sidecar")->required();
  scan_cmd->add_option("--chunk-size", chunk_size, "Bytes per scan window (default from config)");
  scan_cmd->add_option("--report", report_path, "Per-file scan report (JSON Lines)");
  scan_cmd->add_flag("--timings", timings, "Keep per-file timings in the report (not reproducible)");
  scan_cmd->footer("Errors: exit 1 on missing files or bad inputs; exit 2 when some files fail mid-scan.");
  scan_cmd->callback([&] {
    action = [&] {
      auto cfg = effective_config(g);
      if (chunk_size) cfg.chunk_size = chunk_size;
      auto catalog = yara::load_catalog(text_of(catalog_path));
      auto manifest = data::load_manifest(manifest_path);
      auto automaton = scan::PatternAutomaton::compile(catalog);
      scan::ScanReport report;
      auto m = scan::scan_corpus(automaton, manifest, {cfg.chunk_size, cfg.threads}, &report);
      std::map<std::string, std::string> args{{"chunk_size", std::to_string(cfg.chunk_size)}};
      std::vector<std::pair<std::string, fs::path>> inputs{{"catalog", catalog_path}, {"manifest", manifest_path}};
      auto path = output_path(g, out);
      auto enc = scan::encode_matrix(m);
      emit(g, path, std::string(enc.begin(), enc.end()), "scan", args, inputs);
      pipeline::write_artifact(scan::sidecar_path(path), scan::encode_sidecar(m), g.force);
      if (!report_path.empty()) {
        if (!timings)
          for (auto& r : report.rows) r.millis = 0;
        pipeline::write_artifact(output_path(g, report_path), report.to_jsonl(), g.force);
      }
      std::size_t failed = 0;
      for (const auto& r : report.rows) failed += r.error.has_value();
      std::cout << m.n_rows << " rows x " << m.n_cols << " columns, " << m.nnz() << " occurrences\n";
      if (failed) {
        std::cerr << "hayama: " << failed << " file(s) failed mid-scan; their rows are all zero\n";
        status = kExitPartialScan;
      }
    };
  });

  // select
  CorpusArgs corpus_args;
  std::string mode_name = "independent", k_text;
  auto* select = app.add_subcommand("select", "Lasso feature selection on the train split");
  add_corpus_options(select, corpus_args);
  select->add_option("--baseline-scores", corpus_args.baseline_scores, "key,probability CSV used as f0 in conditional mode")
      ->check(CLI::ExistingFile);
  select->add_option("--mode", mode_name, "independent | conditional | stacked");
  select->add_option("--k", k_text, "Target feature counts, ascending (e.g. 10,50,100)")->required();
  select->add_option("--out", out, "Selection JSON")->required();
  select->footer("Errors: exit 1 on single-class labels, missing side features for the mode, or bad k.");
  select->callback([&] {
    action = [&] {
      auto cfg = effective_config(g);
      cfg.mode = lasso::mode_from_string(mode_name);
      cfg.target_k = parse_k_list(k_text);
      cfg.side_features = corpus_args.side;
      cfg.baseline_scores = corpus_args.baseline_scores;
      cfg.validate();
      pipeline::Corpus c;
      load_corpus(c, corpus_args);
      auto outcome = pipeline::select_features(c, cfg);
      std::map<std::string, std::string> args{{"mode", mode_name}, {"k", k_text},
                                              {"config", pipeline::config_to_text(cfg)}};
      emit(g, output_path(g, out), outcome.to_json() + "\n", "select", args, corpus_inputs(corpus_args));
      for (const auto& d : outcome.diagnostics) std::cerr << "note: " << d << "\n";
      for (const auto& s : outcome.sets)
        std::cout << "k=" << s.k << " selected=" << s.columns.size() << (s.short_count ? " (short)" : "") << "\n";
    };
  });

  // train
  std::string selection_path, learner_name = "gbdt";
  std::size_t k_pick = 0;
  bool yara_only = false;
  auto* train = app.add_subcommand("train", "Fit a GBDT or linear model on side features plus selected sub-signatures");
  add_corpus_options(train, corpus_args);
  train->add_option("--selection", selection_path, "Selection JSON from select")->check(CLI::ExistingFile);
  train->add_option("--k", k_pick, "Which selection entry to use");
  train->add_option("--learner", learner_name, "gbdt | linear");
  train->add_flag("--yara-only", yara_only, "Ignore --side for the model's features");
  train->add_option("--out", out, "Model JSON")->required();
  train->footer("Errors: exit 1 when the model would have no feature or the train split is single-class.");
  train->callback([&] {
    action = [&] {
      auto cfg = effective_config(g);
      auto learner = pipeline::learner_from_string(learner_name);
      pipeline::Corpus c;
      load_corpus(c, corpus_args);
      std::vector<std::uint32_t> cols;
      if (!selection_path.empty()) cols = columns_for_ids(c.matrix, selected_ids(selection_path, k_pick));
      const bool with_side = c.side.has_value() && !yara_only;
      if (cols.empty() && !with_side) throw Error(ErrorCode::Validation, "no features: pass --selection and/or --side");
      const auto& rows = c.split.train.rows;
      pipeline::require_train_rows(c.manifest, rows);
      auto x = pipeline::feature_design(c, rows, cols, with_side);
      std::string model;
      if (learner == pipeline::Learner::Gbdt) {
        auto tc = cfg.gbdt;
        tc.seed = cfg.seed;
        model = boost::ensemble_to_json(boost::fit_gbdt(x, labels_of(c, rows), tc));
      } else {
        model = boost::linear_to_json(boost::fit_linear_unpenalized(x, labels_of(c, rows)));
      }
      auto inputs = corpus_inputs(corpus_args);
      inputs.emplace_back("selection", selection_path);
      std::map<std::string, std::string> args{{"learner", learner_name}, {"k", std::to_string(k_pick)},
                                              {"yara_only", yara_only ? "true" : "false"},
                                              {"config", pipeline::config_to_text(cfg)}};
      emit(g, output_path(g, out), model + "\n", "train", args, inputs);
      std::cout << "trained " << learner_name << " on " << rows.size() << " rows, " << x.width() << " features\n";
    };
  });

  // eval
  std::string model_path, split_name = "test", curve_path;
  auto* eval = app.add_subcommand("eval", "Score a saved model: accuracy, AUC and partial AUC");
  add_corpus_options(eval, corpus_args);
  eval->add_option("--model", model_path, "Model JSON from train")->required()->check(CLI::ExistingFile);
  eval->add_option("--split", split_name, "train | test | valid");
  eval->add_option("--out", out, "Report JSON")->required();
  eval->add_option("--curve", curve_path, "ROC curve CSV (fpr,tpr)");
  eval->footer("Errors: exit 1 when the split is empty or single-class, or the model's features are missing.");
  eval->callback([&] {
    action = [&] {
      auto cfg = effective_config(g);
      pipeline::Corpus c;
      load_corpus(c, corpus_args);
      auto rows = rows_of_split(c, split_name);
      if (rows.empty()) throw Error(ErrorCode::Validation, "split '" + split_name + "' is empty");
      auto text = text_of(model_path);
      auto format = json::parse(text).value("format", "");
      std::vector<double> probs;
      if (format == "hayama-gbdt") {
        auto m = boost::ensemble_from_json(text);
        probs = boost::predict_proba(m, model_design(c, rows, m.feature_names, m.n_binary));
      } else if (format == "hayama-linear-unpenalized") {
        auto m = boost::linear_from_json(text);
        probs = boost::predict_proba(m, model_design(c, rows, m.feature_names, m.n_binary));
      } else {
        throw Error(ErrorCode::Validation, model_path + ": unknown model format '" + format + "'");
      }
      auto report = metrics::evaluate_scores(split_name, probs, labels_of(c, rows), cfg.fpr_cap);
      auto inputs = corpus_inputs(corpus_args);
      inputs.emplace_back("model", model_path);
      std::map<std::string, std::string> args{{"split", split_name}, {"fpr_cap", std::to_string(cfg.fpr_cap)}};
      emit(g, output_path(g, out), report.to_json() + "\n", "eval", args, inputs);
      if (!curve_path.empty()) pipeline::write_artifact(output_path(g, curve_path), report.curve_csv(), g.force);
      std::printf("%s n=%zu accuracy=%.4f auc=%.4f partial_auc@%.3g=%.4f\n", split_name.c_str(), report.n,
                  report.accuracy, report.auc, report.fpr_cap, report.partial_auc);
    };
  });

  // analyze
  auto* analyze = app.add_subcommand("analyze", "Feature analyses over the train split");
  analyze->require_subcommand(1);
  std::string metric_name = "accuracy", class_name = "malware", baseline_model;
  std::size_t top = 0, top_side = 50;

  auto* stats = analyze->add_subcommand("stats", "Per-feature accuracy, precision and recall (fires => malware)");
  add_corpus_options(stats, corpus_args, false);
  stats->add_option("--metric", metric_name, "Sort key for --top: accuracy | precision | recall");
  stats->add_option("--top", top, "Keep only the top features by --metric");
  stats->add_option("--out", out, "CSV")->required();
  stats->callback([&] {
    action = [&] {
      pipeline::Corpus c;
      load_corpus(c, corpus_args);
      pipeline::require_train_rows(c.manifest, c.split.train.rows);
      auto st = metrics::per_feature_stats(c.matrix, c.split.train.rows);
      std::vector<std::uint32_t> order;
      if (top > 0) order = metrics::topk_by_metric(st, metrics::metric_from_string(metric_name), top);
      std::map<std::string, std::string> args{{"metric", metric_name}, {"top", std::to_string(top)}};
      emit(g, output_path(g, out), metrics::stats_to_csv(st, order), "analyze stats", args, corpus_inputs(corpus_args));
    };
  });

  auto* ecdf = analyze->add_subcommand("ecdf", "ECDF of per-feature occurrence counts within one class");
  add_corpus_options(ecdf, corpus_args, false);
  ecdf->add_option("--class", class_name, "malware | benign");
  ecdf->add_option("--selection", selection_path, "Restrict to selected features")->check(CLI::ExistingFile);
  ecdf->add_option("--k", k_pick, "Which selection entry to use");
  ecdf->add_option("--out", out, "CSV (count,proportion)")->required();
  ecdf->callback([&] {
    action = [&] {
      if (class_name != "malware" && class_name != "benign")
        throw Error(ErrorCode::Validation, "--class must be malware or benign");
      pipeline::Corpus c;
      load_corpus(c, corpus_args);
      std::vector<std::uint32_t> cols;
      if (!selection_path.empty()) cols = columns_for_ids(c.matrix, selected_ids(selection_path, k_pick));
      auto points = metrics::occurrence_ecdf(c.matrix, class_name == "malware" ? 1 : 0, c.split.train.rows, cols);
      std::string csv = "count,proportion\n";
      for (const auto& p : points) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%llu,%.17g\n", static_cast<unsigned long long>(p.count), p.proportion);
        csv += buf;
      }
      auto inputs = corpus_inputs(corpus_args);
      inputs.emplace_back("selection", selection_path);
      std::map<std::string, std::string> args{{"class", class_name}, {"k", std::to_string(k_pick)}};
      emit(g, output_path(g, out), csv, "analyze ecdf", args, inputs);
    };
  });

  auto block_options = [&](CLI::App* cmd) {
    add_corpus_options(cmd, corpus_args);
    cmd->add_option("--selection", selection_path, "Selected sub-signatures")->required()->check(CLI::ExistingFile);
    cmd->add_option("--k", k_pick, "Which selection entry to use");
    cmd->add_option("--top-side", top_side, "Side features ranked by baseline GBDT gain");
    cmd->add_option("--baseline-model", baseline_model, "GBDT on side features (fitted on train when omitted)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", out, "Output path")->required();
  };
  auto* corr = analyze->add_subcommand("corr", "Pearson (phi) correlation among selected and top side features");
  block_options(corr);
  corr->callback([&] {
    action = [&] {
      auto cfg = effective_config(g);
      pipeline::Corpus c;
      load_corpus(c, corpus_args);
      const auto& rows = c.split.train.rows;
      auto cols = columns_for_ids(c.matrix, selected_ids(selection_path, k_pick));
      auto side_idx = top_side_columns(c, baseline_model, top_side, cfg);
      std::vector<std::string> names;
      for (auto col : cols) names.push_back(c.matrix.col_ids[col]);
      for (auto k : side_idx) names.push_back(c.side->feature_names[k]);
      auto cm = metrics::correlation_matrix(binary_columns(c, rows, cols), side_columns(c, rows, side_idx), names);
      auto inputs = corpus_inputs(corpus_args);
      inputs.emplace_back("selection", selection_path);
      inputs.emplace_back("baseline_model", baseline_model);
      std::map<std::string, std::string> args{{"k", std::to_string(k_pick)}, {"top_side", std::to_string(top_side)},
                                              {"seed", std::to_string(cfg.seed)}};
      emit(g, output_path(g, out), metrics::correlation_to_csv(cm), "analyze corr", args, inputs);
    };
  });

  auto* pls = analyze->add_subcommand("pls", "Maximal correlation of the first PLS component pair");
  block_options(pls);
  pls->callback([&] {
    action = [&] {
      auto cfg = effective_config(g);
      pipeline::Corpus c;
      load_corpus(c, corpus_args);
      const auto& rows = c.split.train.rows;
      auto cols = columns_for_ids(c.matrix, selected_ids(selection_path, k_pick));
      auto side_idx = top_side_columns(c, baseline_model, top_side, cfg);
      double r = metrics::pls_max_correlation(binary_columns(c, rows, cols), side_columns(c, rows, side_idx));
      json j = {{"format", "hayama-pls"}, {"version", 1},           {"max_correlation", r},
                {"n", rows.size()},       {"yara_columns", cols.size()}, {"side_columns", side_idx.size()}};
      auto inputs = corpus_inputs(corpus_args);
      inputs.emplace_back("selection", selection_path);
      inputs.emplace_back("baseline_model", baseline_model);
      std::map<std::string, std::string> args{{"k", std::to_string(k_pick)}, {"top_side", std::to_string(top_side)},
                                              {"seed", std::to_string(cfg.seed)}};
      emit(g, output_path(g, out), j.dump(1) + "\n", "analyze pls", args, inputs);
      std::printf("max correlation %.6f\n", r);
    };
  });

  // pipeline
  auto* run = app.add_subcommand("pipeline", "harvest -> scan -> select -> train/evaluate per k, from --config");
  run->footer("Config keys: rules_dir, manifest, side_features, baseline_scores, workdir, mode, target_k, learner,\n"
              "chunk_size, threads, n_trees, max_depth, learning_rate, min_child_hessian, l2_leaf, n_bins,\n"
              "min_split_gain, row_subsample, col_subsample, baseline_folds, penalize_baseline, fpr_cap,\n"
              "comparison, seed. Errors: exit 1 with the failing stage named.");
  run->callback([&] {
    action = [&] {
      auto cfg = effective_config(g);
      auto result = pipeline::run_pipeline(cfg, g.force);
      for (const auto& r : result.mode.rows)
        std::printf("%-22s k=%-4zu n=%-4zu accuracy=%.4f auc=%.4f partial_auc=%.4f\n", r.series.c_str(), r.k,
                    r.n_selected, r.accuracy, r.auc, r.partial_auc);
      for (const auto& r : result.comparison)
        std::printf("%-22s k=%-4zu n=%-4zu accuracy=%.4f auc=%.4f partial_auc=%.4f\n", r.series.c_str(), r.k,
                    r.n_selected, r.accuracy, r.auc, r.partial_auc);
    };
  });

  // synth
  synth::SyntheticSpec spec;
  std::string synth_out;
  auto* syn = app.add_subcommand("synth", "Generate a seeded synthetic corpus (rules, files, manifest, side features)");
  syn->add_option("--out", synth_out, "Output directory")->required();
  syn->add_option("--n-benign", spec.n_benign);
  syn->add_option("--n-malware", spec.n_malware);
  syn->add_option("--patterns", spec.n_planted_patterns, "Number of planted patterns");
  syn->add_option("--file-size-min", spec.file_size_min);
  syn->add_option("--file-size-max", spec.file_size_max);
  syn->add_option("--plant-rate-malware", spec.plant_rate_malware);
  syn->add_option("--plant-rate-benign", spec.plant_rate_benign);
  syn->add_option("--interaction-share", spec.interaction_share);
  syn->add_option("--interaction-rate-benign", spec.interaction_rate_benign);
  syn->add_option("--interaction-rate-malware", spec.interaction_rate_malware);
  syn->add_option("--signal-side", spec.n_signal_side_features);
  syn->add_option("--noise-side", spec.n_noise_side_features);
  syn->add_option("--side-shift", spec.side_shift);
  syn->add_option("--test-fraction", spec.test_fraction);
  syn->footer("Errors: exit 1 on an invalid spec or an existing corpus (without --force).");
  syn->callback([&] {
    action = [&] {
      if (g.seed) spec.seed = *g.seed;
      spec.validate();
      auto dir = output_path(g, synth_out);
      if (fs::exists(dir / "synth.json") && !g.force)
        throw Error(ErrorCode::Validation, dir.string() + " already holds a corpus (use --force)");
      if (g.force) {
        std::error_code ec;
        fs::remove_all(dir / "files", ec);
        fs::remove_all(dir / "rules", ec);
      }
      auto corpus = synth::generate_synthetic(spec, dir);
      std::cout << "corpus digest " << corpus.digest << "\n";
    };
  });

  try {
    app.parse(argc, argv);
    if (action) action();
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  } catch (const Error& e) {
    std::cerr << "hayama: " << to_string(e.code()) << ": " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "hayama: " << e.what() << "\n";
    return kExitValidation;
  }
  return status;
}
