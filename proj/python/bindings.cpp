#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "hayama/error.hpp"
#include "hayama/lasso.hpp"
#include "hayama/metrics.hpp"
#include "hayama/pipeline.hpp"
#include "hayama/scanner.hpp"
#include "hayama/synth.hpp"
#include "hayama/util.hpp"
#include "hayama/yara.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace hayama;

namespace {

py::bytes as_bytes(const Bytes& b) { return {reinterpret_cast<const char*>(b.data()), b.size()}; }

Bytes from_buffer(const py::bytes& data) {
  std::string_view v = data;
  return {v.begin(), v.end()};
}

py::dict entry_dict(const yara::SubSignature& e) {
  py::dict d;
  d["id"] = u64_hex(e.id);
  d["kind"] = std::string(yara::to_string(e.kind));
  d["pattern"] = as_bytes(e.pattern);
  d["mask"] = e.mask ? py::object(as_bytes(*e.mask)) : py::object(py::none());
  d["modifiers"] = yara::modifier_names(e.modifiers);
  py::list prov;
  for (const auto& p : e.provenance) prov.append(py::make_tuple(p.file, p.rule, p.ident));
  d["provenance"] = prov;
  return d;
}

py::list curve_rows(const std::vector<pipeline::CurveRow>& rows) {
  py::list out;
  for (const auto& r : rows) {
    py::dict d;
    d["series"] = r.series;
    d["k"] = r.k;
    d["n_selected"] = r.n_selected;
    d["accuracy"] = r.accuracy;
    d["auc"] = r.auc;
    d["partial_auc"] = r.partial_auc;
    out.append(d);
  }
  return out;
}

// Binary design from per-row column lists.
learn::DesignMatrix sparse_design(const std::vector<std::vector<std::uint32_t>>& rows, std::size_t n_cols) {
  learn::DesignMatrix x;
  x.n_rows = rows.size();
  x.n_binary = n_cols;
  for (const auto& r : rows) {
    std::vector<std::uint32_t> sorted(r);
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
    for (auto c : sorted)
      if (c >= n_cols) throw Error(ErrorCode::Validation, "column index out of range");
    x.cols.insert(x.cols.end(), sorted.begin(), sorted.end());
    x.offsets.push_back(x.cols.size());
  }
  for (std::size_t c = 0; c < n_cols; ++c) x.names.push_back(std::to_string(c));
  return x;
}

}  // namespace

PYBIND11_MODULE(_hayama, m) {
  m.doc() = "YARA sub-signature harvesting, scanning, selection and evaluation";
  m.attr("__version__") = HAYAMA_VERSION;

  static py::exception<Error> error(m, "Error");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, (std::string(to_string(e.code())) + ": " + e.what()).c_str());
    }
  });

  py::class_<yara::SignatureCatalog>(m, "Catalog")
      .def_static(
          "harvest",
          [](const std::vector<fs::path>& roots) {
            py::gil_scoped_release release;
            return yara::harvest(roots);
          },
          py::arg("roots"), "Parse every .yar/.yara file under the given roots.")
      .def_static(
          "load",
          [](const fs::path& path) {
            Bytes b = read_file(path);
            return yara::load_catalog(std::string_view(reinterpret_cast<const char*>(b.data()), b.size()));
          },
          py::arg("path"))
      .def("dumps", &yara::save_catalog, "Catalog as JSON Lines with its checksum trailer.")
      .def("__len__", &yara::SignatureCatalog::size)
      .def("__eq__", [](const yara::SignatureCatalog& a, const yara::SignatureCatalog& b) { return a == b; })
      .def_property_readonly("entries", [](const yara::SignatureCatalog& c) {
        py::list out;
        for (const auto& e : c.entries) out.append(entry_dict(e));
        return out;
      });

  py::class_<scan::PatternAutomaton>(m, "Automaton")
      .def(py::init(&scan::PatternAutomaton::compile), py::arg("catalog"))
      .def(
          "scan",
          [](const scan::PatternAutomaton& a, const py::bytes& data) {
            Bytes buf = from_buffer(data);
            py::gil_scoped_release release;
            return a.scan_bytes(buf);
          },
          py::arg("data"), "Sorted catalog indices of the entries found in data.")
      .def(
          "scan_file",
          [](const scan::PatternAutomaton& a, const fs::path& path, std::size_t chunk_size) {
            py::gil_scoped_release release;
            return a.scan_file(path, chunk_size);
          },
          py::arg("path"), py::arg("chunk_size") = scan::kDefaultChunkSize)
      .def_property_readonly("feature_ids", &scan::PatternAutomaton::col_ids)
      .def_property_readonly("max_pattern_len", &scan::PatternAutomaton::max_pattern_len);

  m.def(
      "roc",
      [](const std::vector<double>& scores, const std::vector<std::uint8_t>& labels, double fpr_cap) {
        auto r = metrics::roc_and_partial_auc(scores, labels, fpr_cap);
        py::list fpr, tpr;
        for (const auto& p : r.curve) {
          fpr.append(p.fpr);
          tpr.append(p.tpr);
        }
        py::dict d;
        d["auc"] = r.auc;
        d["partial_auc"] = r.partial_auc;
        d["fpr"] = fpr;
        d["tpr"] = tpr;
        return d;
      },
      py::arg("scores"), py::arg("labels"), py::arg("fpr_cap") = 0.01,
      "ROC curve, AUC and partial AUC normalized by fpr_cap.");

  m.def("pls_max_correlation", &metrics::pls_max_correlation, py::arg("yara_columns"), py::arg("side_columns"),
        "Correlation of the first PLS component pair between two column blocks.");

  m.def(
      "lasso_select",
      [](const std::vector<std::vector<std::uint32_t>>& rows, std::size_t n_cols,
         const std::vector<std::uint8_t>& labels, const std::vector<std::size_t>& ks) {
        if (labels.size() != rows.size()) throw Error(ErrorCode::Validation, "one label per row");
        auto design = lasso::prepare_independent(sparse_design(rows, n_cols));
        py::gil_scoped_release release;
        auto path = lasso::lambda_path(design, labels, ks);
        std::vector<std::vector<std::uint32_t>> out;
        for (std::size_t i = 0; i < ks.size(); ++i)
          out.push_back(lasso::select_top_k(path.models[path.picks[i]], ks[i]).columns);
        return out;
      },
      py::arg("rows"), py::arg("n_cols"), py::arg("labels"), py::arg("k"),
      "L1-logistic path over binary rows; for each k, up to k columns by |weight| descending.");

  m.def(
      "generate_synthetic",
      [](const fs::path& out_dir, std::uint64_t seed, std::size_t n_benign, std::size_t n_malware,
         std::size_t n_patterns) {
        synth::SyntheticSpec spec;
        spec.seed = seed;
        spec.n_benign = n_benign;
        spec.n_malware = n_malware;
        spec.n_planted_patterns = n_patterns;
        synth::SyntheticCorpus c;
        {
          py::gil_scoped_release release;
          c = synth::generate_synthetic(spec, out_dir);
        }
        py::dict d;
        d["root"] = c.root;
        d["rules_dir"] = c.rules_dir;
        d["manifest"] = c.manifest;
        d["side_features"] = c.side_features;
        d["digest"] = c.digest;
        return d;
      },
      py::arg("out_dir"), py::arg("seed") = 1, py::arg("n_benign") = 1000, py::arg("n_malware") = 1000,
      py::arg("n_patterns") = 500);

  m.def(
      "run_pipeline",
      [](const std::optional<fs::path>& config, const std::map<std::string, std::string>& settings, bool force) {
        pipeline::PipelineConfig cfg = config ? pipeline::load_config(*config) : pipeline::PipelineConfig{};
        for (const auto& [k, v] : settings) pipeline::apply_setting(cfg, k, v);
        cfg.validate();
        pipeline::PipelineResult r;
        {
          py::gil_scoped_release release;
          r = pipeline::run_pipeline(cfg, force);
        }
        py::dict d;
        d["curve"] = curve_rows(r.mode.rows);
        d["comparison"] = curve_rows(r.comparison);
        d["artifacts"] = r.artifacts;
        return d;
      },
      py::arg("config") = py::none(), py::arg("settings") = std::map<std::string, std::string>{},
      py::arg("force") = false, "Run the full pipeline from a config file plus key=value overrides.");
}
