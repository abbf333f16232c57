// Python bindings: thin JSON-string-oriented wrappers around the core
// pipeline, enough to drive sample -> lower -> simulate -> train -> predict
// from Python without mirroring every C++ type.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "vitlat/evaluation.hpp"
#include "vitlat/simdevice.hpp"

namespace py = pybind11;
using namespace vitlat;

namespace {

std::map<std::string, OpGraph> graphs_from_jsonl(const std::vector<std::string>& texts) {
  std::map<std::string, OpGraph> graphs;
  for (const auto& t : texts) {
    OpGraph g = graph_from_jsonl(t);
    graphs[g.arch_id] = std::move(g);
  }
  return graphs;
}

DeviceModel device_from_json_str(const std::string& text) {
  return text.empty() ? DeviceModel{} : DeviceModel::from_json(nlohmann::json::parse(text));
}

}  // namespace

PYBIND11_MODULE(_vitlat, m) {
  m.doc() = "synthetic ViT latency prediction core";

  m.def("sample_arch_json",
        [](uint64_t seed) {
          return arch_to_canonical_json(sample_arch(seed, SearchSpaceSpec::defaults()));
        },
        py::arg("seed"), "Sample one architecture; returns canonical JSON.");

  m.def("validate_arch_json",
        [](const std::string& text) {
          return validate_arch(arch_from_json(nlohmann::json::parse(text)));
        },
        py::arg("arch_json"), "Returns a list of violations; empty means valid.");

  m.def("lower_to_jsonl",
        [](const std::string& arch_json, const std::string& precision) {
          ArchConfig cfg = arch_from_json(nlohmann::json::parse(arch_json));
          return graph_to_jsonl(
              lower(cfg, precision == "int8" ? Precision::int8 : Precision::fp32));
        },
        py::arg("arch_json"), py::arg("precision") = "fp32");

  m.def("graph_flops",
        [](const std::string& graph_jsonl) {
          OpGraph g = graph_from_jsonl(graph_jsonl);
          return graph_work(g).total_flops;
        },
        py::arg("graph_jsonl"));

  m.def("estimate_memory",
        [](const std::string& graph_jsonl) {
          return estimate_memory(graph_from_jsonl(graph_jsonl));
        },
        py::arg("graph_jsonl"));

  m.def("simulate_csv",
        [](const std::vector<std::string>& graph_jsonls, const std::string& device_json,
           uint64_t seed) {
          std::vector<OpGraph> graphs;
          for (const auto& t : graph_jsonls) graphs.push_back(graph_from_jsonl(t));
          return generate_measurement_set(graphs, device_from_json_str(device_json), seed)
              .to_csv();
        },
        py::arg("graph_jsonls"), py::arg("device_json") = "", py::arg("seed") = 0);

  m.def("train_bundle_json",
        [](const std::vector<std::string>& graph_jsonls, const std::string& csv,
           const std::vector<std::string>& train_ids, const std::string& method,
           uint64_t seed) {
          auto graphs = graphs_from_jsonl(graph_jsonls);
          MeasurementSet set = MeasurementSet::ingest_csv(csv);
          PredictorBundle b = train_bundle(graphs, set, train_ids,
                                           method_from_string(method), TrainOptions{},
                                           seed);
          return b.to_json().dump();
        },
        py::arg("graph_jsonls"), py::arg("measurements_csv"), py::arg("train_ids"),
        py::arg("method") = "gbdt", py::arg("seed") = 0);

  m.def("predict_report_json",
        [](const std::string& graph_jsonl, const std::string& bundle_json) {
          OpGraph g = graph_from_jsonl(graph_jsonl);
          PredictorBundle b = PredictorBundle::from_json(nlohmann::json::parse(bundle_json));
          return predict_model(g, b).to_json().dump();
        },
        py::arg("graph_jsonl"), py::arg("bundle_json"));

  m.def("mape",
        [](const std::vector<std::pair<double, double>>& pairs) { return mape(pairs); },
        py::arg("measured_predicted_pairs"));

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<LoweringError>(m, "LoweringError");
  py::register_exception<DataError>(m, "DataError");
  py::register_exception<CoverageError>(m, "CoverageError");
}
