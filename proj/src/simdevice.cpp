#include "vitlat/simdevice.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace vitlat {

void DeviceModel::check() const {
  if (peak_macs_per_us <= 0 || bytes_per_us <= 0)
    throw std::invalid_argument("device model: peak rates must be > 0");
  if (per_op_overhead_us < 0)
    throw std::invalid_argument("device model: negative overhead");
  if (rng_noise_pct < 0 || rng_noise_pct >= 50)
    throw std::invalid_argument("device model: noise must be in [0, 50)%");
}

DeviceModel DeviceModel::from_json(const nlohmann::json& j) {
  DeviceModel d;
  if (j.contains("name")) d.name = j["name"].get<std::string>();
  if (j.contains("peak_macs_per_us")) d.peak_macs_per_us = j["peak_macs_per_us"];
  if (j.contains("bytes_per_us")) d.bytes_per_us = j["bytes_per_us"];
  if (j.contains("per_op_overhead_us")) d.per_op_overhead_us = j["per_op_overhead_us"];
  if (j.contains("modes"))
    for (const auto& m : j["modes"]) {
      std::string s = m.get<std::string>();
      if (s == "FormatPenalty") d.format_penalty = true;
      else if (s == "DWConvSpikes") d.dwconv_spikes = true;
      else if (s == "ValueDependentGELU") d.value_dependent_gelu = true;
      else throw std::invalid_argument("device model: unknown mode " + s);
    }
  if (j.contains("format_lambda")) d.format_lambda = j["format_lambda"];
  if (j.contains("spike_sigma")) d.spike_sigma = j["spike_sigma"];
  if (j.contains("gelu_factors")) {
    auto v = j["gelu_factors"].get<std::vector<double>>();
    if (v.size() != 5)
      throw std::invalid_argument("device model: gelu_factors needs 5 entries");
    std::copy(v.begin(), v.end(), d.gelu_factors.begin());
  }
  if (j.contains("rng_noise_pct")) d.rng_noise_pct = j["rng_noise_pct"];
  d.check();
  return d;
}

DeviceModel DeviceModel::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open device model file: " + path);
  nlohmann::json j;
  in >> j;
  return from_json(j);
}

nlohmann::json DeviceModel::to_json() const {
  nlohmann::json modes = nlohmann::json::array();
  if (format_penalty) modes.push_back("FormatPenalty");
  if (dwconv_spikes) modes.push_back("DWConvSpikes");
  if (value_dependent_gelu) modes.push_back("ValueDependentGELU");
  return {{"name", name},
          {"peak_macs_per_us", peak_macs_per_us},
          {"bytes_per_us", bytes_per_us},
          {"per_op_overhead_us", per_op_overhead_us},
          {"modes", modes},
          {"format_lambda", format_lambda},
          {"spike_sigma", spike_sigma},
          {"gelu_factors", gelu_factors},
          {"rng_noise_pct", rng_noise_pct}};
}

MeasurementContext DeviceModel::context() const {
  MeasurementContext c;
  c.device = name;
  return c;
}

namespace {

double gelu_factor(const DeviceModel& dev, double value_scale) {
  double a = std::abs(value_scale);
  size_t region = 0;
  while (region < DeviceModel::kGeluBreakpoints.size() &&
         a >= DeviceModel::kGeluBreakpoints[region])
    ++region;
  return dev.gelu_factors[region];
}

int64_t node_weight_bytes_of(const FeatureVector& fv) {
  for (size_t i = 0; i < fv.names.size(); ++i)
    if (fv.names[i] == "weight_bytes") return (int64_t)fv.values[i];
  return 0;
}

}  // namespace

double op_latency(const OpNode& node, const FeatureVector& fv, const DeviceModel& dev,
                  double value_scale, Rng* noise_rng) {
  int64_t macs = flops(node);
  int64_t ib = 0;
  for (const TensorSpec& t : node.inputs) ib += t.bytes();
  int64_t ob = node.output.bytes();
  double traffic = (double)(ib + ob + node_weight_bytes_of(fv));

  double base = std::max((double)macs / dev.peak_macs_per_us, traffic / dev.bytes_per_us);

  if (dev.dwconv_spikes && node.kind == OpKind::DWConv2d &&
      node.attr("c_in") % 32 == 0)
    base *= 1.0 + dev.spike_sigma;
  if (dev.value_dependent_gelu && node.kind == OpKind::GELU)
    base *= gelu_factor(dev, value_scale);

  double lat = base + dev.per_op_overhead_us;

  if (dev.format_penalty &&
      (node.kind == OpKind::Conv2d || node.kind == OpKind::DWConv2d) &&
      node.conv_layout_tag == ConvLayoutTag::ChannelFirst)
    lat += dev.format_lambda * (double)(ib + ob) / dev.bytes_per_us;

  if (noise_rng && dev.rng_noise_pct > 0) {
    double eps = noise_rng->uniform(-dev.rng_noise_pct, dev.rng_noise_pct) / 100.0;
    lat *= 1.0 + eps;
  }
  return lat;
}

std::vector<MeasurementRecord> generate_measurements(const std::vector<OpGraph>& graphs,
                                                     const DeviceModel& dev,
                                                     uint64_t seed) {
  dev.check();
  std::vector<MeasurementRecord> out;
  MeasurementContext ctx = dev.context();
  for (const OpGraph& g : graphs) {
    uint64_t gseed = derive_seed(seed, hash_str(g.arch_id));
    Rng rng(gseed);
    // one typical |input| magnitude per model; invisible to the features
    double value_scale = dev.value_dependent_gelu ? rng.uniform(0.5, 6.5) : 1.0;
    for (const OpNode& n : g.nodes) {
      FeatureVector fv = featurize(n);
      double lat = op_latency(n, fv, dev, value_scale, &rng);
      MeasurementRecord r;
      r.model_id = g.arch_id;
      r.node_id = n.id;
      r.op_kind = to_string(n.kind);
      r.context = ctx;
      r.latency_us = format_latency(lat);
      r.latency_value = std::stod(r.latency_us);
      r.flop_count = (double)flops(n);
      int64_t ib = 0;
      for (const TensorSpec& t : n.inputs) ib += t.bytes();
      r.traffic_bytes = (double)(ib + n.output.bytes());
      out.push_back(std::move(r));
    }
  }
  return out;
}

MeasurementSet generate_measurement_set(const std::vector<OpGraph>& graphs,
                                        const DeviceModel& dev, uint64_t seed) {
  MeasurementSet set;
  for (auto& r : generate_measurements(graphs, dev, seed)) set.add(std::move(r));
  return set;
}

}  // namespace vitlat
