#include "vitlat/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "vitlat/opfeatures.hpp"

namespace vitlat {

std::string op_category(OpKind kind) {
  switch (kind) {
    case OpKind::Conv2d:
    case OpKind::DWConv2d:
    case OpKind::PatchEmbed:
      return "conv";
    case OpKind::Linear:
      return "linear";
    case OpKind::MatMul:
      return "matmul";
    case OpKind::GELU:
    case OpKind::SiLU:
    case OpKind::ReLU:
      return "activation";
    case OpKind::LayerNorm:
    case OpKind::BatchNorm:
      return "normalization";
    case OpKind::Add:
    case OpKind::Mul:
      return "element-wise";
    case OpKind::Pool:
      return "pooling";
    case OpKind::Reshape:
    case OpKind::Transpose:
      return "reshape/transpose";
    default:
      return "other";
  }
}

namespace {

// (model, node) -> record, restricted to one context
std::map<int, const MeasurementRecord*> records_for_model(
    const MeasurementSet& set, const std::string& model_id,
    const std::string& context_key, bool any_context) {
  std::map<int, const MeasurementRecord*> out;
  for (const auto& r : set.records()) {
    if (r.model_id != model_id) continue;
    if (!any_context && r.context.key() != context_key) continue;
    out[r.node_id] = &r;
  }
  return out;
}

const TrainedPredictor* lookup(const PredictorBundle& bundle, const std::string& key,
                               const std::string& bare) {
  auto it = bundle.by_kind.find(key);
  if (it != bundle.by_kind.end()) return &it->second;
  it = bundle.by_kind.find(bare);  // shared-conv fallback
  if (it != bundle.by_kind.end()) return &it->second;
  return nullptr;
}

}  // namespace

PredictionReport predict_model(const OpGraph& graph, const PredictorBundle& bundle,
                               const MeasurementSet* measurements,
                               bool allow_context_mismatch) {
  // coverage check first, so the error can list every missing kind at once
  std::vector<std::string> missing;
  for (const OpNode& n : graph.nodes) {
    std::string key = kind_key(n);
    if (!lookup(bundle, key, to_string(n.kind)) &&
        std::find(missing.begin(), missing.end(), key) == missing.end())
      missing.push_back(key);
  }
  if (!missing.empty()) {
    std::string msg = "bundle does not cover op kinds:";
    for (const auto& k : missing) msg += " " + k;
    throw CoverageError(msg);
  }

  std::map<int, const MeasurementRecord*> meas;
  if (measurements) {
    bool found_context = false;
    for (const auto& r : measurements->records())
      if (r.context.key() == bundle.context_key) {
        found_context = true;
        break;
      }
    if (!found_context && !allow_context_mismatch && measurements->size() > 0)
      throw ContextError("measurements have no records for bundle context '" +
                         bundle.context_key + "' (pass the override to force)");
    meas = records_for_model(*measurements, graph.arch_id, bundle.context_key,
                             allow_context_mismatch);
  }

  PredictionReport rep;
  rep.model_id = graph.arch_id;
  rep.context_key = bundle.context_key;

  std::map<std::string, double> cat_lat, cat_mem;
  double total_lat = 0;
  double total_mem = 0;  // activation traffic only; weights are model-wide
  double measured_sum = 0;
  bool all_measured = !meas.empty();

  for (const OpNode& n : graph.nodes) {
    const TrainedPredictor* p = lookup(bundle, kind_key(n), to_string(n.kind));
    FeatureVector fv = featurize(n);
    NodePrediction np;
    np.node_id = n.id;
    np.kind_key = kind_key(n);
    np.predicted_us = p->predict(fv.values);
    auto it = meas.find(n.id);
    if (it != meas.end()) {
      np.measured_us = it->second->latency_value;
      measured_sum += *np.measured_us;
    } else {
      all_measured = false;
    }
    std::string cat = op_category(n.kind);
    double lat = np.measured_us ? *np.measured_us : np.predicted_us;
    cat_lat[cat] += lat;
    total_lat += lat;
    cat_mem[cat] += (double)n.output.bytes();
    total_mem += (double)n.output.bytes();
    rep.end_to_end_predicted_us += np.predicted_us;
    rep.per_node.push_back(std::move(np));
  }
  if (all_measured) rep.end_to_end_measured_us = measured_sum;

  for (const auto& [cat, lat] : cat_lat)
    rep.breakdown[cat].latency_share = total_lat > 0 ? lat / total_lat : 0;
  for (const auto& [cat, mem] : cat_mem)
    rep.breakdown[cat].memory_share = total_mem > 0 ? mem / total_mem : 0;
  return rep;
}

nlohmann::json PredictionReport::to_json() const {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& np : per_node) {
    nlohmann::json jn{{"node_id", np.node_id},
                      {"kind_key", np.kind_key},
                      {"predicted_us", np.predicted_us}};
    if (np.measured_us) jn["measured_us"] = *np.measured_us;
    nodes.push_back(std::move(jn));
  }
  nlohmann::json breakdown_j = nlohmann::json::object();
  for (const auto& [cat, s] : breakdown)
    breakdown_j[cat] = {{"latency_share", s.latency_share},
                        {"memory_share", s.memory_share}};
  nlohmann::json j{{"model_id", model_id},
                   {"context_key", context_key},
                   {"per_node", std::move(nodes)},
                   {"end_to_end_predicted_us", end_to_end_predicted_us},
                   {"breakdown", std::move(breakdown_j)}};
  if (end_to_end_measured_us) j["end_to_end_measured_us"] = *end_to_end_measured_us;
  return j;
}

std::string PredictionReport::to_csv() const {
  std::ostringstream out;
  out << "node_id,kind_key,predicted_us,measured_us\n";
  for (const auto& np : per_node) {
    out << np.node_id << ',' << np.kind_key << ',' << format_latency(np.predicted_us)
        << ',';
    if (np.measured_us) out << format_latency(*np.measured_us);
    out << "\n";
  }
  return out.str();
}

double mape(const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.empty()) throw DataError("mape: empty pair list");
  double acc = 0;
  for (auto [measured, predicted] : pairs) {
    if (!(measured > 0)) throw DataError("mape: measured values must be > 0");
    acc += std::abs(measured - predicted) / measured;
  }
  return acc / pairs.size() * 100.0;
}

SpeedupResult speedup_analysis(const MeasurementSet& a, const MeasurementSet& b,
                               int bins) {
  auto sum_per_model = [](const MeasurementSet& s) {
    std::map<std::string, double> out;
    for (const auto& r : s.records()) out[r.model_id] += r.latency_value;
    return out;
  };
  auto la = sum_per_model(a), lb = sum_per_model(b);

  SpeedupResult res;
  for (const auto& [id, lat] : la) {
    auto it = lb.find(id);
    if (it == lb.end()) {
      res.unmatched.push_back(id);
      continue;
    }
    res.per_model_ratio[id] = lat / it->second;
  }
  for (const auto& [id, lat] : lb)
    if (!la.count(id)) res.unmatched.push_back(id);

  if (!res.per_model_ratio.empty() && bins > 0) {
    double lo = 1e300, hi = -1e300;
    for (const auto& [id, r] : res.per_model_ratio) {
      lo = std::min(lo, r);
      hi = std::max(hi, r);
    }
    if (hi <= lo) hi = lo + 1e-9;
    double width = (hi - lo) / bins;
    res.histogram.resize(bins);
    for (int i = 0; i < bins; ++i) {
      res.histogram[i].bin_start = lo + i * width;
      res.histogram[i].bin_end = lo + (i + 1) * width;
    }
    for (const auto& [id, r] : res.per_model_ratio) {
      int i = std::min((int)((r - lo) / width), bins - 1);
      ++res.histogram[i].count;
    }
  }
  return res;
}

std::string histogram_to_csv(const std::vector<HistogramBin>& bins) {
  std::ostringstream out;
  out << "bin_start,bin_end,count\n";
  for (const auto& b : bins)
    out << b.bin_start << ',' << b.bin_end << ',' << b.count << "\n";
  return out.str();
}

// ---- pipeline -------------------------------------------------------------

PredictorBundle train_bundle(const std::map<std::string, OpGraph>& graphs,
                             const MeasurementSet& records,
                             const std::vector<std::string>& train_ids, Method method,
                             const TrainOptions& opt, uint64_t seed, int jobs) {
  std::map<std::string, bool> in_train;
  for (const auto& id : train_ids) in_train[id] = true;

  struct KindData {
    std::vector<std::vector<double>> X;
    std::vector<double> y;
    std::vector<std::string> schema;
  };
  std::map<std::string, KindData> by_kind;
  std::string context_key;

  for (const auto& r : records.records()) {
    if (!in_train.count(r.model_id)) continue;
    auto git = graphs.find(r.model_id);
    if (git == graphs.end())
      throw DataError("train: no graph for model " + r.model_id);
    if (context_key.empty()) context_key = r.context.key();
    else if (r.context.key() != context_key)
      throw ContextError("train: mixed measurement contexts ('" + context_key +
                         "' vs '" + r.context.key() + "'); train one bundle per context");
    const OpNode& n = git->second.nodes.at(r.node_id);
    std::string key = kind_key(n);
    if (!opt.split_conv_by_format) key = to_string(n.kind);
    FeatureVector fv = featurize(n);
    KindData& kd = by_kind[key];
    if (kd.schema.empty()) kd.schema = fv.names;
    kd.X.push_back(std::move(fv.values));
    kd.y.push_back(r.latency_value);
  }
  if (by_kind.empty()) throw DataError("train: no training rows after join");

  PredictorBundle bundle;
  bundle.context_key = context_key;
  bundle.method = method;
  bundle.seed = seed;

  size_t max_jobs = jobs > 0 ? (size_t)jobs
                             : std::max(1u, std::thread::hardware_concurrency());
  std::vector<std::pair<std::string, const KindData*>> work;
  for (const auto& [key, kd] : by_kind) work.push_back({key, &kd});

  std::vector<TrainedPredictor> results(work.size());
  std::vector<std::exception_ptr> errors(work.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (size_t i = next.fetch_add(1); i < work.size(); i = next.fetch_add(1)) {
      const auto& [key, kd] = work[i];
      try {
        TrainedPredictor p =
            fit(method, kd->X, kd->y, kd->schema, opt.hp, derive_seed(seed, hash_str(key)));
        p.kind_key = key;
        results[i] = std::move(p);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  for (size_t t = 0; t + 1 < std::min(max_jobs, work.size()); ++t)
    threads.emplace_back(worker);
  worker();
  for (auto& th : threads) th.join();
  for (size_t i = 0; i < work.size(); ++i) {
    if (errors[i]) std::rethrow_exception(errors[i]);
    bundle.by_kind[results[i].kind_key] = std::move(results[i]);
  }
  return bundle;
}

EvalSummary evaluate_bundle(const std::map<std::string, OpGraph>& graphs,
                            const MeasurementSet& records,
                            const std::vector<std::string>& eval_ids,
                            const PredictorBundle& bundle,
                            bool allow_context_mismatch) {
  EvalSummary summary;
  std::vector<std::pair<double, double>> e2e;
  std::map<std::string, std::vector<std::pair<double, double>>> by_cat, by_kind;

  for (const auto& id : eval_ids) {
    auto git = graphs.find(id);
    if (git == graphs.end()) throw DataError("evaluate: no graph for model " + id);
    PredictionReport rep =
        predict_model(git->second, bundle, &records, allow_context_mismatch);
    if (!rep.end_to_end_measured_us) continue;
    e2e.push_back({*rep.end_to_end_measured_us, rep.end_to_end_predicted_us});
    for (const auto& np : rep.per_node) {
      if (!np.measured_us) continue;
      const OpNode& n = git->second.nodes.at(np.node_id);
      by_cat[op_category(n.kind)].push_back({*np.measured_us, np.predicted_us});
      by_kind[np.kind_key].push_back({*np.measured_us, np.predicted_us});
    }
    ++summary.n_models;
  }
  if (e2e.empty()) throw DataError("evaluate: no models with full measurements");
  summary.end_to_end_mape = mape(e2e);
  for (const auto& [cat, pairs] : by_cat) summary.per_category_mape[cat] = mape(pairs);
  for (const auto& [k, pairs] : by_kind) summary.per_kind_mape[k] = mape(pairs);
  return summary;
}

SweepTable training_size_sweep(const std::map<std::string, OpGraph>& graphs,
                               const MeasurementSet& records,
                               const std::vector<size_t>& sizes, int runs,
                               const std::vector<Method>& methods,
                               const TrainOptions& opt, size_t n_test, uint64_t seed,
                               int jobs) {
  std::vector<std::string> ids = records.model_ids();
  for (size_t s : sizes)
    if (s + n_test > ids.size())
      throw DataError("sweep: size " + std::to_string(s) + " + test " +
                      std::to_string(n_test) + " exceeds pool " +
                      std::to_string(ids.size()));

  std::map<Method, std::map<size_t, std::vector<double>>> samples;
  for (int run = 0; run < runs; ++run) {
    uint64_t run_seed = derive_seed(seed, (uint64_t)run);
    SplitSpec sp = split(ids, ids.size() - n_test, run_seed);
    // sp.train_ids is a seeded shuffle; size-s training sets nest within it
    for (Method m : methods) {
      for (size_t s : sizes) {
        std::vector<std::string> train(sp.train_ids.begin(), sp.train_ids.begin() + s);
        PredictorBundle b = train_bundle(graphs, records, train, m, opt,
                                         derive_seed(run_seed, hash_str(to_string(m))),
                                         jobs);
        EvalSummary ev = evaluate_bundle(graphs, records, sp.test_ids, b);
        samples[m][s].push_back(ev.end_to_end_mape);
      }
    }
  }

  SweepTable table;
  for (const auto& [m, by_size] : samples)
    for (const auto& [s, vals] : by_size) {
      double mean = std::accumulate(vals.begin(), vals.end(), 0.0) / vals.size();
      double var = 0;
      for (double v : vals) var += (v - mean) * (v - mean);
      table[m][s] = {mean, vals.size() > 1 ? std::sqrt(var / (vals.size() - 1)) : 0.0};
    }
  return table;
}

std::string sweep_to_csv(const SweepTable& table) {
  std::ostringstream out;
  out << "method,train_size,mape_mean,mape_stddev\n";
  for (const auto& [m, by_size] : table)
    for (const auto& [s, cell] : by_size)
      out << to_string(m) << ',' << s << ',' << cell.mean_mape << ',' << cell.stddev
          << "\n";
  return out.str();
}

}  // namespace vitlat
