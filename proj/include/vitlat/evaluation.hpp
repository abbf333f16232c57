#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "vitlat/datastore.hpp"
#include "vitlat/learners.hpp"
#include "vitlat/opgraph.hpp"

namespace vitlat {

struct CoverageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ContextError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Fixed op-category palette used for breakdown reports.
std::string op_category(OpKind kind);

struct NodePrediction {
  int node_id = 0;
  std::string kind_key;
  double predicted_us = 0;
  std::optional<double> measured_us;
};

struct CategoryShare {
  double latency_share = 0;
  double memory_share = 0;
};

struct PredictionReport {
  std::string model_id;
  std::string context_key;
  std::vector<NodePrediction> per_node;
  double end_to_end_predicted_us = 0;  // exact sum of per-node predictions
  std::optional<double> end_to_end_measured_us;  // sum of per-op measurements
  std::map<std::string, CategoryShare> breakdown;

  nlohmann::json to_json() const;
  std::string to_csv() const;  // node_id,kind_key,predicted_us,measured_us
};

// Per-node prediction routed by kind_key, summed to end-to-end. Measurements,
// when given, must match the bundle's context unless allow_context_mismatch.
PredictionReport predict_model(const OpGraph& graph, const PredictorBundle& bundle,
                               const MeasurementSet* measurements = nullptr,
                               bool allow_context_mismatch = false);

double mape(const std::vector<std::pair<double, double>>& measured_predicted);

struct HistogramBin {
  double bin_start = 0, bin_end = 0;
  int count = 0;
};

struct SpeedupResult {
  std::map<std::string, double> per_model_ratio;  // latency_a / latency_b
  std::vector<HistogramBin> histogram;
  std::vector<std::string> unmatched;  // ids present on only one side
};

SpeedupResult speedup_analysis(const MeasurementSet& a, const MeasurementSet& b,
                               int bins = 20);

std::string histogram_to_csv(const std::vector<HistogramBin>& bins);

// ---- train/evaluate pipeline ----------------------------------------------

struct TrainOptions {
  Hyperparams hp;
  bool split_conv_by_format = true;  // false forces one shared conv predictor
};

// Trains one predictor per kind_key from the records joined against graphs.
PredictorBundle train_bundle(const std::map<std::string, OpGraph>& graphs,
                             const MeasurementSet& records,
                             const std::vector<std::string>& train_ids, Method method,
                             const TrainOptions& opt, uint64_t seed, int jobs = 0);

struct EvalSummary {
  double end_to_end_mape = 0;
  std::map<std::string, double> per_category_mape;
  std::map<std::string, double> per_kind_mape;
  size_t n_models = 0;
};

EvalSummary evaluate_bundle(const std::map<std::string, OpGraph>& graphs,
                            const MeasurementSet& records,
                            const std::vector<std::string>& eval_ids,
                            const PredictorBundle& bundle,
                            bool allow_context_mismatch = false);

struct SweepCell {
  double mean_mape = 0;
  double stddev = 0;
};

// table[method][size] -> MAPE averaged over `runs` seeded repetitions
using SweepTable = std::map<Method, std::map<size_t, SweepCell>>;

SweepTable training_size_sweep(const std::map<std::string, OpGraph>& graphs,
                               const MeasurementSet& records,
                               const std::vector<size_t>& sizes, int runs,
                               const std::vector<Method>& methods,
                               const TrainOptions& opt, size_t n_test, uint64_t seed,
                               int jobs = 0);

std::string sweep_to_csv(const SweepTable& table);

}  // namespace vitlat
