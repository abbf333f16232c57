#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "vitlat/rng.hpp"

namespace vitlat {

enum class Method { Lasso, RF, GBDT };
std::string to_string(Method m);
Method method_from_string(const std::string& s);

enum class GbdtObjective { RelativeL1, LogL2 };

struct LassoParams {
  double lambda = 0.1;  // relative to std(y); see fit_lasso
  int max_iters = 2000;
  double tol = 1e-8;
};

struct RFParams {
  int n_trees = 200;
  int max_depth = 12;
  int min_leaf = 1;
  double feature_subsample = 1.0;  // fraction of features tried per split
  bool bootstrap = true;
};

struct GbdtParams {
  int n_trees = 300;
  double learning_rate = 0.1;
  int max_depth = 6;
  int min_leaf = 1;
  GbdtObjective objective = GbdtObjective::LogL2;
};

struct Hyperparams {
  LassoParams lasso;
  RFParams rf;
  GbdtParams gbdt;
  void check() const;  // throws std::invalid_argument
};

// Flattened binary tree. Leaves have feature == -1.
struct TreeNode {
  int feature = -1;
  double threshold = 0.0;
  int left = -1, right = -1;
  double value = 0.0;
  double gain = 0.0;  // impurity (SSE) decrease at this split, for MDI
};

struct Tree {
  std::vector<TreeNode> nodes;
  double predict(const std::vector<double>& x) const;
};

struct DataError;  // datastore.hpp

struct TrainedPredictor {
  std::string kind_key;
  Method method = Method::GBDT;
  std::vector<std::string> feature_schema;

  // Lasso: prediction = intercept + sum coef[j] * (x[j] - mean[j]) / scale[j]
  std::vector<double> coef, mean, scale;
  double intercept = 0.0;

  // trees (RF: mean of trees; GBDT: base + lr * sum of trees)
  std::vector<Tree> trees;
  double base_value = 0.0;
  double learning_rate = 1.0;
  GbdtObjective objective = GbdtObjective::RelativeL1;

  size_t n_samples = 0;
  uint64_t seed = 0;
  Hyperparams hp;

  double predict(const std::vector<double>& x) const;

  // Mean-decrease-of-impurity weights; >= 0, summing to 1 when any split
  // exists. Throws for Lasso.
  std::map<std::string, double> mdi_importance() const;

  nlohmann::json to_json() const;
  static TrainedPredictor from_json(const nlohmann::json& j);
};

// X is row-major (one row per sample). y must be strictly positive.
TrainedPredictor fit(Method method, const std::vector<std::vector<double>>& X,
                     const std::vector<double>& y,
                     const std::vector<std::string>& feature_schema,
                     const Hyperparams& hp, uint64_t seed);

// A set of per-kind predictors sharing one measurement context.
struct PredictorBundle {
  int schema_version = 1;
  std::string context_key;
  Method method = Method::GBDT;
  uint64_t seed = 0;
  std::map<std::string, TrainedPredictor> by_kind;

  nlohmann::json to_json() const;
  static PredictorBundle from_json(const nlohmann::json& j);
  static PredictorBundle from_json_file(const std::string& path);
};

}  // namespace vitlat
