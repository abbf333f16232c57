#include "vitlat/learners.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "vitlat/datastore.hpp"

namespace vitlat {

namespace {
constexpr double kPredictFloorUs = 1e-6;
}

std::string to_string(Method m) {
  switch (m) {
    case Method::Lasso: return "lasso";
    case Method::RF: return "rf";
    default: return "gbdt";
  }
}

Method method_from_string(const std::string& s) {
  if (s == "lasso") return Method::Lasso;
  if (s == "rf") return Method::RF;
  if (s == "gbdt") return Method::GBDT;
  throw std::invalid_argument("unknown method: " + s);
}

void Hyperparams::check() const {
  if (lasso.lambda < 0 || lasso.max_iters < 1) throw std::invalid_argument("bad lasso params");
  if (rf.n_trees < 1 || rf.max_depth < 1 || rf.min_leaf < 1 ||
      rf.feature_subsample <= 0 || rf.feature_subsample > 1)
    throw std::invalid_argument("bad rf params");
  if (gbdt.n_trees < 1 || gbdt.learning_rate <= 0 || gbdt.learning_rate > 1 ||
      gbdt.max_depth < 1 || gbdt.min_leaf < 1)
    throw std::invalid_argument("bad gbdt params");
}

double Tree::predict(const std::vector<double>& x) const {
  int i = 0;
  while (nodes[i].feature >= 0)
    i = x[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
  return nodes[i].value;
}

namespace {

using Matrix = std::vector<std::vector<double>>;

// ---- CART regression tree -------------------------------------------------

struct TreeConfig {
  int max_depth = 6;
  int min_leaf = 1;
  int features_per_split = 0;  // 0 = all
};

// Builds one tree. Splits minimize SSE of `response`; leaf values come from
// `leaf_value` evaluated over the samples that land in the leaf.
class TreeBuilder {
 public:
  template <class LeafFn>
  Tree build(const Matrix& X, const std::vector<double>& response,
             std::vector<int> samples, const TreeConfig& cfg, Rng* rng,
             const LeafFn& leaf_value) {
    x_ = &X;
    r_ = &response;
    cfg_ = cfg;
    rng_ = rng;
    tree_.nodes.clear();
    grow(std::move(samples), 0, leaf_value);
    return std::move(tree_);
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0;
    double gain = 0;
  };

  Split best_split(const std::vector<int>& samples) {
    const Matrix& X = *x_;
    const std::vector<double>& r = *r_;
    size_t n = samples.size();
    size_t n_features = X[samples[0]].size();

    std::vector<int> feats(n_features);
    std::iota(feats.begin(), feats.end(), 0);
    if (cfg_.features_per_split > 0 && (size_t)cfg_.features_per_split < n_features) {
      // deterministic partial Fisher-Yates, then ascending for tie-breaks
      for (int i = 0; i < cfg_.features_per_split; ++i)
        std::swap(feats[i], feats[rng_->uniform_int(i, (int64_t)n_features - 1)]);
      feats.resize(cfg_.features_per_split);
      std::sort(feats.begin(), feats.end());
    }

    double sum = 0;
    for (int s : samples) sum += r[s];

    Split best;
    std::vector<std::pair<double, double>> vals(n);  // (x, response)
    for (int f : feats) {
      for (size_t i = 0; i < n; ++i)
        vals[i] = {X[samples[i]][f], r[samples[i]]};
      std::sort(vals.begin(), vals.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      if (vals.front().first == vals.back().first) continue;  // constant feature

      double left_sum = 0;
      size_t left_n = 0;
      for (size_t i = 0; i + 1 < n; ++i) {
        left_sum += vals[i].second;
        ++left_n;
        if (vals[i].first == vals[i + 1].first) continue;
        size_t right_n = n - left_n;
        if (left_n < (size_t)cfg_.min_leaf || right_n < (size_t)cfg_.min_leaf) continue;
        double right_sum = sum - left_sum;
        // gain = SSE(parent) - SSE(children), up to the shared constant
        double score = left_sum * left_sum / left_n + right_sum * right_sum / right_n -
                       sum * sum / n;
        if (score > best.gain) {
          best.gain = score;
          best.feature = f;
          best.threshold = 0.5 * (vals[i].first + vals[i + 1].first);
        }
      }
    }
    return best;
  }

  template <class LeafFn>
  int grow(std::vector<int> samples, int depth, const LeafFn& leaf_value) {
    int id = (int)tree_.nodes.size();
    tree_.nodes.emplace_back();
    bool can_split = depth < cfg_.max_depth && samples.size() >= 2 * (size_t)cfg_.min_leaf;
    Split sp;
    if (can_split) sp = best_split(samples);
    if (sp.feature < 0 || sp.gain <= 0) {
      tree_.nodes[id].value = leaf_value(samples);
      return id;
    }
    std::vector<int> left, right;
    for (int s : samples)
      ((*x_)[s][sp.feature] <= sp.threshold ? left : right).push_back(s);
    samples.clear();
    samples.shrink_to_fit();
    tree_.nodes[id].feature = sp.feature;
    tree_.nodes[id].threshold = sp.threshold;
    tree_.nodes[id].gain = sp.gain;
    int l = grow(std::move(left), depth + 1, leaf_value);
    int rgt = grow(std::move(right), depth + 1, leaf_value);
    tree_.nodes[id].left = l;
    tree_.nodes[id].right = rgt;
    return id;
  }

  const Matrix* x_ = nullptr;
  const std::vector<double>* r_ = nullptr;
  TreeConfig cfg_;
  Rng* rng_ = nullptr;
  Tree tree_;
};

double mean_of(const std::vector<double>& v, const std::vector<int>& idx) {
  double s = 0;
  for (int i : idx) s += v[i];
  return idx.empty() ? 0.0 : s / idx.size();
}

// Weighted median: smallest value v with cumulative weight >= half the total.
double weighted_median(std::vector<std::pair<double, double>> vw) {
  if (vw.empty()) return 0.0;
  std::sort(vw.begin(), vw.end());
  double total = 0;
  for (auto& [v, w] : vw) total += w;
  double acc = 0;
  for (auto& [v, w] : vw) {
    acc += w;
    if (acc >= total / 2) return v;
  }
  return vw.back().first;
}

// ---- Lasso ----------------------------------------------------------------

void fit_lasso(TrainedPredictor& p, const Matrix& X, const std::vector<double>& y,
               const LassoParams& lp) {
  size_t n = X.size(), d = X[0].size();
  p.mean.assign(d, 0.0);
  p.scale.assign(d, 0.0);
  for (size_t j = 0; j < d; ++j) {
    double m = 0;
    for (size_t i = 0; i < n; ++i) m += X[i][j];
    m /= n;
    double v = 0;
    for (size_t i = 0; i < n; ++i) v += (X[i][j] - m) * (X[i][j] - m);
    p.mean[j] = m;
    p.scale[j] = std::sqrt(v / n);
  }
  double ymean = std::accumulate(y.begin(), y.end(), 0.0) / n;
  p.intercept = ymean;
  // lambda is scale-free: relative to the target's standard deviation
  double yvar = 0;
  for (double v : y) yvar += (v - ymean) * (v - ymean);
  double lambda = lp.lambda * std::sqrt(yvar / n);

  // standardized columns; zero-variance features stay excluded (coef 0)
  Matrix Z(n, std::vector<double>(d, 0.0));
  for (size_t j = 0; j < d; ++j) {
    if (p.scale[j] == 0) continue;
    for (size_t i = 0; i < n; ++i) Z[i][j] = (X[i][j] - p.mean[j]) / p.scale[j];
  }

  p.coef.assign(d, 0.0);
  std::vector<double> resid(n);
  for (size_t i = 0; i < n; ++i) resid[i] = y[i] - ymean;

  for (int it = 0; it < lp.max_iters; ++it) {
    double max_delta = 0;
    for (size_t j = 0; j < d; ++j) {
      if (p.scale[j] == 0) continue;
      double rho = 0;
      for (size_t i = 0; i < n; ++i) rho += Z[i][j] * resid[i];
      rho = rho / n + p.coef[j];  // columns have unit variance
      double nj = std::abs(rho) <= lambda
                      ? 0.0
                      : rho - std::copysign(lambda, rho);
      double delta = nj - p.coef[j];
      if (delta != 0) {
        for (size_t i = 0; i < n; ++i) resid[i] -= delta * Z[i][j];
        p.coef[j] = nj;
        max_delta = std::max(max_delta, std::abs(delta));
      }
    }
    if (max_delta < lp.tol) break;
  }
}

// ---- Random forest --------------------------------------------------------

void fit_rf(TrainedPredictor& p, const Matrix& X, const std::vector<double>& y,
            const RFParams& rp, uint64_t seed) {
  size_t n = X.size(), d = X[0].size();
  TreeConfig cfg;
  cfg.max_depth = rp.max_depth;
  cfg.min_leaf = rp.min_leaf;
  cfg.features_per_split =
      rp.feature_subsample >= 1.0 ? 0 : std::max(1, (int)std::ceil(rp.feature_subsample * d));
  p.trees.resize(rp.n_trees);
  for (int t = 0; t < rp.n_trees; ++t) {
    Rng rng(derive_seed(seed, (uint64_t)t));
    std::vector<int> samples(n);
    if (rp.bootstrap) {
      for (size_t i = 0; i < n; ++i) samples[i] = (int)rng.uniform_int(0, (int64_t)n - 1);
      std::sort(samples.begin(), samples.end());
    } else {
      std::iota(samples.begin(), samples.end(), 0);
    }
    TreeBuilder tb;
    p.trees[t] = tb.build(X, y, std::move(samples), cfg, &rng,
                          [&](const std::vector<int>& idx) { return mean_of(y, idx); });
  }
}

// ---- Gradient boosting ----------------------------------------------------

void fit_gbdt(TrainedPredictor& p, const Matrix& X, const std::vector<double>& y,
              const GbdtParams& gp, uint64_t seed) {
  size_t n = X.size();
  TreeConfig cfg;
  cfg.max_depth = gp.max_depth;
  cfg.min_leaf = gp.min_leaf;
  p.learning_rate = gp.learning_rate;
  p.objective = gp.objective;

  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);
  Rng rng(derive_seed(seed, hash_str("gbdt")));

  if (gp.objective == GbdtObjective::LogL2) {
    std::vector<double> ylog(n);
    for (size_t i = 0; i < n; ++i) ylog[i] = std::log(y[i]);
    p.base_value = std::accumulate(ylog.begin(), ylog.end(), 0.0) / n;
    std::vector<double> f(n, p.base_value), resid(n);
    for (int t = 0; t < gp.n_trees; ++t) {
      for (size_t i = 0; i < n; ++i) resid[i] = ylog[i] - f[i];
      TreeBuilder tb;
      Tree tree = tb.build(X, resid, all, cfg, &rng,
                           [&](const std::vector<int>& idx) { return mean_of(resid, idx); });
      for (size_t i = 0; i < n; ++i) f[i] += gp.learning_rate * tree.predict(X[i]);
      p.trees.push_back(std::move(tree));
    }
    return;
  }

  // relative-L1: loss = |y - F| / y, gradient step via sign residuals,
  // leaf value = weighted median of residuals with weights 1/y
  {
    std::vector<std::pair<double, double>> vw(n);
    for (size_t i = 0; i < n; ++i) vw[i] = {y[i], 1.0 / y[i]};
    p.base_value = weighted_median(std::move(vw));
  }
  std::vector<double> f(n, p.base_value), grad(n);
  for (int t = 0; t < gp.n_trees; ++t) {
    for (size_t i = 0; i < n; ++i) {
      double r = y[i] - f[i];
      grad[i] = (r > 0 ? 1.0 : (r < 0 ? -1.0 : 0.0)) / y[i];
    }
    TreeBuilder tb;
    Tree tree = tb.build(X, grad, all, cfg, &rng, [&](const std::vector<int>& idx) {
      std::vector<std::pair<double, double>> vw;
      vw.reserve(idx.size());
      for (int i : idx) vw.push_back({y[i] - f[i], 1.0 / y[i]});
      return weighted_median(std::move(vw));
    });
    for (size_t i = 0; i < n; ++i) f[i] += gp.learning_rate * tree.predict(X[i]);
    p.trees.push_back(std::move(tree));
  }
}

}  // namespace

TrainedPredictor fit(Method method, const std::vector<std::vector<double>>& X,
                     const std::vector<double>& y,
                     const std::vector<std::string>& feature_schema,
                     const Hyperparams& hp, uint64_t seed) {
  hp.check();
  if (X.size() != y.size() || X.size() < 2)
    throw DataError("fit: need |X| = |y| >= 2, got " + std::to_string(X.size()));
  for (double v : y)
    if (!(v > 0)) throw DataError("fit: targets must be strictly positive");
  for (const auto& row : X)
    if (row.size() != feature_schema.size())
      throw DataError("fit: row width does not match feature schema");

  TrainedPredictor p;
  p.method = method;
  p.feature_schema = feature_schema;
  p.n_samples = X.size();
  p.seed = seed;
  p.hp = hp;
  switch (method) {
    case Method::Lasso: fit_lasso(p, X, y, hp.lasso); break;
    case Method::RF: fit_rf(p, X, y, hp.rf, seed); break;
    case Method::GBDT: fit_gbdt(p, X, y, hp.gbdt, seed); break;
  }
  return p;
}

double TrainedPredictor::predict(const std::vector<double>& x) const {
  if (x.size() != feature_schema.size())
    throw DataError("predict: feature width " + std::to_string(x.size()) +
                    " does not match schema width " +
                    std::to_string(feature_schema.size()));
  double v = 0;
  switch (method) {
    case Method::Lasso: {
      v = intercept;
      for (size_t j = 0; j < coef.size(); ++j)
        if (scale[j] != 0) v += coef[j] * (x[j] - mean[j]) / scale[j];
      break;
    }
    case Method::RF: {
      for (const Tree& t : trees) v += t.predict(x);
      v /= trees.empty() ? 1 : trees.size();
      break;
    }
    case Method::GBDT: {
      v = base_value;
      for (const Tree& t : trees) v += learning_rate * t.predict(x);
      if (objective == GbdtObjective::LogL2) v = std::exp(v);
      break;
    }
  }
  return std::max(v, kPredictFloorUs);
}

std::map<std::string, double> TrainedPredictor::mdi_importance() const {
  if (method == Method::Lasso)
    throw std::invalid_argument("mdi_importance: not defined for Lasso");
  std::vector<double> acc(feature_schema.size(), 0.0);
  double total = 0;
  for (const Tree& t : trees)
    for (const TreeNode& n : t.nodes)
      if (n.feature >= 0) {
        acc[n.feature] += n.gain;
        total += n.gain;
      }
  std::map<std::string, double> out;
  for (size_t j = 0; j < acc.size(); ++j)
    out[feature_schema[j]] = total > 0 ? acc[j] / total : 0.0;
  return out;
}

// ---- serialization --------------------------------------------------------

namespace {

nlohmann::json tree_to_json(const Tree& t) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const TreeNode& n : t.nodes)
    nodes.push_back({n.feature, n.threshold, n.left, n.right, n.value, n.gain});
  return nodes;
}

Tree tree_from_json(const nlohmann::json& j) {
  Tree t;
  for (const auto& jn : j) {
    TreeNode n;
    n.feature = jn.at(0).get<int>();
    n.threshold = jn.at(1).get<double>();
    n.left = jn.at(2).get<int>();
    n.right = jn.at(3).get<int>();
    n.value = jn.at(4).get<double>();
    n.gain = jn.at(5).get<double>();
    t.nodes.push_back(n);
  }
  return t;
}

nlohmann::json hp_to_json(const Hyperparams& hp) {
  return {{"lasso", {{"lambda", hp.lasso.lambda}, {"max_iters", hp.lasso.max_iters},
                     {"tol", hp.lasso.tol}}},
          {"rf", {{"n_trees", hp.rf.n_trees}, {"max_depth", hp.rf.max_depth},
                  {"min_leaf", hp.rf.min_leaf},
                  {"feature_subsample", hp.rf.feature_subsample},
                  {"bootstrap", hp.rf.bootstrap}}},
          {"gbdt", {{"n_trees", hp.gbdt.n_trees},
                    {"learning_rate", hp.gbdt.learning_rate},
                    {"max_depth", hp.gbdt.max_depth}, {"min_leaf", hp.gbdt.min_leaf},
                    {"objective", hp.gbdt.objective == GbdtObjective::RelativeL1
                                      ? "relative_l1" : "log_l2"}}}};
}

Hyperparams hp_from_json(const nlohmann::json& j) {
  Hyperparams hp;
  hp.lasso.lambda = j.at("lasso").at("lambda");
  hp.lasso.max_iters = j.at("lasso").at("max_iters");
  hp.lasso.tol = j.at("lasso").at("tol");
  hp.rf.n_trees = j.at("rf").at("n_trees");
  hp.rf.max_depth = j.at("rf").at("max_depth");
  hp.rf.min_leaf = j.at("rf").at("min_leaf");
  hp.rf.feature_subsample = j.at("rf").at("feature_subsample");
  hp.rf.bootstrap = j.at("rf").at("bootstrap");
  hp.gbdt.n_trees = j.at("gbdt").at("n_trees");
  hp.gbdt.learning_rate = j.at("gbdt").at("learning_rate");
  hp.gbdt.max_depth = j.at("gbdt").at("max_depth");
  hp.gbdt.min_leaf = j.at("gbdt").at("min_leaf");
  hp.gbdt.objective = j.at("gbdt").at("objective") == "relative_l1"
                          ? GbdtObjective::RelativeL1 : GbdtObjective::LogL2;
  return hp;
}

}  // namespace

nlohmann::json TrainedPredictor::to_json() const {
  nlohmann::json trees_j = nlohmann::json::array();
  for (const Tree& t : trees) trees_j.push_back(tree_to_json(t));
  return {{"kind_key", kind_key},
          {"method", to_string(method)},
          {"feature_schema", feature_schema},
          {"coef", coef},
          {"mean", mean},
          {"scale", scale},
          {"intercept", intercept},
          {"trees", std::move(trees_j)},
          {"base_value", base_value},
          {"learning_rate", learning_rate},
          {"objective", objective == GbdtObjective::RelativeL1 ? "relative_l1" : "log_l2"},
          {"n_samples", n_samples},
          {"seed", seed},
          {"hyperparams", hp_to_json(hp)}};
}

TrainedPredictor TrainedPredictor::from_json(const nlohmann::json& j) {
  TrainedPredictor p;
  p.kind_key = j.at("kind_key").get<std::string>();
  p.method = method_from_string(j.at("method").get<std::string>());
  p.feature_schema = j.at("feature_schema").get<std::vector<std::string>>();
  p.coef = j.at("coef").get<std::vector<double>>();
  p.mean = j.at("mean").get<std::vector<double>>();
  p.scale = j.at("scale").get<std::vector<double>>();
  p.intercept = j.at("intercept");
  for (const auto& jt : j.at("trees")) p.trees.push_back(tree_from_json(jt));
  p.base_value = j.at("base_value");
  p.learning_rate = j.at("learning_rate");
  p.objective = j.at("objective") == "relative_l1" ? GbdtObjective::RelativeL1
                                                   : GbdtObjective::LogL2;
  p.n_samples = j.at("n_samples").get<size_t>();
  p.seed = j.at("seed").get<uint64_t>();
  p.hp = hp_from_json(j.at("hyperparams"));
  return p;
}

nlohmann::json PredictorBundle::to_json() const {
  nlohmann::json kinds = nlohmann::json::object();
  for (const auto& [k, p] : by_kind) kinds[k] = p.to_json();
  return {{"schema_version", schema_version},
          {"context_key", context_key},
          {"method", to_string(method)},
          {"seed", seed},
          {"predictors", std::move(kinds)}};
}

PredictorBundle PredictorBundle::from_json(const nlohmann::json& j) {
  PredictorBundle b;
  b.schema_version = j.at("schema_version");
  b.context_key = j.at("context_key").get<std::string>();
  b.method = method_from_string(j.at("method").get<std::string>());
  b.seed = j.at("seed").get<uint64_t>();
  for (const auto& [k, jp] : j.at("predictors").items())
    b.by_kind[k] = TrainedPredictor::from_json(jp);
  return b;
}

PredictorBundle PredictorBundle::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open bundle file: " + path);
  nlohmann::json j;
  in >> j;
  return from_json(j);
}

}  // namespace vitlat
