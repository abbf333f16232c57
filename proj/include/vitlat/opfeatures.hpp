#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "vitlat/opgraph.hpp"

namespace vitlat {

struct UnsupportedOpError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Per-operation feature vector; column order is fixed per kind family and is
// part of the model-serialization contract.
struct FeatureVector {
  OpKind kind;
  std::optional<ConvLayoutTag> conv_layout_tag;
  std::vector<std::string> names;
  std::vector<double> values;
};

// Multiply-accumulate count for one node (1 multiply-add = 1 unit).
// Reshape/Transpose are 0 by rule; an unknown kind throws.
int64_t flops(const OpNode& node);

FeatureVector featurize(const OpNode& node);

// Column names for the feature family of a kind.
std::vector<std::string> feature_schema(OpKind kind);

// Predictor routing key: op kind, with convolutions split by memory format,
// e.g. "Conv2d:channel_last".
std::string kind_key(const OpNode& node);

double arithmetic_intensity(double flop_count, double traffic_bytes);

// in_bytes + out_bytes + weight_bytes summed over nodes; estimate only, no
// cache modeling.
struct GraphWork {
  int64_t total_flops = 0;
  int64_t traffic_bytes = 0;
};
GraphWork graph_work(const OpGraph& graph);

}  // namespace vitlat
