#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "vitlat/archspace.hpp"

namespace vitlat {

enum class Layout { NCHW, NHWC, TOKENS3D };
enum class Precision { fp32, int8 };

inline int element_bytes(Precision p) { return p == Precision::fp32 ? 4 : 1; }

struct TensorSpec {
  std::vector<int64_t> dims;
  Layout layout = Layout::NCHW;
  int element_bytes = 4;

  int64_t elements() const {
    int64_t n = 1;
    for (int64_t d : dims) n *= d;
    return n;
  }
  int64_t bytes() const { return elements() * element_bytes; }
  bool operator==(const TensorSpec&) const = default;
};

enum class OpKind {
  Conv2d, DWConv2d, Linear, MatMul, Softmax, LayerNorm, BatchNorm,
  GELU, SiLU, ReLU, Add, Mul, Pool, Reshape, Transpose, PatchEmbed
};

std::string to_string(OpKind k);
OpKind op_kind_from_string(const std::string& s);

enum class ConvLayoutTag { ChannelFirst, ChannelLast };

inline std::string to_string(ConvLayoutTag t) {
  return t == ConvLayoutTag::ChannelFirst ? "channel_first" : "channel_last";
}

struct OpNode {
  int id = 0;
  OpKind kind = OpKind::Reshape;
  std::map<std::string, int64_t> attrs;  // kernel, stride, groups, heads, ...
  std::vector<TensorSpec> inputs;
  TensorSpec output;
  int block_index = 0;  // original block index; 0 = stem/head
  std::optional<ConvLayoutTag> conv_layout_tag;  // Conv2d/DWConv2d only

  int64_t attr(const std::string& key, int64_t fallback = 0) const {
    auto it = attrs.find(key);
    return it == attrs.end() ? fallback : it->second;
  }
};

struct OpGraph {
  std::string arch_id;
  std::vector<OpNode> nodes;  // topological order
  int64_t total_params = 0;
  int64_t weight_bytes = 0;
};

struct LoweringError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Expands an architecture into its operation graph. Pure in (cfg, precision).
OpGraph lower(const ArchConfig& cfg, Precision precision);

// weight_bytes + sum of per-node output tensor bytes.
int64_t estimate_memory(const OpGraph& graph);

std::map<OpKind, int> op_histogram(const OpGraph& graph);

// JSON-lines serialization: one header record then one line per node.
std::string graph_to_jsonl(const OpGraph& graph);
OpGraph graph_from_jsonl(const std::string& text);

}  // namespace vitlat
