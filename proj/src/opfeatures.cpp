#include "vitlat/opfeatures.hpp"

namespace vitlat {

namespace {

int64_t in_bytes(const OpNode& n) {
  int64_t b = 0;
  for (const TensorSpec& t : n.inputs) b += t.bytes();
  return b;
}

int64_t node_weight_count(const OpNode& n) {
  switch (n.kind) {
    case OpKind::Conv2d:
    case OpKind::DWConv2d:
    case OpKind::PatchEmbed: {
      int64_t k = n.attr("kernel"), g = n.attr("groups", 1);
      int64_t ci = n.attr("c_in"), co = n.attr("c_out");
      return co * ci * k * k / g + co;
    }
    case OpKind::Linear:
      return n.attr("d_in") * n.attr("d_out") + n.attr("d_out");
    case OpKind::LayerNorm:
    case OpKind::BatchNorm:
      return 2 * n.attr("channels");
    default:
      return 0;
  }
}

bool is_conv_family(OpKind k) {
  return k == OpKind::Conv2d || k == OpKind::DWConv2d || k == OpKind::PatchEmbed;
}

bool is_elementwise_family(OpKind k) {
  switch (k) {
    case OpKind::Softmax:
    case OpKind::LayerNorm:
    case OpKind::BatchNorm:
    case OpKind::GELU:
    case OpKind::SiLU:
    case OpKind::ReLU:
    case OpKind::Add:
    case OpKind::Mul:
    case OpKind::Pool:
    case OpKind::Reshape:
    case OpKind::Transpose:
      return true;
    default:
      return false;
  }
}

}  // namespace

int64_t flops(const OpNode& node) {
  switch (node.kind) {
    case OpKind::Conv2d:
    case OpKind::PatchEmbed: {
      int64_t k = node.attr("kernel"), g = node.attr("groups", 1);
      int64_t ho = node.output.dims[2], wo = node.output.dims[3];
      return ho * wo * node.attr("c_out") * node.attr("c_in") * k * k / g;
    }
    case OpKind::DWConv2d: {
      int64_t k = node.attr("kernel");
      int64_t ho = node.output.dims[2], wo = node.output.dims[3];
      return ho * wo * node.attr("c_out") * k * k;
    }
    case OpKind::Linear:
      return node.attr("tokens") * node.attr("d_in") * node.attr("d_out");
    case OpKind::MatMul:
      return node.attr("batch", 1) * node.attr("m") * node.attr("n") * node.attr("k");
    case OpKind::Softmax:
      // exp, sum, divide per element
      return 3 * node.output.elements();
    case OpKind::LayerNorm:
    case OpKind::BatchNorm:
    case OpKind::GELU:
    case OpKind::SiLU:
    case OpKind::ReLU:
    case OpKind::Add:
    case OpKind::Mul:
      return node.output.elements();
    case OpKind::Pool:
      return node.inputs.empty() ? 0 : node.inputs[0].elements();
    case OpKind::Reshape:
    case OpKind::Transpose:
      return 0;  // data movement only, by rule
  }
  throw UnsupportedOpError("flops: unsupported op kind id " +
                           std::to_string((int)node.kind));
}

std::vector<std::string> feature_schema(OpKind kind) {
  if (is_conv_family(kind))
    return {"c_in", "c_out", "h_out", "w_out", "kernel", "stride", "groups",
            "flops", "in_bytes", "out_bytes", "weight_bytes"};
  if (kind == OpKind::Linear)
    return {"tokens", "d_in", "d_out", "flops", "in_bytes", "out_bytes",
            "weight_bytes"};
  if (kind == OpKind::MatMul)
    return {"m", "n", "k", "flops", "in_bytes", "out_bytes"};
  if (is_elementwise_family(kind))
    return {"elements", "in_bytes", "out_bytes", "channels"};
  throw UnsupportedOpError("feature_schema: unsupported kind " + to_string(kind));
}

FeatureVector featurize(const OpNode& node) {
  FeatureVector fv;
  fv.kind = node.kind;
  fv.conv_layout_tag = node.conv_layout_tag;
  fv.names = feature_schema(node.kind);
  int64_t f = flops(node);
  int64_t ib = in_bytes(node), ob = node.output.bytes();
  int64_t wb = node_weight_count(node) * node.output.element_bytes;

  if (is_conv_family(node.kind)) {
    fv.values = {(double)node.attr("c_in"),  (double)node.attr("c_out"),
                 (double)node.output.dims[2], (double)node.output.dims[3],
                 (double)node.attr("kernel"), (double)node.attr("stride", 1),
                 (double)node.attr("groups", 1), (double)f, (double)ib,
                 (double)ob, (double)wb};
  } else if (node.kind == OpKind::Linear) {
    fv.values = {(double)node.attr("tokens"), (double)node.attr("d_in"),
                 (double)node.attr("d_out"), (double)f, (double)ib, (double)ob,
                 (double)wb};
  } else if (node.kind == OpKind::MatMul) {
    // heads folded into the row count
    fv.values = {(double)(node.attr("batch", 1) * node.attr("m")),
                 (double)node.attr("n"), (double)node.attr("k"), (double)f,
                 (double)ib, (double)ob};
  } else {
    int64_t ch = node.attr("channels",
                           node.output.dims.size() == 4 ? node.output.dims[1]
                                                        : node.output.dims.back());
    fv.values = {(double)node.output.elements(), (double)ib, (double)ob, (double)ch};
  }
  return fv;
}

std::string kind_key(const OpNode& node) {
  std::string key = to_string(node.kind);
  if (node.conv_layout_tag) key += ":" + to_string(*node.conv_layout_tag);
  return key;
}

double arithmetic_intensity(double flop_count, double traffic_bytes) {
  if (traffic_bytes <= 0)
    throw std::domain_error("arithmetic_intensity: traffic must be positive");
  return flop_count / traffic_bytes;
}

GraphWork graph_work(const OpGraph& graph) {
  GraphWork w;
  for (const OpNode& n : graph.nodes) {
    w.total_flops += flops(n);
    w.traffic_bytes += in_bytes(n) + n.output.bytes() +
                       node_weight_count(n) * n.output.element_bytes;
  }
  return w;
}

}  // namespace vitlat
