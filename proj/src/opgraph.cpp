#include "vitlat/opgraph.hpp"

#include <algorithm>
#include <array>
#include <sstream>

#include <nlohmann/json.hpp>

namespace vitlat {

namespace {

const std::array<std::pair<OpKind, const char*>, 16> kKindNames{{
    {OpKind::Conv2d, "Conv2d"},       {OpKind::DWConv2d, "DWConv2d"},
    {OpKind::Linear, "Linear"},       {OpKind::MatMul, "MatMul"},
    {OpKind::Softmax, "Softmax"},     {OpKind::LayerNorm, "LayerNorm"},
    {OpKind::BatchNorm, "BatchNorm"}, {OpKind::GELU, "GELU"},
    {OpKind::SiLU, "SiLU"},           {OpKind::ReLU, "ReLU"},
    {OpKind::Add, "Add"},             {OpKind::Mul, "Mul"},
    {OpKind::Pool, "Pool"},           {OpKind::Reshape, "Reshape"},
    {OpKind::Transpose, "Transpose"}, {OpKind::PatchEmbed, "PatchEmbed"},
}};

const char* layout_name(Layout l) {
  switch (l) {
    case Layout::NCHW: return "NCHW";
    case Layout::NHWC: return "NHWC";
    default: return "TOKENS3D";
  }
}

Layout layout_from_string(const std::string& s) {
  if (s == "NCHW") return Layout::NCHW;
  if (s == "NHWC") return Layout::NHWC;
  if (s == "TOKENS3D") return Layout::TOKENS3D;
  throw LoweringError("unknown layout: " + s);
}

int64_t ceil_div(int64_t a, int64_t b) { return (a + b - 1) / b; }

// Incrementally builds the node list while tracking the live tensor, the
// spatial grid and the memory-format state seen by convolutions.
class Builder {
 public:
  Builder(const ArchConfig& cfg, Precision prec)
      : cfg_(cfg), ebytes_(element_bytes(prec)) {
    graph_.arch_id = cfg.arch_id();
    cur_ = TensorSpec{{1, 3, cfg.input_height, cfg.input_width}, Layout::NCHW, ebytes_};
    h_ = cfg.input_height;
    w_ = cfg.input_width;
  }

  OpGraph build() {
    for (size_t j = 0; j < cfg_.blocks.size(); ++j) {
      const BlockConfig& b = cfg_.blocks[j];
      block_ = b.original_index;
      int patch = j == 0 ? (1 << cfg_.merge_k) : 2;
      patch_embed(patch, b.embedding_dim);
      if (b.token_mixer == TokenMixer::Attention) {
        attention_block(b);
      } else {
        sepconv_block(b);
      }
    }
    head();
    return std::move(graph_);
  }

 private:
  void push(OpKind kind, std::vector<TensorSpec> inputs, TensorSpec out,
            std::map<std::string, int64_t> attrs = {},
            std::optional<ConvLayoutTag> tag = std::nullopt) {
    OpNode n;
    n.id = (int)graph_.nodes.size();
    n.kind = kind;
    n.attrs = std::move(attrs);
    n.inputs = std::move(inputs);
    n.output = std::move(out);
    n.block_index = block_;
    n.conv_layout_tag = tag;
    graph_.nodes.push_back(std::move(n));
    cur_ = graph_.nodes.back().output;
  }

  void add_params(int64_t count) {
    graph_.total_params += count;
    graph_.weight_bytes += count * ebytes_;
  }

  bool in_tokens() const { return cur_.layout == Layout::TOKENS3D; }
  int64_t channels() const {
    return in_tokens() ? cur_.dims[2] : cur_.dims[1];
  }

  void to_tokens() {
    if (in_tokens()) return;
    // NCHW -> NHWC -> [1, H*W, C]
    TensorSpec nhwc{{1, h_, w_, cur_.dims[1]}, Layout::NHWC, ebytes_};
    push(OpKind::Transpose, {cur_}, nhwc);
    TensorSpec tok{{1, h_ * w_, nhwc.dims[3]}, Layout::TOKENS3D, ebytes_};
    push(OpKind::Reshape, {cur_}, tok);
  }

  void to_grid() {
    if (!in_tokens()) return;
    int64_t c = cur_.dims[2];
    TensorSpec nhwc{{1, h_, w_, c}, Layout::NHWC, ebytes_};
    push(OpKind::Reshape, {cur_}, nhwc);
    TensorSpec nchw{{1, c, h_, w_}, Layout::NCHW, ebytes_};
    push(OpKind::Transpose, {cur_}, nchw);
    // Data that flowed through the token domain arrives channel-last; every
    // downstream convolution sees that format until the end of the graph.
    conv_tag_ = ConvLayoutTag::ChannelLast;
  }

  void patch_embed(int patch, int out_dim) {
    to_grid();
    int64_t nh = ceil_div(h_, patch), nw = ceil_div(w_, patch);
    if (nh < 1 || nw < 1)
      throw LoweringError("spatial extent underflow in block " + std::to_string(block_));
    int64_t c_in = cur_.dims[1];
    TensorSpec out{{1, out_dim, nh, nw}, Layout::NCHW, ebytes_};
    push(OpKind::PatchEmbed, {cur_}, out,
         {{"kernel", patch}, {"stride", patch}, {"c_in", c_in}, {"c_out", out_dim}});
    add_params((int64_t)out_dim * c_in * patch * patch + out_dim);
    h_ = nh;
    w_ = nw;
  }

  void norm(NormKind kind) {
    OpKind k = kind == NormKind::BatchNorm ? OpKind::BatchNorm : OpKind::LayerNorm;
    push(k, {cur_}, cur_, {{"channels", channels()}});
    add_params(2 * channels());
  }

  void activation(ActKind a) {
    OpKind k = a == ActKind::GELU ? OpKind::GELU : OpKind::SiLU;
    push(k, {cur_}, cur_, {{"channels", channels()}});
  }

  void linear(int64_t d_out) {
    int64_t tokens = cur_.dims[1], d_in = cur_.dims[2];
    TensorSpec out{{1, tokens, d_out}, Layout::TOKENS3D, ebytes_};
    push(OpKind::Linear, {cur_}, out,
         {{"tokens", tokens}, {"d_in", d_in}, {"d_out", d_out}});
    add_params(d_in * d_out + d_out);
  }

  void conv1x1(int64_t c_out) {
    int64_t c_in = cur_.dims[1];
    TensorSpec out{{1, c_out, h_, w_}, Layout::NCHW, ebytes_};
    push(OpKind::Conv2d, {cur_}, out,
         {{"kernel", 1}, {"stride", 1}, {"groups", 1}, {"c_in", c_in}, {"c_out", c_out}},
         conv_tag_);
    add_params(c_out * c_in + c_out);
  }

  void dwconv(int kernel) {
    int64_t c = cur_.dims[1];
    push(OpKind::DWConv2d, {cur_}, cur_,
         {{"kernel", kernel}, {"stride", 1}, {"groups", c}, {"c_in", c}, {"c_out", c}},
         conv_tag_);
    add_params(c * kernel * kernel + c);
  }

  void residual_add(const TensorSpec& saved) {
    push(OpKind::Add, {saved, cur_}, cur_);
  }

  void attention_block(const BlockConfig& b) {
    to_tokens();
    int64_t d = b.embedding_dim;
    int heads = b.attention->num_heads;
    int sr = b.attention->sr_ratio;
    int64_t head_dim = d / heads;
    int64_t n_q = cur_.dims[1];

    norm(b.norm);
    TensorSpec resid = cur_;

    linear(d);  // Q
    TensorSpec q = cur_;

    TensorSpec kv_src = resid;
    int64_t n_kv = n_q;
    if (sr > 1) {
      // spatial reduction: strided conv over the token grid
      cur_ = resid;
      int64_t sh = h_, sw = w_;
      TensorSpec nhwc{{1, sh, sw, d}, Layout::NHWC, ebytes_};
      push(OpKind::Reshape, {cur_}, nhwc);
      TensorSpec nchw{{1, d, sh, sw}, Layout::NCHW, ebytes_};
      push(OpKind::Transpose, {cur_}, nchw);
      int64_t rh = ceil_div(sh, sr), rw = ceil_div(sw, sr);
      TensorSpec red{{1, d, rh, rw}, Layout::NCHW, ebytes_};
      push(OpKind::Conv2d, {cur_}, red,
           {{"kernel", sr}, {"stride", sr}, {"groups", 1}, {"c_in", d}, {"c_out", d},
            {"sr_ratio", sr}},
           ConvLayoutTag::ChannelLast);
      add_params(d * d * (int64_t)sr * sr + d);
      TensorSpec red_nhwc{{1, rh, rw, d}, Layout::NHWC, ebytes_};
      push(OpKind::Transpose, {cur_}, red_nhwc);
      n_kv = rh * rw;
      TensorSpec tok{{1, n_kv, d}, Layout::TOKENS3D, ebytes_};
      push(OpKind::Reshape, {cur_}, tok);
      kv_src = cur_;
    }

    cur_ = kv_src;
    linear(d);  // K
    TensorSpec key = cur_;
    cur_ = kv_src;
    linear(d);  // V
    TensorSpec value = cur_;

    TensorSpec scores{{heads, n_q, n_kv}, Layout::TOKENS3D, ebytes_};
    push(OpKind::MatMul, {q, key}, scores,
         {{"batch", heads}, {"m", n_q}, {"n", n_kv}, {"k", head_dim},
          {"heads", heads}});
    // scale 1/sqrt(head_dim) folded into the softmax node
    push(OpKind::Softmax, {cur_}, cur_,
         {{"channels", n_kv}, {"head_dim", head_dim}});
    TensorSpec attn_out{{1, n_q, d}, Layout::TOKENS3D, ebytes_};
    push(OpKind::MatMul, {cur_, value}, attn_out,
         {{"batch", heads}, {"m", n_q}, {"n", head_dim}, {"k", n_kv},
          {"heads", heads}});
    linear(d);  // output projection
    residual_add(resid);

    norm(b.norm);
    TensorSpec resid2 = cur_;
    linear(d * b.mlp_ratio);
    activation(b.activation);
    linear(d);
    residual_add(resid2);
  }

  void sepconv_block(const BlockConfig& b) {
    to_grid();
    int64_t c = b.embedding_dim;
    norm(b.norm);
    TensorSpec resid = cur_;
    conv1x1(c * b.sepconv->expansion_ratio);
    activation(b.activation);
    dwconv(b.sepconv->kernel_size);
    conv1x1(c);
    residual_add(resid);

    norm(b.norm);
    TensorSpec resid2 = cur_;
    conv1x1(c * b.mlp_ratio);
    activation(b.activation);
    conv1x1(c);
    residual_add(resid2);
  }

  void head() {
    block_ = 0;
    if (in_tokens()) {
      int64_t d = cur_.dims[2];
      TensorSpec pooled{{1, 1, d}, Layout::TOKENS3D, ebytes_};
      push(OpKind::Pool, {cur_}, pooled, {{"global", 1}, {"channels", d}});
    } else {
      int64_t c = cur_.dims[1];
      TensorSpec pooled{{1, c, 1, 1}, Layout::NCHW, ebytes_};
      push(OpKind::Pool, {cur_}, pooled, {{"global", 1}, {"channels", c}});
      TensorSpec flat{{1, 1, c}, Layout::TOKENS3D, ebytes_};
      push(OpKind::Reshape, {cur_}, flat);
    }
    linear(cfg_.num_classes);
  }

  const ArchConfig& cfg_;
  int ebytes_;
  OpGraph graph_;
  TensorSpec cur_;
  int64_t h_ = 0, w_ = 0;
  int block_ = 0;
  ConvLayoutTag conv_tag_ = ConvLayoutTag::ChannelFirst;
};

}  // namespace

std::string to_string(OpKind k) {
  for (auto& [kind, name] : kKindNames)
    if (kind == k) return name;
  return "?";
}

OpKind op_kind_from_string(const std::string& s) {
  for (auto& [kind, name] : kKindNames)
    if (s == name) return kind;
  throw LoweringError("unknown op kind: " + s);
}

OpGraph lower(const ArchConfig& cfg, Precision precision) {
  // Any input resolution lowers fine; everything else must satisfy the
  // default space invariants.
  auto space = SearchSpaceSpec::defaults();
  for (int s : {cfg.input_height, cfg.input_width})
    if (std::find(space.input_sizes.begin(), space.input_sizes.end(), s) ==
        space.input_sizes.end())
      space.input_sizes.push_back(s);
  auto violations = validate_arch(cfg, space);
  if (!violations.empty())
    throw LoweringError("lower: invalid config: " + violations.front());
  return Builder(cfg, precision).build();
}

int64_t estimate_memory(const OpGraph& graph) {
  int64_t total = graph.weight_bytes;
  for (const OpNode& n : graph.nodes) total += n.output.bytes();
  return total;
}

std::map<OpKind, int> op_histogram(const OpGraph& graph) {
  std::map<OpKind, int> h;
  for (const OpNode& n : graph.nodes) ++h[n.kind];
  return h;
}

namespace {

nlohmann::json tensor_to_json(const TensorSpec& t) {
  return {{"dims", t.dims}, {"layout", layout_name(t.layout)},
          {"element_bytes", t.element_bytes}};
}

TensorSpec tensor_from_json(const nlohmann::json& j) {
  TensorSpec t;
  t.dims = j.at("dims").get<std::vector<int64_t>>();
  t.layout = layout_from_string(j.at("layout").get<std::string>());
  t.element_bytes = j.at("element_bytes").get<int>();
  return t;
}

}  // namespace

std::string graph_to_jsonl(const OpGraph& graph) {
  std::ostringstream out;
  nlohmann::json header{{"record", "header"},
                        {"arch_id", graph.arch_id},
                        {"total_params", graph.total_params},
                        {"weight_bytes", graph.weight_bytes},
                        {"node_count", graph.nodes.size()}};
  out << header.dump() << "\n";
  for (const OpNode& n : graph.nodes) {
    nlohmann::json inputs = nlohmann::json::array();
    for (const TensorSpec& t : n.inputs) inputs.push_back(tensor_to_json(t));
    nlohmann::json jn{{"record", "node"},
                      {"id", n.id},
                      {"kind", to_string(n.kind)},
                      {"attrs", n.attrs},
                      {"inputs", std::move(inputs)},
                      {"output", tensor_to_json(n.output)},
                      {"block_index", n.block_index}};
    if (n.conv_layout_tag) jn["conv_layout_tag"] = to_string(*n.conv_layout_tag);
    out << jn.dump() << "\n";
  }
  return out.str();
}

OpGraph graph_from_jsonl(const std::string& text) {
  OpGraph g;
  std::istringstream in(text);
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    std::string record = j.at("record").get<std::string>();
    if (record == "header") {
      g.arch_id = j.at("arch_id").get<std::string>();
      g.total_params = j.at("total_params").get<int64_t>();
      g.weight_bytes = j.at("weight_bytes").get<int64_t>();
      have_header = true;
    } else {
      OpNode n;
      n.id = j.at("id").get<int>();
      n.kind = op_kind_from_string(j.at("kind").get<std::string>());
      n.attrs = j.at("attrs").get<std::map<std::string, int64_t>>();
      for (const auto& ji : j.at("inputs")) n.inputs.push_back(tensor_from_json(ji));
      n.output = tensor_from_json(j.at("output"));
      n.block_index = j.at("block_index").get<int>();
      if (j.contains("conv_layout_tag"))
        n.conv_layout_tag = j["conv_layout_tag"].get<std::string>() == "channel_first"
                                ? ConvLayoutTag::ChannelFirst
                                : ConvLayoutTag::ChannelLast;
      g.nodes.push_back(std::move(n));
    }
  }
  if (!have_header) throw LoweringError("graph jsonl: missing header record");
  return g;
}

}  // namespace vitlat
