#include <doctest.h>

#include <nlohmann/json.hpp>

#include "vitlat/opgraph.hpp"

using namespace vitlat;

namespace {

ArchConfig all_sepconv_cfg() {
  ArchConfig cfg;
  cfg.input_height = 224;
  cfg.input_width = 224;
  cfg.merge_k = 4;
  cfg.seed = 12345;
  int dims[] = {256, 320, 512};
  for (int j = 0; j < 3; ++j) {
    BlockConfig b;
    b.original_index = 4 + j;
    b.embedding_dim = dims[j];
    b.token_mixer = TokenMixer::SepConv;
    b.norm = NormKind::BatchNorm;
    b.activation = ActKind::GELU;
    b.mlp_ratio = j == 2 ? 2 : 2;
    b.sepconv = SepConvParams{3, 2};
    cfg.blocks.push_back(b);
  }
  return cfg;
}

ArchConfig single_attention_cfg(int input, int merge_k) {
  ArchConfig cfg;
  cfg.input_height = input;
  cfg.input_width = input;
  cfg.merge_k = merge_k;
  cfg.seed = 777;
  int dims[7] = {0, 16, 32, 64, 192, 256, 512};
  int mlp[7] = {0, 1, 2, 2, 1, 1, 1};
  for (int i = merge_k; i <= 6; ++i) {
    BlockConfig b;
    b.original_index = i;
    b.embedding_dim = dims[i];
    b.token_mixer = i == 6 ? TokenMixer::Attention : TokenMixer::SepConv;
    b.norm = NormKind::LayerNorm;
    b.activation = ActKind::SiLU;
    b.mlp_ratio = mlp[i];
    if (b.token_mixer == TokenMixer::Attention)
      b.attention = AttentionParams{8, 1};
    else
      b.sepconv = SepConvParams{3, 1};
    cfg.blocks.push_back(b);
  }
  return cfg;
}

}  // namespace

TEST_CASE("first block token grid follows the merged patch size") {
  ArchConfig cfg = single_attention_cfg(256, 2);
  OpGraph g = lower(cfg, Precision::fp32);
  // first node is the stem patch embed with patch 2^2 = 4
  REQUIRE(g.nodes.front().kind == OpKind::PatchEmbed);
  CHECK(g.nodes.front().attr("kernel") == 4);
  CHECK(g.nodes.front().output.dims[2] == 64);
  CHECK(g.nodes.front().output.dims[3] == 64);
  CHECK(g.nodes.front().output.dims[2] * g.nodes.front().output.dims[3] == 4096);
}

TEST_CASE("ceil-division chain 224: 14 -> 7 -> 4") {
  ArchConfig cfg = single_attention_cfg(224, 4);
  OpGraph g = lower(cfg, Precision::fp32);
  // stem patch 16: 224/16 = 14, then two 2x stages: ceil(14/2)=7, ceil(7/2)=4
  std::vector<int64_t> grids;
  for (const OpNode& n : g.nodes)
    if (n.kind == OpKind::PatchEmbed) grids.push_back(n.output.dims[2]);
  REQUIRE(grids.size() == 3);
  CHECK(grids[0] == 14);
  CHECK(grids[1] == 7);
  CHECK(grids[2] == 4);
}

TEST_CASE("all-SepConv graph has no attention ops") {
  OpGraph g = lower(all_sepconv_cfg(), Precision::fp32);
  auto hist = op_histogram(g);
  CHECK(hist.count(OpKind::MatMul) == 0);
  CHECK(hist.count(OpKind::Softmax) == 0);
  CHECK(hist[OpKind::DWConv2d] == 3);
}

TEST_CASE("single attention block contributes exactly two matmuls") {
  ArchConfig cfg = single_attention_cfg(224, 4);
  OpGraph g = lower(cfg, Precision::fp32);
  auto hist = op_histogram(g);
  CHECK(hist[OpKind::MatMul] == 2);
  CHECK(hist[OpKind::Softmax] == 1);
}

TEST_CASE("shape soundness: chained specs agree") {
  for (uint64_t seed : {1u, 2u, 3u, 17u}) {
    ArchConfig cfg = sample_arch(seed, SearchSpaceSpec::defaults());
    OpGraph g = lower(cfg, Precision::fp32);
    // every input of a node must have been produced earlier (or be the image)
    std::vector<TensorSpec> produced;
    produced.push_back(
        TensorSpec{{1, 3, cfg.input_height, cfg.input_width}, Layout::NCHW, 4});
    for (const OpNode& n : g.nodes) {
      for (const TensorSpec& in : n.inputs) {
        bool found = false;
        for (const TensorSpec& p : produced) found |= p == in;
        CAPTURE(n.id);
        CHECK(found);
      }
      produced.push_back(n.output);
    }
  }
}

TEST_CASE("format soundness: convs never see tokens, transitions are explicit") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    ArchConfig cfg = sample_arch(seed, SearchSpaceSpec::defaults());
    OpGraph g = lower(cfg, Precision::fp32);
    for (const OpNode& n : g.nodes) {
      bool is_conv = n.kind == OpKind::Conv2d || n.kind == OpKind::DWConv2d ||
                     n.kind == OpKind::PatchEmbed;
      if (is_conv)
        for (const TensorSpec& in : n.inputs) CHECK(in.layout != Layout::TOKENS3D);
      bool tagged = n.conv_layout_tag.has_value();
      CHECK(tagged == (n.kind == OpKind::Conv2d || n.kind == OpKind::DWConv2d));
      // dimensionality changes only at Reshape nodes
      if (!n.inputs.empty() && n.kind != OpKind::Reshape)
        CHECK(n.inputs[0].dims.size() == n.output.dims.size());
    }
  }
}

TEST_CASE("estimate_memory counts outputs plus weights") {
  OpGraph g;
  g.arch_id = "t";
  OpNode n;
  n.kind = OpKind::ReLU;
  n.output = TensorSpec{{1, 16, 8, 8}, Layout::NCHW, 4};
  g.nodes.push_back(n);
  CHECK(estimate_memory(g) == 4096);

  OpGraph g8 = g;
  g8.nodes[0].output.element_bytes = 1;
  CHECK(estimate_memory(g8) == 1024);
}

TEST_CASE("memory estimate is monotone in resolution") {
  ArchConfig small = all_sepconv_cfg();
  ArchConfig big = all_sepconv_cfg();
  big.input_height = big.input_width = 512;
  OpGraph gs = lower(small, Precision::fp32);
  OpGraph gb = lower(big, Precision::fp32);
  CHECK(estimate_memory(gb) > estimate_memory(gs));
}

TEST_CASE("int8 precision shrinks activations and weights 4x") {
  ArchConfig cfg = all_sepconv_cfg();
  OpGraph g32 = lower(cfg, Precision::fp32);
  OpGraph g8 = lower(cfg, Precision::int8);
  CHECK(g32.weight_bytes == 4 * g8.weight_bytes);
}

TEST_CASE("graph jsonl round-trip keeps the histogram") {
  ArchConfig cfg = sample_arch(5, SearchSpaceSpec::defaults());
  OpGraph g = lower(cfg, Precision::fp32);
  OpGraph back = graph_from_jsonl(graph_to_jsonl(g));
  CHECK(op_histogram(g) == op_histogram(back));
  CHECK(graph_to_jsonl(g) == graph_to_jsonl(back));
}

TEST_CASE("lowering an invalid config fails") {
  ArchConfig cfg = all_sepconv_cfg();
  cfg.blocks[0].embedding_dim = 5;  // below range
  CHECK_THROWS_AS(lower(cfg, Precision::fp32), LoweringError);
}
