#include "vitlat/archspace.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "vitlat/rng.hpp"

namespace vitlat {

std::string to_string(TokenMixer m) {
  return m == TokenMixer::SepConv ? "SepConv" : "Attention";
}
std::string to_string(NormKind n) {
  return n == NormKind::BatchNorm ? "BatchNorm" : "LayerNorm";
}
std::string to_string(ActKind a) { return a == ActKind::GELU ? "GELU" : "SiLU"; }

std::string ArchConfig::arch_id() const {
  return "vit" + std::to_string(seed);
}

SearchSpaceSpec SearchSpaceSpec::defaults() {
  SearchSpaceSpec s;
  s.embed_ranges = {{0, 0}, {16, 32}, {32, 80}, {64, 192},
                    {192, 384}, {256, 768}, {384, 1024}};
  s.mlp_ratio_ranges = {{0, 0}, {1, 4}, {2, 10}, {2, 10}, {1, 4}, {1, 4}, {1, 2}};
  s.max_expansion = {0, 8, 8, 8, 8, 4, 2};
  s.sr_ranges = {{0, 0}, {2, 16}, {1, 4}, {1, 2}};
  return s;
}

void SearchSpaceSpec::check() const {
  auto bad = [](const std::string& what) { throw ConfigError("search space: " + what); };
  if (input_sizes.empty()) bad("input_sizes empty");
  if (merge_k_min > merge_k_max || merge_k_min < 1 || merge_k_max > 6)
    bad("merge_k range invalid");
  if (embed_ranges.size() != 7 || mlp_ratio_ranges.size() != 7 ||
      max_expansion.size() != 7 || sr_ranges.size() != 4)
    bad("per-block range tables must cover indices 1..6 (sr: 1..3)");
  for (int i = 1; i <= 6; ++i) {
    if (embed_ranges[i].first > embed_ranges[i].second || embed_ranges[i].first < 1)
      bad("embed range " + std::to_string(i) + " empty");
    if (mlp_ratio_ranges[i].first > mlp_ratio_ranges[i].second ||
        mlp_ratio_ranges[i].first < 1)
      bad("mlp_ratio range " + std::to_string(i) + " empty");
    if (max_expansion[i] < 1) bad("expansion bound " + std::to_string(i) + " < 1");
  }
  for (int i = 1; i <= 3; ++i)
    if (sr_ranges[i].first > sr_ranges[i].second || sr_ranges[i].first < 1)
      bad("sr range " + std::to_string(i) + " empty");
  if (kernel_sizes.empty()) bad("kernel_sizes empty");
  if (max_heads < 1) bad("max_heads < 1");
  // monotone-repair needs overlapping consecutive embed ranges
  for (int i = 2; i <= 6; ++i)
    if (embed_ranges[i].second < embed_ranges[i - 1].first)
      bad("embed ranges " + std::to_string(i - 1) + "," + std::to_string(i) +
          " do not overlap upward");
}

SearchSpaceSpec SearchSpaceSpec::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open search space file: " + path);
  nlohmann::json j;
  in >> j;
  SearchSpaceSpec s = defaults();
  auto range_table = [&](const char* key, std::vector<std::pair<int, int>>& tbl) {
    if (!j.contains(key)) return;
    for (auto& [idx, v] : j.at(key).items()) {
      size_t i = std::stoul(idx);
      if (i >= tbl.size()) throw ConfigError(std::string(key) + ": index out of range");
      tbl[i] = {v.at(0).get<int>(), v.at(1).get<int>()};
    }
  };
  if (j.contains("input_sizes")) s.input_sizes = j["input_sizes"].get<std::vector<int>>();
  if (j.contains("merge_k")) {
    s.merge_k_min = j["merge_k"].at(0).get<int>();
    s.merge_k_max = j["merge_k"].at(1).get<int>();
  }
  range_table("embed_ranges", s.embed_ranges);
  range_table("mlp_ratio_ranges", s.mlp_ratio_ranges);
  range_table("sr_ranges", s.sr_ranges);
  if (j.contains("kernel_sizes")) s.kernel_sizes = j["kernel_sizes"].get<std::vector<int>>();
  if (j.contains("max_expansion")) {
    for (auto& [idx, v] : j["max_expansion"].items())
      s.max_expansion.at(std::stoul(idx)) = v.get<int>();
  }
  if (j.contains("max_heads")) s.max_heads = j["max_heads"].get<int>();
  if (j.contains("num_classes")) s.num_classes = j["num_classes"].get<int>();
  s.check();
  return s;
}

namespace {

int largest_divisor_leq(int dim, int cap) {
  for (int h = cap; h >= 1; --h)
    if (dim % h == 0) return h;
  return 1;
}

}  // namespace

ArchConfig sample_arch(uint64_t seed, const SearchSpaceSpec& space) {
  space.check();
  Rng rng(derive_seed(seed, hash_str("sample_arch")));

  ArchConfig cfg;
  cfg.seed = seed;
  cfg.num_classes = space.num_classes;
  cfg.input_height =
      space.input_sizes[rng.uniform_int(0, (int64_t)space.input_sizes.size() - 1)];
  cfg.input_width =
      space.input_sizes[rng.uniform_int(0, (int64_t)space.input_sizes.size() - 1)];
  cfg.merge_k = (int)rng.uniform_int(space.merge_k_min, space.merge_k_max);

  int prev_dim = 0;
  for (int i = cfg.merge_k; i <= 6; ++i) {
    BlockConfig b;
    b.original_index = i;
    auto [lo, hi] = space.embed_ranges[i];
    // monotone repair: resample within [prev, hi]; dims live on a multiple-of-8
    // grid (hardware-friendly widths, keeps head divisibility easy)
    lo = std::max(lo, prev_dim);
    int glo = (lo + 7) / 8, ghi = std::max(glo, hi / 8);
    b.embedding_dim = 8 * (int)rng.uniform_int(glo, ghi);
    prev_dim = b.embedding_dim;

    b.token_mixer = rng.coin() ? TokenMixer::Attention : TokenMixer::SepConv;
    b.norm = rng.coin() ? NormKind::LayerNorm : NormKind::BatchNorm;
    b.activation = rng.coin() ? ActKind::GELU : ActKind::SiLU;
    b.mlp_ratio = (int)rng.uniform_int(space.mlp_ratio_ranges[i].first,
                                       space.mlp_ratio_ranges[i].second);
    if (b.token_mixer == TokenMixer::SepConv) {
      SepConvParams sc;
      sc.kernel_size =
          space.kernel_sizes[rng.uniform_int(0, (int64_t)space.kernel_sizes.size() - 1)];
      sc.expansion_ratio = (int)rng.uniform_int(1, space.max_expansion[i]);
      b.sepconv = sc;
    } else {
      AttentionParams at;
      int sampled = (int)rng.uniform_int(1, space.max_heads);
      at.num_heads = largest_divisor_leq(b.embedding_dim, sampled);
      at.sr_ratio = i <= 3 ? (int)rng.uniform_int(space.sr_ranges[i].first,
                                                  space.sr_ranges[i].second)
                           : 1;
      b.attention = at;
    }
    cfg.blocks.push_back(b);
  }
  return cfg;
}

std::vector<std::string> validate_arch(const ArchConfig& cfg) {
  return validate_arch(cfg, SearchSpaceSpec::defaults());
}

std::vector<std::string> validate_arch(const ArchConfig& cfg,
                                       const SearchSpaceSpec& space) {
  std::vector<std::string> v;
  auto add = [&](std::ostringstream& os) { v.push_back(os.str()); };
  auto fail = [&](const std::string& s) { v.push_back(s); };

  auto in_set = [](int x, const std::vector<int>& s) {
    return std::find(s.begin(), s.end(), x) != s.end();
  };
  if (!in_set(cfg.input_height, space.input_sizes))
    fail("input_height " + std::to_string(cfg.input_height) + " not in allowed set");
  if (!in_set(cfg.input_width, space.input_sizes))
    fail("input_width " + std::to_string(cfg.input_width) + " not in allowed set");
  if (cfg.merge_k < space.merge_k_min || cfg.merge_k > space.merge_k_max)
    fail("merge_k " + std::to_string(cfg.merge_k) + " outside [" +
         std::to_string(space.merge_k_min) + "," + std::to_string(space.merge_k_max) + "]");
  if ((int)cfg.blocks.size() != 7 - cfg.merge_k)
    fail("blocks length " + std::to_string(cfg.blocks.size()) + " != 7 - merge_k = " +
         std::to_string(7 - cfg.merge_k));

  int prev_dim = 0;
  for (size_t j = 0; j < cfg.blocks.size(); ++j) {
    const BlockConfig& b = cfg.blocks[j];
    std::string pfx = "block[" + std::to_string(j) + "] ";
    int expect_idx = cfg.merge_k + (int)j;
    if (b.original_index != expect_idx) {
      fail(pfx + "original_index " + std::to_string(b.original_index) +
           " != expected " + std::to_string(expect_idx));
      continue;
    }
    int i = b.original_index;
    if (i < 1 || i > 6) continue;
    auto [lo, hi] = space.embed_ranges[i];
    if (b.embedding_dim < lo || b.embedding_dim > hi) {
      std::ostringstream os;
      os << pfx << "embedding_dim " << b.embedding_dim << " outside range [" << lo
         << "," << hi << "]";
      add(os);
    }
    if (b.embedding_dim < prev_dim)
      fail(pfx + "embedding_dim " + std::to_string(b.embedding_dim) +
           " decreases from previous " + std::to_string(prev_dim));
    prev_dim = std::max(prev_dim, b.embedding_dim);
    auto [mlo, mhi] = space.mlp_ratio_ranges[i];
    if (b.mlp_ratio < mlo || b.mlp_ratio > mhi) {
      std::ostringstream os;
      os << pfx << "mlp_ratio " << b.mlp_ratio << " outside range [" << mlo << ","
         << mhi << "]";
      add(os);
    }
    bool has_sc = b.sepconv.has_value(), has_at = b.attention.has_value();
    if (has_sc == has_at) {
      fail(pfx + "exactly one of sepconv/attention must be present");
    } else if (has_sc != (b.token_mixer == TokenMixer::SepConv)) {
      fail(pfx + "params do not match token_mixer " + to_string(b.token_mixer));
    }
    if (has_sc) {
      if (!in_set(b.sepconv->kernel_size, space.kernel_sizes)) {
        std::ostringstream os;
        os << pfx << "kernel_size " << b.sepconv->kernel_size << " not in set {";
        for (size_t t = 0; t < space.kernel_sizes.size(); ++t)
          os << (t ? "," : "") << space.kernel_sizes[t];
        os << "}";
        add(os);
      }
      if (b.sepconv->expansion_ratio < 1 ||
          b.sepconv->expansion_ratio > space.max_expansion[i]) {
        std::ostringstream os;
        os << pfx << "expansion_ratio " << b.sepconv->expansion_ratio
           << " outside [1," << space.max_expansion[i] << "]";
        add(os);
      }
    }
    if (has_at) {
      if (b.attention->num_heads < 1 || b.attention->num_heads > space.max_heads) {
        std::ostringstream os;
        os << pfx << "num_heads " << b.attention->num_heads << " outside [1,"
           << space.max_heads << "]";
        add(os);
      } else if (b.embedding_dim % b.attention->num_heads != 0) {
        fail(pfx + "embedding_dim " + std::to_string(b.embedding_dim) +
             " not divisible by num_heads " + std::to_string(b.attention->num_heads));
      }
      int slo = 1, shi = 1;
      if (i <= 3) std::tie(slo, shi) = space.sr_ranges[i];
      if (b.attention->sr_ratio < slo || b.attention->sr_ratio > shi) {
        std::ostringstream os;
        os << pfx << "sr_ratio " << b.attention->sr_ratio << " outside [" << slo << ","
           << shi << "]";
        add(os);
      }
    }
  }
  if (cfg.num_classes < 1) fail("num_classes must be >= 1");
  return v;
}

nlohmann::json arch_to_json(const ArchConfig& cfg) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const BlockConfig& b : cfg.blocks) {
    nlohmann::json jb{{"original_index", b.original_index},
                      {"embedding_dim", b.embedding_dim},
                      {"token_mixer", to_string(b.token_mixer)},
                      {"norm", to_string(b.norm)},
                      {"activation", to_string(b.activation)},
                      {"mlp_ratio", b.mlp_ratio}};
    if (b.sepconv)
      jb["sepconv"] = {{"kernel_size", b.sepconv->kernel_size},
                       {"expansion_ratio", b.sepconv->expansion_ratio}};
    if (b.attention)
      jb["attention"] = {{"num_heads", b.attention->num_heads},
                         {"sr_ratio", b.attention->sr_ratio}};
    blocks.push_back(std::move(jb));
  }
  return nlohmann::json{{"input_height", cfg.input_height},
                        {"input_width", cfg.input_width},
                        {"merge_k", cfg.merge_k},
                        {"blocks", std::move(blocks)},
                        {"num_classes", cfg.num_classes},
                        {"seed", cfg.seed}};
}

ArchConfig arch_from_json(const nlohmann::json& j) {
  ArchConfig cfg;
  cfg.input_height = j.at("input_height").get<int>();
  cfg.input_width = j.at("input_width").get<int>();
  cfg.merge_k = j.at("merge_k").get<int>();
  cfg.num_classes = j.at("num_classes").get<int>();
  cfg.seed = j.at("seed").get<uint64_t>();
  for (const auto& jb : j.at("blocks")) {
    BlockConfig b;
    b.original_index = jb.at("original_index").get<int>();
    b.embedding_dim = jb.at("embedding_dim").get<int>();
    std::string mixer = jb.at("token_mixer").get<std::string>();
    b.token_mixer = mixer == "SepConv" ? TokenMixer::SepConv : TokenMixer::Attention;
    b.norm = jb.at("norm").get<std::string>() == "BatchNorm" ? NormKind::BatchNorm
                                                             : NormKind::LayerNorm;
    b.activation =
        jb.at("activation").get<std::string>() == "GELU" ? ActKind::GELU : ActKind::SiLU;
    b.mlp_ratio = jb.at("mlp_ratio").get<int>();
    if (jb.contains("sepconv"))
      b.sepconv = SepConvParams{jb["sepconv"].at("kernel_size").get<int>(),
                                jb["sepconv"].at("expansion_ratio").get<int>()};
    if (jb.contains("attention"))
      b.attention = AttentionParams{jb["attention"].at("num_heads").get<int>(),
                                    jb["attention"].at("sr_ratio").get<int>()};
    cfg.blocks.push_back(std::move(b));
  }
  return cfg;
}

std::string arch_to_canonical_json(const ArchConfig& cfg) {
  // nlohmann::json objects are key-sorted; dump(2) is byte-stable.
  return arch_to_json(cfg).dump(2) + "\n";
}

}  // namespace vitlat
