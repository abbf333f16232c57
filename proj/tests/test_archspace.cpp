#include <doctest.h>

#include <set>

#include <nlohmann/json.hpp>

#include "vitlat/archspace.hpp"

using namespace vitlat;

TEST_CASE("sampled config honors the default space") {
  auto space = SearchSpaceSpec::defaults();
  ArchConfig cfg = sample_arch(7, space);
  CHECK((cfg.input_height == 224 || cfg.input_height == 256));
  CHECK((cfg.input_width == 224 || cfg.input_width == 256));
  CHECK(cfg.merge_k >= 2);
  CHECK(cfg.merge_k <= 4);
  CHECK((int)cfg.blocks.size() == 7 - cfg.merge_k);
  CHECK(validate_arch(cfg).empty());
}

TEST_CASE("sampling is deterministic in (seed, space)") {
  auto space = SearchSpaceSpec::defaults();
  ArchConfig a = sample_arch(7, space);
  ArchConfig b = sample_arch(7, space);
  CHECK(arch_to_canonical_json(a) == arch_to_canonical_json(b));
  ArchConfig c = sample_arch(8, space);
  CHECK(arch_to_canonical_json(a) != arch_to_canonical_json(c));
}

TEST_CASE("1000 seeds: closure and categorical coverage") {
  auto space = SearchSpaceSpec::defaults();
  std::set<int> merge_ks, kernels;
  bool sepconv_only = false, has_attention = false;
  std::set<std::string> mixers, norms, acts;
  for (uint64_t seed = 0; seed < 1000; ++seed) {
    ArchConfig cfg = sample_arch(seed, space);
    auto violations = validate_arch(cfg);
    CAPTURE(seed);
    if (!violations.empty()) CAPTURE(violations.front());
    REQUIRE(violations.empty());
    merge_ks.insert(cfg.merge_k);
    bool any_attn = false;
    for (const auto& b : cfg.blocks) {
      mixers.insert(to_string(b.token_mixer));
      norms.insert(to_string(b.norm));
      acts.insert(to_string(b.activation));
      if (b.sepconv) kernels.insert(b.sepconv->kernel_size);
      if (b.attention) any_attn = true;
    }
    if (any_attn) has_attention = true;
    else sepconv_only = true;
  }
  CHECK(merge_ks == std::set<int>{2, 3, 4});
  CHECK(kernels == std::set<int>{1, 3, 5, 7});
  CHECK(mixers.size() == 2);
  CHECK(norms.size() == 2);
  CHECK(acts.size() == 2);
  CHECK(sepconv_only);
  CHECK(has_attention);
}

TEST_CASE("embedding dims are non-decreasing") {
  auto space = SearchSpaceSpec::defaults();
  for (uint64_t seed = 0; seed < 200; ++seed) {
    ArchConfig cfg = sample_arch(seed, space);
    for (size_t j = 1; j < cfg.blocks.size(); ++j)
      CHECK(cfg.blocks[j].embedding_dim >= cfg.blocks[j - 1].embedding_dim);
  }
}

TEST_CASE("validate_arch flags out-of-range fields") {
  ArchConfig cfg = sample_arch(3, SearchSpaceSpec::defaults());
  REQUIRE(validate_arch(cfg).empty());

  SUBCASE("c_1 out of range") {
    ArchConfig bad = cfg;
    bad.merge_k = 2;  // might not match blocks; rebuild a known config instead
    bad = sample_arch(3, SearchSpaceSpec::defaults());
    // force the first block's dim outside its per-index range
    bad.blocks[0].embedding_dim = bad.blocks[0].original_index == 2 ? 31 : 40000;
    auto v = validate_arch(bad);
    REQUIRE(!v.empty());
    CHECK(v.front().find("embedding_dim") != std::string::npos);
  }

  SUBCASE("kernel_size 4 names the allowed set") {
    ArchConfig bad = cfg;
    for (auto& b : bad.blocks)
      if (b.sepconv) {
        b.sepconv->kernel_size = 4;
        break;
      }
    bool had_sepconv = false;
    for (auto& b : bad.blocks) had_sepconv |= b.sepconv.has_value();
    if (had_sepconv) {
      auto v = validate_arch(bad);
      REQUIRE(v.size() == 1);
      CHECK(v.front().find("kernel_size") != std::string::npos);
      CHECK(v.front().find("{1,3,5,7}") != std::string::npos);
    }
  }

  SUBCASE("head divisibility") {
    ArchConfig bad = cfg;
    for (auto& b : bad.blocks)
      if (b.attention) {
        b.embedding_dim = 97;  // prime, so heads > 1 cannot divide
        if (b.attention->num_heads == 1) b.attention->num_heads = 2;
        auto v = validate_arch(bad);
        bool found = false;
        for (const auto& msg : v) found |= msg.find("divisible") != std::string::npos;
        CHECK(found);
        break;
      }
  }
}

TEST_CASE("empty range in space spec is a configuration error") {
  auto space = SearchSpaceSpec::defaults();
  space.embed_ranges[3] = {100, 50};
  CHECK_THROWS_AS(sample_arch(0, space), ConfigError);
}

TEST_CASE("json round-trip preserves the config") {
  ArchConfig cfg = sample_arch(42, SearchSpaceSpec::defaults());
  ArchConfig back = arch_from_json(arch_to_json(cfg));
  CHECK(arch_to_canonical_json(cfg) == arch_to_canonical_json(back));
}
