#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace vitlat {

enum class TokenMixer { SepConv, Attention };
enum class NormKind { BatchNorm, LayerNorm };
enum class ActKind { GELU, SiLU };

std::string to_string(TokenMixer m);
std::string to_string(NormKind n);
std::string to_string(ActKind a);

struct SepConvParams {
  int kernel_size = 3;
  int expansion_ratio = 4;
};

struct AttentionParams {
  int num_heads = 4;
  int sr_ratio = 1;  // 1 = plain attention
};

struct BlockConfig {
  int original_index = 1;  // 1..6 position in the unmerged six-block stack
  int embedding_dim = 0;
  TokenMixer token_mixer = TokenMixer::SepConv;
  NormKind norm = NormKind::LayerNorm;
  ActKind activation = ActKind::GELU;
  int mlp_ratio = 1;
  std::optional<SepConvParams> sepconv;
  std::optional<AttentionParams> attention;
};

struct ArchConfig {
  int input_height = 224;
  int input_width = 224;
  int merge_k = 2;  // first merge_k blocks collapsed into one
  std::vector<BlockConfig> blocks;
  int num_classes = 1000;
  uint64_t seed = 0;

  std::string arch_id() const;
};

// Per-original-index ranges of the hierarchical search space. Any range can
// be overridden from a JSON file.
struct SearchSpaceSpec {
  std::vector<int> input_sizes{224, 256};
  int merge_k_min = 2, merge_k_max = 4;
  // embedding dim range per original block index (1-based, index 0 unused)
  std::vector<std::pair<int, int>> embed_ranges;
  std::vector<std::pair<int, int>> mlp_ratio_ranges;
  std::vector<int> kernel_sizes{1, 3, 5, 7};
  std::vector<int> max_expansion;  // e_i per original index
  int max_heads = 12;
  std::vector<std::pair<int, int>> sr_ranges;  // blocks 1..3; deeper blocks use 1
  int num_classes = 1000;

  static SearchSpaceSpec defaults();
  static SearchSpaceSpec from_json_file(const std::string& path);
  void check() const;  // throws std::invalid_argument on empty/inverted ranges
};

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

ArchConfig sample_arch(uint64_t seed, const SearchSpaceSpec& space);

// Empty result iff every invariant holds. Violations name the field and the
// violated bound; they are data, not errors.
std::vector<std::string> validate_arch(const ArchConfig& cfg);
std::vector<std::string> validate_arch(const ArchConfig& cfg,
                                       const SearchSpaceSpec& space);

nlohmann::json arch_to_json(const ArchConfig& cfg);
ArchConfig arch_from_json(const nlohmann::json& j);

// Canonical key-sorted serialization; byte-stable for a given config.
std::string arch_to_canonical_json(const ArchConfig& cfg);

}  // namespace vitlat
