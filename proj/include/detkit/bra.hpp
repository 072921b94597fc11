#pragma once

#include <cstdint>
#include <filesystem>
#include <tuple>
#include <utility>
#include <vector>

#include "detkit/tensor.hpp"

namespace detkit::bra {

// regions_per_side S partitions the map into S*S regions; top_k of them are
// routed per source region. embed_dim must be divisible by heads. scale == 0
// means the default attention temperature 1/sqrt(embed_dim/heads).
struct BraConfig {
  std::size_t regions_per_side = 2;
  std::size_t top_k = 1;
  std::size_t embed_dim = 1;
  std::size_t heads = 1;
  double scale = 0.0;

  double effective_scale() const;
  void validate() const;  // throws std::invalid_argument
};

// Height x width x channels feature map, row-major values tensor.
struct FeatureMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  Tensor values;  // shape {height, width, channels}

  static FeatureMap zeros(std::size_t h, std::size_t w, std::size_t c);
};

// Square projection matrices; per-head views are contiguous channel slices.
struct BraParams {
  Tensor wq, wk, wv, wo;  // each embed_dim x embed_dim

  static BraParams identity(std::size_t embed_dim);
  static BraParams random(std::size_t embed_dim, std::uint64_t seed);
};

// Per source region, the ordered list of its top_k routed regions.
using RoutingIndex = std::vector<std::vector<std::size_t>>;

// Region (i,j) holds the (H/S)x(W/S) spatial block at block-row i, block-col
// j, flattened row-major; region index = i*S + j. Inverse of unpartition.
Tensor partition_regions(const FeatureMap& fm, std::size_t regions_per_side);
FeatureMap unpartition_regions(const Tensor& regions,
                               std::size_t regions_per_side,
                               std::size_t height, std::size_t width);

// Q = tokens*Wq, K = tokens*Wk, V = tokens*Wv.
std::tuple<Tensor, Tensor, Tensor> project_qkv(const Tensor& tokens,
                                               const BraParams& params);

// Mean over the token axis of a [regions x tokens x channels] tensor.
Tensor region_reps(const Tensor& regions);

// A = Qr * Kr^T; row = source region, column = candidate partner.
Tensor region_adjacency(const Tensor& qr, const Tensor& kr);

// Per row, indices of the k largest entries ordered by descending value;
// ties broken by ascending index.
RoutingIndex topk_routing(const Tensor& adjacency, std::size_t k);

// For every source region, the token blocks of its routed regions
// concatenated in routing order. Returns {Kg, Vg} per region, each k*T x C.
std::pair<std::vector<Tensor>, std::vector<Tensor>> gather_kv(
    const Tensor& k_regions, const Tensor& v_regions,
    const RoutingIndex& routing);

// Per head: softmax(scale * Q_h * Kg_h^T) * Vg_h; heads concatenated on the
// channel axis, then the output projection.
Tensor token_attention(const Tensor& q, const Tensor& kg, const Tensor& vg,
                       const Tensor& wo, const BraConfig& cfg);

struct BraOutput {
  FeatureMap output;
  RoutingIndex routing;
};

// Full pipeline: partition -> QKV -> region adjacency -> top-k routing ->
// gather -> token-to-token attention -> output projection -> unpartition.
// Output shape equals input shape; deterministic for fixed inputs.
BraOutput bra_forward(const FeatureMap& fm, const BraParams& params,
                      const BraConfig& cfg);

// Same pipeline with the routing replayed instead of recomputed.
FeatureMap bra_forward_with_routing(const FeatureMap& fm,
                                    const BraParams& params,
                                    const BraConfig& cfg,
                                    const RoutingIndex& routing);

struct BraGrads {
  Tensor grad_fm;  // shape of the input feature map
  BraParams grad_params;
};

// Analytic gradients with the routing index held constant (hard top-k
// selection is non-differentiable); gradients flow through the gathered
// key/value tokens and the attention itself, not the region pooling.
BraGrads bra_backward(const FeatureMap& fm, const BraParams& params,
                      const BraConfig& cfg, const Tensor& upstream);

// Text feature-map format: header "H W C" then H*W*C whitespace-separated
// decimals, row-major.
FeatureMap read_feature_map(const std::filesystem::path& path);
void write_feature_map(const std::filesystem::path& path, const FeatureMap& fm);

}  // namespace detkit::bra
