#pragma once

#include "bevsync/core.hpp"
#include "bevsync/feature_map.hpp"
#include "bevsync/nn.hpp"
#include "bevsync/offsets.hpp"

#include <functional>
#include <vector>

namespace bevsync::attn {

struct HeadParams {
  MatrixD wq;  // C x d
  MatrixD wk;  // C x d
  MatrixD wv;  // C x d
};

struct LayerParams {
  std::vector<HeadParams> heads;
  MatrixD out_proj;  // (heads * d) x C
  nn::DenseParams ffn1;
  nn::DenseParams ffn2;
  nn::LayerNormParams norm1;
  nn::LayerNormParams norm2;
  bool use_ffn = true;
  bool use_norm = true;
  bool use_residual = true;

  int headDim() const { return static_cast<int>(heads.front().wq.cols()); }
};

struct AttentionParams {
  std::vector<LayerParams> layers;

  int numLayers() const { return static_cast<int>(layers.size()); }
  int numHeads() const { return static_cast<int>(layers.front().heads.size()); }

  /// Random projections; head width is C / heads, FFN hidden width 4C.
  static AttentionParams seeded(int channels, int heads, int layers, Rng& rng);
  /// Zero attention output projection behind a residual: the stack is the
  /// identity map.
  static AttentionParams identity(int channels, int heads, int layers);
  /// Zero query/key projections with slice-selector values: each layer
  /// outputs the plain mean of its response rows. No FFN, norm or residual.
  static AttentionParams uniformAverage(int channels, int heads, int layers = 1);
};

/// Features bilinearly sampled at each offset position; rows follow the
/// position order, out-of-bounds samples read zero.
MatrixD gatherResponse(const FeatureMap& f, const offsets::OffsetSet& offs);

/// Scaled dot-product attention of one query over the response rows,
/// multi-head, output projected. Optional additive logit bias per row.
VectorD attend(const VectorD& q, const MatrixD& response, const LayerParams& layer,
               const VectorD* logit_bias = nullptr);

/// Per-head softmax weights, for inspection.
std::vector<VectorD> attendWeights(const VectorD& q, const MatrixD& response,
                                   const LayerParams& layer,
                                   const VectorD* logit_bias = nullptr);

/// Full per-query stack: attention, add & norm, FFN, add & norm.
VectorD attentionStack(const VectorD& q, const MatrixD& response,
                       const LayerParams& layer,
                       const VectorD* logit_bias = nullptr);

using OffsetProvider =
    std::function<std::vector<offsets::OffsetSet>(const FeatureMap&, int layer)>;
using LogitBias = std::function<VectorD(const offsets::OffsetSet&)>;

/// Replace every cell's feature with the attention-stack output over its
/// offset positions. The provider is queried once per layer with that layer's
/// input, so offsets can be regenerated or reused.
FeatureMap alignAgent(const FeatureMap& f, const OffsetProvider& provider,
                      const AttentionParams& params,
                      const LogitBias& bias = nullptr);

/// Same offsets for every layer.
FeatureMap alignAgent(const FeatureMap& f,
                      const std::vector<offsets::OffsetSet>& offs,
                      const AttentionParams& params,
                      const LogitBias& bias = nullptr);

}  // namespace bevsync::attn
