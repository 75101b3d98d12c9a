#include "bevsync/attention.hpp"

#include <cmath>

namespace bevsync::attn {

AttentionParams AttentionParams::seeded(int channels, int heads, int layers,
                                        Rng& rng) {
  require(channels % heads == 0, "attention: heads must divide channels");
  const int d = channels / heads;
  AttentionParams p;
  const double s = std::sqrt(6.0 / (channels + d));
  for (int l = 0; l < layers; ++l) {
    LayerParams layer;
    for (int h = 0; h < heads; ++h) {
      HeadParams head;
      head.wq = MatrixD::Zero(channels, d);
      head.wk = MatrixD::Zero(channels, d);
      head.wv = MatrixD::Zero(channels, d);
      for (int r = 0; r < channels; ++r)
        for (int c = 0; c < d; ++c) {
          head.wq(r, c) = rng.uniform(-s, s);
          head.wk(r, c) = rng.uniform(-s, s);
          head.wv(r, c) = rng.uniform(-s, s);
        }
      layer.heads.push_back(std::move(head));
    }
    layer.out_proj = MatrixD::Zero(heads * d, channels);
    const double so = std::sqrt(6.0 / (heads * d + channels));
    for (int r = 0; r < heads * d; ++r)
      for (int c = 0; c < channels; ++c) layer.out_proj(r, c) = rng.uniform(-so, so);
    layer.ffn1 = nn::DenseParams::seeded(channels, 4 * channels, rng);
    layer.ffn2 = nn::DenseParams::seeded(4 * channels, channels, rng);
    layer.norm1 = nn::LayerNormParams::unit(channels);
    layer.norm2 = nn::LayerNormParams::unit(channels);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

AttentionParams AttentionParams::identity(int channels, int heads, int layers) {
  require(channels % heads == 0, "attention: heads must divide channels");
  const int d = channels / heads;
  AttentionParams p;
  for (int l = 0; l < layers; ++l) {
    LayerParams layer;
    for (int h = 0; h < heads; ++h) {
      HeadParams head;
      head.wq = MatrixD::Zero(channels, d);
      head.wk = MatrixD::Zero(channels, d);
      head.wv = MatrixD::Zero(channels, d);
      layer.heads.push_back(std::move(head));
    }
    layer.out_proj = MatrixD::Zero(heads * d, channels);
    layer.ffn1 = nn::DenseParams::zeros(channels, 4 * channels);
    layer.ffn2 = nn::DenseParams::zeros(4 * channels, channels);
    layer.norm1 = nn::LayerNormParams::unit(channels);
    layer.norm2 = nn::LayerNormParams::unit(channels);
    layer.use_ffn = false;
    layer.use_norm = false;
    layer.use_residual = true;
    p.layers.push_back(std::move(layer));
  }
  return p;
}

AttentionParams AttentionParams::uniformAverage(int channels, int heads,
                                                int layers) {
  require(channels % heads == 0, "attention: heads must divide channels");
  const int d = channels / heads;
  AttentionParams p;
  for (int l = 0; l < layers; ++l) {
    LayerParams layer;
    for (int h = 0; h < heads; ++h) {
      HeadParams head;
      head.wq = MatrixD::Zero(channels, d);
      head.wk = MatrixD::Zero(channels, d);
      head.wv = MatrixD::Zero(channels, d);
      for (int j = 0; j < d; ++j) head.wv(h * d + j, j) = 1.0;
      layer.heads.push_back(std::move(head));
    }
    layer.out_proj = MatrixD::Identity(heads * d, channels);
    layer.ffn1 = nn::DenseParams::zeros(channels, 4 * channels);
    layer.ffn2 = nn::DenseParams::zeros(4 * channels, channels);
    layer.norm1 = nn::LayerNormParams::unit(channels);
    layer.norm2 = nn::LayerNormParams::unit(channels);
    layer.use_ffn = false;
    layer.use_norm = false;
    layer.use_residual = false;
    p.layers.push_back(std::move(layer));
  }
  return p;
}

MatrixD gatherResponse(const FeatureMap& f, const offsets::OffsetSet& offs) {
  const int n = static_cast<int>(offs.positions.size());
  MatrixD response = MatrixD::Zero(n, f.channels());
  for (int i = 0; i < n; ++i) {
    const double rf = offs.positions[i].x();
    const double cf = offs.positions[i].y();
    for (int ch = 0; ch < f.channels(); ++ch)
      response(i, ch) = geom::bilinearSample(f.data[ch], rf, cf);
  }
  return response;
}

std::vector<VectorD> attendWeights(const VectorD& q, const MatrixD& response,
                                   const LayerParams& layer,
                                   const VectorD* logit_bias) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(layer.headDim()));
  std::vector<VectorD> weights;
  weights.reserve(layer.heads.size());
  for (const auto& head : layer.heads) {
    const VectorD qh = head.wq.transpose() * q;           // d
    VectorD logits = (response * head.wk) * qh * scale;   // n
    if (logit_bias) logits += *logit_bias;
    weights.push_back(nn::softmax(logits));
  }
  return weights;
}

VectorD attend(const VectorD& q, const MatrixD& response, const LayerParams& layer,
               const VectorD* logit_bias) {
  const int d = layer.headDim();
  const auto weights = attendWeights(q, response, layer, logit_bias);
  VectorD concat(static_cast<int>(layer.heads.size()) * d);
  for (std::size_t h = 0; h < layer.heads.size(); ++h) {
    const MatrixD values = response * layer.heads[h].wv;  // n x d
    concat.segment(static_cast<int>(h) * d, d) = values.transpose() * weights[h];
  }
  return layer.out_proj.transpose() * concat;
}

VectorD attentionStack(const VectorD& q, const MatrixD& response,
                       const LayerParams& layer, const VectorD* logit_bias) {
  VectorD x = attend(q, response, layer, logit_bias);
  if (layer.use_residual) x += q;
  if (layer.use_norm) x = layer.norm1.apply(x);
  if (layer.use_ffn) {
    const VectorD h = layer.ffn2.apply(layer.ffn1.apply(x).cwiseMax(0.0));
    VectorD y = layer.use_residual ? VectorD(x + h) : h;
    if (layer.use_norm) y = layer.norm2.apply(y);
    return y;
  }
  return x;
}

FeatureMap alignAgent(const FeatureMap& f, const OffsetProvider& provider,
                      const AttentionParams& params, const LogitBias& bias) {
  FeatureMap current = f;
  for (int l = 0; l < params.numLayers(); ++l) {
    const auto offs = provider(current, l);
    require(offs.size() == static_cast<std::size_t>(f.grid.height_cells) *
                               f.grid.width_cells,
            "alignAgent: one offset set per cell required");
    FeatureMap next(f.channels(), f.grid);
    next.timestamp_us = f.timestamp_us;
    next.agent_id = f.agent_id;
    next.source_frame = f.source_frame;
    for (int r = 0; r < f.grid.height_cells; ++r) {
      for (int c = 0; c < f.grid.width_cells; ++c) {
        const auto& cell_offs = offs[static_cast<std::size_t>(r) * f.grid.width_cells + c];
        const MatrixD response = gatherResponse(current, cell_offs);
        VectorD q(f.channels());
        for (int ch = 0; ch < f.channels(); ++ch) q[ch] = current.data[ch](r, c);
        VectorD b;
        const VectorD* bias_ptr = nullptr;
        if (bias) {
          b = bias(cell_offs);
          bias_ptr = &b;
        }
        const VectorD y = attentionStack(q, response, params.layers[l], bias_ptr);
        for (int ch = 0; ch < f.channels(); ++ch) next.data[ch](r, c) = y[ch];
      }
    }
    current = std::move(next);
  }
  return current;
}

FeatureMap alignAgent(const FeatureMap& f,
                      const std::vector<offsets::OffsetSet>& offs,
                      const AttentionParams& params, const LogitBias& bias) {
  return alignAgent(
      f, [&offs](const FeatureMap&, int) { return offs; }, params, bias);
}

}  // namespace bevsync::attn
