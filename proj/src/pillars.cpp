#include "bevsync/pillars.hpp"

#include <cmath>
#include <limits>

namespace bevsync::pillars {

EncoderParams EncoderParams::passthrough(int channels) {
  require(channels >= 9, "passthrough encoder needs at least 9 channels");
  EncoderParams p = zeros(channels);
  for (int i = 0; i < 9; ++i) p.mlp.weight(i, i) = 1.0;
  p.use_relu = false;
  return p;
}

PillarizeResult pillarize(const std::vector<Eigen::Vector3d>& points,
                          const PillarConfig& cfg) {
  PillarizeResult result;
  const double z_c = 0.5 * (cfg.z_lo + cfg.z_hi);

  std::map<std::pair<int, int>, std::vector<Eigen::Vector3d>> raw;
  for (const auto& p : points) {
    int r, c;
    if (p.z() < cfg.z_lo || p.z() > cfg.z_hi ||
        !cfg.grid.cellIndex(p.x(), p.y(), r, c)) {
      ++result.dropped;
      continue;
    }
    raw[{r, c}].push_back(p);
  }

  for (auto& [key, pts] : raw) {
    double x_c, y_c;
    if (cfg.center_is_point_mean) {
      x_c = y_c = 0.0;
      for (const auto& p : pts) {
        x_c += p.x();
        y_c += p.y();
      }
      x_c /= static_cast<double>(pts.size());
      y_c /= static_cast<double>(pts.size());
    } else {
      const Eigen::Vector2d center = cfg.grid.cellCenter(key.first, key.second);
      x_c = center.x();
      y_c = center.y();
    }
    auto& out = result.pillars[key];
    out.reserve(pts.size());
    for (const auto& p : pts) {
      DecoratedPoint d;
      d << p.x(), p.y(), p.z(), x_c, y_c, z_c, p.x() - x_c, p.y() - y_c,
          p.z() - z_c;
      out.push_back(d);
    }
  }
  return result;
}

FeatureMap encodePillars(const PillarizeResult& pillars, const PillarConfig& cfg,
                         const EncoderParams& params) {
  require(params.mlp.weight.cols() == 9, "encoder: expected 9 input features");
  require(params.mlp.bias.size() == params.mlp.weight.rows(),
          "encoder: bias shape mismatch");

  FeatureMap out(params.channels(), cfg.grid);
  for (const auto& [key, pts] : pillars.pillars) {
    VectorD pooled = VectorD::Constant(params.channels(),
                                       -std::numeric_limits<double>::infinity());
    for (const auto& p : pts) {
      VectorD enc = params.mlp.apply(p);
      if (params.use_relu) enc = enc.cwiseMax(0.0);
      pooled = pooled.cwiseMax(enc);
    }
    for (int ch = 0; ch < params.channels(); ++ch)
      out.data[ch](key.first, key.second) = pooled[ch];
  }
  return out;
}

void EncoderParams::toStore(io::TensorStore& store) const {
  store.putMatrix("encoder.weight", mlp.weight);
  store.putVector("encoder.bias", mlp.bias);
  store.putScalar("encoder.relu", use_relu ? 1.0 : 0.0);
}

EncoderParams EncoderParams::fromStore(const io::TensorStore& store) {
  EncoderParams p;
  p.mlp.weight = store.getMatrix("encoder.weight");
  p.mlp.bias = store.getVector("encoder.bias");
  p.use_relu = store.getScalar("encoder.relu") != 0.0;
  require(p.mlp.weight.cols() == 9, "encoder params: expected 9 input features");
  return p;
}

namespace {

void convToStore(io::TensorStore& store, const std::string& prefix,
                 const nn::Conv2dParams& conv) {
  store.putMatrix(prefix + ".weight", conv.weight);
  store.putVector(prefix + ".bias", conv.bias);
  store.put(prefix + ".meta", {5},
            {static_cast<double>(conv.in_channels),
             static_cast<double>(conv.out_channels),
             static_cast<double>(conv.kernel), static_cast<double>(conv.stride),
             static_cast<double>(conv.pad)});
}

nn::Conv2dParams convFromStore(const io::TensorStore& store,
                               const std::string& prefix) {
  nn::Conv2dParams conv;
  conv.weight = store.getMatrix(prefix + ".weight");
  conv.bias = store.getVector(prefix + ".bias");
  const VectorD meta = store.getVector(prefix + ".meta");
  require(meta.size() == 5, "conv params: bad metadata for " + prefix);
  conv.in_channels = static_cast<int>(meta[0]);
  conv.out_channels = static_cast<int>(meta[1]);
  conv.kernel = static_cast<int>(meta[2]);
  conv.stride = static_cast<int>(meta[3]);
  conv.pad = static_cast<int>(meta[4]);
  conv.check(conv.in_channels);
  return conv;
}

}  // namespace

void BackboneParams::toStore(io::TensorStore& store) const {
  convToStore(store, "backbone.block1", block1);
  convToStore(store, "backbone.block2", block2);
}

BackboneParams BackboneParams::fromStore(const io::TensorStore& store) {
  BackboneParams p;
  p.block1 = convFromStore(store, "backbone.block1");
  p.block2 = convFromStore(store, "backbone.block2");
  return p;
}

BackboneParams BackboneParams::boxAverage(int channels) {
  BackboneParams p = zeros(channels, channels);
  for (int c = 0; c < channels; ++c)
    for (int k = 0; k < 9; ++k) {
      p.block1.weight(c, c * 9 + k) = 1.0 / 9.0;
      p.block2.weight(c, c * 9 + k) = 1.0 / 9.0;
    }
  return p;
}

geom::GridSpec featureGrid(const geom::GridSpec& base) {
  geom::GridSpec g = base.downsampled(4);
  g.origin_x -= 1.5 * base.cell_size;
  g.origin_y -= 1.5 * base.cell_size;
  return g;
}

FeatureMap backbone(const FeatureMap& f, const BackboneParams& params) {
  require(f.grid.height_cells % 4 == 0 && f.grid.width_cells % 4 == 0,
          "backbone: feature map height/width must be divisible by 4");
  Tensor3d x = nn::conv2d(f.data, params.block1);
  nn::reluInPlace(x);
  x = nn::conv2d(x, params.block2);
  nn::reluInPlace(x);

  FeatureMap out;
  out.data = std::move(x);
  out.grid = featureGrid(f.grid);
  out.timestamp_us = f.timestamp_us;
  out.agent_id = f.agent_id;
  out.source_frame = f.source_frame;
  require(out.data.allFinite(), "backbone: non-finite activations");
  return out;
}

FeatureMap encodeFrame(const sim::PointCloudFrame& frame, const PillarConfig& cfg,
                       const EncoderParams& enc, const BackboneParams& bb) {
  const auto pillars = pillarize(frame.points, cfg);
  FeatureMap base = encodePillars(pillars, cfg, enc);
  base.timestamp_us = frame.timestamp_us;
  base.agent_id = frame.agent_id;
  base.source_frame = frame.agent_id;
  return backbone(base, bb);
}

}  // namespace bevsync::pillars
