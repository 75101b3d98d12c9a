#include "bevsync/offsets.hpp"

#include <algorithm>
#include <cmath>

namespace bevsync::offsets {

OffsetSet gtOffsets(int query_r, int query_c, const field::TrajectoryField& gt,
                    int n) {
  require(gt.has_time_index, "gtOffsets: field lacks time/object planes");
  require(gt.grid.inBounds(query_r, query_c), "gtOffsets: query out of bounds");

  OffsetSet out;
  out.query_r = query_r;
  out.query_c = query_c;
  out.flavor = OffsetSet::Flavor::GroundTruth;

  const int query_obj = gt.object_id(query_r, query_c);
  const int query_age = gt.time_index(query_r, query_c);

  struct Candidate {
    int age;
    double pos;
    int r, c;
  };
  std::vector<Candidate> candidates;
  if (query_obj != field::kEmpty) {
    for (int r = 0; r < gt.grid.height_cells; ++r) {
      for (int c = 0; c < gt.grid.width_cells; ++c) {
        if (gt.position(r, c) <= 0.0) continue;              // i: response
        if (gt.object_id(r, c) != query_obj) continue;       // ii: same object
        if (gt.time_index(r, c) <= query_age) continue;      // iii: strictly older
        candidates.push_back({gt.time_index(r, c), gt.position(r, c), r, c});
      }
    }
  }

  if (candidates.empty()) {
    out.positions.assign(n, Eigen::Vector2d(query_r, query_c));
    return out;
  }

  // select the n cells nearest the polyline (highest position response),
  // which spreads the picks across the trajectory's age strata
  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& a, const Candidate& b) {
              if (a.pos != b.pos) return a.pos > b.pos;
              if (a.age != b.age) return a.age > b.age;
              if (a.r != b.r) return a.r < b.r;
              return a.c < b.c;
            });
  if (static_cast<int>(candidates.size()) > n) candidates.resize(n);

  // present oldest first
  std::sort(candidates.begin(), candidates.end(),
            [](const Candidate& a, const Candidate& b) {
              if (a.age != b.age) return a.age > b.age;
              if (a.pos != b.pos) return a.pos > b.pos;
              if (a.r != b.r) return a.r < b.r;
              return a.c < b.c;
            });

  for (const auto& cand : candidates)
    out.positions.emplace_back(cand.r, cand.c);
  while (static_cast<int>(out.positions.size()) < n)
    out.positions.emplace_back(candidates.front().r, candidates.front().c);
  return out;
}

OffsetNetParams OffsetNetParams::seeded(int feature_channels, int hidden, int n,
                                        Rng& rng) {
  OffsetNetParams p;
  p.conv1 = nn::Conv2dParams::seeded(feature_channels + 3, hidden, 3, 1, 1, rng);
  p.prelu_slope = VectorD::Constant(hidden, 0.25);
  p.head = nn::Conv2dParams::seeded(hidden, 2 * n, 3, 1, 1, rng);
  p.n = n;
  return p;
}

OffsetNetParams OffsetNetParams::zeros(int feature_channels, int hidden, int n) {
  OffsetNetParams p;
  p.conv1 = nn::Conv2dParams::zeros(feature_channels + 3, hidden, 3, 1, 1);
  p.prelu_slope = VectorD::Constant(hidden, 0.25);
  p.head = nn::Conv2dParams::zeros(hidden, 2 * n, 3, 1, 1);
  p.n = n;
  return p;
}

std::vector<OffsetSet> predictOffsets(const FeatureMap& features,
                                      const field::TrajectoryField& pred_field,
                                      const OffsetNetParams& params) {
  require(features.grid == pred_field.grid, "predictOffsets: grid mismatch");
  const int h = features.grid.height_cells, w = features.grid.width_cells;

  Tensor3d input(features.channels() + 3, h, w);
  for (int ch = 0; ch < features.channels(); ++ch) input[ch] = features.data[ch];
  input[features.channels()] = pred_field.position;
  input[features.channels() + 1] = pred_field.orient_cos;
  input[features.channels() + 2] = pred_field.orient_sin;

  Tensor3d hidden = nn::conv2d(input, params.conv1);
  nn::preluInPlace(hidden, params.prelu_slope);
  Tensor3d head = nn::conv2d(hidden, params.head);
  require(head.channels() == 2 * params.n, "predictOffsets: head channel mismatch");

  std::vector<OffsetSet> out;
  out.reserve(static_cast<std::size_t>(h) * w);
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      OffsetSet set;
      set.query_r = r;
      set.query_c = c;
      set.flavor = OffsetSet::Flavor::Predicted;
      set.positions.reserve(params.n);
      for (int k = 0; k < params.n; ++k)
        set.positions.emplace_back(r + head[2 * k](r, c), c + head[2 * k + 1](r, c));
      out.push_back(std::move(set));
    }
  }
  return out;
}

namespace {

double logSumExp(const VectorD& v) {
  const double m = v.maxCoeff();
  return m + std::log((v.array() - m).exp().sum());
}

}  // namespace

TransportPlan sinkhorn(const MatrixD& cost, double reg, int max_iters, double tol) {
  require(cost.rows() == cost.cols() && cost.rows() > 0, "sinkhorn: square cost required");
  require(reg > 0.0, "sinkhorn: regularization must be positive");
  if (!cost.allFinite())
    throw std::invalid_argument("sinkhorn: non-finite cost entries");

  const int n = static_cast<int>(cost.rows());
  const double log_marginal = -std::log(static_cast<double>(n));
  const MatrixD log_kernel = -cost / reg;

  VectorD u = VectorD::Zero(n);
  VectorD v = VectorD::Zero(n);

  TransportPlan result;
  auto computePlan = [&]() {
    MatrixD plan(n, n);
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k)
        plan(j, k) = std::exp(log_kernel(j, k) + u[j] + v[k]);
    return plan;
  };
  auto residualOf = [&](const MatrixD& plan) {
    const double target = 1.0 / n;
    double res = 0.0;
    for (int i = 0; i < n; ++i) {
      res = std::max(res, std::abs(plan.row(i).sum() - target));
      res = std::max(res, std::abs(plan.col(i).sum() - target));
    }
    return res;
  };

  int it = 0;
  for (; it < max_iters; ++it) {
    for (int j = 0; j < n; ++j)
      u[j] = log_marginal - logSumExp((log_kernel.row(j).transpose() + v));
    for (int k = 0; k < n; ++k)
      v[k] = log_marginal - logSumExp((log_kernel.col(k) + u));
    result.plan = computePlan();
    result.residual = residualOf(result.plan);
    if (result.residual < tol) {
      ++it;
      break;
    }
  }
  result.iterations = it;
  return result;
}

OffsetLoss offsetLoss(const OffsetSet& pred, const OffsetSet& gt, double reg,
                      int max_iters) {
  require(pred.positions.size() == gt.positions.size(),
          "offsetLoss: position count mismatch");
  const int n = static_cast<int>(pred.positions.size());

  OffsetLoss out;
  out.cost = MatrixD(n, n);
  for (int j = 0; j < n; ++j)
    for (int k = 0; k < n; ++k)
      out.cost(j, k) = (pred.positions[j] - gt.positions[k]).lpNorm<1>();
  out.plan = sinkhorn(out.cost, reg, max_iters);
  out.loss = (out.plan.plan.array() * out.cost.array()).sum();
  return out;
}

std::vector<Eigen::Vector2d> offsetLossGrad(const OffsetSet& pred,
                                            const OffsetSet& gt,
                                            const TransportPlan& plan) {
  const int n = static_cast<int>(pred.positions.size());
  std::vector<Eigen::Vector2d> grad(n, Eigen::Vector2d::Zero());
  for (int j = 0; j < n; ++j) {
    for (int k = 0; k < n; ++k) {
      const Eigen::Vector2d d = pred.positions[j] - gt.positions[k];
      grad[j].x() += plan.plan(j, k) * (d.x() > 0 ? 1.0 : (d.x() < 0 ? -1.0 : 0.0));
      grad[j].y() += plan.plan(j, k) * (d.y() > 0 ? 1.0 : (d.y() < 0 ? -1.0 : 0.0));
    }
  }
  return grad;
}

double mapOffsetLoss(const std::vector<OffsetSet>& pred,
                     const std::vector<OffsetSet>& gt,
                     const field::TrajectoryField& gt_field,
                     const MapOffsetLossOptions& opts) {
  require(pred.size() == gt.size(), "mapOffsetLoss: query count mismatch");
  double sum = 0.0;
  int count = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (opts.foreground_only) {
      const int r = gt[i].query_r, c = gt[i].query_c;
      if (gt_field.object_id(r, c) == field::kEmpty) continue;
    }
    sum += offsetLoss(pred[i], gt[i], opts.reg, opts.max_iters).loss;
    ++count;
  }
  return count > 0 ? sum / count : 0.0;
}

}  // namespace bevsync::offsets
