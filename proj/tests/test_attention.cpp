#include "bevsync/attention.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace bevsync;
using offsets::OffsetSet;

namespace {

const geom::GridSpec kGrid{0.0, 0.0, 1.0, 8, 8};

FeatureMap patternMap(int channels) {
  FeatureMap f(channels, kGrid);
  for (int ch = 0; ch < channels; ++ch)
    for (int r = 0; r < 8; ++r)
      for (int c = 0; c < 8; ++c) f.data[ch](r, c) = 0.1 * ch + r + 0.01 * c;
  return f;
}

OffsetSet atCells(int qr, int qc, std::vector<std::pair<double, double>> pts) {
  OffsetSet s;
  s.query_r = qr;
  s.query_c = qc;
  for (const auto& [r, c] : pts) s.positions.emplace_back(r, c);
  return s;
}

std::vector<OffsetSet> selfOffsets(int n) {
  std::vector<OffsetSet> out;
  for (int r = 0; r < kGrid.height_cells; ++r)
    for (int c = 0; c < kGrid.width_cells; ++c) {
      OffsetSet s;
      s.query_r = r;
      s.query_c = c;
      s.positions.assign(static_cast<std::size_t>(n), Eigen::Vector2d(r, c));
      out.push_back(s);
    }
  return out;
}

}  // namespace

TEST_SUITE("attention") {

TEST_CASE("gather reads cells exactly and interpolates midpoints") {
  const auto f = patternMap(2);
  const auto R = attn::gatherResponse(
      f, atCells(0, 0, {{3, 4}, {3, 4.5}, {-5, -5}}));
  CHECK(R(0, 0) == doctest::Approx(f.data[0](3, 4)));
  CHECK(R(0, 1) == doctest::Approx(f.data[1](3, 4)));
  CHECK(R(1, 0) == doctest::Approx(0.5 * (f.data[0](3, 4) + f.data[0](3, 5))));
  CHECK(R(2, 0) == 0.0);  // out of bounds
}

TEST_CASE("all positions at the query return identical rows") {
  const auto f = patternMap(4);
  const auto R = attn::gatherResponse(f, atCells(2, 5, {{2, 5}, {2, 5}, {2, 5}}));
  for (int i = 1; i < 3; ++i)
    CHECK((R.row(i) - R.row(0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("attention weights sum to one per head") {
  Rng rng(3);
  const auto params = attn::AttentionParams::seeded(8, 4, 1, rng);
  VectorD q(8);
  MatrixD R(18, 8);
  for (int i = 0; i < 8; ++i) q[i] = rng.uniform(-2, 2);
  for (int i = 0; i < 18; ++i)
    for (int j = 0; j < 8; ++j) R(i, j) = rng.uniform(-2, 2);
  const auto weights = attn::attendWeights(q, R, params.layers[0]);
  REQUIRE(weights.size() == 4);
  for (const auto& w : weights) {
    CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(w.minCoeff() >= 0.0);
  }
}

TEST_CASE("identical rows collapse attention to that row's projection") {
  Rng rng(5);
  const auto params = attn::AttentionParams::seeded(8, 4, 1, rng);
  VectorD q(8), row(8);
  for (int i = 0; i < 8; ++i) {
    q[i] = rng.uniform(-1, 1);
    row[i] = rng.uniform(-1, 1);
  }
  MatrixD R(6, 8);
  for (int i = 0; i < 6; ++i) R.row(i) = row.transpose();
  const VectorD out = attn::attend(q, R, params.layers[0]);

  const auto& layer = params.layers[0];
  const int d = layer.headDim();
  VectorD concat(8);
  for (int h = 0; h < 4; ++h)
    concat.segment(h * d, d) = layer.heads[h].wv.transpose() * row;
  const VectorD expected = layer.out_proj.transpose() * concat;
  CHECK((out - expected).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("a dominant key takes the whole softmax") {
  // zero projections plus a one-hot logit bias with a gap >= 30
  const auto params = attn::AttentionParams::uniformAverage(4, 2);
  MatrixD R(5, 4);
  Rng rng(7);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j) R(i, j) = rng.uniform(-1, 1);
  VectorD bias = VectorD::Zero(5);
  bias[3] = 30.0;
  VectorD q = VectorD::Zero(4);
  const VectorD out = attn::attend(q, R, params.layers[0], &bias);
  CHECK((out - R.row(3).transpose()).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("zero query/key projections average the value rows") {
  const auto params = attn::AttentionParams::uniformAverage(4, 2);
  MatrixD R(6, 4);
  Rng rng(9);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 4; ++j) R(i, j) = rng.uniform(-1, 1);
  VectorD q(4);
  for (int j = 0; j < 4; ++j) q[j] = rng.uniform(-1, 1);
  const VectorD out = attn::attend(q, R, params.layers[0]);
  const VectorD mean = R.colwise().mean().transpose();
  CHECK((out - mean).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("attention is invariant to key permutations") {
  Rng rng(11);
  const auto params = attn::AttentionParams::seeded(8, 4, 1, rng);
  VectorD q(8);
  MatrixD R(10, 8);
  for (int i = 0; i < 8; ++i) q[i] = rng.uniform(-1, 1);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 8; ++j) R(i, j) = rng.uniform(-1, 1);
  const VectorD base = attn::attend(q, R, params.layers[0]);
  MatrixD shuffled = R;
  for (int i = 9; i > 0; --i) {
    const int j = static_cast<int>(rng.uniformInt(0, i));
    shuffled.row(i).swap(shuffled.row(j));
  }
  const VectorD out = attn::attend(q, shuffled, params.layers[0]);
  CHECK((out - base).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("identity-configured stack returns the input map") {
  const auto f = patternMap(8);
  const auto params = attn::AttentionParams::identity(8, 4, 2);
  const auto out = attn::alignAgent(f, selfOffsets(18), params);
  for (int ch = 0; ch < 8; ++ch)
    CHECK((out.data[ch] - f.data[ch]).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("oracle average at the trajectory head is the history mean") {
  FeatureMap f(4, kGrid);
  // history cells along a trajectory
  f.data[0](4, 1) = 1.0;
  f.data[0](4, 2) = 3.0;
  f.data[0](4, 3) = 5.0;
  auto offs = selfOffsets(3);
  offs[static_cast<std::size_t>(4) * 8 + 5] =
      atCells(4, 5, {{4, 1}, {4, 2}, {4, 3}});

  const auto params = attn::AttentionParams::uniformAverage(4, 2, 1);
  const auto out = attn::alignAgent(f, offs, params);
  CHECK(out.data[0](4, 5) == doctest::Approx(3.0));  // mean of 1, 3, 5
  // background cells depend only on their own feature
  CHECK(out.data[0](0, 0) == doctest::Approx(f.data[0](0, 0)));
  CHECK(out.data[0](4, 2) == doctest::Approx(f.data[0](4, 2)));
}

TEST_CASE("add & norm keeps large activations finite") {
  Rng rng(13);
  const auto params = attn::AttentionParams::seeded(8, 4, 2, rng);
  VectorD q(8);
  MatrixD R(18, 8);
  for (int i = 0; i < 8; ++i) q[i] = rng.uniform(-1e3, 1e3);
  for (int i = 0; i < 18; ++i)
    for (int j = 0; j < 8; ++j) R(i, j) = rng.uniform(-1e3, 1e3);
  const VectorD out = attn::attentionStack(q, R, params.layers[0]);
  for (int i = 0; i < 8; ++i) CHECK(std::isfinite(out[i]));
}

TEST_CASE("provider runs once per layer and can regenerate offsets") {
  const auto f = patternMap(4);
  int calls = 0;
  auto provider = [&calls](const FeatureMap&, int) {
    ++calls;
    std::vector<OffsetSet> out;
    for (int r = 0; r < kGrid.height_cells; ++r)
      for (int c = 0; c < kGrid.width_cells; ++c) {
        OffsetSet s;
        s.query_r = r;
        s.query_c = c;
        s.positions.assign(4, Eigen::Vector2d(r, c));
        out.push_back(s);
      }
    return out;
  };
  const auto params = attn::AttentionParams::identity(4, 2, 2);
  (void)attn::alignAgent(f, provider, params);
  CHECK(calls == 2);
}

}  // TEST_SUITE
