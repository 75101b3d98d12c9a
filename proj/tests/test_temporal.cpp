#include "bevsync/temporal.hpp"

#include <doctest.h>

#include <cmath>

using namespace bevsync;

namespace {

FeatureMap constMap(const geom::GridSpec& grid, int channels, double value,
                    std::int64_t ts) {
  FeatureMap f(channels, grid);
  for (auto& p : f.data.planes) p.setConstant(value);
  f.timestamp_us = ts;
  f.agent_id = "a";
  return f;
}

const geom::GridSpec kGrid{0.0, 0.0, 1.0, 8, 8};

}  // namespace

TEST_SUITE("temporal") {

TEST_CASE("embedding at zero delay is (0, 1) pairs") {
  const auto te = temporal::temporalEmbed(0, 8);
  for (int j = 0; j < 4; ++j) {
    CHECK(te[2 * j] == 0.0);
    CHECK(te[2 * j + 1] == 1.0);
  }
}

TEST_CASE("embedding matches direct scalar evaluation") {
  // tau = 1, first pair: argument 1
  const auto te8 = temporal::temporalEmbed(1, 8);
  CHECK(te8[0] == doctest::Approx(0.841471).epsilon(1e-6));
  CHECK(te8[1] == doctest::Approx(0.540302).epsilon(1e-6));

  // tau = 2 at the half-channel index: argument 2 / 8 = 0.25
  CHECK(temporal::embedArgument(2.0, 4, 8) == doctest::Approx(0.25));
  CHECK(std::sin(temporal::embedArgument(2.0, 4, 8)) ==
        doctest::Approx(0.247404).epsilon(1e-6));
  CHECK(std::cos(temporal::embedArgument(2.0, 4, 8)) ==
        doctest::Approx(0.968912).epsilon(1e-6));
}

TEST_CASE("embedding pairs are unit norm") {
  for (int tau = 0; tau <= 8; ++tau) {
    const auto te = temporal::temporalEmbed(tau, 16);
    for (int j = 0; j < 8; ++j)
      CHECK(std::abs(te[2 * j] * te[2 * j] + te[2 * j + 1] * te[2 * j + 1] - 1.0) <
            1e-12);
  }
}

TEST_CASE("odd channel count is rejected") {
  CHECK_THROWS(temporal::temporalEmbed(1, 7));
}

TEST_CASE("identity-on-features fusion returns the input") {
  const auto f = constMap(kGrid, 4, 0.7, 0);
  const auto te = temporal::temporalEmbed(3, 4);
  const auto fused =
      temporal::fuseTemporal(f, te, temporal::FuseParams::identityOnFeatures(4));
  for (int ch = 0; ch < 4; ++ch)
    CHECK((fused.data[ch] - f.data[ch]).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero features with tau 0 produce a constant map from the TE block") {
  FeatureMap zero(4, kGrid);
  Rng rng(3);
  auto params = temporal::FuseParams::seeded(4, rng);
  const auto te = temporal::temporalEmbed(0, 4);
  const auto fused = temporal::fuseTemporal(zero, te, params);
  const VectorD expected = params.weight.rightCols(4) * te + params.bias;
  for (int ch = 0; ch < 4; ++ch) {
    CHECK(fused.data[ch].maxCoeff() == doctest::Approx(expected[ch]));
    CHECK(fused.data[ch].minCoeff() == doctest::Approx(expected[ch]));
  }
}

TEST_CASE("TE-only projection differs by exactly the embedding difference") {
  // weight = [0 | I]: output is the embedding itself
  temporal::FuseParams params = temporal::FuseParams::zeros(4);
  for (int c = 0; c < 4; ++c) params.weight(c, 4 + c) = 1.0;

  const auto f = constMap(kGrid, 4, 0.5, 0);
  const auto te2 = temporal::temporalEmbed(2, 4);
  const auto te5 = temporal::temporalEmbed(5, 4);
  const auto fused2 = temporal::fuseTemporal(f, te2, params);
  const auto fused5 = temporal::fuseTemporal(f, te5, params);
  for (int ch = 0; ch < 4; ++ch) {
    const double diff = fused5.data[ch](3, 3) - fused2.data[ch](3, 3);
    CHECK(diff == doctest::Approx(te5[ch] - te2[ch]).epsilon(1e-12));
  }
}

TEST_CASE("fusion rejects channel mismatch") {
  const auto f = constMap(kGrid, 4, 1.0, 0);
  CHECK_THROWS(temporal::fuseTemporal(f, temporal::temporalEmbed(1, 6),
                                      temporal::FuseParams::identityOnFeatures(4)));
}

TEST_CASE("cache evicts the oldest beyond capacity") {
  temporal::AgentCache cache("a", 4);
  for (int i = 0; i < 6; ++i) cache.insert(constMap(kGrid, 2, i, i * 100000));
  CHECK(cache.size() == 4);
  CHECK(cache.entries().front().timestamp_us == 200000);
  CHECK(cache.newestTimestamp() == 500000);
}

TEST_CASE("cache rejects non-increasing timestamps") {
  temporal::AgentCache cache("a", 4);
  cache.insert(constMap(kGrid, 2, 0.0, 100000));
  CHECK_THROWS(cache.insert(constMap(kGrid, 2, 0.0, 100000)));
  CHECK_THROWS(cache.insert(constMap(kGrid, 2, 0.0, 50000)));
}

TEST_CASE("delay in frames rounds fractional delays up") {
  CHECK(temporal::delayFrames(1000000, 1000000, 100000) == 0);
  CHECK(temporal::delayFrames(1000000, 900000, 100000) == 1);
  CHECK(temporal::delayFrames(1000000, 850000, 100000) == 2);
  CHECK(temporal::delayFrames(1000000, 600000, 100000) == 4);
}

TEST_CASE("assemble warps a translated ego by one cell") {
  temporal::AgentCache cache("a", 2);
  FeatureMap f(2, kGrid);
  f.data[0](4, 4) = 1.0;
  f.timestamp_us = 0;
  cache.insert(f);

  std::map<std::int64_t, geom::Pose2> poses{{0, {0.0, 0.0, 0.0}}};
  // ego moved +1 cell in x between capture and t
  const geom::Pose2 ego_at_t{1.0, 0.0, 0.0};
  const auto history = temporal::assembleHistory(
      cache, poses, ego_at_t, 100000, 100000,
      temporal::FuseParams::identityOnFeatures(2));
  REQUIRE(history.size() == 1);
  // content shifts one cell toward smaller x in the ego frame
  CHECK(history[0].data[0](4, 3) == doctest::Approx(1.0));
  CHECK(history[0].data[0](4, 4) == doctest::Approx(0.0));
}

TEST_CASE("static ego with a fresh single entry yields the fused input") {
  temporal::AgentCache cache("a", 2);
  FeatureMap f = constMap(kGrid, 4, 0.7, 100000);
  f.data[2](3, 5) = -1.25;
  cache.insert(f);
  std::map<std::int64_t, geom::Pose2> poses{{100000, {0, 0, 0}}};
  Rng rng(2);
  const auto params = temporal::FuseParams::seeded(4, rng);
  const auto history =
      temporal::assembleHistory(cache, poses, {0, 0, 0}, 100000, 100000, params);
  REQUIRE(history.size() == 1);
  const auto fused = temporal::fuseTemporal(f, temporal::temporalEmbed(0, 4), params);
  for (int ch = 0; ch < 4; ++ch)
    CHECK((history[0].data[ch] - fused.data[ch]).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("assemble keeps order oldest to newest and needs poses") {
  temporal::AgentCache cache("a", 4);
  for (int i = 0; i < 6; ++i) cache.insert(constMap(kGrid, 2, i, i * 100000));
  std::map<std::int64_t, geom::Pose2> poses;
  for (int i = 2; i < 6; ++i) poses[i * 100000] = {0, 0, 0};

  const auto history = temporal::assembleHistory(
      cache, poses, {0, 0, 0}, 600000, 100000,
      temporal::FuseParams::identityOnFeatures(2));
  REQUIRE(history.size() == 4);
  CHECK(history.front().timestamp_us == 200000);
  CHECK(history.back().timestamp_us == 500000);

  std::map<std::int64_t, geom::Pose2> missing = poses;
  missing.erase(300000);
  CHECK_THROWS_WITH_AS(
      temporal::assembleHistory(cache, missing, {0, 0, 0}, 600000, 100000,
                                temporal::FuseParams::identityOnFeatures(2)),
      doctest::Contains("300000"), std::invalid_argument);
}

TEST_CASE("fusion never mutates cached entries") {
  temporal::AgentCache cache("a", 2);
  cache.insert(constMap(kGrid, 2, 0.25, 0));
  std::map<std::int64_t, geom::Pose2> poses{{0, {0, 0, 0}}};
  Rng rng(5);
  const auto params = temporal::FuseParams::seeded(2, rng);
  const auto before = cache.entries().front().data[0];
  (void)temporal::assembleHistory(cache, poses, {0, 0, 0}, 100000, 100000, params);
  CHECK((cache.entries().front().data[0] - before).cwiseAbs().maxCoeff() == 0.0);
}

}  // TEST_SUITE
