#include "doctest.h"

#include <cmath>
#include <random>

#include "lesionprior/preprocess.hpp"
#include "lesionprior/prior.hpp"

using namespace lesionprior;

namespace {

Geometry grid(std::size_t x, std::size_t y, std::size_t z) {
  return Geometry::with_spacing({x, y, z}, {1, 1, 1});
}

void masked_moments(const ScalarVolume& v, const LabelVolume& mask, double* mean, double* sd) {
  double s = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (mask[i]) {
      s += v[i];
      ++n;
    }
  }
  *mean = s / static_cast<double>(n);
  double q = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (mask[i]) q += (v[i] - *mean) * (v[i] - *mean);
  }
  *sd = std::sqrt(q / static_cast<double>(n));
}

}  // namespace

TEST_CASE("clip_outliers") {
  ScalarVolume v(grid(10, 10, 12));
  for (std::size_t i = 0; i < 1000; ++i) v[i] = static_cast<double>(1000 - i);
  const ScalarVolume c = clip_outliers(v);
  for (std::size_t i = 0; i < 1000; ++i) {
    const double x = v[i];
    CHECK(c[i] == std::clamp(x, 2.0, 998.0));
  }
  for (std::size_t i = 1000; i < v.size(); ++i) CHECK(c[i] == 0.0);
  CHECK(clip_outliers(c) == c);

  const ScalarVolume flat(grid(3, 3, 3), 4.0);
  CHECK(clip_outliers(flat) == flat);
  CHECK_THROWS_AS(clip_outliers(ScalarVolume(grid(2, 2, 2))), Error);
}

TEST_CASE("zscore_normalize") {
  const Geometry g = grid(4, 1, 1);
  const ScalarVolume v(g, std::vector<double>{1, 2, 3, 50});
  const LabelVolume mask(g, std::vector<std::uint8_t>{1, 1, 1, 0});
  const NormalizeResult r = zscore_normalize(v, mask);
  CHECK(r.mean == doctest::Approx(2.0));
  CHECK(r.stddev == doctest::Approx(std::sqrt(2.0 / 3.0)));
  CHECK(r.volume[0] == doctest::Approx(-1.22474487));
  CHECK(r.volume[1] == doctest::Approx(0.0));
  CHECK(r.volume[2] == doctest::Approx(1.22474487));
  CHECK(r.volume[3] == 0.0);

  const NormalizeResult f = zscore_normalize(ScalarVolume(g, 5.0), mask);
  CHECK(f.flat);
  for (double x : f.volume.data()) CHECK(x == 0.0);

  CHECK_THROWS_AS(zscore_normalize(v, LabelVolume(g, std::vector<std::uint8_t>{1, 0, 0, 0})), Error);
}

TEST_CASE("clip then normalize gives unit moments on random volumes") {
  std::mt19937_64 rng(5);
  std::lognormal_distribution<double> intensity(4.0, 0.5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    ScalarVolume v(grid(12, 10, 8));
    for (double& x : v.values()) x = u(rng) < 0.6 ? intensity(rng) : 0.0;
    const ScalarVolume c = clip_outliers(v);
    CHECK(clip_outliers(c) == c);
    const LabelVolume mask = brain_mask({v});
    double mean = 0.0, sd = 0.0;
    masked_moments(zscore_normalize(c, mask).volume, mask, &mean, &sd);
    CHECK(std::abs(mean) < 1e-6);
    CHECK(std::abs(sd - 1.0) < 1e-6);
  }
}

TEST_CASE("brain_mask") {
  const Geometry g = grid(3, 1, 1);
  const ScalarVolume a(g, std::vector<double>{0, 2, 0});
  const ScalarVolume b(g, std::vector<double>{1, 0, 0});
  CHECK(brain_mask({a}).values() == std::vector<std::uint8_t>{0, 1, 0});
  CHECK(brain_mask({a, b}).values() == std::vector<std::uint8_t>{1, 1, 0});
  CHECK(brain_mask({ScalarVolume(g)}).values() == std::vector<std::uint8_t>{0, 0, 0});
  CHECK_THROWS_AS(brain_mask({a, ScalarVolume(grid(2, 1, 1))}), Error);
  CHECK_THROWS_AS(brain_mask({}), Error);
}

TEST_CASE("normalize_modalities is independent per modality") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(1.0, 50.0);
  std::vector<ScalarVolume> mods;
  for (int m = 0; m < 4; ++m) {
    ScalarVolume v(grid(6, 6, 6));
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = i % 7 == 0 ? 0.0 : u(rng);
    mods.push_back(v);
  }
  const auto a = normalize_modalities(mods);
  const std::vector<ScalarVolume> rev(mods.rbegin(), mods.rend());
  const auto b = normalize_modalities(rev);
  for (int m = 0; m < 4; ++m) CHECK(a[m] == b[3 - m]);
}

TEST_CASE("fuse_channels") {
  const Geometry g = grid(1, 1, 4);
  std::vector<ScalarVolume> mods;
  for (int m = 0; m < 4; ++m) mods.emplace_back(g, static_cast<double>(m));
  const auto voi = split_voi_channels(LabelVolume(g, std::vector<std::uint8_t>{0, 7, 8, 9}));
  const std::vector<LabelVolume> channels(voi.begin(), voi.end());

  const MultiChannelVolume f = fuse_channels(mods, channels);
  REQUIRE(f.channel_count() == 13);
  const std::vector<std::string> names{"t1",   "t1c",  "t2",   "flair", "voi1", "voi2", "voi3",
                                       "voi4", "voi5", "voi6", "voi7",  "voi8", "voi9"};
  CHECK(f.names == names);
  for (int m = 0; m < 4; ++m) CHECK(f.channels[m] == mods[m]);
  CHECK(f.channels[4 + 6].values() == std::vector<double>{0, 1, 0, 0});
  CHECK(f.channels[4 + 8].values() == std::vector<double>{0, 0, 0, 1});

  std::vector<LabelVolume> permuted(channels.rbegin(), channels.rend());
  CHECK(fuse_channels(mods, permuted).channels[4 + 8].values() != f.channels[4 + 8].values());

  const std::vector<LabelVolume> zeros(9, LabelVolume(g));
  const MultiChannelVolume z = fuse_channels(mods, zeros);
  for (int c = 4; c < 13; ++c) CHECK(z.channels[c].values() == std::vector<double>(4, 0.0));

  CHECK(fuse_channels(mods, {}).channel_count() == 4);
  CHECK_THROWS_AS(fuse_channels(mods, std::vector<LabelVolume>(8, LabelVolume(g))), Error);
  CHECK_THROWS_AS(fuse_channels({mods[0], mods[1], mods[2]}, channels), Error);
  std::vector<ScalarVolume> bad = mods;
  bad[2] = ScalarVolume(grid(4, 1, 1));
  CHECK_THROWS_AS(fuse_channels(bad, channels), Error);
}
