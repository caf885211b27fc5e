#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <random>

#include "lesionprior/metrics.hpp"
#include "oracles.hpp"

using namespace lesionprior;

namespace {

Geometry grid(std::size_t x, std::size_t y, std::size_t z, Spacing s = {1, 1, 1}) {
  return Geometry::with_spacing({x, y, z}, s);
}

LabelVolume random_mask(const Geometry& g, std::mt19937_64& rng, std::size_t max_voxels) {
  LabelVolume m(g);
  std::uniform_int_distribution<std::size_t> pos(0, m.size() - 1);
  std::uniform_int_distribution<std::size_t> count(1, max_voxels);
  const std::size_t n = count(rng);
  // a random walk keeps the voxels clustered, like a small lesion
  std::size_t at = pos(rng);
  for (std::size_t v = 0; v < n; ++v) {
    m[at] = 1;
    const std::size_t step[3] = {1, g.dims[0], g.dims[0] * g.dims[1]};
    const std::size_t s = step[rng() % 3];
    at = rng() % 2 ? (at + s) % m.size() : (at + m.size() - s) % m.size();
  }
  return m;
}

}  // namespace

TEST_CASE("region masks") {
  const LabelVolume v(grid(4, 1, 1), std::vector<std::uint8_t>{0, 1, 2, 4});
  const auto r = region_masks(v);
  CHECK(r[static_cast<int>(Region::WT)].values() == std::vector<std::uint8_t>{0, 1, 1, 1});
  CHECK(r[static_cast<int>(Region::TC)].values() == std::vector<std::uint8_t>{0, 1, 0, 1});
  CHECK(r[static_cast<int>(Region::ET)].values() == std::vector<std::uint8_t>{0, 0, 0, 1});
  for (const auto& m : region_masks(LabelVolume(grid(3, 3, 3)))) {
    for (auto x : m.data()) CHECK(x == 0);
  }
  CHECK_THROWS_AS(region_masks(LabelVolume(grid(1, 1, 1), std::vector<std::uint8_t>{3})), Error);

  std::mt19937_64 rng(1);
  LabelVolume rnd(grid(6, 6, 6));
  for (auto& x : rnd.values()) x = std::array<std::uint8_t, 4>{0, 1, 2, 4}[rng() % 4];
  const auto m = region_masks(rnd);
  for (std::size_t n = 0; n < rnd.size(); ++n) {
    CHECK(m[0][n] <= m[2][n]);  // ET within TC
    CHECK(m[2][n] <= m[1][n]);  // TC within WT
  }
}

TEST_CASE("dice") {
  const Geometry g = grid(4, 1, 1);
  const LabelVolume a(g, std::vector<std::uint8_t>{1, 1, 0, 0});
  const LabelVolume b(g, std::vector<std::uint8_t>{0, 1, 1, 0});
  const LabelVolume c(g, std::vector<std::uint8_t>{0, 0, 0, 1});
  CHECK(dice(a, a) == 1.0);
  CHECK(dice(a, c) == 0.0);
  CHECK(dice(a, b) == 0.5);
  CHECK(dice(b, a) == 0.5);
  CHECK(dice(LabelVolume(g), LabelVolume(g)) == 1.0);
  CHECK(dice(a, LabelVolume(g)) == 0.0);
  CHECK_THROWS_AS(dice(a, LabelVolume(grid(2, 2, 1))), Error);
}

TEST_CASE("boundary") {
  LabelVolume one(grid(3, 3, 3));
  one(1, 1, 1) = 1;
  CHECK(boundary(one) == one);

  const LabelVolume cube(grid(3, 3, 3), 1);
  const LabelVolume b = boundary(cube);
  CHECK(std::count(b.data().begin(), b.data().end(), 1) == 26);
  CHECK(b(1, 1, 1) == 0);

  LabelVolume padded(grid(5, 5, 5));
  for (int k = 1; k < 4; ++k) {
    for (int j = 1; j < 4; ++j) {
      for (int i = 1; i < 4; ++i) padded(i, j, k) = 1;
    }
  }
  const LabelVolume pb = boundary(padded);
  CHECK(std::count(pb.data().begin(), pb.data().end(), 1) == 26);

  const LabelVolume empty(grid(3, 3, 3));
  CHECK(boundary(empty) == empty);
}

TEST_CASE("hausdorff examples") {
  const Geometry g = grid(4, 5, 1);
  LabelVolume x(g), y(g);
  x(0, 0, 0) = 1;
  y(3, 4, 0) = 1;
  CHECK(hausdorff(x, y, g.spacing) == 5.0);
  CHECK(hausdorff(x, x, g.spacing) == 0.0);
  CHECK(hausdorff95(x, x, g.spacing) == 0.0);
  CHECK(hausdorff(x, LabelVolume(g), g.spacing) == kNoDistance);
  CHECK(hausdorff95(LabelVolume(g), y, g.spacing) == kNoDistance);
  CHECK(hausdorff(LabelVolume(g), LabelVolume(g), g.spacing) == 0.0);
}

TEST_CASE("H95 suppresses a single outlier") {
  // X: 20 voxels on row y=1 next to Y's row y=0, plus one voxel 100 voxels away.
  const Geometry g = grid(120, 2, 1);
  LabelVolume x(g), y(g);
  for (int i = 0; i < 20; ++i) {
    x(i, 1, 0) = 1;
    y(i, 0, 0) = 1;
  }
  x(119, 0, 0) = 1;
  y(19, 0, 0) = 1;
  const auto d = directed_surface_distances(x, y, g.spacing);
  REQUIRE(d.size() == 21);
  CHECK(std::count(d.begin(), d.end(), 1.0) == 20);
  CHECK(*std::max_element(d.begin(), d.end()) == 100.0);
  CHECK(oracle::p95(d) == 1.0);
  // Y is 1 voxel from X everywhere, so both directions give 1.
  CHECK(hausdorff95(x, y, g.spacing) == 1.0);
  CHECK(hausdorff(x, y, g.spacing) == 100.0);
}

TEST_CASE("distance transform and Hausdorff match all-pairs oracles") {
  std::mt19937_64 rng(11);
  const std::array<Spacing, 3> spacings{Spacing{1, 1, 1}, Spacing{1, 1.5, 2}, Spacing{0.5, 0.75, 1.25}};
  for (int trial = 0; trial < 100; ++trial) {
    const Spacing s = spacings[trial % 3];
    const Geometry g = grid(7 + trial % 4, 6 + trial % 3, 5 + trial % 5, s);
    const LabelVolume x = random_mask(g, rng, 30);
    const LabelVolume y = random_mask(g, rng, 30);
    const auto bx = oracle::boundary(x), by = oracle::boundary(y);
    CHECK(bx.size() <= 30);

    const auto dxy = oracle::directed(bx, by, s), dyx = oracle::directed(by, bx, s);
    CHECK(directed_surface_distances(x, y, s) == dxy);
    CHECK(directed_surface_distances(y, x, s) == dyx);
    const double h = std::max(*std::max_element(dxy.begin(), dxy.end()),
                              *std::max_element(dyx.begin(), dyx.end()));
    CHECK(hausdorff(x, y, s) == h);
    CHECK(hausdorff(y, x, s) == h);
    const double h95 = std::max(oracle::p95(dxy), oracle::p95(dyx));
    CHECK(hausdorff95(x, y, s) == h95);
    CHECK(hausdorff95(x, y, s) <= hausdorff(x, y, s));

    std::size_t inter = 0, nx = 0, ny = 0;
    for (std::size_t n = 0; n < x.size(); ++n) {
      inter += x[n] && y[n];
      nx += x[n];
      ny += y[n];
    }
    CHECK(dice(x, y) == 2.0 * inter / static_cast<double>(nx + ny));
    CHECK(dice(x, x) == 1.0);
    CHECK(hausdorff95(x, x, s) == 0.0);
  }
}

TEST_CASE("squared distance transform matches brute force") {
  std::mt19937_64 rng(12);
  const Spacing s{1, 1.5, 2};
  const Geometry g = grid(9, 7, 6, s);
  for (int trial = 0; trial < 10; ++trial) {
    const LabelVolume f = random_mask(g, rng, 12);
    const auto dt = squared_distance_transform(f, s);
    for (std::size_t k = 0; k < 6; ++k) {
      for (std::size_t j = 0; j < 7; ++j) {
        for (std::size_t i = 0; i < 9; ++i) {
          double best = INFINITY;
          for (std::size_t c = 0; c < 6; ++c) {
            for (std::size_t b = 0; b < 7; ++b) {
              for (std::size_t a = 0; a < 9; ++a) {
                if (!f(a, b, c)) continue;
                const double dx = (double(i) - double(a)) * s[0], dy = (double(j) - double(b)) * s[1],
                             dz = (double(k) - double(c)) * s[2];
                best = std::min(best, dx * dx + dy * dy + dz * dz);
              }
            }
          }
          CHECK(dt[f.index(i, j, k)] == best);
        }
      }
    }
  }
  const auto none = squared_distance_transform(LabelVolume(g), s);
  CHECK(std::isinf(none.front()));
}

TEST_CASE("evaluate_case") {
  const Geometry g = grid(4, 4, 4);
  LabelVolume gt(g);
  gt(1, 1, 1) = 1;
  gt(2, 1, 1) = 4;
  gt(1, 2, 1) = 2;
  gt(2, 2, 1) = 2;
  gt(1, 1, 2) = 4;

  const CaseReport same = evaluate_case(gt, gt, "c");
  for (const auto& r : same.regions) {
    CHECK(r.dice == 1.0);
    CHECK(r.h95 == 0.0);
  }
  const CaseReport none = evaluate_case(gt, LabelVolume(g), "c");
  for (const auto& r : none.regions) {
    CHECK(r.dice == 0.0);
    CHECK(r.h95 == kNoDistance);
  }

  // Hand-built prediction scored with the oracles above.
  LabelVolume pred(g);
  pred(1, 1, 1) = 4;
  pred(2, 1, 1) = 4;
  pred(3, 3, 3) = 2;
  const CaseReport r = evaluate_case(gt, pred, "c");
  const auto gm = region_masks(gt), pm = region_masks(pred);
  for (Region reg : kRegions) {
    const int i = static_cast<int>(reg);
    std::size_t inter = 0, ng = 0, np = 0;
    for (std::size_t n = 0; n < gt.size(); ++n) {
      inter += gm[i][n] && pm[i][n];
      ng += gm[i][n];
      np += pm[i][n];
    }
    CHECK(r.regions[i].dice == 2.0 * inter / static_cast<double>(ng + np));
    const auto bg = oracle::boundary(gm[i]), bp = oracle::boundary(pm[i]);
    const double h95 = std::max(oracle::p95(oracle::directed(bg, bp, g.spacing)),
                                oracle::p95(oracle::directed(bp, bg, g.spacing)));
    CHECK(r.regions[i].h95 == h95);
  }
  CHECK_THROWS_AS(evaluate_case(gt, LabelVolume(grid(2, 2, 2))), Error);

  const std::string csv = report_csv({same, none});
  CHECK(csv.rfind("case_id,dsc_et,dsc_wt,dsc_tc,h95_et,h95_wt,h95_tc\n", 0) == 0);
  CHECK(csv.find("inf") != std::string::npos);
  CHECK(csv.find("\nmean,0.5,0.5,0.5,inf,inf,inf") != std::string::npos);
}
