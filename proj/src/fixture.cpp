#include "lesionprior/fixture.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "lesionprior/pipeline.hpp"
#include "lesionprior/preprocess.hpp"

namespace lesionprior {

namespace {

// Mean intensity per tissue for [t1, t1c, t2, flair].
constexpr std::array<double, 4> kBrain{100, 100, 80, 90};
constexpr std::array<double, 4> kEdema{85, 100, 150, 170};
constexpr std::array<double, 4> kEnhancing{80, 190, 130, 140};
constexpr std::array<double, 4> kNecrotic{60, 70, 170, 120};

// Atlas-space locations as fractions of the grid size.
constexpr std::array<double, 3> kMimicSpot{0.33, 0.64, 0.45};

}  // namespace

Geometry fixture_atlas_geometry(const FixtureOptions& o) {
  return Geometry::with_spacing({o.size, o.size, o.size}, {1.0, 1.0, 1.0});
}

std::vector<SyntheticCase> make_fixture(const FixtureOptions& o) {
  if (o.cases < 1 || o.size < 8) throw Error("fixture: need >= 1 case and size >= 8");
  const Geometry g = fixture_atlas_geometry(o);
  const double s = static_cast<double>(o.size);
  const double scale = s / 32.0;
  const double mid = (s - 1.0) / 2.0;
  const std::array<double, 3> radii{0.42 * s, 0.45 * s, 0.40 * s};

  std::mt19937_64 rng(o.seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> radius(o.min_radius * scale, o.max_radius * scale);
  std::uniform_int_distribution<int> shift(-o.max_shift, o.max_shift);
  std::normal_distribution<double> noise(0.0, o.noise);

  std::vector<SyntheticCase> out;
  for (std::size_t c = 0; c < o.cases; ++c) {
    SyntheticCase sc;
    char id[32];
    std::snprintf(id, sizeof id, "case%03zu", c);
    sc.id = id;

    // subject world + t = atlas world
    const std::array<double, 3> t{static_cast<double>(shift(rng)), static_cast<double>(shift(rng)),
                                  static_cast<double>(shift(rng))};
    for (int a = 0; a < 3; ++a) sc.subject_to_atlas(a, 3) = t[a];

    std::array<double, 3> lesion{}, mimic{};
    for (int a = 0; a < 3; ++a) {
      lesion[a] = o.hot_spot[a] * scale + o.jitter * scale * unit(rng) - t[a];
      mimic[a] = kMimicSpot[a] * s + o.jitter * scale * unit(rng) - t[a];
    }
    const double r = radius(rng);
    const double mimic_r = radius(rng);

    sc.gt = LabelVolume(g);
    for (auto& m : sc.modalities) m = ScalarVolume(g);
    for (std::size_t k = 0; k < o.size; ++k) {
      for (std::size_t j = 0; j < o.size; ++j) {
        for (std::size_t i = 0; i < o.size; ++i) {
          const std::array<double, 3> p{static_cast<double>(i), static_cast<double>(j),
                                        static_cast<double>(k)};
          double e = 0.0;
          for (int a = 0; a < 3; ++a) {
            const double q = (p[a] - (mid - t[a])) / radii[a];
            e += q * q;
          }
          if (e > 1.0) continue;

          auto dist = [&](const std::array<double, 3>& ctr) {
            return std::sqrt((p[0] - ctr[0]) * (p[0] - ctr[0]) + (p[1] - ctr[1]) * (p[1] - ctr[1]) +
                             (p[2] - ctr[2]) * (p[2] - ctr[2]));
          };
          const double d = dist(lesion);
          const std::array<double, 4>* tissue = &kBrain;
          std::uint8_t label = 0;
          if (d < 0.3 * r) {
            tissue = &kNecrotic;
            label = 1;
          } else if (d < 0.6 * r) {
            tissue = &kEnhancing;
            label = 4;
          } else if (d < r) {
            tissue = &kEdema;
            label = 2;
          } else if (o.mimics) {
            // same layered look as a lesion, but never labelled
            const double dm = dist(mimic);
            if (dm < 0.3 * mimic_r) {
              tissue = &kNecrotic;
            } else if (dm < 0.6 * mimic_r) {
              tissue = &kEnhancing;
            } else if (dm < mimic_r) {
              tissue = &kEdema;
            }
          }
          sc.gt(i, j, k) = label;
          for (int m = 0; m < 4; ++m) {
            sc.modalities[m](i, j, k) = std::max(1.0, (*tissue)[m] + noise(rng));
          }
        }
      }
    }
    out.push_back(std::move(sc));
  }
  return out;
}

std::string write_fixture(const std::vector<SyntheticCase>& cases, const Geometry& atlas,
                          const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  Manifest m;
  m.atlas = atlas;
  m.base_dir = dir;
  for (const auto& c : cases) {
    CaseEntry e;
    e.id = c.id;
    for (std::size_t k = 0; k < 4; ++k) {
      e.modalities[k] = c.id + "_" + kModalityNames[k] + ".nii.gz";
      write_nifti(c.modalities[k], (fs::path(dir) / e.modalities[k]).string());
    }
    e.gt = c.id + "_seg.nii.gz";
    write_nifti(c.gt, (fs::path(dir) / e.gt).string());
    e.to_atlas = c.id + "_to_atlas.mat";
    write_matrix_file(c.subject_to_atlas, (fs::path(dir) / e.to_atlas).string());
    e.affine_format = AffineFormat::World;
    m.cases.push_back(std::move(e));
  }
  const std::string path = (fs::path(dir) / "manifest.json").string();
  save_manifest(m, path);
  return path;
}

}  // namespace lesionprior
