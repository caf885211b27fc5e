#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lesionprior/volume.hpp"

namespace lesionprior {

/// Synthetic multimodal cohort: an ellipsoidal "brain" per subject, one
/// spherical lesion (NCR core, ET shell, ED halo) whose centre is drawn near
/// a fixed atlas location, and a small random integer shift between subject
/// and atlas space.
struct FixtureOptions {
  std::size_t cases = 6;
  std::size_t size = 32;
  std::uint64_t seed = 1;
  /// Atlas-space lesion centre and the jitter (voxels) around it.
  std::array<double, 3> hot_spot{20.0, 13.0, 16.0};
  double jitter = 2.0;
  double min_radius = 5.0;
  double max_radius = 7.0;
  int max_shift = 2;
  double noise = 4.0;
  /// Adds an unlabelled lesion look-alike away from the hot spot, so the
  /// intensities alone cannot separate lesion from mimic.
  bool mimics = false;
};

struct SyntheticCase {
  std::string id;
  std::array<ScalarVolume, 4> modalities;  // t1, t1c, t2, flair
  LabelVolume gt;                          // BraTS codes
  Affine subject_to_atlas = Affine::Identity();  // world mm -> world mm
};

Geometry fixture_atlas_geometry(const FixtureOptions& options);

std::vector<SyntheticCase> make_fixture(const FixtureOptions& options);

/// Writes every case as NIfTI plus `<id>_to_atlas.mat` (world matrices) and a
/// dataset manifest `manifest.json`. Returns the manifest path.
std::string write_fixture(const std::vector<SyntheticCase>& cases, const Geometry& atlas,
                          const std::string& dir);

}  // namespace lesionprior
