#pragma once

#include <array>
#include <string>
#include <vector>

#include "lesionprior/volume.hpp"

namespace lesionprior {

inline constexpr std::array<const char*, 4> kModalityNames{"t1", "t1c", "t2", "flair"};

/// Ordered stack of channels sharing one geometry.
struct MultiChannelVolume {
  std::vector<ScalarVolume> channels;
  std::vector<std::string> names;

  std::size_t channel_count() const { return channels.size(); }
  const Geometry& geometry() const;
};

/// Clamp strictly positive voxels into [p0.2, p99.8] of the positive
/// distribution (nearest rank). Zero voxels are left alone.
ScalarVolume clip_outliers(const ScalarVolume& vol, double low_pct = 0.2, double high_pct = 99.8);

struct NormalizeResult {
  ScalarVolume volume;
  double mean = 0.0;
  double stddev = 0.0;
  bool flat = false;  // stddev below 1e-8: masked voxels were zeroed
};

/// (x - mean) / stddev over the mask with the population stddev; voxels
/// outside the mask become 0.
NormalizeResult zscore_normalize(const ScalarVolume& vol, const LabelVolume& mask);

/// A voxel is brain when any modality is non-zero there.
LabelVolume brain_mask(const std::vector<ScalarVolume>& modalities);

/// Clip then normalize every modality against the shared brain mask.
std::vector<ScalarVolume> normalize_modalities(const std::vector<ScalarVolume>& modalities);

/// [T1, T1c, T2, FLAIR, VOI1..VOI9]. Passing no VOI channels yields the
/// four-channel baseline stack.
MultiChannelVolume fuse_channels(const std::vector<ScalarVolume>& modalities,
                                 const std::vector<LabelVolume>& voi_channels);

}  // namespace lesionprior
