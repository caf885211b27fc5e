#include "lesionprior/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace lesionprior {

const Geometry& MultiChannelVolume::geometry() const {
  if (channels.empty()) throw Error("multi-channel volume has no channels");
  return channels.front().geometry();
}

ScalarVolume clip_outliers(const ScalarVolume& vol, double low_pct, double high_pct) {
  std::vector<double> pos;
  for (double v : vol.data()) {
    if (v > 0.0) pos.push_back(v);
  }
  if (pos.empty()) throw Error("clip_outliers: empty support");
  std::sort(pos.begin(), pos.end());
  const double lo = nearest_rank(pos, low_pct);
  const double hi = nearest_rank(pos, high_pct);

  ScalarVolume out = vol;
  for (double& v : out.values()) {
    if (v > 0.0) v = std::clamp(v, lo, hi);
  }
  return out;
}

NormalizeResult zscore_normalize(const ScalarVolume& vol, const LabelVolume& mask) {
  require_same_grid(vol, mask, "zscore_normalize");
  std::size_t count = 0;
  double sum = 0.0;
  for (std::size_t n = 0; n < vol.size(); ++n) {
    if (mask[n]) {
      sum += vol[n];
      ++count;
    }
  }
  if (count < 2) throw Error("zscore_normalize: brain mask needs at least 2 voxels");
  const double mean = sum / static_cast<double>(count);
  double ss = 0.0;
  for (std::size_t n = 0; n < vol.size(); ++n) {
    if (mask[n]) ss += (vol[n] - mean) * (vol[n] - mean);
  }
  const double stddev = std::sqrt(ss / static_cast<double>(count));

  NormalizeResult r{ScalarVolume(vol.geometry()), mean, stddev, stddev < 1e-8};
  if (r.flat) {
    std::cerr << "warning: flat image inside brain mask (stddev " << stddev
              << "); normalized values set to 0\n";
    return r;
  }
  for (std::size_t n = 0; n < vol.size(); ++n) {
    if (mask[n]) r.volume[n] = (vol[n] - mean) / stddev;
  }
  return r;
}

LabelVolume brain_mask(const std::vector<ScalarVolume>& modalities) {
  if (modalities.empty()) throw Error("brain_mask: no modalities");
  LabelVolume mask(modalities.front().geometry());
  for (const auto& m : modalities) {
    require_same_grid(mask, m, "brain_mask");
    for (std::size_t n = 0; n < m.size(); ++n) {
      if (m[n] != 0.0) mask[n] = 1;
    }
  }
  return mask;
}

std::vector<ScalarVolume> normalize_modalities(const std::vector<ScalarVolume>& modalities) {
  const LabelVolume mask = brain_mask(modalities);
  std::vector<ScalarVolume> out;
  out.reserve(modalities.size());
  for (const auto& m : modalities) out.push_back(zscore_normalize(clip_outliers(m), mask).volume);
  return out;
}

MultiChannelVolume fuse_channels(const std::vector<ScalarVolume>& modalities,
                                 const std::vector<LabelVolume>& voi_channels) {
  if (modalities.size() != kModalityNames.size()) {
    throw Error("fuse_channels: expected 4 modalities, got " + std::to_string(modalities.size()));
  }
  if (!voi_channels.empty() && voi_channels.size() != 9) {
    throw Error("fuse_channels: expected 9 VOI channels, got " +
                std::to_string(voi_channels.size()));
  }
  MultiChannelVolume out;
  for (std::size_t c = 0; c < modalities.size(); ++c) {
    require_same_grid(modalities.front(), modalities[c], "fuse_channels");
    out.channels.push_back(modalities[c]);
    out.names.emplace_back(kModalityNames[c]);
  }
  for (std::size_t c = 0; c < voi_channels.size(); ++c) {
    require_same_grid(modalities.front(), voi_channels[c], "fuse_channels");
    out.channels.push_back(volume_cast<double>(voi_channels[c]));
    out.names.push_back("voi" + std::to_string(c + 1));
  }
  return out;
}

}  // namespace lesionprior
