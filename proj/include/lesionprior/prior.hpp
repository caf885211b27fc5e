#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "lesionprior/volume.hpp"

namespace lesionprior {

/// BraTS lesion codes.
inline constexpr std::uint8_t kLabelNcr = 1;
inline constexpr std::uint8_t kLabelEd = 2;
inline constexpr std::uint8_t kLabelEt = 4;

enum class Lesion { Ed = 0, Ncr = 1, Et = 2 };
inline constexpr std::array<Lesion, 3> kLesions{Lesion::Ed, Lesion::Ncr, Lesion::Et};
const char* lesion_name(Lesion t);

/// One binary mask per lesion type, indexed by Lesion.
struct LesionMasks {
  LabelVolume ed;
  LabelVolume ncr;
  LabelVolume et;
};

/// Per-lesion subject counts in atlas space.
struct Heatmaps {
  CountVolume ed;
  CountVolume ncr;
  CountVolume et;
  int subjects = 0;

  const CountVolume& operator[](Lesion t) const;
};

struct ThresholdTriple {
  double h1 = 0.0;
  double h2 = 0.0;
  double h3 = 0.0;
};

struct Percentiles {
  double alpha = 50.0;
  double beta = 65.0;
  double gamma = 80.0;

  void validate() const;
};

/// Thresholds for the three lesion types; std::nullopt marks a lesion type
/// whose heatmap has no support and therefore never fires.
struct VoiThresholds {
  std::optional<ThresholdTriple> ed;
  std::optional<ThresholdTriple> ncr;
  std::optional<ThresholdTriple> et;
};

LesionMasks split_lesion_mask(const LabelVolume& gt);

/// Element-wise sum of the binary masks of every subject.
Heatmaps accumulate_heatmaps(const std::vector<LesionMasks>& subjects);

ThresholdTriple compute_thresholds(const CountVolume& heatmap, const Percentiles& p = {});

struct VoiOptions {
  Percentiles percentiles;
  /// When set, a lesion type with an all-zero heatmap skips all of its
  /// branches instead of raising.
  bool skip_empty = false;
};

VoiThresholds voi_thresholds(const Heatmaps& h, const VoiOptions& options = {});

/// Ten-label VOI map from the prioritized threshold cascade:
/// ET>=h3 -> 9, NCR>=h3 -> 8, ED>=h3 -> 7, ET>=h2 -> 6, NCR>=h2 -> 5,
/// ED>=h2 -> 4, ET>=h1 -> 3, NCR>=h1 -> 2, ED>=h1 -> 1, else 0.
LabelVolume build_voi(const Heatmaps& h, const VoiOptions& options = {});
LabelVolume build_voi(const Heatmaps& h, const VoiThresholds& thresholds);

/// Channel k-1 holds the indicator of V == k for k = 1..9.
std::array<LabelVolume, 9> split_voi_channels(const LabelVolume& voi);

/// entry[label][lesion] = sum of heatmap counts over voxels with that label
/// divided by (subjects * voxels with that label). NaN for empty labels.
struct LabelDistribution {
  std::array<std::array<double, 3>, 10> probability{};
  std::array<std::size_t, 10> voxels{};
};

LabelDistribution label_distribution(const LabelVolume& voi, const Heatmaps& h, int n_subjects);

/// CSV with header `label,ed,ncr,et,voxels`; empty labels print `nan`.
std::string distribution_csv(const LabelDistribution& d);

}  // namespace lesionprior
