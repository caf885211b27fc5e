#pragma once

#include <array>
#include <limits>
#include <string>
#include <vector>

#include "lesionprior/volume.hpp"

namespace lesionprior {

enum class Region { ET = 0, WT = 1, TC = 2 };
inline constexpr std::array<Region, 3> kRegions{Region::ET, Region::WT, Region::TC};
const char* region_name(Region r);

/// Distance reported when exactly one of the two sets is empty.
inline constexpr double kNoDistance = std::numeric_limits<double>::infinity();

/// ET = {4}, TC = {1, 4}, WT = {1, 2, 4}; indexed by Region.
std::array<LabelVolume, 3> region_masks(const LabelVolume& labels);

/// 2|G & P| / (|G| + |P|); 1 when both are empty.
double dice(const LabelVolume& g, const LabelVolume& p);

/// Foreground voxels with at least one 6-neighbour in the background; the
/// outside of the grid counts as background.
LabelVolume boundary(const LabelVolume& mask);

/// Exact squared Euclidean distance (mm^2) from every voxel to the nearest
/// non-zero voxel of `features`, separable lower-envelope algorithm.
/// Infinity everywhere when `features` is empty.
std::vector<double> squared_distance_transform(const LabelVolume& features, const Spacing& spacing);

/// Distances from each boundary voxel of `from` to the boundary of `to`,
/// in linear voxel order.
std::vector<double> directed_surface_distances(const LabelVolume& from, const LabelVolume& to,
                                               const Spacing& spacing);

/// Symmetric Hausdorff distance between the boundaries of two masks. 0 when
/// both masks are empty, kNoDistance when exactly one is.
double hausdorff(const LabelVolume& x, const LabelVolume& y, const Spacing& spacing);

/// max of the two directed nearest-rank 95th percentiles.
double hausdorff95(const LabelVolume& x, const LabelVolume& y, const Spacing& spacing);

struct RegionScores {
  double dice = 0.0;
  double h95 = 0.0;
  double hausdorff = 0.0;
};

struct CaseReport {
  std::string case_id;
  std::array<RegionScores, 3> regions{};  // indexed by Region
};

CaseReport evaluate_case(const LabelVolume& gt, const LabelVolume& pred, std::string case_id = {});

/// `case_id,dsc_et,dsc_wt,dsc_tc,h95_et,h95_wt,h95_tc`, one row per case and
/// a final `mean` row; missing distances print as `inf`.
std::string report_csv(const std::vector<CaseReport>& reports);

}  // namespace lesionprior
