#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "lesionprior/preprocess.hpp"
#include "lesionprior/prior.hpp"
#include "lesionprior/train.hpp"
#include "lesionprior/volume.hpp"

namespace lesionprior {

enum class AffineFormat { World, Flirt };
AffineFormat parse_affine_format(const std::string& s);

/// One subject of a dataset manifest. Paths are relative to the manifest.
struct CaseEntry {
  std::string id;
  std::array<std::string, 4> modalities;  // t1, t1c, t2, flair
  std::string gt;
  std::string to_atlas;    // subject -> atlas matrix, optional
  std::string from_atlas;  // atlas -> subject matrix, optional (defaults to inverse of to_atlas)
  AffineFormat affine_format = AffineFormat::World;
};

/// Dataset manifest (JSON):
///   { "atlas": {"dims": [..], "spacing": [..], "affine": [[..] x4]},
///     "cases": [ {"id", "modalities": {"t1", "t1c", "t2", "flair"}, "gt",
///                 "to_atlas", "from_atlas", "affine_format": "world"|"flirt"} ] }
struct Manifest {
  std::optional<Geometry> atlas;
  std::vector<CaseEntry> cases;
  std::string base_dir;

  std::string resolve(const std::string& relative) const;
};

Manifest load_manifest(const std::string& path);
void save_manifest(const Manifest& m, const std::string& path);

/// Subject voxel -> atlas voxel map for a case.
Affine subject_to_atlas_voxels(const Manifest& m, const CaseEntry& e, const Geometry& subject,
                               const Geometry& atlas);
/// Atlas voxel -> subject voxel map for a case.
Affine atlas_to_subject_voxels(const Manifest& m, const CaseEntry& e, const Geometry& subject,
                               const Geometry& atlas);

/// Resamples every ground truth into atlas space (nearest neighbour), splits
/// it per lesion type and sums over subjects.
Heatmaps build_heatmaps(const Manifest& m);

/// Clip + normalize the four modalities, optionally resample the atlas VOI
/// map into subject space and append its nine binary channels.
MultiChannelVolume fuse_case(const Manifest& m, const CaseEntry& e, const LabelVolume* atlas_voi);

/// Fused dataset manifest (JSON):
///   { "channels": [names], "cases": [ {"id", "channels": [paths], "gt"} ] }
struct FusedEntry {
  std::string id;
  std::vector<std::string> channels;
  std::string gt;
};

struct FusedManifest {
  std::vector<std::string> channel_names;
  std::vector<FusedEntry> cases;
  std::string base_dir;
};

FusedManifest load_fused_manifest(const std::string& path);
void save_fused_manifest(const FusedManifest& m, const std::string& path);

/// Writes `<out_dir>/<id>/<channel>.nii.gz` plus `<out_dir>/<id>/channels.json`.
FusedEntry write_fused_case(const std::string& id, const MultiChannelVolume& v,
                            const std::string& gt_path, const std::string& out_dir);

TrainingCase load_training_case(const FusedManifest& m, const FusedEntry& e);
MultiChannelVolume load_fused_input(const FusedManifest& m, const FusedEntry& e);

// ---------------------------------------------------------------------------
// Slice rendering

enum class SliceAxis { X = 0, Y = 1, Z = 2 };
SliceAxis parse_axis(const std::string& s);

struct Rgb {
  std::uint8_t r, g, b;
};

/// Colours for VOI labels 0..9: background, red, green, blue, yellow,
/// orange, pink, purple, grey, brown.
extern const std::array<Rgb, 10> kVoiPalette;

struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;  // 1 = gray, 3 = rgb
  std::vector<std::uint8_t> pixels;
};

/// Min-max scaled 8-bit grayscale slice; a constant slice maps to mid gray.
Image render_gray(const ScalarVolume& v, SliceAxis axis, std::size_t index);
/// Palette-coloured slice of a 0..9 label map.
Image render_voi(const LabelVolume& v, SliceAxis axis, std::size_t index);

/// Binary PGM (P5) or PPM (P6) depending on the channel count.
void write_netpbm(const Image& img, const std::string& path);

}  // namespace lesionprior
