#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace lesionprior {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

using Dims = std::array<std::size_t, 3>;
using Spacing = std::array<double, 3>;
using Affine = Eigen::Matrix4d;

/// Grid shape plus the voxel-index -> world (mm) mapping shared by every
/// volume in the toolkit.
struct Geometry {
  Dims dims{1, 1, 1};
  Spacing spacing{1.0, 1.0, 1.0};
  Affine affine = Affine::Identity();

  static Geometry with_spacing(Dims dims, Spacing spacing);

  std::size_t voxel_count() const { return dims[0] * dims[1] * dims[2]; }
  void validate() const;
};

bool same_grid(const Geometry& a, const Geometry& b);

/// Dense 3D grid, x fastest (NIfTI storage order).
template <typename T>
class Volume {
 public:
  using value_type = T;

  Volume() = default;
  explicit Volume(Geometry geometry, T fill = T{})
      : geometry_(std::move(geometry)), data_(geometry_.voxel_count(), fill) {
    geometry_.validate();
  }
  Volume(Geometry geometry, std::vector<T> data)
      : geometry_(std::move(geometry)), data_(std::move(data)) {
    geometry_.validate();
    if (data_.size() != geometry_.voxel_count()) {
      throw Error("volume data size does not match dims");
    }
  }

  const Geometry& geometry() const { return geometry_; }
  Geometry& geometry() { return geometry_; }
  const Dims& dims() const { return geometry_.dims; }
  std::size_t size() const { return data_.size(); }

  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const {
    return i + geometry_.dims[0] * (j + geometry_.dims[1] * k);
  }
  T& operator()(std::size_t i, std::size_t j, std::size_t k) { return data_[index(i, j, k)]; }
  const T& operator()(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[index(i, j, k)];
  }
  T& operator[](std::size_t n) { return data_[n]; }
  const T& operator[](std::size_t n) const { return data_[n]; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  bool operator==(const Volume& other) const {
    return same_grid(geometry_, other.geometry_) && data_ == other.data_;
  }

 private:
  Geometry geometry_;
  std::vector<T> data_;
};

using ScalarVolume = Volume<double>;
using LabelVolume = Volume<std::uint8_t>;
using CountVolume = Volume<std::int32_t>;

template <typename To, typename From>
Volume<To> volume_cast(const Volume<From>& src) {
  Volume<To> out(src.geometry());
  for (std::size_t n = 0; n < src.size(); ++n) out[n] = static_cast<To>(src[n]);
  return out;
}

template <typename A, typename B>
void require_same_grid(const Volume<A>& a, const Volume<B>& b, const char* what) {
  if (!same_grid(a.geometry(), b.geometry())) {
    throw Error(std::string(what) + ": geometry mismatch");
  }
}

// ---------------------------------------------------------------------------
// Percentiles

/// Nearest-rank percentile over the strictly positive values: sort ascending
/// and take the value at 1-based rank ceil(p/100 * n). Throws on empty support.
double percentile_positive(std::span<const double> values, double p);

template <typename T>
double percentile_nonzero(const Volume<T>& vol, double p) {
  std::vector<double> v;
  v.reserve(vol.size());
  for (const T& x : vol.data()) {
    if (x > T{}) v.push_back(static_cast<double>(x));
  }
  return percentile_positive(v, p);
}

/// Nearest-rank percentiles of an already sorted, non-empty sequence.
double nearest_rank(std::span<const double> sorted, double p);

// ---------------------------------------------------------------------------
// Affines and resampling

enum class Interpolation { Nearest, Trilinear };

/// Reads a 4x4 ASCII matrix (FSL FLIRT .mat layout: four lines of four floats).
Affine read_matrix_file(const std::string& path);
void write_matrix_file(const Affine& m, const std::string& path);

/// Converts a world(mm)->world(mm) transform into a source-voxel ->
/// destination-voxel map.
Affine voxel_map_from_world(const Affine& world_src_to_dst, const Geometry& src,
                            const Geometry& dst);

/// Converts a FLIRT matrix (scaled-voxel coordinates, x mirrored when the
/// voxel->world determinant is positive) into a voxel map.
Affine voxel_map_from_flirt(const Affine& flirt, const Geometry& src, const Geometry& dst);

/// FSL scaled-voxel coordinates of a grid.
Affine flirt_coordinates(const Geometry& g);

/// Output voxel v takes the source value at inverse(vox_src_to_dst) * v.
/// Samples outside the source grid are 0.
ScalarVolume resample(const ScalarVolume& src, const Affine& vox_src_to_dst,
                      const Geometry& dst, Interpolation mode);
LabelVolume resample(const LabelVolume& src, const Affine& vox_src_to_dst,
                     const Geometry& dst, Interpolation mode = Interpolation::Nearest);

// ---------------------------------------------------------------------------
// NIfTI-1

enum class NiftiDatatype : std::int16_t {
  UInt8 = 2,
  Int16 = 4,
  Int32 = 8,
  Float32 = 16,
  Float64 = 64,
};

struct NiftiImage {
  ScalarVolume volume;
  NiftiDatatype datatype = NiftiDatatype::Float32;
};

/// Reads a .nii or .nii.gz file. Intensities are scaled by scl_slope/scl_inter
/// when the slope is non-zero.
NiftiImage read_nifti(const std::string& path);

/// Reads an integer-valued image; values must be whole numbers in [0, 255].
LabelVolume read_label_nifti(const std::string& path);
CountVolume read_count_nifti(const std::string& path);
ScalarVolume read_scalar_nifti(const std::string& path);

void write_nifti(const ScalarVolume& vol, const std::string& path);  // float32
void write_nifti(const LabelVolume& vol, const std::string& path);   // uint8
void write_nifti(const CountVolume& vol, const std::string& path);   // int32

}  // namespace lesionprior
