#include "lesionprior/volume.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <Eigen/LU>

namespace lesionprior {

Geometry Geometry::with_spacing(Dims dims, Spacing spacing) {
  Geometry g;
  g.dims = dims;
  g.spacing = spacing;
  g.affine = Affine::Identity();
  for (int a = 0; a < 3; ++a) g.affine(a, a) = spacing[a];
  return g;
}

void Geometry::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 1) throw Error("volume dims must be >= 1");
    if (!(spacing[a] > 0.0)) throw Error("voxel spacing must be positive");
  }
  if (std::abs(affine.topLeftCorner<3, 3>().determinant()) < 1e-12) {
    throw Error("voxel-to-world affine is singular");
  }
}

bool same_grid(const Geometry& a, const Geometry& b) {
  if (a.dims != b.dims) return false;
  for (int i = 0; i < 3; ++i) {
    if (std::abs(a.spacing[i] - b.spacing[i]) > 1e-6) return false;
  }
  return (a.affine - b.affine).cwiseAbs().maxCoeff() <= 1e-6;
}

// ---------------------------------------------------------------------------

double nearest_rank(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw Error("empty support");
  if (!(p > 0.0 && p <= 100.0)) throw Error("percentile must lie in (0, 100]");
  const double n = static_cast<double>(sorted.size());
  double r = p * n / 100.0;
  // p is usually a short decimal (0.2, 65, 99.8); absorb its binary rounding.
  const double nearest = std::round(r);
  if (std::abs(r - nearest) < 1e-9 * std::max(1.0, r)) r = nearest;
  auto rank = static_cast<std::size_t>(std::ceil(r));
  rank = std::clamp<std::size_t>(rank, 1, sorted.size());
  return sorted[rank - 1];
}

double percentile_positive(std::span<const double> values, double p) {
  std::vector<double> pos;
  pos.reserve(values.size());
  for (double v : values) {
    if (v > 0.0) pos.push_back(v);
  }
  if (pos.empty()) throw Error("empty support: no non-zero voxels");
  std::sort(pos.begin(), pos.end());
  return nearest_rank(pos, p);
}

// ---------------------------------------------------------------------------

Affine read_matrix_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open matrix file: " + path);
  Affine m;
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) {
      if (!(in >> m(r, c))) throw IoError("matrix file needs 16 numbers: " + path);
    }
  }
  if (std::abs(m(3, 0)) > 1e-9 || std::abs(m(3, 1)) > 1e-9 || std::abs(m(3, 2)) > 1e-9 ||
      std::abs(m(3, 3) - 1.0) > 1e-9) {
    throw IoError("matrix last row must be 0 0 0 1: " + path);
  }
  return m;
}

void write_matrix_file(const Affine& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write matrix file: " + path);
  out << std::setprecision(17);
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) out << m(r, c) << (c == 3 ? '\n' : ' ');
  }
}

namespace {

Affine checked_inverse(const Affine& a, const char* what) {
  if (std::abs(a.determinant()) < 1e-12) throw Error(std::string(what) + ": singular affine");
  return a.inverse();
}

}  // namespace

Affine voxel_map_from_world(const Affine& world_src_to_dst, const Geometry& src,
                            const Geometry& dst) {
  return checked_inverse(dst.affine, "destination geometry") * world_src_to_dst * src.affine;
}

Affine flirt_coordinates(const Geometry& g) {
  Affine f = Affine::Identity();
  for (int a = 0; a < 3; ++a) f(a, a) = g.spacing[a];
  if (g.affine.topLeftCorner<3, 3>().determinant() > 0.0) {
    f(0, 0) = -g.spacing[0];
    f(0, 3) = static_cast<double>(g.dims[0] - 1) * g.spacing[0];
  }
  return f;
}

Affine voxel_map_from_flirt(const Affine& flirt, const Geometry& src, const Geometry& dst) {
  return checked_inverse(flirt_coordinates(dst), "destination geometry") * flirt *
         flirt_coordinates(src);
}

namespace {

constexpr double kSnap = 1e-9;

double snap(double x) {
  const double r = std::round(x);
  return std::abs(x - r) < kSnap ? r : x;
}

template <typename T, typename Sampler>
Volume<T> resample_with(const Volume<T>& /*src*/, const Affine& vox_src_to_dst, const Geometry& dst,
                        Sampler sample) {
  const Affine inv = checked_inverse(vox_src_to_dst, "resample");
  Volume<T> out(dst);
  const auto& d = dst.dims;
  for (std::size_t k = 0; k < d[2]; ++k) {
    for (std::size_t j = 0; j < d[1]; ++j) {
      for (std::size_t i = 0; i < d[0]; ++i) {
        const Eigen::Vector4d v(static_cast<double>(i), static_cast<double>(j),
                                static_cast<double>(k), 1.0);
        const Eigen::Vector4d s = inv * v;
        out(i, j, k) = sample(snap(s[0]), snap(s[1]), snap(s[2]));
      }
    }
  }
  return out;
}

template <typename T>
T sample_nearest(const Volume<T>& src, double x, double y, double z) {
  const auto& d = src.dims();
  const double c[3] = {std::floor(x + 0.5), std::floor(y + 0.5), std::floor(z + 0.5)};
  for (int a = 0; a < 3; ++a) {
    if (c[a] < 0.0 || c[a] > static_cast<double>(d[a] - 1)) return T{};
  }
  return src(static_cast<std::size_t>(c[0]), static_cast<std::size_t>(c[1]),
             static_cast<std::size_t>(c[2]));
}

double sample_trilinear(const ScalarVolume& src, double x, double y, double z) {
  const auto& d = src.dims();
  const double c[3] = {x, y, z};
  std::size_t lo[3];
  double frac[3];
  for (int a = 0; a < 3; ++a) {
    if (c[a] < 0.0 || c[a] > static_cast<double>(d[a] - 1)) return 0.0;
    const double f = std::floor(c[a]);
    lo[a] = static_cast<std::size_t>(f);
    frac[a] = c[a] - f;
  }
  double acc = 0.0;
  for (int dz = 0; dz < 2; ++dz) {
    const double wz = dz ? frac[2] : 1.0 - frac[2];
    if (wz == 0.0) continue;
    for (int dy = 0; dy < 2; ++dy) {
      const double wy = dy ? frac[1] : 1.0 - frac[1];
      if (wy == 0.0) continue;
      for (int dx = 0; dx < 2; ++dx) {
        const double wx = dx ? frac[0] : 1.0 - frac[0];
        if (wx == 0.0) continue;
        acc += wz * wy * wx * src(lo[0] + dx, lo[1] + dy, lo[2] + dz);
      }
    }
  }
  return acc;
}

}  // namespace

ScalarVolume resample(const ScalarVolume& src, const Affine& vox_src_to_dst, const Geometry& dst,
                      Interpolation mode) {
  dst.validate();
  if (mode == Interpolation::Nearest) {
    return resample_with(src, vox_src_to_dst, dst,
                         [&](double x, double y, double z) { return sample_nearest(src, x, y, z); });
  }
  return resample_with(src, vox_src_to_dst, dst,
                       [&](double x, double y, double z) { return sample_trilinear(src, x, y, z); });
}

LabelVolume resample(const LabelVolume& src, const Affine& vox_src_to_dst, const Geometry& dst,
                     Interpolation mode) {
  if (mode != Interpolation::Nearest) {
    throw Error("trilinear interpolation is not defined for label volumes");
  }
  dst.validate();
  return resample_with(src, vox_src_to_dst, dst,
                       [&](double x, double y, double z) { return sample_nearest(src, x, y, z); });
}

}  // namespace lesionprior
