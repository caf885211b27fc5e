// NIfTI-1 single-file (.nii / .nii.gz) reader and writer.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <memory>

#include <zlib.h>

#include "lesionprior/volume.hpp"

namespace lesionprior {

namespace {

struct Nifti1Header {
  std::int32_t sizeof_hdr;
  char data_type[10];
  char db_name[18];
  std::int32_t extents;
  std::int16_t session_error;
  char regular;
  char dim_info;
  std::int16_t dim[8];
  float intent_p1;
  float intent_p2;
  float intent_p3;
  std::int16_t intent_code;
  std::int16_t datatype;
  std::int16_t bitpix;
  std::int16_t slice_start;
  float pixdim[8];
  float vox_offset;
  float scl_slope;
  float scl_inter;
  std::int16_t slice_end;
  char slice_code;
  char xyzt_units;
  float cal_max;
  float cal_min;
  float slice_duration;
  float toffset;
  std::int32_t glmax;
  std::int32_t glmin;
  char descrip[80];
  char aux_file[24];
  std::int16_t qform_code;
  std::int16_t sform_code;
  float quatern_b;
  float quatern_c;
  float quatern_d;
  float qoffset_x;
  float qoffset_y;
  float qoffset_z;
  float srow_x[4];
  float srow_y[4];
  float srow_z[4];
  char intent_name[16];
  char magic[4];
};
static_assert(sizeof(Nifti1Header) == 348, "NIfTI-1 header must be 348 bytes");

template <typename T>
void swap_bytes(T& v) {
  auto* p = reinterpret_cast<unsigned char*>(&v);
  std::reverse(p, p + sizeof(T));
}

void swap_header(Nifti1Header& h) {
  swap_bytes(h.sizeof_hdr);
  swap_bytes(h.extents);
  swap_bytes(h.session_error);
  for (auto& d : h.dim) swap_bytes(d);
  swap_bytes(h.intent_p1);
  swap_bytes(h.intent_p2);
  swap_bytes(h.intent_p3);
  swap_bytes(h.intent_code);
  swap_bytes(h.datatype);
  swap_bytes(h.bitpix);
  swap_bytes(h.slice_start);
  for (auto& p : h.pixdim) swap_bytes(p);
  swap_bytes(h.vox_offset);
  swap_bytes(h.scl_slope);
  swap_bytes(h.scl_inter);
  swap_bytes(h.slice_end);
  swap_bytes(h.cal_max);
  swap_bytes(h.cal_min);
  swap_bytes(h.slice_duration);
  swap_bytes(h.toffset);
  swap_bytes(h.glmax);
  swap_bytes(h.glmin);
  swap_bytes(h.qform_code);
  swap_bytes(h.sform_code);
  swap_bytes(h.quatern_b);
  swap_bytes(h.quatern_c);
  swap_bytes(h.quatern_d);
  swap_bytes(h.qoffset_x);
  swap_bytes(h.qoffset_y);
  swap_bytes(h.qoffset_z);
  for (int i = 0; i < 4; ++i) {
    swap_bytes(h.srow_x[i]);
    swap_bytes(h.srow_y[i]);
    swap_bytes(h.srow_z[i]);
  }
}

struct GzCloser {
  void operator()(gzFile_s* f) const { gzclose(f); }
};
using GzHandle = std::unique_ptr<gzFile_s, GzCloser>;

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// zlib reads plain files transparently, so one path serves .nii and .nii.gz.
void read_exact(gzFile f, void* dst, std::size_t n, const std::string& path) {
  auto* out = static_cast<unsigned char*>(dst);
  while (n > 0) {
    const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n, 1u << 30));
    const int got = gzread(f, out, chunk);
    if (got <= 0) throw IoError("truncated NIfTI file: " + path);
    out += got;
    n -= static_cast<std::size_t>(got);
  }
}

Affine quaternion_affine(const Nifti1Header& h) {
  double b = h.quatern_b, c = h.quatern_c, d = h.quatern_d;
  double a = 1.0 - (b * b + c * c + d * d);
  if (a < 1e-7) {
    a = 1.0 / std::sqrt(b * b + c * c + d * d);
    b *= a;
    c *= a;
    d *= a;
    a = 0.0;
  } else {
    a = std::sqrt(a);
  }
  const double xd = h.pixdim[1] > 0 ? h.pixdim[1] : 1.0;
  const double yd = h.pixdim[2] > 0 ? h.pixdim[2] : 1.0;
  double zd = h.pixdim[3] > 0 ? h.pixdim[3] : 1.0;
  if (h.pixdim[0] < 0) zd = -zd;

  Affine m = Affine::Identity();
  m(0, 0) = (a * a + b * b - c * c - d * d) * xd;
  m(0, 1) = 2.0 * (b * c - a * d) * yd;
  m(0, 2) = 2.0 * (b * d + a * c) * zd;
  m(1, 0) = 2.0 * (b * c + a * d) * xd;
  m(1, 1) = (a * a + c * c - b * b - d * d) * yd;
  m(1, 2) = 2.0 * (c * d - a * b) * zd;
  m(2, 0) = 2.0 * (b * d - a * c) * xd;
  m(2, 1) = 2.0 * (c * d + a * b) * yd;
  m(2, 2) = (a * a + d * d - c * c - b * b) * zd;
  m(0, 3) = h.qoffset_x;
  m(1, 3) = h.qoffset_y;
  m(2, 3) = h.qoffset_z;
  return m;
}

template <typename T>
void decode(const std::vector<unsigned char>& raw, bool swap, std::vector<double>& out) {
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) {
    T v;
    std::memcpy(&v, raw.data() + i * sizeof(T), sizeof(T));
    if (swap) swap_bytes(v);
    out[i] = static_cast<double>(v);
  }
}

std::size_t datatype_size(std::int16_t dt) {
  switch (static_cast<NiftiDatatype>(dt)) {
    case NiftiDatatype::UInt8: return 1;
    case NiftiDatatype::Int16: return 2;
    case NiftiDatatype::Int32: return 4;
    case NiftiDatatype::Float32: return 4;
    case NiftiDatatype::Float64: return 8;
  }
  return 0;
}

Nifti1Header make_header(const Geometry& g, NiftiDatatype dt) {
  Nifti1Header h{};
  h.sizeof_hdr = 348;
  h.regular = 'r';
  h.dim[0] = 3;
  for (int a = 0; a < 3; ++a) {
    if (g.dims[a] > 32767) throw IoError("dimension too large for NIfTI-1");
    h.dim[a + 1] = static_cast<std::int16_t>(g.dims[a]);
  }
  for (int a = 4; a < 8; ++a) h.dim[a] = 1;
  h.datatype = static_cast<std::int16_t>(dt);
  h.bitpix = static_cast<std::int16_t>(8 * datatype_size(h.datatype));
  h.pixdim[0] = 1.0f;
  for (int a = 0; a < 3; ++a) h.pixdim[a + 1] = static_cast<float>(g.spacing[a]);
  for (int a = 4; a < 8; ++a) h.pixdim[a] = 1.0f;
  h.vox_offset = 352.0f;
  h.scl_slope = 1.0f;
  h.scl_inter = 0.0f;
  h.xyzt_units = 2;  // mm
  h.qform_code = 0;
  h.sform_code = 2;
  for (int c = 0; c < 4; ++c) {
    h.srow_x[c] = static_cast<float>(g.affine(0, c));
    h.srow_y[c] = static_cast<float>(g.affine(1, c));
    h.srow_z[c] = static_cast<float>(g.affine(2, c));
  }
  std::memcpy(h.magic, "n+1\0", 4);
  return h;
}

template <typename T>
void write_raw(const Geometry& g, NiftiDatatype dt, std::span<const T> data,
               const std::string& path) {
  static_assert(std::endian::native == std::endian::little, "writer assumes little-endian host");
  const Nifti1Header h = make_header(g, dt);
  const char extension[4] = {0, 0, 0, 0};
  const std::size_t bytes = data.size() * sizeof(T);

  if (ends_with(path, ".gz")) {
    GzHandle f(gzopen(path.c_str(), "wb6"));
    if (!f) throw IoError("cannot write NIfTI file: " + path);
    auto put = [&](const void* p, std::size_t n) {
      const auto* c = static_cast<const unsigned char*>(p);
      while (n > 0) {
        const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n, 1u << 30));
        if (gzwrite(f.get(), c, chunk) != static_cast<int>(chunk)) {
          throw IoError("write failed: " + path);
        }
        c += chunk;
        n -= chunk;
      }
    };
    put(&h, sizeof h);
    put(extension, 4);
    put(data.data(), bytes);
    return;
  }
  std::unique_ptr<FILE, int (*)(FILE*)> f(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!f) throw IoError("cannot write NIfTI file: " + path);
  if (std::fwrite(&h, sizeof h, 1, f.get()) != 1 || std::fwrite(extension, 4, 1, f.get()) != 1 ||
      (bytes > 0 && std::fwrite(data.data(), bytes, 1, f.get()) != 1)) {
    throw IoError("write failed: " + path);
  }
}

}  // namespace

NiftiImage read_nifti(const std::string& path) {
  GzHandle f(gzopen(path.c_str(), "rb"));
  if (!f) throw IoError("cannot open NIfTI file: " + path);

  Nifti1Header h{};
  read_exact(f.get(), &h, sizeof h, path);
  bool swap = false;
  if (h.sizeof_hdr != 348) {
    swap_bytes(h.sizeof_hdr);
    if (h.sizeof_hdr != 348) throw IoError("not a NIfTI-1 file (bad header size): " + path);
    h.sizeof_hdr = 0;
    swap_header(h);
    h.sizeof_hdr = 348;
    swap = true;
  }
  if (std::memcmp(h.magic, "n+1\0", 4) != 0) {
    throw IoError("not a single-file NIfTI-1 image (bad magic): " + path);
  }
  if (h.dim[0] < 3 || h.dim[0] > 7) throw IoError("invalid dim[0] in " + path);
  for (int a = 4; a <= h.dim[0]; ++a) {
    if (h.dim[a] > 1) throw IoError("only 3D volumes are supported: " + path);
  }
  const std::size_t elem = datatype_size(h.datatype);
  if (elem == 0) {
    throw IoError("unsupported NIfTI datatype " + std::to_string(h.datatype) + ": " + path);
  }

  Geometry g;
  for (int a = 0; a < 3; ++a) {
    if (h.dim[a + 1] < 1) throw IoError("non-positive dimension in " + path);
    g.dims[a] = static_cast<std::size_t>(h.dim[a + 1]);
    g.spacing[a] = h.pixdim[a + 1] > 0 ? h.pixdim[a + 1] : 1.0;
  }
  if (h.sform_code > 0) {
    g.affine = Affine::Identity();
    for (int c = 0; c < 4; ++c) {
      g.affine(0, c) = h.srow_x[c];
      g.affine(1, c) = h.srow_y[c];
      g.affine(2, c) = h.srow_z[c];
    }
  } else if (h.qform_code > 0) {
    g.affine = quaternion_affine(h);
  } else {
    g = Geometry::with_spacing(g.dims, g.spacing);
  }

  const auto offset = static_cast<long>(h.vox_offset);
  if (offset < 348) throw IoError("invalid vox_offset in " + path);
  if (offset > 348) {
    std::vector<unsigned char> skip(static_cast<std::size_t>(offset - 348));
    read_exact(f.get(), skip.data(), skip.size(), path);
  }

  std::vector<unsigned char> raw(g.voxel_count() * elem);
  read_exact(f.get(), raw.data(), raw.size(), path);
  std::vector<double> values(g.voxel_count());
  switch (static_cast<NiftiDatatype>(h.datatype)) {
    case NiftiDatatype::UInt8: decode<std::uint8_t>(raw, swap, values); break;
    case NiftiDatatype::Int16: decode<std::int16_t>(raw, swap, values); break;
    case NiftiDatatype::Int32: decode<std::int32_t>(raw, swap, values); break;
    case NiftiDatatype::Float32: decode<float>(raw, swap, values); break;
    case NiftiDatatype::Float64: decode<double>(raw, swap, values); break;
  }
  if (h.scl_slope != 0.0f && std::isfinite(h.scl_slope) &&
      (h.scl_slope != 1.0f || h.scl_inter != 0.0f)) {
    for (double& v : values) v = v * h.scl_slope + h.scl_inter;
  }

  NiftiImage img;
  img.volume = ScalarVolume(g, std::move(values));
  img.datatype = static_cast<NiftiDatatype>(h.datatype);
  return img;
}

ScalarVolume read_scalar_nifti(const std::string& path) { return read_nifti(path).volume; }

LabelVolume read_label_nifti(const std::string& path) {
  const ScalarVolume v = read_nifti(path).volume;
  LabelVolume out(v.geometry());
  for (std::size_t n = 0; n < v.size(); ++n) {
    const double x = v[n];
    if (x < 0.0 || x > 255.0 || x != std::floor(x)) {
      throw IoError("label image holds a non-label value: " + path);
    }
    out[n] = static_cast<std::uint8_t>(x);
  }
  return out;
}

CountVolume read_count_nifti(const std::string& path) {
  const ScalarVolume v = read_nifti(path).volume;
  CountVolume out(v.geometry());
  for (std::size_t n = 0; n < v.size(); ++n) {
    const double x = v[n];
    if (x < 0.0 || x > 2147483647.0 || x != std::floor(x)) {
      throw IoError("count image holds a non-count value: " + path);
    }
    out[n] = static_cast<std::int32_t>(x);
  }
  return out;
}

void write_nifti(const ScalarVolume& vol, const std::string& path) {
  std::vector<float> f(vol.size());
  for (std::size_t n = 0; n < vol.size(); ++n) f[n] = static_cast<float>(vol[n]);
  write_raw<float>(vol.geometry(), NiftiDatatype::Float32, f, path);
}

void write_nifti(const LabelVolume& vol, const std::string& path) {
  write_raw<std::uint8_t>(vol.geometry(), NiftiDatatype::UInt8, vol.data(), path);
}

void write_nifti(const CountVolume& vol, const std::string& path) {
  write_raw<std::int32_t>(vol.geometry(), NiftiDatatype::Int32, vol.data(), path);
}

}  // namespace lesionprior
