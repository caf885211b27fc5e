#include "lesionprior/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <Eigen/LU>

#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace lesionprior {

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const std::string& text, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << text;
}

json parse_json_file(const std::string& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw IoError("invalid JSON in " + path + ": " + e.what());
  }
}

std::string base_of(const std::string& path) {
  const fs::path p = fs::absolute(path).parent_path();
  return p.string();
}

json geometry_json(const Geometry& g) {
  json affine = json::array();
  for (int r = 0; r < 4; ++r) {
    affine.push_back({g.affine(r, 0), g.affine(r, 1), g.affine(r, 2), g.affine(r, 3)});
  }
  return {{"dims", g.dims}, {"spacing", g.spacing}, {"affine", affine}};
}

Geometry geometry_from_json(const json& j) {
  Geometry g;
  g.dims = j.at("dims").get<Dims>();
  g.spacing = j.value("spacing", Spacing{1.0, 1.0, 1.0});
  if (j.contains("affine")) {
    const auto rows = j.at("affine").get<std::vector<std::vector<double>>>();
    if (rows.size() != 4) throw IoError("atlas affine must have 4 rows");
    for (int r = 0; r < 4; ++r) {
      if (rows[r].size() != 4) throw IoError("atlas affine rows must have 4 entries");
      for (int c = 0; c < 4; ++c) g.affine(r, c) = rows[r][c];
    }
  } else {
    g = Geometry::with_spacing(g.dims, g.spacing);
  }
  g.validate();
  return g;
}

}  // namespace

AffineFormat parse_affine_format(const std::string& s) {
  if (s == "world") return AffineFormat::World;
  if (s == "flirt") return AffineFormat::Flirt;
  throw Error("unknown affine format '" + s + "' (expected world or flirt)");
}

std::string Manifest::resolve(const std::string& relative) const {
  if (relative.empty()) return relative;
  const fs::path p(relative);
  return p.is_absolute() ? p.string() : (fs::path(base_dir) / p).string();
}

Manifest load_manifest(const std::string& path) {
  const json j = parse_json_file(path);
  Manifest m;
  m.base_dir = base_of(path);
  try {
    if (j.contains("atlas")) m.atlas = geometry_from_json(j.at("atlas"));
    for (const auto& c : j.at("cases")) {
      CaseEntry e;
      e.id = c.at("id").get<std::string>();
      const auto& mods = c.at("modalities");
      for (std::size_t k = 0; k < 4; ++k) e.modalities[k] = mods.at(kModalityNames[k]).get<std::string>();
      e.gt = c.value("gt", std::string{});
      e.to_atlas = c.value("to_atlas", std::string{});
      e.from_atlas = c.value("from_atlas", std::string{});
      e.affine_format = parse_affine_format(c.value("affine_format", std::string("world")));
      m.cases.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw IoError("malformed manifest " + path + ": " + e.what());
  }
  for (const auto& e : m.cases) {
    for (const auto& f : e.modalities) {
      if (!fs::exists(m.resolve(f))) throw IoError("manifest references missing file: " + f);
    }
    for (const auto* f : {&e.gt, &e.to_atlas, &e.from_atlas}) {
      if (!f->empty() && !fs::exists(m.resolve(*f))) {
        throw IoError("manifest references missing file: " + *f);
      }
    }
  }
  return m;
}

void save_manifest(const Manifest& m, const std::string& path) {
  json j;
  if (m.atlas) j["atlas"] = geometry_json(*m.atlas);
  j["cases"] = json::array();
  for (const auto& e : m.cases) {
    json c = {{"id", e.id}};
    json mods;
    for (std::size_t k = 0; k < 4; ++k) mods[kModalityNames[k]] = e.modalities[k];
    c["modalities"] = mods;
    if (!e.gt.empty()) c["gt"] = e.gt;
    if (!e.to_atlas.empty()) c["to_atlas"] = e.to_atlas;
    if (!e.from_atlas.empty()) c["from_atlas"] = e.from_atlas;
    c["affine_format"] = e.affine_format == AffineFormat::Flirt ? "flirt" : "world";
    j["cases"].push_back(c);
  }
  write_text(j.dump(2) + "\n", path);
}

namespace {

Affine to_voxels(const Affine& m, AffineFormat format, const Geometry& src, const Geometry& dst) {
  return format == AffineFormat::Flirt ? voxel_map_from_flirt(m, src, dst)
                                       : voxel_map_from_world(m, src, dst);
}

}  // namespace

Affine subject_to_atlas_voxels(const Manifest& m, const CaseEntry& e, const Geometry& subject,
                               const Geometry& atlas) {
  if (!e.to_atlas.empty()) {
    return to_voxels(read_matrix_file(m.resolve(e.to_atlas)), e.affine_format, subject, atlas);
  }
  if (!e.from_atlas.empty()) {
    return to_voxels(read_matrix_file(m.resolve(e.from_atlas)), e.affine_format, atlas, subject)
        .inverse();
  }
  throw Error("case " + e.id + " has no subject/atlas affine");
}

Affine atlas_to_subject_voxels(const Manifest& m, const CaseEntry& e, const Geometry& subject,
                               const Geometry& atlas) {
  if (!e.from_atlas.empty()) {
    return to_voxels(read_matrix_file(m.resolve(e.from_atlas)), e.affine_format, atlas, subject);
  }
  const Affine fwd = subject_to_atlas_voxels(m, e, subject, atlas);
  if (std::abs(fwd.determinant()) < 1e-12) throw Error("case " + e.id + ": singular affine");
  return fwd.inverse();
}

Heatmaps build_heatmaps(const Manifest& m) {
  if (m.cases.empty()) throw Error("manifest lists no cases");
  std::vector<LesionMasks> masks;
  for (const auto& e : m.cases) {
    if (e.gt.empty()) throw Error("case " + e.id + " has no ground truth");
    const LabelVolume gt = read_label_nifti(m.resolve(e.gt));
    const Geometry atlas = m.atlas ? *m.atlas : gt.geometry();
    const Affine vox = subject_to_atlas_voxels(m, e, gt.geometry(), atlas);
    masks.push_back(split_lesion_mask(resample(gt, vox, atlas, Interpolation::Nearest)));
  }
  return accumulate_heatmaps(masks);
}

MultiChannelVolume fuse_case(const Manifest& m, const CaseEntry& e, const LabelVolume* atlas_voi) {
  std::vector<ScalarVolume> mods;
  for (const auto& f : e.modalities) mods.push_back(read_scalar_nifti(m.resolve(f)));
  const std::vector<ScalarVolume> normalized = normalize_modalities(mods);
  std::vector<LabelVolume> voi_channels;
  if (atlas_voi) {
    const Geometry& subject = mods.front().geometry();
    const Affine vox = atlas_to_subject_voxels(m, e, subject, atlas_voi->geometry());
    const LabelVolume voi = resample(*atlas_voi, vox, subject, Interpolation::Nearest);
    const auto ch = split_voi_channels(voi);
    voi_channels.assign(ch.begin(), ch.end());
  }
  return fuse_channels(normalized, voi_channels);
}

FusedManifest load_fused_manifest(const std::string& path) {
  const json j = parse_json_file(path);
  FusedManifest m;
  m.base_dir = base_of(path);
  try {
    m.channel_names = j.at("channels").get<std::vector<std::string>>();
    for (const auto& c : j.at("cases")) {
      FusedEntry e;
      e.id = c.at("id").get<std::string>();
      e.channels = c.at("channels").get<std::vector<std::string>>();
      e.gt = c.value("gt", std::string{});
      if (e.channels.size() != m.channel_names.size()) {
        throw IoError("case " + e.id + " lists the wrong number of channels");
      }
      m.cases.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw IoError("malformed fused manifest " + path + ": " + e.what());
  }
  return m;
}

void save_fused_manifest(const FusedManifest& m, const std::string& path) {
  json j = {{"channels", m.channel_names}, {"cases", json::array()}};
  for (const auto& e : m.cases) {
    json c = {{"id", e.id}, {"channels", e.channels}};
    if (!e.gt.empty()) c["gt"] = e.gt;
    j["cases"].push_back(c);
  }
  write_text(j.dump(2) + "\n", path);
}

FusedEntry write_fused_case(const std::string& id, const MultiChannelVolume& v,
                            const std::string& gt_path, const std::string& out_dir) {
  const fs::path dir = fs::path(out_dir) / id;
  fs::create_directories(dir);
  FusedEntry e;
  e.id = id;
  json channels = json::array();
  for (std::size_t c = 0; c < v.channel_count(); ++c) {
    const std::string name = v.names[c] + ".nii.gz";
    write_nifti(v.channels[c], (dir / name).string());
    e.channels.push_back((fs::path(id) / name).string());
    channels.push_back(v.names[c]);
  }
  write_text(json({{"id", id}, {"channels", channels}}).dump(2) + "\n",
             (dir / "channels.json").string());
  if (!gt_path.empty()) e.gt = fs::absolute(gt_path).string();
  return e;
}

namespace {

std::string resolve_in(const std::string& base, const std::string& p) {
  return fs::path(p).is_absolute() ? p : (fs::path(base) / p).string();
}

}  // namespace

MultiChannelVolume load_fused_input(const FusedManifest& m, const FusedEntry& e) {
  MultiChannelVolume v;
  for (std::size_t c = 0; c < e.channels.size(); ++c) {
    v.channels.push_back(read_scalar_nifti(resolve_in(m.base_dir, e.channels[c])));
    v.names.push_back(m.channel_names[c]);
    require_same_grid(v.channels.front(), v.channels.back(), "fused input");
  }
  return v;
}

TrainingCase load_training_case(const FusedManifest& m, const FusedEntry& e) {
  if (e.gt.empty()) throw Error("case " + e.id + " has no ground truth");
  TrainingCase c{e.id, load_fused_input(m, e), read_label_nifti(resolve_in(m.base_dir, e.gt))};
  require_same_grid(c.input.channels.front(), c.gt, "training case");
  return c;
}

// ---------------------------------------------------------------------------

SliceAxis parse_axis(const std::string& s) {
  if (s == "x" || s == "0") return SliceAxis::X;
  if (s == "y" || s == "1") return SliceAxis::Y;
  if (s == "z" || s == "2") return SliceAxis::Z;
  throw Error("axis must be x, y or z");
}

const std::array<Rgb, 10> kVoiPalette{{
    {0, 0, 0},        // background
    {255, 0, 0},      // red
    {0, 255, 0},      // green
    {0, 0, 255},      // blue
    {255, 255, 0},    // yellow
    {255, 165, 0},    // orange
    {255, 192, 203},  // pink
    {128, 0, 128},    // purple
    {128, 128, 128},  // grey
    {139, 69, 19},    // brown
}};

namespace {

struct SliceIndexer {
  std::size_t width, height;
  std::array<std::size_t, 3> at(std::size_t u, std::size_t v, SliceAxis axis, std::size_t index) const {
    switch (axis) {
      case SliceAxis::X: return {index, u, v};
      case SliceAxis::Y: return {u, index, v};
      case SliceAxis::Z: return {u, v, index};
    }
    return {0, 0, 0};
  }
};

SliceIndexer slice_shape(const Dims& d, SliceAxis axis, std::size_t index) {
  const auto a = static_cast<std::size_t>(axis);
  if (index >= d[a]) {
    throw Error("slice index " + std::to_string(index) + " out of range for axis of extent " +
                std::to_string(d[a]));
  }
  switch (axis) {
    case SliceAxis::X: return {d[1], d[2]};
    case SliceAxis::Y: return {d[0], d[2]};
    case SliceAxis::Z: return {d[0], d[1]};
  }
  return {0, 0};
}

}  // namespace

Image render_gray(const ScalarVolume& v, SliceAxis axis, std::size_t index) {
  const SliceIndexer s = slice_shape(v.dims(), axis, index);
  const auto [lo, hi] = std::minmax_element(v.data().begin(), v.data().end());
  Image img{s.width, s.height, 1, std::vector<std::uint8_t>(s.width * s.height)};
  const double range = *hi - *lo;
  for (std::size_t r = 0; r < s.height; ++r) {
    for (std::size_t c = 0; c < s.width; ++c) {
      const auto p = s.at(c, r, axis, index);
      const double x = v(p[0], p[1], p[2]);
      img.pixels[r * s.width + c] =
          range > 0.0 ? static_cast<std::uint8_t>(std::lround(255.0 * (x - *lo) / range)) : 128;
    }
  }
  return img;
}

Image render_voi(const LabelVolume& v, SliceAxis axis, std::size_t index) {
  const SliceIndexer s = slice_shape(v.dims(), axis, index);
  Image img{s.width, s.height, 3, std::vector<std::uint8_t>(3 * s.width * s.height)};
  for (std::size_t r = 0; r < s.height; ++r) {
    for (std::size_t c = 0; c < s.width; ++c) {
      const auto p = s.at(c, r, axis, index);
      const std::uint8_t l = v(p[0], p[1], p[2]);
      if (l > 9) throw Error("VOI label outside 0..9");
      const Rgb& col = kVoiPalette[l];
      std::uint8_t* px = img.pixels.data() + 3 * (r * s.width + c);
      px[0] = col.r;
      px[1] = col.g;
      px[2] = col.b;
    }
  }
  return img;
}

void write_netpbm(const Image& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write image: " + path);
  out << (img.channels == 3 ? "P6" : "P5") << '\n' << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()),
            static_cast<std::streamsize>(img.pixels.size()));
  if (!out) throw IoError("image write failed: " + path);
}

}  // namespace lesionprior
