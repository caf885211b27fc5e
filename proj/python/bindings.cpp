// Python bindings. Volumes cross the boundary as numpy arrays indexed [x, y, z]
// (Fortran order, matching the x-fastest storage); network tensors as C-order
// [n, c, z, y, x].

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "lesionprior/fixture.hpp"
#include "lesionprior/metrics.hpp"
#include "lesionprior/pipeline.hpp"
#include "lesionprior/preprocess.hpp"
#include "lesionprior/prior.hpp"
#include "lesionprior/train.hpp"
#include "lesionprior/unet.hpp"

namespace py = pybind11;
using namespace lesionprior;

namespace {

template <typename T>
using FArray = py::array_t<T, py::array::f_style | py::array::forcecast>;

template <typename T>
Volume<T> to_volume(const FArray<T>& a, const Spacing& spacing) {
  if (a.ndim() != 3) throw py::value_error("expected a 3-D array");
  const Dims d{static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
               static_cast<std::size_t>(a.shape(2))};
  return Volume<T>(Geometry::with_spacing(d, spacing),
                   std::vector<T>(a.data(), a.data() + a.size()));
}

template <typename T>
FArray<T> to_array(const Volume<T>& v) {
  const auto& d = v.dims();
  FArray<T> out({d[0], d[1], d[2]});
  std::copy(v.data().begin(), v.data().end(), out.mutable_data());
  return out;
}

py::dict scores_dict(const CaseReport& r) {
  py::dict out;
  for (Region region : {Region::ET, Region::WT, Region::TC}) {
    const auto& s = r.regions[static_cast<int>(region)];
    py::dict d;
    d["dice"] = s.dice;
    d["h95"] = s.h95;
    d["hausdorff"] = s.hausdorff;
    out[region_name(region)] = d;
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_lesionprior, m) {
  m.doc() = "Lesion-prior segmentation toolkit";

  py::register_exception<Error>(m, "LesionPriorError", PyExc_ValueError);
  py::enum_<LrMode>(m, "LrMode")
      .value("normalized", LrMode::Normalized)
      .value("literal", LrMode::Literal);

  // volumes and IO
  m.def(
      "read_nifti",
      [](const std::string& path) {
        const ScalarVolume v = read_scalar_nifti(path);
        py::array_t<double> affine({4, 4});
        auto a = affine.mutable_unchecked<2>();
        for (int r = 0; r < 4; ++r) {
          for (int c = 0; c < 4; ++c) a(r, c) = v.geometry().affine(r, c);
        }
        return py::make_tuple(to_array(v), v.geometry().spacing, affine);
      },
      py::arg("path"), "Returns (data[x, y, z], spacing, voxel-to-world affine).");
  m.def(
      "write_labels",
      [](const FArray<std::uint8_t>& a, const std::string& path, Spacing spacing) {
        write_nifti(to_volume(a, spacing), path);
      },
      py::arg("labels"), py::arg("path"), py::arg("spacing") = Spacing{1, 1, 1});
  m.def(
      "write_scalars",
      [](const FArray<double>& a, const std::string& path, Spacing spacing) {
        write_nifti(to_volume(a, spacing), path);
      },
      py::arg("volume"), py::arg("path"), py::arg("spacing") = Spacing{1, 1, 1});

  // prior
  m.def(
      "build_voi",
      [](const FArray<std::int32_t>& ed, const FArray<std::int32_t>& ncr,
         const FArray<std::int32_t>& et, std::array<double, 3> percentiles, bool skip_empty) {
        const Spacing s{1, 1, 1};
        const Heatmaps h{to_volume(ed, s), to_volume(ncr, s), to_volume(et, s), 0};
        VoiOptions o;
        o.percentiles = {percentiles[0], percentiles[1], percentiles[2]};
        o.skip_empty = skip_empty;
        return to_array(build_voi(h, o));
      },
      py::arg("ed"), py::arg("ncr"), py::arg("et"),
      py::arg("percentiles") = std::array<double, 3>{50, 65, 80}, py::arg("skip_empty") = false,
      "Ten-label VOI map from three lesion heatmaps.");
  m.def(
      "thresholds",
      [](const FArray<std::int32_t>& heatmap, std::array<double, 3> percentiles) {
        const ThresholdTriple t = compute_thresholds(
            to_volume(heatmap, {1, 1, 1}), {percentiles[0], percentiles[1], percentiles[2]});
        return std::array<double, 3>{t.h1, t.h2, t.h3};
      },
      py::arg("heatmap"), py::arg("percentiles") = std::array<double, 3>{50, 65, 80});
  m.def(
      "split_voi_channels",
      [](const FArray<std::uint8_t>& voi) {
        std::vector<FArray<std::uint8_t>> out;
        for (const auto& c : split_voi_channels(to_volume(voi, {1, 1, 1}))) out.push_back(to_array(c));
        return out;
      },
      py::arg("voi"));

  // preprocessing
  m.def(
      "clip_outliers",
      [](const FArray<double>& v, double low, double high) {
        return to_array(clip_outliers(to_volume(v, {1, 1, 1}), low, high));
      },
      py::arg("volume"), py::arg("low") = 0.2, py::arg("high") = 99.8);
  m.def(
      "normalize",
      [](const FArray<double>& v) {
        const ScalarVolume vol = to_volume(v, {1, 1, 1});
        return to_array(normalize_modalities({vol}).front());
      },
      py::arg("volume"), "Clip, then z-score over the non-zero voxels.");

  // metrics
  m.def(
      "dice",
      [](const FArray<std::uint8_t>& g, const FArray<std::uint8_t>& p) {
        return dice(to_volume(g, {1, 1, 1}), to_volume(p, {1, 1, 1}));
      },
      py::arg("gt"), py::arg("pred"));
  m.def(
      "hausdorff",
      [](const FArray<std::uint8_t>& x, const FArray<std::uint8_t>& y, Spacing s) {
        return hausdorff(to_volume(x, s), to_volume(y, s), s);
      },
      py::arg("x"), py::arg("y"), py::arg("spacing") = Spacing{1, 1, 1});
  m.def(
      "hausdorff95",
      [](const FArray<std::uint8_t>& x, const FArray<std::uint8_t>& y, Spacing s) {
        return hausdorff95(to_volume(x, s), to_volume(y, s), s);
      },
      py::arg("x"), py::arg("y"), py::arg("spacing") = Spacing{1, 1, 1});
  m.def(
      "evaluate_case",
      [](const FArray<std::uint8_t>& gt, const FArray<std::uint8_t>& pred, Spacing s) {
        return scores_dict(evaluate_case(to_volume(gt, s), to_volume(pred, s)));
      },
      py::arg("gt"), py::arg("pred"), py::arg("spacing") = Spacing{1, 1, 1},
      "Per-region dice / h95 / hausdorff for BraTS-coded label maps.");

  // training pieces
  m.def(
      "hard_negative_ce",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& logits,
         const py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>& targets,
         double ratio) {
        if (logits.ndim() != 5) throw py::value_error("logits must be [n, c, z, y, x]");
        Tensor5 t(logits.shape(0), logits.shape(1), logits.shape(2), logits.shape(3), logits.shape(4));
        std::copy(logits.data(), logits.data() + logits.size(), t.data.begin());
        const MinedLoss r = hard_negative_ce(
            t, std::span<const std::uint8_t>(targets.data(), static_cast<std::size_t>(targets.size())), ratio);
        py::array_t<double> grad(std::vector<py::ssize_t>(t.shape.begin(), t.shape.end()));
        std::copy(r.dlogits.data.begin(), r.dlogits.data.end(), grad.mutable_data());
        return py::make_tuple(r.loss, py::array(py::cast(r.selected)), grad);
      },
      py::arg("logits"), py::arg("targets"), py::arg("neg_pos_ratio") = 3.0,
      "Returns (loss, selected mask, dloss/dlogits).");
  m.def("lr_schedule", &lr_schedule, py::arg("epoch"), py::arg("l0") = 1e-3,
        py::arg("total") = 300.0, py::arg("mode") = LrMode::Normalized);

  // pipeline
  m.def(
      "make_fixture",
      [](const std::string& out_dir, std::size_t cases, std::size_t size, std::uint64_t seed,
         bool mimics) {
        FixtureOptions o;
        o.cases = cases;
        o.size = size;
        o.seed = seed;
        o.mimics = mimics;
        return write_fixture(make_fixture(o), fixture_atlas_geometry(o), out_dir);
      },
      py::arg("out_dir"), py::arg("cases") = 6, py::arg("size") = 32, py::arg("seed") = 1,
      py::arg("mimics") = false, "Writes a synthetic cohort; returns the manifest path.");
  m.def(
      "build_heatmaps",
      [](const std::string& manifest) {
        const Heatmaps h = build_heatmaps(load_manifest(manifest));
        py::dict out;
        out["ed"] = to_array(h.ed);
        out["ncr"] = to_array(h.ncr);
        out["et"] = to_array(h.et);
        out["subjects"] = h.subjects;
        return out;
      },
      py::arg("manifest"));
  m.def(
      "fuse",
      [](const std::string& manifest, std::optional<FArray<std::uint8_t>> voi,
         const std::string& out_dir) {
        const Manifest mf = load_manifest(manifest);
        std::optional<LabelVolume> atlas_voi;
        if (voi) {
          if (!mf.atlas) throw Error("fuse: manifest has no atlas geometry for the VOI map");
          atlas_voi = to_volume(*voi, mf.atlas->spacing);
          atlas_voi = LabelVolume(*mf.atlas, atlas_voi->values());
        }
        FusedManifest fused;
        for (const auto& e : mf.cases) {
          const MultiChannelVolume v = fuse_case(mf, e, atlas_voi ? &*atlas_voi : nullptr);
          fused.channel_names = v.names;
          fused.cases.push_back(write_fused_case(e.id, v, e.gt.empty() ? "" : mf.resolve(e.gt), out_dir));
        }
        const std::string path = out_dir + "/fused_manifest.json";
        save_fused_manifest(fused, path);
        return path;
      },
      py::arg("manifest"), py::arg("voi"), py::arg("out_dir"),
      "Writes 13-channel inputs (4 with voi=None); returns the fused manifest path.");
  m.def(
      "train",
      [](const std::string& fused_manifest, const std::string& checkpoint, std::size_t epochs,
         std::size_t patch, std::uint64_t seed, double l0, LrMode mode) {
        const FusedManifest fm = load_fused_manifest(fused_manifest);
        std::vector<TrainingCase> data;
        for (const auto& e : fm.cases) data.push_back(load_training_case(fm, e));
        TrainConfig c;
        c.epochs = epochs;
        c.patch_size = {patch, patch, patch};
        c.seed = seed;
        c.l0 = l0;
        c.lr_mode = mode;
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train_loop(data, c);
        }
        save_checkpoint(r.params, checkpoint);
        std::vector<double> losses;
        for (const auto& e : r.log) losses.push_back(e.loss);
        return losses;
      },
      py::arg("fused_manifest"), py::arg("checkpoint"), py::arg("epochs") = 300,
      py::arg("patch_size") = 128, py::arg("seed") = 0, py::arg("l0") = 1e-3,
      py::arg("lr_mode") = LrMode::Normalized, "Trains on a fused manifest; returns per-epoch losses.");
  m.def(
      "predict",
      [](const std::string& fused_manifest, const std::vector<std::string>& checkpoints) {
        const FusedManifest fm = load_fused_manifest(fused_manifest);
        std::vector<NetParams> members;
        for (const auto& c : checkpoints) members.push_back(load_checkpoint(c));
        py::dict out;
        for (const auto& e : fm.cases) {
          const MultiChannelVolume in = load_fused_input(fm, e);
          out[e.id.c_str()] = to_array(ensemble_predict(members, in));
        }
        return out;
      },
      py::arg("fused_manifest"), py::arg("checkpoints"),
      "BraTS-coded label maps per case id.");
}
