// lesionprior command-line interface.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lesionprior/fixture.hpp"
#include "lesionprior/metrics.hpp"
#include "lesionprior/pipeline.hpp"
#include "lesionprior/prior.hpp"
#include "lesionprior/train.hpp"

namespace fs = std::filesystem;
using namespace lesionprior;

namespace {

void write_file(const std::string& text, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << text;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string heatmap_path(const std::string& dir, Lesion t) {
  return (fs::path(dir) / (std::string("heatmap_") + lesion_name(t) + ".nii.gz")).string();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lesion-prior fusion toolkit for volumetric brain lesion segmentation"};
  app.require_subcommand(1);

  // make-fixture
  FixtureOptions fx;
  std::string fixture_out;
  auto* make_fixture_cmd = app.add_subcommand("make-fixture", "Write a synthetic multimodal cohort");
  make_fixture_cmd->add_option("--out", fixture_out, "Output directory")->required();
  make_fixture_cmd->add_option("--cases", fx.cases, "Number of subjects");
  make_fixture_cmd->add_option("--size", fx.size, "Cubic grid size");
  make_fixture_cmd->add_option("--seed", fx.seed, "Random seed");
  make_fixture_cmd->add_flag("--mimics", fx.mimics, "Add unlabelled lesion look-alikes");

  // build-heatmaps
  std::string manifest_path, out_path;
  auto* heatmaps_cmd = app.add_subcommand("build-heatmaps", "Sum per-lesion masks in atlas space");
  heatmaps_cmd->add_option("--manifest", manifest_path, "Dataset manifest")->required();
  heatmaps_cmd->add_option("--out", out_path, "Output directory")->required();

  // build-voi
  std::string heatmap_dir, distribution_path;
  std::vector<double> percentiles{50.0, 65.0, 80.0};
  bool skip_empty = false;
  auto* voi_cmd = app.add_subcommand("build-voi", "Build the 10-label VOI map from heatmaps");
  voi_cmd->add_option("--heatmaps", heatmap_dir, "Directory written by build-heatmaps")->required();
  voi_cmd->add_option("--percentiles", percentiles, "alpha beta gamma")->expected(3);
  voi_cmd->add_flag("--skip-empty", skip_empty, "Let an empty lesion heatmap never fire");
  voi_cmd->add_option("--distribution", distribution_path, "Also write the label distribution CSV");
  voi_cmd->add_option("--out", out_path, "Output VOI NIfTI")->required();

  // fuse
  std::string voi_path;
  bool no_voi = false;
  auto* fuse_cmd = app.add_subcommand("fuse", "Normalize modalities and append VOI channels");
  fuse_cmd->add_option("--manifest", manifest_path, "Dataset manifest")->required();
  fuse_cmd->add_option("--voi", voi_path, "Atlas-space VOI map");
  fuse_cmd->add_flag("--no-voi", no_voi, "Emit the 4-channel baseline input");
  fuse_cmd->add_option("--out", out_path, "Output directory")->required();

  // train
  TrainConfig tc;
  tc.patch_size = {32, 32, 32};
  std::string config_path, log_path, lr_mode = "normalized";
  std::size_t patch = 0, epochs = 0;
  std::uint64_t seed = 0;
  auto* train_cmd = app.add_subcommand("train", "Train a 3D U-Net on a fused manifest");
  train_cmd->add_option("--manifest", manifest_path, "Fused manifest")->required();
  train_cmd->add_option("--config", config_path, "Training config JSON");
  train_cmd->add_option("--epochs", epochs, "Epochs");
  train_cmd->add_option("--patch-size", patch, "Cubic patch edge");
  train_cmd->add_option("--seed", seed, "Random seed");
  train_cmd->add_option("--lr-mode", lr_mode, "normalized or literal")
      ->check(CLI::IsMember({"normalized", "literal"}));
  train_cmd->add_option("--log", log_path, "Per-epoch CSV log");
  train_cmd->add_option("--out", out_path, "Checkpoint path")->required();

  // predict
  std::vector<std::string> checkpoints;
  auto* predict_cmd = app.add_subcommand("predict", "Segment every case of a fused manifest");
  predict_cmd->add_option("--manifest", manifest_path, "Fused manifest")->required();
  predict_cmd->add_option("--checkpoint", checkpoints, "Checkpoint (repeat for an ensemble)")
      ->required();
  predict_cmd->add_option("--out", out_path, "Output directory")->required();

  // evaluate
  std::string predictions_dir;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "DSC / H95 report for ET, WT and TC");
  evaluate_cmd->add_option("--manifest", manifest_path, "Fused manifest with ground truth")->required();
  evaluate_cmd->add_option("--predictions", predictions_dir, "Directory written by predict")->required();
  evaluate_cmd->add_option("--out", out_path, "Report CSV")->required();

  // render-slice
  std::string volume_path, axis = "z";
  std::size_t index = 0;
  auto* render_cmd = app.add_subcommand("render-slice", "Render one slice as PGM (scalar) or PPM (VOI)");
  render_cmd->add_option("--volume", volume_path, "Input NIfTI")->required();
  render_cmd->add_option("--axis", axis, "x, y or z");
  render_cmd->add_option("--index", index, "Slice index")->required();
  render_cmd->add_option("--out", out_path, "Output .pgm or .ppm")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*make_fixture_cmd) {
      const auto cases = make_fixture(fx);
      std::cout << write_fixture(cases, fixture_atlas_geometry(fx), fixture_out) << '\n';
    } else if (*heatmaps_cmd) {
      const Manifest m = load_manifest(manifest_path);
      const Heatmaps h = build_heatmaps(m);
      fs::create_directories(out_path);
      for (Lesion t : kLesions) write_nifti(h[t], heatmap_path(out_path, t));
      std::cout << "heatmaps from " << h.subjects << " subjects written to " << out_path << '\n';
    } else if (*voi_cmd) {
      Heatmaps h{read_count_nifti(heatmap_path(heatmap_dir, Lesion::Ed)),
                 read_count_nifti(heatmap_path(heatmap_dir, Lesion::Ncr)),
                 read_count_nifti(heatmap_path(heatmap_dir, Lesion::Et)), 0};
      VoiOptions opt;
      opt.percentiles = {percentiles[0], percentiles[1], percentiles[2]};
      opt.skip_empty = skip_empty;
      const LabelVolume voi = build_voi(h, opt);
      write_nifti(voi, out_path);
      if (!distribution_path.empty()) {
        int subjects = 1;
        for (Lesion t : kLesions) {
          for (std::int32_t c : h[t].data()) subjects = std::max(subjects, static_cast<int>(c));
        }
        write_file(distribution_csv(label_distribution(voi, h, subjects)), distribution_path);
      }
    } else if (*fuse_cmd) {
      if (!no_voi && voi_path.empty()) throw Error("fuse needs --voi or --no-voi");
      const Manifest m = load_manifest(manifest_path);
      std::optional<LabelVolume> voi;
      if (!no_voi) voi = read_label_nifti(voi_path);
      FusedManifest fused;
      for (const auto& e : m.cases) {
        const MultiChannelVolume v = fuse_case(m, e, voi ? &*voi : nullptr);
        fused.channel_names = v.names;
        fused.cases.push_back(write_fused_case(e.id, v, e.gt.empty() ? "" : m.resolve(e.gt), out_path));
      }
      const std::string out_manifest = (fs::path(out_path) / "fused_manifest.json").string();
      save_fused_manifest(fused, out_manifest);
      std::cout << fused.channel_names.size() << " channels per case; manifest " << out_manifest
                << '\n';
    } else if (*train_cmd) {
      if (!config_path.empty()) tc = train_config_from_json(read_file(config_path));
      if (epochs) tc.epochs = epochs;
      if (patch) tc.patch_size = {patch, patch, patch};
      if (train_cmd->count("--seed")) tc.seed = seed;
      if (train_cmd->count("--lr-mode") || config_path.empty()) tc.lr_mode = parse_lr_mode(lr_mode);
      const FusedManifest m = load_fused_manifest(manifest_path);
      std::vector<TrainingCase> data;
      for (const auto& e : m.cases) data.push_back(load_training_case(m, e));
      TrainResult r = train_loop(data, tc, [](const EpochLog& e) {
        std::cout << "epoch " << e.epoch << " lr " << e.lr << " loss " << e.loss << '\n';
      });
      save_checkpoint(r.params, out_path);
      if (!log_path.empty()) write_file(epoch_log_csv(r.log), log_path);
    } else if (*predict_cmd) {
      const FusedManifest m = load_fused_manifest(manifest_path);
      std::vector<NetParams> members;
      for (const auto& c : checkpoints) members.push_back(load_checkpoint(c));
      fs::create_directories(out_path);
      for (const auto& e : m.cases) {
        const MultiChannelVolume input = load_fused_input(m, e);
        const LabelVolume pred =
            members.size() == 1 ? predict(members.front(), input) : ensemble_predict(members, input);
        write_nifti(pred, (fs::path(out_path) / (e.id + "_pred.nii.gz")).string());
      }
    } else if (*evaluate_cmd) {
      const FusedManifest m = load_fused_manifest(manifest_path);
      std::vector<CaseReport> reports;
      for (const auto& e : m.cases) {
        const TrainingCase c = load_training_case(m, e);
        const LabelVolume pred =
            read_label_nifti((fs::path(predictions_dir) / (e.id + "_pred.nii.gz")).string());
        reports.push_back(evaluate_case(c.gt, pred, e.id));
      }
      const std::string csv = report_csv(reports);
      write_file(csv, out_path);
      std::cout << csv;
    } else if (*render_cmd) {
      const SliceAxis a = parse_axis(axis);
      if (fs::path(out_path).extension() == ".ppm") {
        write_netpbm(render_voi(read_label_nifti(volume_path), a, index), out_path);
      } else {
        write_netpbm(render_gray(read_scalar_nifti(volume_path), a, index), out_path);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
