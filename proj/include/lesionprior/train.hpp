#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "lesionprior/preprocess.hpp"
#include "lesionprior/unet.hpp"
#include "lesionprior/volume.hpp"

namespace lesionprior {

/// Network class index -> BraTS label code.
inline constexpr std::array<std::uint8_t, 4> kClassToCode{0, 1, 2, 4};
std::uint8_t code_to_class(std::uint8_t code);

// ---------------------------------------------------------------------------
// Loss

struct MinedLoss {
  double loss = 0.0;
  Tensor5 dlogits;
  std::vector<std::uint8_t> selected;  // per voxel (n * spatial + s)
  std::vector<double> voxel_ce;
  std::size_t positives = 0;
  std::size_t negatives_selected = 0;
};

/// Softmax cross-entropy with hard negative mining. Every positive voxel
/// (target != 0) is kept, plus the k negatives with the largest loss where
/// k = min(floor(neg_pos_ratio * positives), negatives). Ties go to the lower
/// voxel index. With no positives, the top ceil(0.01 * voxels) negatives are
/// kept. The loss is the mean over the kept voxels; dlogits is zero elsewhere.
MinedLoss hard_negative_ce(const Tensor5& logits, std::span<const std::uint8_t> targets,
                           double neg_pos_ratio = 3.0);

/// Per-voxel softmax cross-entropy, no mining.
std::vector<double> voxel_cross_entropy(const Tensor5& logits, std::span<const std::uint8_t> targets);

// ---------------------------------------------------------------------------
// Optimizer

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
};

/// First/second moments and the AMSGrad running maximum of the
/// bias-corrected second moment.
struct OptState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::vector<std::vector<double>> vmax;
  std::uint64_t step = 0;

  static OptState zeros_like(const NetParams& p);
};

/// One AMSGrad update of a flat buffer. `step` is the 1-based step index.
/// The weight decay term is added to the gradient (coupled L2).
void amsgrad_update(std::span<double> theta, std::span<const double> grad, std::span<double> m,
                    std::span<double> v, std::span<double> vmax, std::uint64_t step, double lr,
                    const AdamConfig& cfg);

void adam_amsgrad_step(NetParams& params, const Gradients& grads, OptState& state, double lr,
                       const AdamConfig& cfg = {});

// ---------------------------------------------------------------------------
// Schedule and patches

enum class LrMode { Normalized, Literal };
LrMode parse_lr_mode(const std::string& s);
const char* lr_mode_name(LrMode m);

/// Normalized: l0 * 0.1^(epoch / total). Literal: l0 * 0.1^epoch.
double lr_schedule(double epoch, double l0 = 1e-3, double total = 300,
                   LrMode mode = LrMode::Normalized);

struct TrainingCase {
  std::string id;
  MultiChannelVolume input;
  LabelVolume gt;  // BraTS codes
};

struct Patch {
  Dims corner{0, 0, 0};
  Dims size{0, 0, 0};
  std::vector<double> channels;       // [C][z][y][x]
  std::vector<std::uint8_t> classes;  // [z][y][x], class indices
};

Patch sample_patch(const TrainingCase& c, const Dims& size, std::mt19937_64& rng);
Patch crop_patch(const TrainingCase& c, const Dims& corner, const Dims& size);

/// Stacks patches into an N x C x D x H x W tensor (D = z, W = x).
Tensor5 batch_tensor(const std::vector<Patch>& patches, std::size_t channels);

/// Converts a multi-channel volume into a 1 x C x Z x Y x X tensor.
Tensor5 volume_tensor(const MultiChannelVolume& v);

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  Dims patch_size{128, 128, 128};
  std::size_t batch_size = 2;
  std::size_t epochs = 300;
  double l0 = 1e-3;
  double weight_decay = 1e-4;
  double neg_pos_ratio = 3.0;
  std::uint64_t seed = 0;
  LrMode lr_mode = LrMode::Normalized;
  UNetConfig network;  // in_channels is taken from the data

  void validate() const;
};

TrainConfig train_config_from_json(const std::string& text);
std::string train_config_to_json(const TrainConfig& c);

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
};

struct TrainResult {
  NetParams params;
  std::vector<EpochLog> log;
  std::vector<double> step_losses;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

/// Each epoch draws one random patch per case (cases shuffled), groups them
/// into batches of batch_size, and runs forward / mined loss / backward /
/// AMSGrad with lr_schedule(epoch). Deterministic for a given seed.
TrainResult train_loop(const std::vector<TrainingCase>& dataset, const TrainConfig& config,
                       const std::function<void(const EpochLog&)>& on_epoch = {});

/// Partition of n cases into consecutive batches of at most batch_size.
std::vector<std::size_t> batch_sizes(std::size_t n, std::size_t batch_size);

std::string epoch_log_csv(const std::vector<EpochLog>& log);

// ---------------------------------------------------------------------------
// Inference

/// Class probabilities [class][voxel] over the volume grid. Inputs are zero
/// padded to the network divisor and cropped back.
std::vector<std::vector<double>> predict_probabilities(const NetParams& params,
                                                       const MultiChannelVolume& input);

/// Argmax over class scores (ties -> lowest class), mapped to BraTS codes.
LabelVolume argmax_labels(const std::vector<std::vector<double>>& scores, const Geometry& g);

LabelVolume predict(const NetParams& params, const MultiChannelVolume& input);

/// Mean of member softmax probabilities, then argmax.
LabelVolume ensemble_predict(const std::vector<NetParams>& members, const MultiChannelVolume& input);

}  // namespace lesionprior
