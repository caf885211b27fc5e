#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "lesionprior/layers.hpp"
#include "lesionprior/tensor.hpp"

namespace lesionprior {

/// Architecture descriptor. Widths double per level starting at base_width.
struct UNetConfig {
  std::size_t in_channels = 13;
  std::size_t n_classes = 4;
  std::size_t base_width = 8;
  std::size_t levels = 3;
  std::size_t groups = 4;
  double dropout = 0.3;
  double gn_eps = 1e-5;

  std::size_t width(std::size_t level) const { return base_width << level; }
  /// Spatial dims must be multiples of this.
  std::size_t divisor() const { return std::size_t{1} << (levels - 1); }
  void validate() const;
  bool operator==(const UNetConfig&) const = default;
};

struct ParamTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> values;
};

/// Learnable weights in declaration order.
struct NetParams {
  UNetConfig config;
  std::vector<ParamTensor> tensors;

  std::size_t parameter_count() const;
};

/// Gradient buffers parallel to NetParams::tensors.
using Gradients = std::vector<std::vector<double>>;

/// He-normal kernels (std sqrt(2 / fan_in)), zero biases, GN scale 1 / shift 0.
NetParams init_params(const UNetConfig& config, std::uint64_t seed);

/// Encoder/decoder 3D U-Net.
///
/// Encoder level l: [conv3 -> GN -> ReLU] x 2 -> dropout, then 2x2x2 max
/// pooling into level l + 1. Decoder level l: trilinear 2x upsampling of the
/// level below, channel concatenation with the encoder output of level l,
/// [conv3 -> GN -> ReLU] x 2. A final 1x1x1 convolution yields class logits.
class UNet {
 public:
  struct UnitCache {
    Tensor5 input;
    GroupNormCache gn;
    Tensor5 activation;
  };

  struct Cache {
    std::vector<UnitCache> encoder;  // 2 per level
    std::vector<std::vector<double>> dropout_masks;
    std::vector<std::array<std::size_t, 5>> pool_shapes;
    std::vector<std::vector<std::size_t>> pool_argmax;
    std::vector<std::array<std::size_t, 5>> up_shapes;
    std::vector<std::size_t> up_channels;
    std::vector<UnitCache> decoder;  // 2 per decoder level, deepest first
    Tensor5 head_input;
  };

  explicit UNet(const UNetConfig& config);

  const UNetConfig& config() const { return config_; }

  Tensor5 forward(const NetParams& params, const Tensor5& x, bool train, std::mt19937_64& rng,
                  Cache* cache) const;
  /// Eval-mode forward without a cache.
  Tensor5 infer(const NetParams& params, const Tensor5& x) const;

  Gradients backward(const NetParams& params, const Cache& cache, const Tensor5& dlogits) const;

 private:
  struct Unit {
    std::size_t weight, bias, scale, shift;
    std::size_t in, out;
  };

  Tensor5 unit_forward(const NetParams& p, const Unit& u, const Tensor5& x, UnitCache* c) const;
  Tensor5 unit_backward(const NetParams& p, const Unit& u, const UnitCache& c, const Tensor5& dy,
                        Gradients& g) const;

  UNetConfig config_;
  std::vector<Unit> encoder_;
  std::vector<Unit> decoder_;
  std::size_t head_weight_ = 0;
  std::size_t head_bias_ = 0;
};

/// Checkpoint: 8-byte magic "LPUNET1\n", uint64 little-endian header length,
/// JSON header (config + tensor names/shapes), then little-endian float32
/// arrays in declaration order.
void save_checkpoint(const NetParams& params, const std::string& path);
NetParams load_checkpoint(const std::string& path);

/// Rounds every parameter to float32, the precision checkpoints store.
void round_to_float(NetParams& params);

}  // namespace lesionprior
