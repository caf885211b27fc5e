#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "lesionprior/tensor.hpp"

namespace lesionprior {

// ---------------------------------------------------------------------------
// Convolution: stride 1, cubic kernels of odd size, zero padding.
// kernel layout [out][in][k][k][k], bias [out].

Tensor5 conv3d_forward(const Tensor5& x, std::span<const double> kernel,
                       std::span<const double> bias, std::size_t out_channels,
                       std::size_t ksize, std::size_t pad);

struct ConvGrads {
  Tensor5 dx;
  std::vector<double> dkernel;
  std::vector<double> dbias;
};

ConvGrads conv3d_backward(const Tensor5& x, std::span<const double> kernel,
                          const Tensor5& dy, std::size_t ksize, std::size_t pad);

// ---------------------------------------------------------------------------
// Group normalization over (channels in group x D x H x W), per sample.

struct GroupNormCache {
  Tensor5 xhat;
  std::vector<double> rstd;  // [n][group]
  std::size_t groups = 1;
};

Tensor5 groupnorm_forward(const Tensor5& x, std::size_t groups, std::span<const double> scale,
                          std::span<const double> shift, double eps, GroupNormCache* cache);

struct GroupNormGrads {
  Tensor5 dx;
  std::vector<double> dscale;
  std::vector<double> dshift;
};

GroupNormGrads groupnorm_backward(const GroupNormCache& cache, std::span<const double> scale,
                                  const Tensor5& dy);

// ---------------------------------------------------------------------------

Tensor5 relu_forward(const Tensor5& x);
/// dy * 1[x > 0]; `y` may be the forward input or output (same sign pattern).
Tensor5 relu_backward(const Tensor5& y, const Tensor5& dy);

/// Inverted dropout. In training each element is zeroed with probability
/// `rate` and survivors are scaled by 1/(1-rate); `mask` receives the
/// per-element multiplier. Identity in eval mode.
Tensor5 dropout_forward(const Tensor5& x, double rate, std::mt19937_64& rng, bool train,
                        std::vector<double>* mask);
Tensor5 dropout_backward(const std::vector<double>& mask, const Tensor5& dy);

// ---------------------------------------------------------------------------

/// 2x2x2 max pool, stride 2. `argmax` receives the flat input index chosen
/// for each output element (first maximum in z, y, x order).
Tensor5 maxpool2_forward(const Tensor5& x, std::vector<std::size_t>* argmax);
Tensor5 maxpool2_backward(const std::array<std::size_t, 5>& input_shape,
                          const std::vector<std::size_t>& argmax, const Tensor5& dy);

/// Trilinear 2x upsampling, half-pixel centers: source = (i + 0.5) / 2 - 0.5,
/// clamped to the grid.
Tensor5 upsample2_forward(const Tensor5& x);
/// Adjoint of upsample2_forward.
Tensor5 upsample2_backward(const Tensor5& dy, const std::array<std::size_t, 5>& input_shape);

Tensor5 concat_channels(const Tensor5& a, const Tensor5& b);
void split_channels(const Tensor5& d, std::size_t first, Tensor5* da, Tensor5* db);

}  // namespace lesionprior
