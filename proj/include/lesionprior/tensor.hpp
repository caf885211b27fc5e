#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace lesionprior {

/// Dense N x C x D x H x W activation tensor, W fastest.
struct Tensor5 {
  std::array<std::size_t, 5> shape{0, 0, 0, 0, 0};
  std::vector<double> data;

  Tensor5() = default;
  Tensor5(std::size_t n, std::size_t c, std::size_t d, std::size_t h, std::size_t w,
          double fill = 0.0)
      : shape{n, c, d, h, w}, data(n * c * d * h * w, fill) {}

  std::size_t batch() const { return shape[0]; }
  std::size_t channels() const { return shape[1]; }
  std::size_t spatial() const { return shape[2] * shape[3] * shape[4]; }
  std::size_t numel() const { return data.size(); }

  std::size_t offset(std::size_t n, std::size_t c) const {
    return (n * shape[1] + c) * spatial();
  }
  std::span<double> plane(std::size_t n, std::size_t c) {
    return {data.data() + offset(n, c), spatial()};
  }
  std::span<const double> plane(std::size_t n, std::size_t c) const {
    return {data.data() + offset(n, c), spatial()};
  }
  double& at(std::size_t n, std::size_t c, std::size_t z, std::size_t y, std::size_t x) {
    return data[offset(n, c) + (z * shape[3] + y) * shape[4] + x];
  }
  double at(std::size_t n, std::size_t c, std::size_t z, std::size_t y, std::size_t x) const {
    return data[offset(n, c) + (z * shape[3] + y) * shape[4] + x];
  }
};

}  // namespace lesionprior
