#include "lesionprior/layers.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Core>

#include "lesionprior/parallel.hpp"
#include "lesionprior/volume.hpp"

namespace lesionprior {

namespace {

struct Range {
  std::size_t begin;
  std::size_t end;
};

// Output positions o in [0, out) whose input o + k - pad lies in [0, in).
Range valid_range(std::size_t out, std::size_t in, std::size_t k, std::size_t pad) {
  const long lo = std::max<long>(0, static_cast<long>(pad) - static_cast<long>(k));
  const long hi = std::min<long>(static_cast<long>(out),
                                 static_cast<long>(in) + static_cast<long>(pad) - static_cast<long>(k));
  if (hi <= lo) return {0, 0};
  return {static_cast<std::size_t>(lo), static_cast<std::size_t>(hi)};
}

std::array<std::size_t, 3> conv_out_dims(const Tensor5& x, std::size_t ksize, std::size_t pad) {
  std::array<std::size_t, 3> o{};
  for (int a = 0; a < 3; ++a) {
    const long v = static_cast<long>(x.shape[2 + a]) + 2 * static_cast<long>(pad) -
                   static_cast<long>(ksize) + 1;
    if (v < 1) throw Error("conv3d: kernel larger than padded input");
    o[a] = static_cast<std::size_t>(v);
  }
  return o;
}

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

// Columns per GEMM block; whole output z-planes keep each channel's block contiguous.
constexpr std::size_t kTargetColumns = 2048;

struct ConvPlan {
  std::size_t cin, cout, ksize, pad, k3;
  std::size_t D, H, W;
  std::array<std::size_t, 3> od;
  std::size_t planes_per_chunk;

  std::size_t plane() const { return od[1] * od[2]; }
  std::size_t chunks() const { return (od[0] + planes_per_chunk - 1) / planes_per_chunk; }
};

ConvPlan make_plan(const Tensor5& x, std::size_t cout, std::size_t ksize, std::size_t pad) {
  ConvPlan p{x.channels(), cout, ksize, pad, ksize * ksize * ksize,
             x.shape[2], x.shape[3], x.shape[4], conv_out_dims(x, ksize, pad), 1};
  p.planes_per_chunk = std::clamp<std::size_t>(kTargetColumns / p.plane(), 1, p.od[0]);
  return p;
}

// col is (cin*k3) x cols, row-major; row ci*k3 + tap holds the shifted input for that tap.
void im2col(const ConvPlan& p, const double* xn, std::size_t sample_stride, std::size_t z0,
            std::size_t z1, double* col) {
  const std::size_t cols = (z1 - z0) * p.plane();
  for (std::size_t ci = 0; ci < p.cin; ++ci) {
    const double* xp = xn + ci * sample_stride;
    for (std::size_t kz = 0; kz < p.ksize; ++kz) {
      const Range rz = valid_range(p.od[0], p.D, kz, p.pad);
      for (std::size_t ky = 0; ky < p.ksize; ++ky) {
        const Range ry = valid_range(p.od[1], p.H, ky, p.pad);
        for (std::size_t kx = 0; kx < p.ksize; ++kx) {
          const Range rx = valid_range(p.od[2], p.W, kx, p.pad);
          double* row = col + (ci * p.k3 + (kz * p.ksize + ky) * p.ksize + kx) * cols;
          for (std::size_t oz = z0; oz < z1; ++oz) {
            double* rp = row + (oz - z0) * p.plane();
            if (oz < rz.begin || oz >= rz.end) {
              std::fill(rp, rp + p.plane(), 0.0);
              continue;
            }
            const std::size_t iz = oz + kz - p.pad;
            for (std::size_t oy = 0; oy < p.od[1]; ++oy) {
              double* rr = rp + oy * p.od[2];
              if (oy < ry.begin || oy >= ry.end) {
                std::fill(rr, rr + p.od[2], 0.0);
                continue;
              }
              const double* xr = xp + (iz * p.H + oy + ky - p.pad) * p.W;
              std::fill(rr, rr + rx.begin, 0.0);
              std::copy(xr + rx.begin + kx - p.pad, xr + rx.end + kx - p.pad, rr + rx.begin);
              std::fill(rr + rx.end, rr + p.od[2], 0.0);
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add col back into the input gradient.
void col2im(const ConvPlan& p, const double* col, std::size_t z0, std::size_t z1, double* dxn,
            std::size_t sample_stride) {
  const std::size_t cols = (z1 - z0) * p.plane();
  for (std::size_t ci = 0; ci < p.cin; ++ci) {
    double* dxp = dxn + ci * sample_stride;
    for (std::size_t kz = 0; kz < p.ksize; ++kz) {
      const Range rz = valid_range(p.od[0], p.D, kz, p.pad);
      for (std::size_t ky = 0; ky < p.ksize; ++ky) {
        const Range ry = valid_range(p.od[1], p.H, ky, p.pad);
        for (std::size_t kx = 0; kx < p.ksize; ++kx) {
          const Range rx = valid_range(p.od[2], p.W, kx, p.pad);
          const double* row = col + (ci * p.k3 + (kz * p.ksize + ky) * p.ksize + kx) * cols;
          const std::size_t zb = std::max(z0, rz.begin), ze = std::min(z1, rz.end);
          for (std::size_t oz = zb; oz < ze; ++oz) {
            const std::size_t iz = oz + kz - p.pad;
            for (std::size_t oy = ry.begin; oy < ry.end; ++oy) {
              const double* rr = row + (oz - z0) * p.plane() + oy * p.od[2];
              double* xr = dxp + (iz * p.H + oy + ky - p.pad) * p.W;
              for (std::size_t ox = rx.begin; ox < rx.end; ++ox) xr[ox + kx - p.pad] += rr[ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

Tensor5 conv3d_forward(const Tensor5& x, std::span<const double> kernel,
                       std::span<const double> bias, std::size_t out_channels,
                       std::size_t ksize, std::size_t pad) {
  const std::size_t cin = x.channels();
  const std::size_t k3 = ksize * ksize * ksize;
  if (kernel.size() != out_channels * cin * k3) {
    throw Error("conv3d: kernel shape does not match input channels");
  }
  if (!bias.empty() && bias.size() != out_channels) throw Error("conv3d: bias size mismatch");
  const ConvPlan p = make_plan(x, out_channels, ksize, pad);
  Tensor5 y(x.batch(), out_channels, p.od[0], p.od[1], p.od[2]);
  const ConstMatMap wmat(kernel.data(), static_cast<Eigen::Index>(out_channels),
                         static_cast<Eigen::Index>(cin * k3));
  const std::size_t nchunks = p.chunks();

  parallel_for(x.batch() * nchunks, [&](std::size_t job) {
    const std::size_t n = job / nchunks;
    const std::size_t z0 = (job % nchunks) * p.planes_per_chunk;
    const std::size_t z1 = std::min(p.od[0], z0 + p.planes_per_chunk);
    const std::size_t cols = (z1 - z0) * p.plane();
    std::vector<double> col(cin * k3 * cols);
    im2col(p, x.data.data() + x.offset(n, 0), x.spatial(), z0, z1, col.data());
    StridedMap ymat(y.data.data() + y.offset(n, 0) + z0 * p.plane(),
                    static_cast<Eigen::Index>(out_channels), static_cast<Eigen::Index>(cols),
                    Eigen::OuterStride<>(static_cast<Eigen::Index>(y.spatial())));
    ymat.noalias() = wmat * ConstMatMap(col.data(), static_cast<Eigen::Index>(cin * k3),
                                        static_cast<Eigen::Index>(cols));
    if (!bias.empty()) {
      for (std::size_t co = 0; co < out_channels; ++co) ymat.row(co).array() += bias[co];
    }
  });
  return y;
}

ConvGrads conv3d_backward(const Tensor5& x, std::span<const double> kernel, const Tensor5& dy,
                          std::size_t ksize, std::size_t pad) {
  const std::size_t cin = x.channels();
  const std::size_t cout = dy.channels();
  const std::size_t k3 = ksize * ksize * ksize;
  if (kernel.size() != cout * cin * k3) throw Error("conv3d: kernel shape mismatch");
  const ConvPlan p = make_plan(x, cout, ksize, pad);
  if (dy.batch() != x.batch() || dy.shape[2] != p.od[0] || dy.shape[3] != p.od[1] ||
      dy.shape[4] != p.od[2]) {
    throw Error("conv3d backward: gradient shape mismatch");
  }

  ConvGrads g{Tensor5(x.batch(), cin, p.D, p.H, p.W), std::vector<double>(kernel.size(), 0.0),
              std::vector<double>(cout, 0.0)};
  const ConstMatMap wmat(kernel.data(), static_cast<Eigen::Index>(cout),
                         static_cast<Eigen::Index>(cin * k3));
  const std::size_t nchunks = p.chunks();

  // One job per sample: chunks of a sample overlap in dx. Per-sample kernel
  // gradients are summed afterwards in sample order so results do not depend
  // on the thread count.
  std::vector<std::vector<double>> dk_partial(x.batch());
  parallel_for(x.batch(), [&](std::size_t n) {
    std::vector<double>& dk = dk_partial[n];
    dk.assign(kernel.size(), 0.0);
    MatMap dkmat(dk.data(), static_cast<Eigen::Index>(cout), static_cast<Eigen::Index>(cin * k3));
    std::vector<double> col, dcol;
    for (std::size_t c = 0; c < nchunks; ++c) {
      const std::size_t z0 = c * p.planes_per_chunk;
      const std::size_t z1 = std::min(p.od[0], z0 + p.planes_per_chunk);
      const auto cols = static_cast<Eigen::Index>((z1 - z0) * p.plane());
      const auto rows = static_cast<Eigen::Index>(cin * k3);
      col.resize(static_cast<std::size_t>(rows * cols));
      dcol.resize(col.size());
      im2col(p, x.data.data() + x.offset(n, 0), x.spatial(), z0, z1, col.data());
      const ConstStridedMap dymat(dy.data.data() + dy.offset(n, 0) + z0 * p.plane(),
                                  static_cast<Eigen::Index>(cout), cols,
                                  Eigen::OuterStride<>(static_cast<Eigen::Index>(dy.spatial())));
      const ConstMatMap colmat(col.data(), rows, cols);
      dkmat.noalias() += dymat * colmat.transpose();
      MatMap dcolmat(dcol.data(), rows, cols);
      dcolmat.noalias() = wmat.transpose() * dymat;
      col2im(p, dcol.data(), z0, z1, g.dx.data.data() + g.dx.offset(n, 0), g.dx.spatial());
    }
  });
  for (const auto& dk : dk_partial) {
    for (std::size_t i = 0; i < dk.size(); ++i) g.dkernel[i] += dk[i];
  }
  for (std::size_t co = 0; co < cout; ++co) {
    double db = 0.0;
    for (std::size_t n = 0; n < x.batch(); ++n) {
      for (double v : dy.plane(n, co)) db += v;
    }
    g.dbias[co] = db;
  }
  return g;
}
// ---------------------------------------------------------------------------

Tensor5 groupnorm_forward(const Tensor5& x, std::size_t groups, std::span<const double> scale,
                          std::span<const double> shift, double eps, GroupNormCache* cache) {
  const std::size_t C = x.channels();
  if (groups == 0 || C % groups != 0) {
    throw Error("groupnorm: group count " + std::to_string(groups) + " does not divide " +
                std::to_string(C) + " channels");
  }
  if (scale.size() != C || shift.size() != C) throw Error("groupnorm: parameter size mismatch");
  const std::size_t cpg = C / groups;
  const std::size_t S = x.spatial();
  const double m = static_cast<double>(cpg * S);

  Tensor5 y(x.batch(), C, x.shape[2], x.shape[3], x.shape[4]);
  GroupNormCache local;
  GroupNormCache& c = cache ? *cache : local;
  c.groups = groups;
  c.xhat = Tensor5(x.batch(), C, x.shape[2], x.shape[3], x.shape[4]);
  c.rstd.assign(x.batch() * groups, 0.0);

  parallel_for(x.batch() * groups, [&](std::size_t job) {
    const std::size_t n = job / groups;
    const std::size_t g = job % groups;
    const double* xp = x.data.data() + x.offset(n, g * cpg);
    const std::size_t len = cpg * S;
    double sum = 0.0;
    for (std::size_t i = 0; i < len; ++i) sum += xp[i];
    const double mean = sum / m;
    double ss = 0.0;
    for (std::size_t i = 0; i < len; ++i) ss += (xp[i] - mean) * (xp[i] - mean);
    const double rstd = 1.0 / std::sqrt(ss / m + eps);
    c.rstd[job] = rstd;
    double* hp = c.xhat.data.data() + c.xhat.offset(n, g * cpg);
    double* yp = y.data.data() + y.offset(n, g * cpg);
    for (std::size_t cc = 0; cc < cpg; ++cc) {
      const double a = scale[g * cpg + cc];
      const double b = shift[g * cpg + cc];
      for (std::size_t s = 0; s < S; ++s) {
        const std::size_t i = cc * S + s;
        hp[i] = (xp[i] - mean) * rstd;
        yp[i] = hp[i] * a + b;
      }
    }
  });
  return y;
}

GroupNormGrads groupnorm_backward(const GroupNormCache& cache, std::span<const double> scale,
                                  const Tensor5& dy) {
  const Tensor5& xh = cache.xhat;
  const std::size_t C = xh.channels();
  const std::size_t groups = cache.groups;
  const std::size_t cpg = C / groups;
  const std::size_t S = xh.spatial();
  const double m = static_cast<double>(cpg * S);

  GroupNormGrads g{Tensor5(xh.batch(), C, xh.shape[2], xh.shape[3], xh.shape[4]),
                   std::vector<double>(C, 0.0), std::vector<double>(C, 0.0)};

  parallel_for(C, [&](std::size_t c) {
    double ds = 0.0, db = 0.0;
    for (std::size_t n = 0; n < xh.batch(); ++n) {
      const auto h = xh.plane(n, c);
      const auto d = dy.plane(n, c);
      for (std::size_t s = 0; s < S; ++s) {
        ds += d[s] * h[s];
        db += d[s];
      }
    }
    g.dscale[c] = ds;
    g.dshift[c] = db;
  });

  parallel_for(xh.batch() * groups, [&](std::size_t job) {
    const std::size_t n = job / groups;
    const std::size_t grp = job % groups;
    const double rstd = cache.rstd[job];
    const std::size_t base = xh.offset(n, grp * cpg);
    double sum_d = 0.0, sum_dh = 0.0;
    for (std::size_t cc = 0; cc < cpg; ++cc) {
      const double a = scale[grp * cpg + cc];
      for (std::size_t s = 0; s < S; ++s) {
        const std::size_t i = base + cc * S + s;
        const double dh = dy.data[i] * a;
        sum_d += dh;
        sum_dh += dh * xh.data[i];
      }
    }
    const double mean_d = sum_d / m;
    const double mean_dh = sum_dh / m;
    for (std::size_t cc = 0; cc < cpg; ++cc) {
      const double a = scale[grp * cpg + cc];
      for (std::size_t s = 0; s < S; ++s) {
        const std::size_t i = base + cc * S + s;
        g.dx.data[i] = rstd * (dy.data[i] * a - mean_d - xh.data[i] * mean_dh);
      }
    }
  });
  return g;
}

// ---------------------------------------------------------------------------

Tensor5 relu_forward(const Tensor5& x) {
  Tensor5 y = x;
  for (double& v : y.data) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor5 relu_backward(const Tensor5& y, const Tensor5& dy) {
  Tensor5 dx = dy;
  for (std::size_t i = 0; i < dx.data.size(); ++i) {
    if (!(y.data[i] > 0.0)) dx.data[i] = 0.0;
  }
  return dx;
}

Tensor5 dropout_forward(const Tensor5& x, double rate, std::mt19937_64& rng, bool train,
                        std::vector<double>* mask) {
  if (!(rate >= 0.0 && rate < 1.0)) throw Error("dropout rate must lie in [0, 1)");
  if (!train || rate == 0.0) {
    if (mask) mask->assign(x.numel(), 1.0);
    return x;
  }
  const double keep_scale = 1.0 / (1.0 - rate);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> local;
  std::vector<double>& mk = mask ? *mask : local;
  mk.resize(x.numel());
  Tensor5 y = x;
  for (std::size_t i = 0; i < y.data.size(); ++i) {
    mk[i] = u(rng) < rate ? 0.0 : keep_scale;
    y.data[i] *= mk[i];
  }
  return y;
}

Tensor5 dropout_backward(const std::vector<double>& mask, const Tensor5& dy) {
  Tensor5 dx = dy;
  for (std::size_t i = 0; i < dx.data.size(); ++i) dx.data[i] *= mask[i];
  return dx;
}

// ---------------------------------------------------------------------------

Tensor5 maxpool2_forward(const Tensor5& x, std::vector<std::size_t>* argmax) {
  const std::size_t D = x.shape[2], H = x.shape[3], W = x.shape[4];
  if (D % 2 || H % 2 || W % 2) throw Error("maxpool2: spatial dims must be even");
  Tensor5 y(x.batch(), x.channels(), D / 2, H / 2, W / 2);
  if (argmax) argmax->assign(y.numel(), 0);
  std::size_t out = 0;
  for (std::size_t n = 0; n < x.batch(); ++n) {
    for (std::size_t c = 0; c < x.channels(); ++c) {
      const std::size_t base = x.offset(n, c);
      for (std::size_t z = 0; z < D / 2; ++z) {
        for (std::size_t yy = 0; yy < H / 2; ++yy) {
          for (std::size_t xx = 0; xx < W / 2; ++xx, ++out) {
            std::size_t best = base + ((2 * z) * H + 2 * yy) * W + 2 * xx;
            for (std::size_t dz = 0; dz < 2; ++dz) {
              for (std::size_t dyy = 0; dyy < 2; ++dyy) {
                for (std::size_t dxx = 0; dxx < 2; ++dxx) {
                  const std::size_t i = base + ((2 * z + dz) * H + 2 * yy + dyy) * W + 2 * xx + dxx;
                  if (x.data[i] > x.data[best]) best = i;
                }
              }
            }
            y.data[out] = x.data[best];
            if (argmax) (*argmax)[out] = best;
          }
        }
      }
    }
  }
  return y;
}

Tensor5 maxpool2_backward(const std::array<std::size_t, 5>& input_shape,
                          const std::vector<std::size_t>& argmax, const Tensor5& dy) {
  Tensor5 dx(input_shape[0], input_shape[1], input_shape[2], input_shape[3], input_shape[4]);
  for (std::size_t i = 0; i < dy.numel(); ++i) dx.data[argmax[i]] += dy.data[i];
  return dx;
}

namespace {

struct Tap {
  std::size_t lo;
  std::size_t hi;
  double frac;  // weight of hi
};

std::vector<Tap> upsample_taps(std::size_t in) {
  std::vector<Tap> taps(2 * in);
  for (std::size_t o = 0; o < 2 * in; ++o) {
    double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
    if (src < 0.0) src = 0.0;
    const auto lo = static_cast<std::size_t>(std::floor(src));
    const std::size_t hi = std::min(lo + 1, in - 1);
    taps[o] = {lo, hi, src - static_cast<double>(lo)};
  }
  return taps;
}

}  // namespace

Tensor5 upsample2_forward(const Tensor5& x) {
  const std::size_t D = x.shape[2], H = x.shape[3], W = x.shape[4];
  Tensor5 y(x.batch(), x.channels(), 2 * D, 2 * H, 2 * W);
  const auto tz = upsample_taps(D), ty = upsample_taps(H), tx = upsample_taps(W);
  parallel_for(x.batch() * x.channels(), [&](std::size_t job) {
    const double* xp = x.data.data() + job * x.spatial();
    double* yp = y.data.data() + job * y.spatial();
    for (std::size_t z = 0; z < 2 * D; ++z) {
      const Tap& a = tz[z];
      for (std::size_t yy = 0; yy < 2 * H; ++yy) {
        const Tap& b = ty[yy];
        const double* r00 = xp + (a.lo * H + b.lo) * W;
        const double* r01 = xp + (a.lo * H + b.hi) * W;
        const double* r10 = xp + (a.hi * H + b.lo) * W;
        const double* r11 = xp + (a.hi * H + b.hi) * W;
        const double w00 = (1 - a.frac) * (1 - b.frac), w01 = (1 - a.frac) * b.frac;
        const double w10 = a.frac * (1 - b.frac), w11 = a.frac * b.frac;
        double* out = yp + (z * 2 * H + yy) * 2 * W;
        for (std::size_t xx = 0; xx < 2 * W; ++xx) {
          const Tap& c = tx[xx];
          const double lo = w00 * r00[c.lo] + w01 * r01[c.lo] + w10 * r10[c.lo] + w11 * r11[c.lo];
          const double hi = w00 * r00[c.hi] + w01 * r01[c.hi] + w10 * r10[c.hi] + w11 * r11[c.hi];
          out[xx] = (1 - c.frac) * lo + c.frac * hi;
        }
      }
    }
  });
  return y;
}

Tensor5 upsample2_backward(const Tensor5& dy, const std::array<std::size_t, 5>& input_shape) {
  const std::size_t D = input_shape[2], H = input_shape[3], W = input_shape[4];
  if (dy.shape[2] != 2 * D || dy.shape[3] != 2 * H || dy.shape[4] != 2 * W) {
    throw Error("upsample2 backward: gradient shape mismatch");
  }
  Tensor5 dx(input_shape[0], input_shape[1], D, H, W);
  const auto tz = upsample_taps(D), ty = upsample_taps(H), tx = upsample_taps(W);
  parallel_for(dx.batch() * dx.channels(), [&](std::size_t job) {
    double* xp = dx.data.data() + job * dx.spatial();
    const double* yp = dy.data.data() + job * dy.spatial();
    for (std::size_t z = 0; z < 2 * D; ++z) {
      const Tap& a = tz[z];
      for (std::size_t yy = 0; yy < 2 * H; ++yy) {
        const Tap& b = ty[yy];
        double* r00 = xp + (a.lo * H + b.lo) * W;
        double* r01 = xp + (a.lo * H + b.hi) * W;
        double* r10 = xp + (a.hi * H + b.lo) * W;
        double* r11 = xp + (a.hi * H + b.hi) * W;
        const double w00 = (1 - a.frac) * (1 - b.frac), w01 = (1 - a.frac) * b.frac;
        const double w10 = a.frac * (1 - b.frac), w11 = a.frac * b.frac;
        const double* in = yp + (z * 2 * H + yy) * 2 * W;
        for (std::size_t xx = 0; xx < 2 * W; ++xx) {
          const Tap& c = tx[xx];
          const double lo = (1 - c.frac) * in[xx];
          const double hi = c.frac * in[xx];
          r00[c.lo] += w00 * lo;
          r01[c.lo] += w01 * lo;
          r10[c.lo] += w10 * lo;
          r11[c.lo] += w11 * lo;
          r00[c.hi] += w00 * hi;
          r01[c.hi] += w01 * hi;
          r10[c.hi] += w10 * hi;
          r11[c.hi] += w11 * hi;
        }
      }
    }
  });
  return dx;
}

Tensor5 concat_channels(const Tensor5& a, const Tensor5& b) {
  if (a.batch() != b.batch() || a.shape[2] != b.shape[2] || a.shape[3] != b.shape[3] ||
      a.shape[4] != b.shape[4]) {
    throw Error("concat: shape mismatch");
  }
  Tensor5 y(a.batch(), a.channels() + b.channels(), a.shape[2], a.shape[3], a.shape[4]);
  for (std::size_t n = 0; n < a.batch(); ++n) {
    std::copy_n(a.data.begin() + static_cast<long>(a.offset(n, 0)), a.channels() * a.spatial(),
                y.data.begin() + static_cast<long>(y.offset(n, 0)));
    std::copy_n(b.data.begin() + static_cast<long>(b.offset(n, 0)), b.channels() * b.spatial(),
                y.data.begin() + static_cast<long>(y.offset(n, a.channels())));
  }
  return y;
}

void split_channels(const Tensor5& d, std::size_t first, Tensor5* da, Tensor5* db) {
  const std::size_t second = d.channels() - first;
  *da = Tensor5(d.batch(), first, d.shape[2], d.shape[3], d.shape[4]);
  *db = Tensor5(d.batch(), second, d.shape[2], d.shape[3], d.shape[4]);
  for (std::size_t n = 0; n < d.batch(); ++n) {
    std::copy_n(d.data.begin() + static_cast<long>(d.offset(n, 0)), first * d.spatial(),
                da->data.begin() + static_cast<long>(da->offset(n, 0)));
    std::copy_n(d.data.begin() + static_cast<long>(d.offset(n, first)), second * d.spatial(),
                db->data.begin() + static_cast<long>(db->offset(n, 0)));
  }
}

}  // namespace lesionprior
